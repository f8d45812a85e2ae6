"""
Exception types for the vehicle tracker.

Every parse or validation failure is also a ValueError so callers that only
know the standard hierarchy can still catch it.
"""


class TrackerError(Exception):
    """Base class for all vehicle tracker errors"""


# === NMEA ===

class NmeaError(TrackerError, ValueError):
    """A line could not be read as an NMEA 0183 sentence"""


class InvalidPayload(NmeaError):
    """Payload contains a framing character ('$' or '*')"""


class MissingDollar(NmeaError):
    pass


class MissingStar(NmeaError):
    pass


class MalformedChecksum(NmeaError):
    """Checksum field is not exactly two characters"""


class ChecksumMismatch(NmeaError):
    """Transmitted checksum differs from the XOR of the payload"""


class Overlength(NmeaError):
    """Sentence or SMS message exceeds its length limit"""


class WrongSentenceType(NmeaError):
    pass


class FieldCountMismatch(NmeaError):
    pass


class NonNumericField(NmeaError):
    pass


class HemisphereInvalid(NmeaError):
    pass


class OutOfRangeCoordinate(NmeaError):
    pass


# === Telemetry ===

class TelemetryError(TrackerError, ValueError):
    """An SMS telemetry message or OBD frame could not be processed"""


class UnknownPid(TelemetryError):
    pass


class WrongLength(TelemetryError):
    pass


class InvalidVehicleId(TelemetryError):
    pass


class MalformedLayout(TelemetryError):
    """Message does not follow the '<GPRMC>;$OBD,...*hh' layout"""


class RangeViolation(TelemetryError):
    """A decoded value lies outside its physical range"""


# === Geodesy ===

class GeodesyError(TrackerError, ValueError):
    pass


class TooFarApart(GeodesyError):
    """Points are outside the local tangent-plane validity window"""


class NearSingularAxis(UserWarning):
    """Point lies within 1 m of the polar axis; longitude is undefined"""


# === Simulation and estimation ===

class EstimationError(TrackerError, ValueError):
    pass


class InsufficientSatellites(EstimationError):
    pass


class CannotSatisfyGeometry(EstimationError):
    pass


class SingularGeometry(EstimationError):
    pass


class NoConvergence(EstimationError):
    pass


class DegenerateRange(EstimationError):
    pass


class SingularInnovationCovariance(EstimationError):
    pass


class InitializationFailed(EstimationError):
    pass


# === Accuracy ===

class AccuracyError(TrackerError, ValueError):
    pass


class LengthMismatch(AccuracyError):
    pass


class TooFewPoints(AccuracyError):
    pass


# === Output and station ===

class EmptyTrack(TrackerError, ValueError):
    pass


class IoFailure(TrackerError, OSError):
    """Output file or directory could not be written"""


class BindFailure(TrackerError, OSError):
    """TCP listener could not bind its port"""
