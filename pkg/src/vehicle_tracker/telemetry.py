"""
SMS telemetry codec
One message = the receiver's $GPRMC sentence + ';' + a checksummed $OBD segment
"""

import logging
import re
from typing import Dict, NamedTuple, Tuple

from pydantic import ValidationError

from .errors import (
    ChecksumMismatch,
    InvalidVehicleId,
    MalformedLayout,
    NmeaError,
    OutOfRangeCoordinate,
    Overlength,
    RangeViolation,
    UnknownPid,
    WrongLength,
)
from .models import EngineStatus, TelemetryRecord
from .nmea import compute_checksum, parse_gprmc, parse_sentence, serialize_gprmc

logger = logging.getLogger(__name__)

MAX_SMS_LENGTH = 160
OBD_ID = "OBD"
SEGMENT_SEPARATOR = ";"

PID_COOLANT = 0x05
PID_RPM = 0x0C
PID_SPEED = 0x0D
PID_THROTTLE = 0x11

_VEHICLE_ID_RE = re.compile(r"^[A-Za-z0-9-]{1,16}$")


class ObdValue(NamedTuple):
    value: float
    unit: str


class _PidSpec(NamedTuple):
    name: str
    length: int
    unit: str


# SAE J1979 mode 01 scalings for the four parameters the tracker reports
PID_SPECS: Dict[int, _PidSpec] = {
    PID_RPM: _PidSpec("rpm", 2, "rpm"),
    PID_COOLANT: _PidSpec("coolant_c", 1, "°C"),
    PID_SPEED: _PidSpec("speed_kmh", 1, "km/h"),
    PID_THROTTLE: _PidSpec("throttle_pct", 1, "%"),
}


def decode_obd(pid: int, data: bytes) -> ObdValue:
    """
    Scales raw OBD-II mode 01 response bytes.

    Args:
        pid (int): One of 0x0C (rpm), 0x05 (coolant), 0x0D (speed), 0x11 (throttle).
        data (bytes): Data bytes A[, B] following the PID.

    Returns:
        ObdValue: Scaled value and its unit.
    """
    spec = PID_SPECS.get(pid)
    if spec is None:
        raise UnknownPid(f"Unsupported PID 0x{pid:02X}")
    if len(data) != spec.length:
        raise WrongLength(f"PID 0x{pid:02X} expects {spec.length} bytes, got {len(data)}")

    a = data[0]
    if pid == PID_RPM:
        return ObdValue((256 * a + data[1]) / 4.0, spec.unit)
    if pid == PID_COOLANT:
        return ObdValue(float(a - 40), spec.unit)
    if pid == PID_SPEED:
        return ObdValue(float(a), spec.unit)
    return ObdValue(a * 100.0 / 255.0, spec.unit)


def encode_obd(pid: int, value: float) -> bytes:
    """Inverse of decode_obd, rounding to the nearest representable raw value."""
    if pid not in PID_SPECS:
        raise UnknownPid(f"Unsupported PID 0x{pid:02X}")
    if pid == PID_RPM:
        raw = min(max(round(value * 4.0), 0), 0xFFFF)
        return bytes([raw >> 8, raw & 0xFF])
    if pid == PID_COOLANT:
        raw = round(value + 40.0)
    elif pid == PID_SPEED:
        raw = round(value)
    else:
        raw = round(value * 255.0 / 100.0)
    return bytes([min(max(raw, 0), 0xFF)])


def status_from_obd(frames: Dict[int, bytes]) -> EngineStatus:
    """Builds an EngineStatus from one raw frame per supported PID."""
    values = {PID_SPECS[pid].name: decode_obd(pid, data).value for pid, data in frames.items()}
    return EngineStatus(**values)


def validate_vehicle_id(vehicle_id: str) -> str:
    if not _VEHICLE_ID_RE.match(vehicle_id):
        raise InvalidVehicleId(f"Vehicle id must be 1-16 characters of [A-Za-z0-9-], got {vehicle_id!r}")
    return vehicle_id


def _obd_payload(vehicle_id: str, status: EngineStatus) -> str:
    return ",".join([
        OBD_ID,
        vehicle_id,
        f"{status.rpm:.2f}",
        f"{int(round(status.coolant_c))}",
        f"{int(round(status.speed_kmh))}",
        f"{status.throttle_pct:.1f}",
    ])


def encode_record(r: TelemetryRecord) -> str:
    """
    Encodes a record as one SMS text.

    Args:
        r (TelemetryRecord): Record to send.

    Returns:
        str: '<GPRMC sentence>;$OBD,<id>,<rpm>,<coolant>,<speed>,<throttle>*hh', at most 160 characters.
    """
    validate_vehicle_id(r.vehicle_id)
    payload = _obd_payload(r.vehicle_id, r.status)
    message = f"{serialize_gprmc(r.fix)}{SEGMENT_SEPARATOR}${payload}*{compute_checksum(payload)}"
    if len(message) > MAX_SMS_LENGTH:
        raise Overlength(f"Encoded record is {len(message)} characters, an SMS holds {MAX_SMS_LENGTH}")
    return message


def _split_segments(msg: str) -> Tuple[str, str]:
    text = msg.rstrip("\r\n")
    if len(text) > MAX_SMS_LENGTH:
        raise MalformedLayout(f"Message is {len(text)} characters, an SMS holds {MAX_SMS_LENGTH}")
    parts = text.split(SEGMENT_SEPARATOR)
    if len(parts) != 2:
        raise MalformedLayout(f"Expected 2 segments separated by '{SEGMENT_SEPARATOR}', got {len(parts)}")
    return parts[0], parts[1]


def _parse_engine_field(value: str, name: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise MalformedLayout(f"OBD field {name} is not numeric: {value!r}") from None


def decode_record(msg: str) -> TelemetryRecord:
    """
    Decodes and validates one SMS text.

    Raises ChecksumMismatch, MalformedLayout or RangeViolation; every other
    parse failure is reported as MalformedLayout.

    Args:
        msg (str): Message text, trailing newline allowed.

    Returns:
        TelemetryRecord: The decoded record.
    """
    gps_text, obd_text = _split_segments(msg)
    try:
        gps_sentence = parse_sentence(gps_text)
        obd_sentence = parse_sentence(obd_text)
    except ChecksumMismatch:
        raise
    except NmeaError as e:
        raise MalformedLayout(f"Bad segment framing: {e}") from None

    try:
        fix = parse_gprmc(gps_sentence)
    except OutOfRangeCoordinate as e:
        raise RangeViolation(str(e)) from None
    except NmeaError as e:
        raise MalformedLayout(f"Bad GPRMC segment: {e}") from None

    fields = obd_sentence.fields
    if len(fields) != 6 or fields[0] != OBD_ID:
        raise MalformedLayout(f"OBD segment must be {OBD_ID},id,rpm,coolant,speed,throttle")
    try:
        vehicle_id = validate_vehicle_id(fields[1])
    except InvalidVehicleId as e:
        raise MalformedLayout(str(e)) from None

    names = ("rpm", "coolant_c", "speed_kmh", "throttle_pct")
    values = {name: _parse_engine_field(v, name) for name, v in zip(names, fields[2:])}
    try:
        status = EngineStatus(**values)
    except ValidationError as e:
        err = e.errors()[0]
        raise RangeViolation(f"{err['loc'][0]}: {err['msg']}") from None

    return TelemetryRecord(vehicle_id=vehicle_id, fix=fix, status=status)
