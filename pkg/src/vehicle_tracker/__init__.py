"""
Vehicle Tracker Package

GPS-GSM vehicle tracking toolkit: NMEA/SMS telemetry codecs, WGS-84
geodesy, a GNSS measurement simulator, Kalman position correction, accuracy
statistics, KML/CSV output and the recipient station.
"""

from .accuracy import AccuracyReport, axis_sigmas, compare, two_drms
from .config import FilterDefaults, SimulationDefaults, StationConfig, print_config
from .geodesy import EcefPoint, GeodeticPoint, ecef_to_geodetic, enu_offset_m, geodetic_to_ecef
from .gnss_sim import (
    NoiseModel,
    PseudorangeEpoch,
    Satellite,
    TrajectoryConfig,
    build_constellation,
    least_squares_fix,
    simulate_run,
    true_pseudorange,
)
from .kalman import (
    EcefState,
    FilterConfig,
    PositionFilter,
    PseudorangeFilter,
    measurement_row,
    predict,
    run_position_filter,
    run_pseudorange_filter,
    update,
)
from .kml import TrackPoint, emit_placemark, emit_track_document, write_csv
from .models import EngineStatus, GprmcFix, TelemetryRecord
from .nmea import RawSentence, compute_checksum, parse_gprmc, parse_sentence, serialize_gprmc
from .station import Station, StationSummary, run
from .telemetry import decode_obd, decode_record, encode_record
from .track import Track, TrackSample

__version__ = "1.0.0"
__all__ = [
    "AccuracyReport",
    "axis_sigmas",
    "compare",
    "two_drms",
    "FilterDefaults",
    "SimulationDefaults",
    "StationConfig",
    "print_config",
    "EcefPoint",
    "GeodeticPoint",
    "ecef_to_geodetic",
    "enu_offset_m",
    "geodetic_to_ecef",
    "NoiseModel",
    "PseudorangeEpoch",
    "Satellite",
    "TrajectoryConfig",
    "build_constellation",
    "least_squares_fix",
    "simulate_run",
    "true_pseudorange",
    "EcefState",
    "FilterConfig",
    "PositionFilter",
    "PseudorangeFilter",
    "measurement_row",
    "predict",
    "run_position_filter",
    "run_pseudorange_filter",
    "update",
    "TrackPoint",
    "emit_placemark",
    "emit_track_document",
    "write_csv",
    "EngineStatus",
    "GprmcFix",
    "TelemetryRecord",
    "RawSentence",
    "compute_checksum",
    "parse_gprmc",
    "parse_sentence",
    "serialize_gprmc",
    "Station",
    "StationSummary",
    "run",
    "decode_obd",
    "decode_record",
    "encode_record",
    "Track",
    "TrackSample",
]
