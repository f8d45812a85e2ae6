"""
NMEA 0183 sentence handling
Checksum framing for any sentence, full parse/serialize for $GPRMC
"""

import datetime as dt
import logging
import operator
import re
from dataclasses import dataclass
from functools import reduce
from typing import List, Optional, Union

from pydantic import ValidationError

from .errors import (
    ChecksumMismatch,
    FieldCountMismatch,
    HemisphereInvalid,
    InvalidPayload,
    MalformedChecksum,
    MissingDollar,
    MissingStar,
    NonNumericField,
    OutOfRangeCoordinate,
    Overlength,
    WrongSentenceType,
)
from .models import GprmcFix

logger = logging.getLogger(__name__)

# '$' + payload + '*' + 2 hex digits + CR/LF
MAX_SENTENCE_LENGTH = 82
GPRMC_ID = "GPRMC"

_LAT_RE = re.compile(r"^(\d{2})(\d{2}(?:\.\d+)?)$")
_LON_RE = re.compile(r"^(\d{3})(\d{2}(?:\.\d+)?)$")
_TIME_RE = re.compile(r"^(\d{2})(\d{2})(\d{2})(?:\.(\d{1,6}))?$")
_DATE_RE = re.compile(r"^(\d{2})(\d{2})(\d{2})$")
_HEX_DIGITS = set("0123456789ABCDEFabcdef")

# 1e-4 arc-minute ticks per degree
_TICKS_PER_DEGREE = 600_000


@dataclass(frozen=True)
class RawSentence:
    """Checksum-verified sentence split into payload and checksum"""

    talker_payload: str
    checksum: str

    @property
    def fields(self) -> List[str]:
        return self.talker_payload.split(",")

    @property
    def sentence_id(self) -> str:
        return self.fields[0]

    def to_line(self) -> str:
        return f"${self.talker_payload}*{self.checksum}"


@dataclass(frozen=True)
class Unsupported:
    """Checksum-valid sentence of a type other than $GPRMC"""

    sentence_id: str


def _xor(data: bytes) -> int:
    return reduce(operator.xor, data, 0)


def compute_checksum(payload: str) -> str:
    """
    Computes the NMEA checksum of a payload.

    Args:
        payload (str): Characters between '$' and '*'.

    Returns:
        str: Two uppercase hex digits of the XOR over the payload bytes.
    """
    if "$" in payload or "*" in payload:
        raise InvalidPayload(f"Payload must not contain '$' or '*': {payload!r}")
    return f"{_xor(payload.encode('ascii')):02X}"


def parse_sentence(raw: str) -> RawSentence:
    """
    Splits a line into payload and checksum and verifies both framing and checksum.

    Args:
        raw (str): One NMEA line, with or without trailing CR/LF.

    Returns:
        RawSentence: The verified sentence.
    """
    line = raw.rstrip("\r\n")
    if not line.startswith("$"):
        raise MissingDollar(f"Sentence does not start with '$': {line[:20]!r}")
    star = line.rfind("*")
    if star < 0:
        raise MissingStar(f"Sentence has no checksum delimiter: {line[:20]!r}")
    if len(line) + 2 > MAX_SENTENCE_LENGTH:
        raise Overlength(f"Sentence is {len(line) + 2} characters, limit is {MAX_SENTENCE_LENGTH}")

    payload = line[1:star]
    transmitted = line[star + 1:]
    if len(transmitted) != 2:
        raise MalformedChecksum(f"Checksum field must be two characters, got {transmitted!r}")
    # A non-ASCII or non-hex byte in the frame can only come from line corruption
    if not payload.isascii() or not set(transmitted) <= _HEX_DIGITS:
        raise ChecksumMismatch(f"Corrupted sentence: {line!r}")

    computed = f"{_xor(payload.encode('ascii')):02X}"
    if computed != transmitted.upper():
        raise ChecksumMismatch(f"Checksum {transmitted.upper()} does not match computed {computed}")
    return RawSentence(talker_payload=payload, checksum=computed)


def _parse_float(value: str, name: str, empty_default: Optional[float] = None) -> float:
    if value == "" and empty_default is not None:
        return empty_default
    try:
        return float(value)
    except ValueError:
        raise NonNumericField(f"{name} field is not numeric: {value!r}") from None


def _parse_angle(value: str, hemisphere: str, pattern: re.Pattern, positive: str, negative: str, name: str) -> float:
    match = pattern.match(value)
    if not match:
        raise NonNumericField(f"{name} field is not ddmm.mmmm: {value!r}")
    degrees = int(match.group(1))
    minutes = float(match.group(2))
    if minutes >= 60.0:
        raise NonNumericField(f"{name} minutes out of range: {value!r}")
    if hemisphere == positive:
        sign = 1.0
    elif hemisphere == negative:
        sign = -1.0
    else:
        raise HemisphereInvalid(f"{name} hemisphere must be {positive}/{negative}, got {hemisphere!r}")
    return sign * (degrees + minutes / 60.0)


def _parse_time(value: str) -> dt.time:
    match = _TIME_RE.match(value)
    if not match:
        raise NonNumericField(f"Time field is not hhmmss.ss: {value!r}")
    hh, mm, ss, frac = match.groups()
    micro = int((frac or "0").ljust(6, "0"))
    try:
        return dt.time(int(hh), int(mm), int(ss), micro)
    except ValueError:
        raise NonNumericField(f"Time field out of range: {value!r}") from None


def _parse_date(value: str) -> dt.date:
    match = _DATE_RE.match(value)
    if not match:
        raise NonNumericField(f"Date field is not ddmmyy: {value!r}")
    dd, mo, yy = (int(g) for g in match.groups())
    # GPS started in 1980, two-digit years below 80 belong to this century
    year = 2000 + yy if yy < 80 else 1900 + yy
    try:
        return dt.date(year, mo, dd)
    except ValueError:
        raise NonNumericField(f"Date field out of range: {value!r}") from None


def parse_gprmc(s: RawSentence) -> GprmcFix:
    """
    Converts a verified $GPRMC sentence into a fix.

    Status 'V' still yields a fix, with valid=False.

    Args:
        s (RawSentence): Sentence returned by parse_sentence.

    Returns:
        GprmcFix: Position in signed decimal degrees plus time, speed and course.
    """
    fields = s.fields
    if fields[0] != GPRMC_ID:
        raise WrongSentenceType(f"Expected {GPRMC_ID}, got {fields[0]}")
    # 12 fields for NMEA 2.2, 13 with the 2.3 mode indicator
    if len(fields) not in (12, 13):
        raise FieldCountMismatch(f"GPRMC has {len(fields)} fields, expected 12 or 13")

    _, time_f, status, lat_f, lat_h, lon_f, lon_h, speed_f, course_f, date_f, var_f, var_h = fields[:12]
    if status not in ("A", "V"):
        raise NonNumericField(f"Status field must be A or V, got {status!r}")

    lat = _parse_angle(lat_f, lat_h, _LAT_RE, "N", "S", "Latitude")
    lon = _parse_angle(lon_f, lon_h, _LON_RE, "E", "W", "Longitude")
    magvar = None
    if var_f:
        magvar = _parse_float(var_f, "Magnetic variation")
        if var_h == "W":
            magvar = -magvar
        elif var_h != "E":
            raise HemisphereInvalid(f"Magnetic variation direction must be E/W, got {var_h!r}")

    try:
        return GprmcFix(
            utc_time=_parse_time(time_f),
            valid=status == "A",
            lat_deg=lat,
            lon_deg=lon,
            speed_knots=_parse_float(speed_f, "Speed", empty_default=0.0),
            course_deg=_parse_float(course_f, "Course", empty_default=0.0),
            date=_parse_date(date_f),
            magvar_deg=magvar,
        )
    except ValidationError as e:
        raise OutOfRangeCoordinate(f"GPRMC value out of range: {e.errors()[0]['msg']}") from None


def read_fix(line: str) -> Union[GprmcFix, Unsupported]:
    """Parses one line; checksum-valid sentences other than $GPRMC come back as Unsupported."""
    sentence = parse_sentence(line)
    if sentence.sentence_id != GPRMC_ID:
        logger.debug(f"Skipping unsupported sentence {sentence.sentence_id}")
        return Unsupported(sentence.sentence_id)
    return parse_gprmc(sentence)


def _format_angle(value: float, degree_width: int, positive: str, negative: str) -> str:
    ticks = round(abs(value) * _TICKS_PER_DEGREE)
    degrees, rest = divmod(ticks, _TICKS_PER_DEGREE)
    minutes_int, minutes_frac = divmod(rest, 10_000)
    hemisphere = positive if value >= 0 else negative
    return f"{degrees:0{degree_width}d}{minutes_int:02d}.{minutes_frac:04d},{hemisphere}"


def serialize_gprmc(fix: GprmcFix) -> str:
    """
    Emits a canonical, checksummed $GPRMC sentence.

    Minutes carry 4 fractional digits, speed and course one.

    Args:
        fix (GprmcFix): The fix to encode.

    Returns:
        str: Sentence text without line terminator.
    """
    if not (-90.0 <= fix.lat_deg <= 90.0) or not (-180.0 <= fix.lon_deg <= 180.0):
        raise OutOfRangeCoordinate(f"Coordinate out of range: lat={fix.lat_deg}, lon={fix.lon_deg}")

    t = fix.utc_time
    centis = round(t.microsecond / 10_000)
    seconds = t.second
    if centis == 100:
        # keep the clock field valid instead of rolling minutes over
        centis = 99
    time_f = f"{t.hour:02d}{t.minute:02d}{seconds:02d}.{centis:02d}"

    course = round(fix.course_deg, 1)
    if course >= 360.0:
        course = 0.0

    if fix.magvar_deg is None:
        var_f = ","
    else:
        var_f = f"{abs(fix.magvar_deg):05.1f},{'E' if fix.magvar_deg >= 0 else 'W'}"

    payload = ",".join([
        GPRMC_ID,
        time_f,
        "A" if fix.valid else "V",
        _format_angle(fix.lat_deg, 2, "N", "S"),
        _format_angle(fix.lon_deg, 3, "E", "W"),
        f"{fix.speed_knots:05.1f}",
        f"{course:05.1f}",
        fix.date.strftime("%d%m%y"),
        var_f,
    ])
    return f"${payload}*{compute_checksum(payload)}"
