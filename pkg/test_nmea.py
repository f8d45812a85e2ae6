"""
Tests for NMEA framing and $GPRMC parse/serialize
"""

import datetime as dt
import operator
import string
from functools import reduce

import numpy as np
import pytest

from src.vehicle_tracker.errors import (
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
from src.vehicle_tracker.models import GprmcFix
from src.vehicle_tracker.nmea import (
    Unsupported,
    compute_checksum,
    parse_gprmc,
    parse_sentence,
    read_fix,
    serialize_gprmc,
)

REFERENCE = "$GPRMC,123519,A,4807.038,N,01131.000,E,022.4,084.4,230394,003.1,W*6A"


def _frame(payload: str) -> str:
    return f"${payload}*{compute_checksum(payload)}"


def _fix(**kw) -> GprmcFix:
    values = dict(
        utc_time=dt.time(8, 30, 15, 250000),
        valid=True,
        lat_deg=48.1173,
        lon_deg=11.516667,
        speed_knots=22.4,
        course_deg=84.4,
        date=dt.date(2013, 6, 1),
    )
    values.update(kw)
    return GprmcFix(**values)


class TestChecksum:
    def test_reference_sentence_checksum(self):
        payload = REFERENCE[1:REFERENCE.index("*")]
        xor = reduce(operator.xor, payload.encode("ascii"), 0)
        assert compute_checksum(payload) == f"{xor:02X}" == "6A"

    def test_empty_payload(self):
        assert compute_checksum("") == "00"

    def test_payload_with_delimiters_rejected(self):
        with pytest.raises(InvalidPayload):
            compute_checksum("GPRMC*12")
        with pytest.raises(InvalidPayload):
            compute_checksum("$GPRMC")


class TestParseSentence:
    def test_reference_sentence(self):
        s = parse_sentence(REFERENCE + "\r\n")
        assert s.sentence_id == "GPRMC"
        assert s.checksum == "6A"
        assert s.to_line() == REFERENCE

    def test_lowercase_checksum_accepted(self):
        assert parse_sentence(REFERENCE[:-2] + "6a").checksum == "6A"

    def test_missing_dollar(self):
        with pytest.raises(MissingDollar):
            parse_sentence(REFERENCE[1:])

    def test_missing_star(self):
        with pytest.raises(MissingStar):
            parse_sentence(REFERENCE.replace("*6A", ""))

    def test_malformed_checksum(self):
        with pytest.raises(MalformedChecksum):
            parse_sentence(REFERENCE[:-1])

    def test_checksum_mismatch(self):
        with pytest.raises(ChecksumMismatch):
            parse_sentence(REFERENCE[:-2] + "6B")

    def test_overlength(self):
        line = _frame("GPTXT," + "A" * 80)
        with pytest.raises(Overlength):
            parse_sentence(line)

    def test_single_character_corruption_always_detected(self):
        rng = np.random.default_rng(5)
        alphabet = string.ascii_letters + string.digits + ",.-"
        payload_end = REFERENCE.index("*")
        for pos in range(1, payload_end):
            original = REFERENCE[pos]
            choices = [c for c in alphabet if c != original]
            replacement = choices[rng.integers(len(choices))]
            corrupted = REFERENCE[:pos] + replacement + REFERENCE[pos + 1:]
            with pytest.raises(ChecksumMismatch):
                parse_sentence(corrupted)

    def test_non_ascii_corruption_detected(self):
        with pytest.raises(ChecksumMismatch):
            parse_sentence(REFERENCE.replace("4807", "48°7"))


class TestParseGprmc:
    def test_reference_values(self):
        fix = parse_gprmc(parse_sentence(REFERENCE))
        assert fix.lat_deg == pytest.approx(48.117300, abs=1e-6)
        assert fix.lon_deg == pytest.approx(11.516667, abs=1e-6)
        assert fix.valid
        assert fix.utc_time == dt.time(12, 35, 19)
        assert fix.date == dt.date(1994, 3, 23)
        assert fix.speed_knots == pytest.approx(22.4)
        assert fix.course_deg == pytest.approx(84.4)
        assert fix.magvar_deg == pytest.approx(-3.1)

    def test_void_status_still_returns_fix(self):
        line = _frame("GPRMC,123519,V,4807.038,N,01131.000,E,022.4,084.4,230394,003.1,W")
        fix = parse_gprmc(parse_sentence(line))
        assert not fix.valid
        assert fix.lat_deg == pytest.approx(48.1173)

    def test_southern_western_hemispheres(self):
        line = _frame("GPRMC,000000,A,3330.000,S,07015.000,W,000.0,000.0,010113,,")
        fix = parse_gprmc(parse_sentence(line))
        assert fix.lat_deg == pytest.approx(-33.5)
        assert fix.lon_deg == pytest.approx(-70.25)
        assert fix.magvar_deg is None

    def test_mode_indicator_field_accepted(self):
        line = _frame("GPRMC,123519,A,4807.038,N,01131.000,E,022.4,084.4,230394,003.1,W,A")
        assert parse_gprmc(parse_sentence(line)).lat_deg == pytest.approx(48.1173)

    def test_empty_speed_and_course_read_as_zero(self):
        line = _frame("GPRMC,123519,A,4807.038,N,01131.000,E,,,230394,,")
        fix = parse_gprmc(parse_sentence(line))
        assert fix.speed_knots == 0.0
        assert fix.course_deg == 0.0

    def test_wrong_sentence_type(self):
        line = _frame("GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,")
        with pytest.raises(WrongSentenceType):
            parse_gprmc(parse_sentence(line))

    def test_field_count_mismatch(self):
        line = _frame("GPRMC,123519,A,4807.038,N,01131.000,E,022.4,084.4,230394")
        with pytest.raises(FieldCountMismatch):
            parse_gprmc(parse_sentence(line))

    @pytest.mark.parametrize("lat", ["48A7.038", "", "48.07038", "48071.038"])
    def test_non_numeric_latitude(self, lat):
        line = _frame(f"GPRMC,123519,A,{lat},N,01131.000,E,022.4,084.4,230394,,")
        with pytest.raises(NonNumericField):
            parse_gprmc(parse_sentence(line))

    def test_invalid_hemisphere(self):
        line = _frame("GPRMC,123519,A,4807.038,X,01131.000,E,022.4,084.4,230394,,")
        with pytest.raises(HemisphereInvalid):
            parse_gprmc(parse_sentence(line))

    def test_latitude_beyond_pole(self):
        line = _frame("GPRMC,123519,A,9100.000,N,01131.000,E,022.4,084.4,230394,,")
        with pytest.raises(OutOfRangeCoordinate):
            parse_gprmc(parse_sentence(line))

    def test_bad_date(self):
        line = _frame("GPRMC,123519,A,4807.038,N,01131.000,E,022.4,084.4,320394,,")
        with pytest.raises(NonNumericField):
            parse_gprmc(parse_sentence(line))


class TestReadFix:
    def test_gprmc(self):
        assert isinstance(read_fix(REFERENCE), GprmcFix)

    def test_other_sentence_is_unsupported(self):
        line = _frame("GPGSA,A,3,04,05,,09,12,,,24,,,,,2.5,1.3,2.1")
        assert read_fix(line) == Unsupported("GPGSA")


class TestSerialize:
    def test_format_and_checksum(self):
        line = serialize_gprmc(_fix())
        assert line.startswith("$GPRMC,083015.25,A,4807.0380,N,01131.0000,E,022.4,084.4,010613,")
        payload, checksum = line[1:].split("*")
        assert checksum == compute_checksum(payload)
        assert len(line) + 2 <= 82

    def test_southern_western_letters(self):
        line = serialize_gprmc(_fix(lat_deg=-33.5, lon_deg=-70.25))
        assert ",3330.0000,S,07015.0000,W," in line

    def test_magnetic_variation_round_trip(self):
        fix = read_fix(serialize_gprmc(_fix(magvar_deg=-3.1)))
        assert fix.magvar_deg == pytest.approx(-3.1)

    def test_out_of_range_rejected(self):
        fix = _fix().model_copy(update={"lat_deg": 95.0})
        with pytest.raises(OutOfRangeCoordinate):
            serialize_gprmc(fix)

    def test_random_round_trips(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            fix = _fix(
                utc_time=dt.time(int(rng.integers(24)), int(rng.integers(60)), int(rng.integers(60)), int(rng.integers(100)) * 10_000),
                valid=bool(rng.integers(2)),
                lat_deg=float(rng.uniform(-90.0, 90.0)),
                lon_deg=float(rng.uniform(-180.0, 180.0)),
                speed_knots=float(rng.uniform(0.0, 200.0)),
                course_deg=float(rng.uniform(0.0, 360.0)),
                date=dt.date(1980, 1, 1) + dt.timedelta(days=int(rng.integers(0, 36500))),
            )
            back = read_fix(serialize_gprmc(fix))
            assert abs(back.lat_deg - fix.lat_deg) <= 1e-6
            assert abs(back.lon_deg - fix.lon_deg) <= 1e-6
            assert abs(back.speed_knots - fix.speed_knots) <= 0.05 + 1e-9
            course_diff = abs(back.course_deg - fix.course_deg) % 360.0
            assert min(course_diff, 360.0 - course_diff) <= 0.05 + 1e-9
            assert back.utc_time == fix.utc_time
            assert back.date == fix.date
            assert back.valid == fix.valid
