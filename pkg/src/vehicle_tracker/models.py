"""
Message models carried over the SMS link: the $GPRMC fix, the four OBD-II
engine parameters and the record that combines them.
"""

import datetime as dt
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field


class GprmcFix(BaseModel):
    """One parsed $GPRMC sentence"""

    model_config = ConfigDict(frozen=True)

    utc_time: dt.time
    valid: bool
    lat_deg: float = Field(ge=-90.0, le=90.0)
    lon_deg: float = Field(ge=-180.0, le=180.0)
    speed_knots: float = Field(ge=0.0)
    course_deg: float = Field(ge=0.0, lt=360.0)
    date: dt.date
    # +E / -W, None when the receiver leaves the field empty
    magvar_deg: Optional[float] = None

    @property
    def timestamp(self) -> dt.datetime:
        """UTC instant combining the sentence date and time"""
        return dt.datetime.combine(self.date, self.utc_time).replace(tzinfo=dt.timezone.utc)


class EngineStatus(BaseModel):
    """RPM, coolant temperature, vehicle speed and throttle read from OBD-II"""

    model_config = ConfigDict(frozen=True)

    rpm: float = Field(ge=0.0, le=16383.75)
    coolant_c: float = Field(ge=-40.0, le=215.0)
    speed_kmh: float = Field(ge=0.0, le=255.0)
    throttle_pct: float = Field(ge=0.0, le=100.0)


class TelemetryRecord(BaseModel):
    """Payload of one tracking SMS"""

    model_config = ConfigDict(frozen=True)

    vehicle_id: str
    fix: GprmcFix
    status: EngineStatus
