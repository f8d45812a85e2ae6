"""
Ordered position sequences shared by the filters, the accuracy statistics
and the KML/CSV writers.
"""

import datetime as dt
from dataclasses import dataclass, field
from typing import Iterator, List, Literal, Optional

import numpy as np

from .geodesy import GeodeticPoint

TrackSource = Literal["raw", "filtered", "truth"]


@dataclass(frozen=True)
class TrackSample:
    epoch: int
    pos: GeodeticPoint
    utc: Optional[dt.datetime] = None
    # set when the filter had too few satellites and only predicted
    predicted_only: bool = False
    clock_bias_m: Optional[float] = None


@dataclass
class Track:
    """Positions in arrival order, tagged with where they came from"""

    source: TrackSource
    samples: List[TrackSample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[TrackSample]:
        return iter(self.samples)

    def __getitem__(self, index: int) -> TrackSample:
        return self.samples[index]

    def append(self, sample: TrackSample) -> None:
        self.samples.append(sample)

    @property
    def lats(self) -> np.ndarray:
        return np.array([s.pos.lat_deg for s in self.samples], dtype=float)

    @property
    def lons(self) -> np.ndarray:
        return np.array([s.pos.lon_deg for s in self.samples], dtype=float)

    @property
    def positions(self) -> List[GeodeticPoint]:
        return [s.pos for s in self.samples]

    @classmethod
    def from_points(cls, source: TrackSource, points: List[GeodeticPoint]) -> "Track":
        return cls(source, [TrackSample(epoch=i, pos=p) for i, p in enumerate(points)])
