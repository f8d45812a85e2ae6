"""
Horizontal accuracy statistics: per-axis standard deviations and 2DRMS
"""

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .errors import IoFailure, LengthMismatch, TooFewPoints
from .geodesy import GeodeticPoint, enu_offsets_m
from .track import Track

logger = logging.getLogger(__name__)

Reference = Literal["mean", "truth"]

REPORT_COLUMNS = ["sigma_east_m", "sigma_north_m", "two_drms_m", "n_points", "reference"]


@dataclass(frozen=True)
class AccuracyReport:
    sigma_east_m: float
    sigma_north_m: float
    two_drms_m: float
    n_points: int
    reference: Reference

    @classmethod
    def from_sigmas(cls, sigma_east_m: float, sigma_north_m: float, n_points: int, reference: Reference) -> "AccuracyReport":
        return cls(sigma_east_m, sigma_north_m, two_drms(sigma_east_m, sigma_north_m), n_points, reference)

    def to_row(self) -> dict:
        return asdict(self)

    def to_text(self, label: str = "") -> str:
        title = f"{label} " if label else ""
        return (
            f"{title}accuracy ({self.reference}-referenced, {self.n_points} points)\n"
            f"  sigma east : {self.sigma_east_m:8.2f} m\n"
            f"  sigma north: {self.sigma_north_m:8.2f} m\n"
            f"  2DRMS      : {self.two_drms_m:8.2f} m"
        )


def two_drms(sigma_east_m: float, sigma_north_m: float) -> float:
    """Twice the root-sum-square of the horizontal sigmas"""
    if sigma_east_m < 0 or sigma_north_m < 0:
        raise ValueError("Standard deviations must be >= 0")
    return 2.0 * math.sqrt(sigma_east_m ** 2 + sigma_north_m ** 2)


def _deviations(track: Track, reference: Union[Reference, Track]) -> np.ndarray:
    n = len(track)
    if n < 2:
        raise TooFewPoints(f"Accuracy needs at least 2 points, got {n}")
    lats, lons = track.lats, track.lons
    if isinstance(reference, Track):
        if len(reference) != n:
            raise LengthMismatch(f"Track has {n} points, truth has {len(reference)}")
        anchor = GeodeticPoint(float(np.mean(reference.lats)), float(np.mean(reference.lons)))
        return enu_offsets_m(anchor, lats, lons) - enu_offsets_m(anchor, reference.lats, reference.lons)
    if reference != "mean":
        raise ValueError(f"Reference must be 'mean' or a truth Track, got {reference!r}")
    anchor = GeodeticPoint(float(np.mean(lats)), float(np.mean(lons)))
    return enu_offsets_m(anchor, lats, lons)


def axis_sigmas(track: Track, reference: Union[Reference, Track] = "mean") -> Tuple[float, float]:
    """
    East and north standard deviations of a track in meters.

    With reference="mean" the deviations are taken about the track's own mean
    (sample standard deviation). With a truth Track, aligned by index, the
    deviations from truth are combined as a root-mean-square with the same
    n-1 denominator.

    Args:
        track (Track): At least 2 points.
        reference (Union[str, Track]): "mean" or the truth track.

    Returns:
        Tuple[float, float]: (sigma_east_m, sigma_north_m).
    """
    d = _deviations(track, reference)
    if isinstance(reference, Track):
        sigmas = np.sqrt(np.sum(d * d, axis=0) / (len(d) - 1))
    else:
        sigmas = np.std(d, axis=0, ddof=1)
    return float(sigmas[0]), float(sigmas[1])


def report(track: Track, truth: Optional[Track] = None) -> AccuracyReport:
    reference = truth if truth is not None else "mean"
    se, sn = axis_sigmas(track, reference)
    return AccuracyReport.from_sigmas(se, sn, len(track), "truth" if truth is not None else "mean")


def compare(raw: Track, filtered: Track, truth: Optional[Track] = None) -> Tuple[AccuracyReport, AccuracyReport, float]:
    """
    Accuracy of a raw and a filtered track, plus the 2DRMS improvement ratio.

    Returns:
        Tuple[AccuracyReport, AccuracyReport, float]: Raw report, filtered report, raw/filtered 2DRMS.
    """
    if len(raw) != len(filtered):
        raise LengthMismatch(f"Raw track has {len(raw)} points, filtered has {len(filtered)}")
    raw_report = report(raw, truth)
    filtered_report = report(filtered, truth)
    if filtered_report.two_drms_m == 0.0:
        ratio = 1.0 if raw_report.two_drms_m == 0.0 else math.inf
    else:
        ratio = raw_report.two_drms_m / filtered_report.two_drms_m
    logger.info(f"2DRMS raw={raw_report.two_drms_m:.2f} m, filtered={filtered_report.two_drms_m:.2f} m, ratio={ratio:.2f}")
    return raw_report, filtered_report, ratio


def write_reports_csv(rows: Iterable[Tuple[str, str, AccuracyReport]], path: Union[str, Path]) -> int:
    """Writes (vehicle_id, track label, report) rows; returns the row count."""
    records: List[dict] = [{"vehicle_id": vid, "track": label, **rep.to_row()} for vid, label, rep in rows]
    df = pd.DataFrame(records, columns=["vehicle_id", "track", *REPORT_COLUMNS])
    try:
        df.to_csv(path, index=False, float_format="%.4f", lineterminator="\n")
    except OSError as e:
        raise IoFailure(f"Cannot write {path}: {e}") from e
    return len(df)
