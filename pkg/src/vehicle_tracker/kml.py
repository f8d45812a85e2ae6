"""
KML 2.2 documents and CSV persistence for tracked vehicles
"""

import datetime as dt
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import pandas as pd

from .errors import EmptyTrack, IoFailure
from .geodesy import GeodeticPoint
from .models import EngineStatus
from .track import Track, TrackSample

logger = logging.getLogger(__name__)

KML_NS = "http://www.opengis.net/kml/2.2"
GX_NS = "http://www.google.com/kml/ext/2.2"
ET.register_namespace("", KML_NS)
ET.register_namespace("gx", GX_NS)

CSV_COLUMNS = [
    "timestamp_utc",
    "vehicle_id",
    "lat_raw",
    "lon_raw",
    "lat_filtered",
    "lon_filtered",
    "rpm",
    "coolant_c",
    "speed_kmh",
    "throttle_pct",
]

# aabbggrr
STYLE_COLORS = {"raw": "ff0000ff", "filtered": "ff00ff00", "truth": "ffff0000"}

PointSource = Literal["raw", "filtered", "truth"]


@dataclass(frozen=True)
class TrackPoint:
    t: Optional[dt.datetime]
    pos: GeodeticPoint
    status: Optional[EngineStatus]
    source: PointSource = "raw"


CsvRow = Tuple[str, TrackPoint, TrackPoint]


def _tag(name: str) -> str:
    return f"{{{KML_NS}}}{name}"


def _sub(parent: ET.Element, name: str, text: Optional[str] = None) -> ET.Element:
    el = ET.SubElement(parent, _tag(name))
    if text is not None:
        el.text = text
    return el


def _fmt_deg(value: float) -> str:
    # 7 decimals, trailing zeros dropped
    s = f"{value:.7f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def format_coordinates(pos: GeodeticPoint) -> str:
    """'lon,lat,0': KML puts longitude first and the track is clamped to ground"""
    return f"{_fmt_deg(pos.lon_deg)},{_fmt_deg(pos.lat_deg)},0"


def format_timestamp(t: dt.datetime) -> str:
    if t.tzinfo is not None:
        t = t.astimezone(dt.timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%S.") + f"{t.microsecond // 1000:03d}Z"


def describe_status(status: Optional[EngineStatus]) -> str:
    """Engine parameter lines shown in the placemark balloon"""
    if status is None:
        return "No engine data"
    return "\n".join([
        f"Engine RPM: {status.rpm:g} rpm",
        f"Engine coolant temperature: {status.coolant_c:g} °C",
        f"Vehicle speed: {status.speed_kmh:g} km/h",
        f"Throttle position: {status.throttle_pct:.1f} %",
    ])


def _placemark(parent: Optional[ET.Element], p: TrackPoint, vehicle_id: str) -> ET.Element:
    pm = ET.Element(_tag("Placemark")) if parent is None else _sub(parent, "Placemark")
    _sub(pm, "name", vehicle_id)
    _sub(pm, "description", describe_status(p.status))
    if p.t is not None:
        _sub(_sub(pm, "TimeStamp"), "when", format_timestamp(p.t))
    if parent is not None:
        _sub(pm, "styleUrl", f"#{p.source}")
    _sub(_sub(pm, "Point"), "coordinates", format_coordinates(p.pos))
    return pm


def emit_placemark(p: TrackPoint, vehicle_id: str) -> str:
    """
    Live-position placemark.

    Args:
        p (TrackPoint): Current fix and engine status.
        vehicle_id (str): Placemark name.

    Returns:
        str: A standalone <Placemark> element in the KML 2.2 namespace.
    """
    return ET.tostring(_placemark(None, p, vehicle_id), encoding="unicode")


def emit_track_document(points: Sequence[TrackPoint], vehicle_id: str) -> str:
    """
    Full track document: one styled path per point source, in input order,
    plus a placemark at the latest fix carrying the engine status.

    Per-vertex timestamps are listed in the path's ExtendedData, aligned with
    the coordinates. When every point of a path is timed, the path also
    carries a gx:Track with one when per vertex for time-slider playback.
    The latest fix is taken from the filtered points when present.

    Args:
        points (Sequence[TrackPoint]): At least one point.
        vehicle_id (str): Document and placemark name.

    Returns:
        str: UTF-8 KML document text.
    """
    if not points:
        raise EmptyTrack(f"No points to draw for {vehicle_id}")

    by_source: Dict[str, List[TrackPoint]] = {}
    for p in points:
        by_source.setdefault(p.source, []).append(p)

    kml = ET.Element(_tag("kml"))
    doc = _sub(kml, "Document")
    _sub(doc, "name", vehicle_id)
    for source in by_source:
        style = _sub(doc, "Style")
        style.set("id", source)
        line = _sub(style, "LineStyle")
        _sub(line, "color", STYLE_COLORS.get(source, "ffffffff"))
        _sub(line, "width", "3" if source == "filtered" else "2")

    for source, pts in by_source.items():
        path = _sub(doc, "Placemark")
        _sub(path, "name", f"{vehicle_id} {source} track")
        _sub(path, "styleUrl", f"#{source}")
        if any(p.t is not None for p in pts):
            data = _sub(_sub(path, "ExtendedData"), "Data")
            data.set("name", "timestamps")
            _sub(data, "value", " ".join(format_timestamp(p.t) if p.t else "-" for p in pts))
        geometry = _sub(path, "MultiGeometry")
        ls = _sub(geometry, "LineString")
        _sub(ls, "tessellate", "1")
        _sub(ls, "coordinates", " ".join(format_coordinates(p.pos) for p in pts))
        if all(p.t is not None for p in pts):
            gx_track = ET.SubElement(geometry, f"{{{GX_NS}}}Track")
            for p in pts:
                _sub(gx_track, "when", format_timestamp(p.t))
            for p in pts:
                ET.SubElement(gx_track, f"{{{GX_NS}}}coord").text = format_coordinates(p.pos).replace(",", " ")

    latest = (by_source.get("filtered") or points)[-1]
    _placemark(doc, latest, vehicle_id)

    ET.indent(kml)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(kml, encoding="unicode") + "\n"


def write_kml(points: Sequence[TrackPoint], vehicle_id: str, path: Union[str, Path]) -> Path:
    """Rewrites the vehicle's KML document in place."""
    text = emit_track_document(points, vehicle_id)
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"Cannot write {path}: {e}") from e
    return path


def track_points(track: Track, statuses: Optional[Sequence[Optional[EngineStatus]]] = None) -> List[TrackPoint]:
    """TrackPoints for every sample of a track, tagged with the track's source"""
    statuses = statuses if statuses is not None else [None] * len(track)
    return [TrackPoint(s.utc, s.pos, st, track.source) for s, st in zip(track, statuses)]


# === CSV ===

def _row_dict(vehicle_id: str, raw: TrackPoint, filtered: TrackPoint) -> dict:
    status = raw.status or filtered.status
    return {
        "timestamp_utc": format_timestamp(raw.t) if raw.t else "",
        "vehicle_id": vehicle_id,
        "lat_raw": f"{raw.pos.lat_deg:.7f}",
        "lon_raw": f"{raw.pos.lon_deg:.7f}",
        "lat_filtered": f"{filtered.pos.lat_deg:.7f}",
        "lon_filtered": f"{filtered.pos.lon_deg:.7f}",
        "rpm": f"{status.rpm:.2f}" if status else "",
        "coolant_c": f"{status.coolant_c:.0f}" if status else "",
        "speed_kmh": f"{status.speed_kmh:.0f}" if status else "",
        "throttle_pct": f"{status.throttle_pct:.1f}" if status else "",
    }


def write_csv(rows: Iterable[CsvRow], path: Union[str, Path], append: bool = False) -> int:
    """
    Writes (vehicle_id, raw point, filtered point) rows.

    The header is written unless appending to an existing file.

    Args:
        rows (Iterable[CsvRow]): One entry per epoch.
        path (Union[str, Path]): Destination file.
        append (bool): Add to the end of an existing file.

    Returns:
        int: Number of data rows written.
    """
    df = pd.DataFrame([_row_dict(*r) for r in rows], columns=CSV_COLUMNS)
    path = Path(path)
    header = not (append and path.exists())
    try:
        df.to_csv(path, mode="a" if append else "w", header=header, index=False, lineterminator="\n")
    except OSError as e:
        raise IoFailure(f"Cannot write {path}: {e}") from e
    return len(df)


def _parse_timestamp(value) -> Optional[dt.datetime]:
    if not isinstance(value, str) or not value:
        return None
    return dt.datetime.strptime(value, "%Y-%m-%dT%H:%M:%S.%fZ").replace(tzinfo=dt.timezone.utc)


def _status_from_row(r) -> Optional[EngineStatus]:
    if pd.isna(r.rpm):
        return None
    return EngineStatus(
        rpm=float(r.rpm), coolant_c=float(r.coolant_c), speed_kmh=float(r.speed_kmh), throttle_pct=float(r.throttle_pct)
    )


def read_csv(path: Union[str, Path]) -> List[CsvRow]:
    """Reads a station CSV back into (vehicle_id, raw, filtered) rows."""
    try:
        df = pd.read_csv(path, dtype={"vehicle_id": str, "timestamp_utc": str})
    except OSError as e:
        raise IoFailure(f"Cannot read {path}: {e}") from e
    missing = set(CSV_COLUMNS) - set(df.columns)
    if missing:
        raise ValueError(f"{path} lacks station CSV columns: {sorted(missing)}")
    rows = []
    for r in df.itertuples(index=False):
        t = _parse_timestamp(r.timestamp_utc)
        status = _status_from_row(r)
        raw = TrackPoint(t, GeodeticPoint(float(r.lat_raw), float(r.lon_raw)), status, "raw")
        filtered = TrackPoint(t, GeodeticPoint(float(r.lat_filtered), float(r.lon_filtered)), status, "filtered")
        rows.append((r.vehicle_id, raw, filtered))
    return rows


def load_track(path: Union[str, Path], which: Literal["raw", "filtered", "truth"] = "raw", vehicle_id: Optional[str] = None) -> Track:
    """
    Loads a track from either a station CSV or a simulator truth CSV.

    The layout is detected from the header: station files provide the raw or
    filtered columns, truth files (epoch, lat, lon, alt) provide a single track.
    """
    try:
        header = pd.read_csv(path, nrows=0).columns
    except OSError as e:
        raise IoFailure(f"Cannot read {path}: {e}") from e

    if {"epoch", "lat", "lon"} <= set(header):
        df = pd.read_csv(path)
        points = [GeodeticPoint(float(r.lat), float(r.lon), float(getattr(r, "alt", 0.0))) for r in df.itertuples(index=False)]
        return Track("truth", [TrackSample(int(r.epoch), p) for r, p in zip(df.itertuples(index=False), points)])

    if which == "truth":
        raise ValueError(f"{path} is a station CSV and holds no truth track")
    rows = read_csv(path)
    if vehicle_id is not None:
        rows = [r for r in rows if r[0] == vehicle_id]
    pick = 1 if which == "raw" else 2
    return Track(which, [TrackSample(k, r[pick].pos, utc=r[pick].t) for k, r in enumerate(rows)])
