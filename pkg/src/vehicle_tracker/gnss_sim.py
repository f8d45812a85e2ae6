"""
GNSS measurement simulator
Static MEO constellation, ground-truth trajectories and noisy pseudorange /
$GPRMC / OBD-II streams for desk-scale verification of the filters.
"""

import datetime as dt
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg

from .errors import (
    CannotSatisfyGeometry,
    InsufficientSatellites,
    IoFailure,
    NoConvergence,
    SingularGeometry,
)
from .geodesy import (
    EcefPoint,
    GeodeticPoint,
    ecef_to_geodetic,
    enu_offset_m,
    enu_rotation,
    geodetic_to_ecef,
    offset_to_geodetic,
)
from .models import EngineStatus, GprmcFix
from .nmea import serialize_gprmc
from .telemetry import PID_COOLANT, PID_RPM, PID_SPEED, PID_THROTTLE, encode_obd, status_from_obd

logger = logging.getLogger(__name__)

ORBIT_RADIUS_M = 26_560_000.0
MIN_SATELLITES = 4
KMH_PER_KNOT = 1.852

TRUTH_COLUMNS = ["epoch", "lat", "lon", "alt"]
PSEUDORANGE_COLUMNS = ["epoch", "utc", "sat_id", "sx", "sy", "sz", "pr_m"]


@dataclass(frozen=True)
class Satellite:
    id: int
    pos: EcefPoint


@dataclass(frozen=True)
class PseudorangeEntry:
    satellite_id: int
    satellite_pos: EcefPoint
    pr_m: float


@dataclass(frozen=True)
class PseudorangeEpoch:
    """Pseudoranges observed at one epoch"""

    epoch: int
    t_s: float
    entries: Tuple[PseudorangeEntry, ...]
    utc: Optional[dt.datetime] = None

    @property
    def sat_positions(self) -> np.ndarray:
        return np.array([e.satellite_pos for e in self.entries], dtype=float).reshape(-1, 3)

    @property
    def pseudoranges(self) -> np.ndarray:
        return np.array([e.pr_m for e in self.entries], dtype=float)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class MultipathModel:
    """Additive bias bursts on one randomly chosen satellite"""

    bias_m: float
    burst_len_epochs: int
    burst_prob: float


@dataclass(frozen=True)
class NoiseModel:
    pr_sigma_m: float = 0.0
    clock_offset0_m: float = 0.0
    clock_walk_m: float = 0.0
    multipath: Optional[MultipathModel] = None

    def __post_init__(self):
        errors = []
        if self.pr_sigma_m < 0 or self.clock_walk_m < 0:
            errors.append("noise sigmas must be >= 0")
        if self.multipath is not None:
            if not (0.0 <= self.multipath.burst_prob <= 1.0):
                errors.append("burst_prob must be within [0, 1]")
            if self.multipath.burst_len_epochs < 1:
                errors.append("burst_len_epochs must be >= 1")
        if errors:
            raise ValueError("Invalid noise model:\n" + "\n".join(f"- {e}" for e in errors))


@dataclass(frozen=True)
class TrajectoryConfig:
    kind: Literal["static", "line", "circle", "waypoints"]
    origin: GeodeticPoint
    speed_kmh: float = 0.0
    duration_epochs: int = 1
    epoch_dt_s: float = 1.0
    rng_seed: int = 0
    heading_deg: float = 90.0
    radius_m: float = 200.0
    waypoints: Tuple[GeodeticPoint, ...] = ()
    start_utc: dt.datetime = dt.datetime(2013, 6, 1, 8, 0, 0, tzinfo=dt.timezone.utc)

    def __post_init__(self):
        errors = []
        if self.speed_kmh < 0:
            errors.append("speed_kmh must be >= 0")
        if self.duration_epochs < 1:
            errors.append("duration_epochs must be >= 1")
        if self.epoch_dt_s <= 0:
            errors.append("epoch_dt_s must be > 0")
        if self.kind == "circle" and self.radius_m <= 0:
            errors.append("radius_m must be > 0 for a circle")
        if self.kind == "waypoints" and len(self.waypoints) < 2:
            errors.append("waypoints trajectory needs at least 2 waypoints")
        if errors:
            raise ValueError("Invalid trajectory:\n" + "\n".join(f"- {e}" for e in errors))


@dataclass(frozen=True)
class SimulatedEpoch:
    truth: GeodeticPoint
    epoch: PseudorangeEpoch
    nmea: str
    status: EngineStatus
    fix: GprmcFix
    clock_bias_m: float


@dataclass(frozen=True)
class DilutionOfPrecision:
    gdop: float
    pdop: float
    hdop: float
    vdop: float
    tdop: float


# === GEOMETRY ===

def ranges_m(sat_positions: np.ndarray, rec: Sequence[float]) -> np.ndarray:
    """Euclidean receiver-to-satellite distances, one per row of sat_positions"""
    d = np.asarray(sat_positions, dtype=float).reshape(-1, 3) - np.asarray(rec, dtype=float)[:3]
    return np.sqrt(np.sum(d * d, axis=1))


def true_pseudorange(sat: EcefPoint, rec: EcefPoint, bu_m: float) -> float:
    """Geometric range plus receiver clock offset, both in meters."""
    return float(ranges_m(np.asarray(sat), rec)[0]) + bu_m


def geometry_matrix(sat_positions: np.ndarray, rec: Sequence[float]) -> np.ndarray:
    """Rows of [-unit line of sight, 1] from the receiver to each satellite"""
    los = np.asarray(sat_positions, dtype=float) - np.asarray(rec, dtype=float)[:3]
    ranges = np.linalg.norm(los, axis=1)
    return np.column_stack((-los / ranges[:, None], np.ones(len(los))))


def compute_dop(sats: Sequence[Satellite], receiver: GeodeticPoint) -> DilutionOfPrecision:
    """
    Dilution of precision of a constellation seen from a receiver.

    Args:
        sats (Sequence[Satellite]): Satellites in view.
        receiver (GeodeticPoint): Receiver location.

    Returns:
        DilutionOfPrecision: GDOP plus its position, horizontal, vertical and time parts.
    """
    h = geometry_matrix(np.array([s.pos for s in sats]), geodetic_to_ecef(receiver))
    try:
        cov = np.linalg.inv(h.T @ h)
    except np.linalg.LinAlgError:
        raise SingularGeometry("Geometry matrix is rank deficient") from None
    rot = enu_rotation(receiver)
    enu_cov = rot @ cov[:3, :3] @ rot.T
    return DilutionOfPrecision(
        gdop=math.sqrt(np.trace(cov)),
        pdop=math.sqrt(np.trace(cov[:3, :3])),
        hdop=math.sqrt(enu_cov[0, 0] + enu_cov[1, 1]),
        vdop=math.sqrt(enu_cov[2, 2]),
        tdop=math.sqrt(cov[3, 3]),
    )


def elevation_deg(sat: EcefPoint, receiver: GeodeticPoint) -> float:
    los = np.subtract(sat, geodetic_to_ecef(receiver))
    up = enu_rotation(receiver)[2] @ los
    return math.degrees(math.asin(up / np.linalg.norm(los)))


def _satellite_at(receiver: GeodeticPoint, azimuth_deg: float, elevation: float) -> EcefPoint:
    az, el = math.radians(azimuth_deg), math.radians(elevation)
    enu_dir = np.array([math.cos(el) * math.sin(az), math.cos(el) * math.cos(az), math.sin(el)])
    u = enu_rotation(receiver).T @ enu_dir
    r0 = np.array(geodetic_to_ecef(receiver))
    # range along u that lands on the orbit shell
    b = r0 @ u
    rho = -b + math.sqrt(b * b - (r0 @ r0 - ORBIT_RADIUS_M ** 2))
    return EcefPoint(*(r0 + rho * u))


def build_constellation(
    n: int,
    seed: int,
    origin: GeodeticPoint = GeodeticPoint(0.0, 0.0, 0.0),
    min_elevation_deg: float = 15.0,
    max_gdop: float = 10.0,
    max_retries: int = 100,
) -> List[Satellite]:
    """
    Places n satellites on the 26,560 km shell, all above the elevation mask at origin.

    One satellite is placed high in the sky and the rest are spread in azimuth
    so the geometry is usable; draws are repeated until GDOP < max_gdop.

    Args:
        n (int): Number of satellites, at least 4.
        seed (int): Random seed.
        origin (GeodeticPoint): Receiver location the mask refers to.
        min_elevation_deg (float): Elevation mask in degrees.
        max_gdop (float): Acceptance threshold on GDOP.
        max_retries (int): Draws before giving up.

    Returns:
        List[Satellite]: Satellites with ids 1..n.
    """
    if n < MIN_SATELLITES:
        raise InsufficientSatellites(f"At least {MIN_SATELLITES} satellites are needed, got {n}")
    rng = np.random.default_rng(seed)
    for attempt in range(1, max_retries + 1):
        base_az = rng.uniform(0.0, 360.0)
        sats = [Satellite(1, _satellite_at(origin, rng.uniform(0.0, 360.0), rng.uniform(60.0, 88.0)))]
        for i in range(1, n):
            az = base_az + 360.0 * (i - 1) / (n - 1) + rng.uniform(-15.0, 15.0)
            el = rng.uniform(min_elevation_deg + 0.5, 60.0)
            sats.append(Satellite(i + 1, _satellite_at(origin, az % 360.0, el)))
        try:
            dop = compute_dop(sats, origin)
        except SingularGeometry:
            continue
        if dop.gdop < max_gdop:
            logger.info(f"Constellation of {n} satellites built on attempt {attempt}: GDOP={dop.gdop:.2f}, HDOP={dop.hdop:.2f}")
            return sats
    raise CannotSatisfyGeometry(f"No geometry with GDOP < {max_gdop} after {max_retries} draws")


def calibrate_pr_sigma(sats: Sequence[Satellite], origin: GeodeticPoint, target_2drms_m: float = 42.8) -> float:
    """Pseudorange sigma that makes single-epoch least squares scatter with the requested 2DRMS."""
    dop = compute_dop(sats, origin)
    return target_2drms_m / (2.0 * dop.hdop)


# === LEAST SQUARES ===

def least_squares_fix(
    epoch: PseudorangeEpoch,
    guess: Sequence[float] = (0.0, 0.0, 0.0),
    tol_m: float = 1e-4,
    max_iterations: int = 20,
) -> Tuple[EcefPoint, float]:
    """
    Gauss-Newton solution of the pseudorange equations for one epoch.

    Args:
        epoch (PseudorangeEpoch): At least 4 pseudoranges.
        guess (Sequence[float]): Initial ECEF position (a 4th clock element is used if given).
        tol_m (float): Convergence threshold on the position step.
        max_iterations (int): Iteration cap.

    Returns:
        Tuple[EcefPoint, float]: Receiver position and clock offset in meters.
    """
    if len(epoch) < MIN_SATELLITES:
        raise InsufficientSatellites(f"Epoch {epoch.epoch} has {len(epoch)} satellites, need {MIN_SATELLITES}")
    sat_pos = epoch.sat_positions
    pr = epoch.pseudoranges
    x = np.zeros(4)
    x[: len(guess)] = guess

    for _ in range(max_iterations):
        los = sat_pos - x[:3]
        ranges = ranges_m(sat_pos, x)
        if np.any(ranges < 1.0):
            raise SingularGeometry("Receiver estimate coincides with a satellite")
        h = np.column_stack((-los / ranges[:, None], np.ones(len(pr))))
        residual = pr - (ranges + x[3])
        normal = h.T @ h
        try:
            if np.linalg.matrix_rank(h) < 4:
                raise np.linalg.LinAlgError
            dx = linalg.solve(normal, h.T @ residual, assume_a="pos")
        except (np.linalg.LinAlgError, linalg.LinAlgError):
            raise SingularGeometry(f"Epoch {epoch.epoch} geometry is rank deficient") from None
        x = x + dx
        if np.linalg.norm(dx[:3]) < tol_m:
            return EcefPoint(*x[:3]), float(x[3])
    raise NoConvergence(f"Least squares did not converge in {max_iterations} iterations at epoch {epoch.epoch}")


# === TRAJECTORY AND ENGINE MODELS ===

def _waypoint_offsets(traj: TrajectoryConfig) -> np.ndarray:
    return np.array([enu_offset_m(traj.origin, w) for w in traj.waypoints])


def trajectory_state(traj: TrajectoryConfig, k: int, waypoint_offsets: Optional[np.ndarray] = None) -> Tuple[GeodeticPoint, float, float]:
    """
    Truth at epoch k.

    Returns:
        Tuple[GeodeticPoint, float, float]: Position, speed in km/h and course in degrees.
    """
    speed_ms = traj.speed_kmh / 3.6
    distance = speed_ms * traj.epoch_dt_s * k
    if traj.kind == "static" or speed_ms == 0.0:
        east, north, course, speed = 0.0, 0.0, 0.0, 0.0
        if traj.kind == "waypoints":
            east, north = waypoint_offsets[0]
        return offset_to_geodetic(traj.origin, east, north), speed, course
    if traj.kind == "line":
        heading = math.radians(traj.heading_deg)
        east, north = distance * math.sin(heading), distance * math.cos(heading)
        course = traj.heading_deg % 360.0
    elif traj.kind == "circle":
        # clockwise about a center radius_m north of the origin
        angle = distance / traj.radius_m
        east = -traj.radius_m * math.sin(angle)
        north = traj.radius_m * (1.0 - math.cos(angle))
        course = (270.0 + math.degrees(angle)) % 360.0
    else:
        legs = np.diff(waypoint_offsets, axis=0)
        lengths = np.linalg.norm(legs, axis=1)
        remaining = distance
        for start, leg, length in zip(waypoint_offsets[:-1], legs, lengths):
            if length == 0.0:
                continue
            if remaining <= length:
                east, north = start + leg * (remaining / length)
                course = math.degrees(math.atan2(leg[0], leg[1])) % 360.0
                break
            remaining -= length
        else:
            east, north = waypoint_offsets[-1]
            return offset_to_geodetic(traj.origin, east, north), 0.0, 0.0
    return offset_to_geodetic(traj.origin, east, north), traj.speed_kmh, course


class EngineModel:
    """Synthesizes OBD-II frames consistent with vehicle speed"""

    def __init__(self, rng: np.random.Generator, coolant0_c: float = 25.0):
        self.rng = rng
        self.coolant_c = coolant0_c

    def frames(self, speed_kmh: float, epoch_dt_s: float) -> Dict[int, bytes]:
        # coolant warms toward thermostat temperature
        self.coolant_c += (90.0 - self.coolant_c) * (1.0 - math.exp(-epoch_dt_s / 300.0))
        rpm = 800.0 + 35.0 * speed_kmh + self.rng.normal(0.0, 20.0)
        throttle = 12.0 + 0.6 * speed_kmh + self.rng.normal(0.0, 1.0)
        return {
            PID_RPM: encode_obd(PID_RPM, min(max(rpm, 0.0), 16383.75)),
            PID_COOLANT: encode_obd(PID_COOLANT, self.coolant_c),
            PID_SPEED: encode_obd(PID_SPEED, min(speed_kmh, 255.0)),
            PID_THROTTLE: encode_obd(PID_THROTTLE, min(max(throttle, 0.0), 100.0)),
        }


# === SIMULATION ===

def simulate_run(
    traj: TrajectoryConfig,
    sats: Sequence[Satellite],
    noise: NoiseModel,
) -> Iterator[SimulatedEpoch]:
    """
    Generates one measurement stream.

    Each epoch advances the truth, evolves the receiver clock as a random walk,
    forms noisy pseudoranges (plus any active multipath burst) and emits the
    $GPRMC fix that single-epoch least squares computes from them.

    Args:
        traj (TrajectoryConfig): Vehicle motion and run length.
        sats (Sequence[Satellite]): Static constellation.
        noise (NoiseModel): Measurement and clock noise.

    Yields:
        SimulatedEpoch: Truth, pseudoranges, NMEA text and engine status.
    """
    rng = np.random.default_rng(traj.rng_seed)
    engine = EngineModel(rng)
    waypoint_offsets = _waypoint_offsets(traj) if traj.kind == "waypoints" else None
    sat_pos = np.array([s.pos for s in sats], dtype=float)

    bu = noise.clock_offset0_m
    burst_left, burst_sat = 0, -1
    guess = np.array(geodetic_to_ecef(traj.origin))
    last_good = traj.origin

    for k in range(traj.duration_epochs):
        truth, speed_kmh, course = trajectory_state(traj, k, waypoint_offsets)
        rec = np.array(geodetic_to_ecef(truth))
        if k > 0 and noise.clock_walk_m > 0:
            bu += rng.normal(0.0, noise.clock_walk_m)

        pr = ranges_m(sat_pos, rec) + bu
        if noise.pr_sigma_m > 0:
            pr = pr + rng.normal(0.0, noise.pr_sigma_m, size=len(sats))
        mp = noise.multipath
        if mp is not None:
            if burst_left == 0 and rng.random() < mp.burst_prob:
                burst_left, burst_sat = mp.burst_len_epochs, int(rng.integers(len(sats)))
            if burst_left > 0:
                pr[burst_sat] += mp.bias_m
                burst_left -= 1

        when = traj.start_utc + dt.timedelta(seconds=k * traj.epoch_dt_s)
        epoch = PseudorangeEpoch(
            epoch=k,
            t_s=k * traj.epoch_dt_s,
            entries=tuple(PseudorangeEntry(s.id, s.pos, float(p)) for s, p in zip(sats, pr)),
            utc=when,
        )

        valid = True
        try:
            position, _ = least_squares_fix(epoch, guess)
            guess = np.array(position)
            measured = ecef_to_geodetic(position)
            last_good = measured
        except (SingularGeometry, NoConvergence) as e:
            logger.warning(f"Epoch {k}: no position fix ({e}), emitting void sentence")
            measured, valid = last_good, False

        fix = GprmcFix(
            utc_time=when.time().replace(tzinfo=None),
            valid=valid,
            lat_deg=measured.lat_deg,
            lon_deg=measured.lon_deg,
            speed_knots=speed_kmh / KMH_PER_KNOT,
            course_deg=course,
            date=when.date(),
        )
        status = status_from_obd(engine.frames(speed_kmh, traj.epoch_dt_s))
        yield SimulatedEpoch(truth, epoch, serialize_gprmc(fix), status, fix, bu)


# === SIDE CHANNELS ===

def _write_frame(df: pd.DataFrame, path: Union[str, Path]) -> int:
    try:
        df.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise IoFailure(f"Cannot write {path}: {e}") from e
    return len(df)


def write_truth_csv(run: Sequence[SimulatedEpoch], path: Union[str, Path]) -> int:
    rows = [(s.epoch.epoch, s.truth.lat_deg, s.truth.lon_deg, s.truth.alt_m) for s in run]
    return _write_frame(pd.DataFrame(rows, columns=TRUTH_COLUMNS), path)


def _utc_text(t: Optional[dt.datetime]) -> str:
    if t is None:
        return ""
    t = t.astimezone(dt.timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%S.") + f"{t.microsecond // 1000:03d}Z"


def write_pseudorange_csv(run: Sequence[SimulatedEpoch], path: Union[str, Path]) -> int:
    rows = [
        (s.epoch.epoch, _utc_text(s.epoch.utc), e.satellite_id, *e.satellite_pos, e.pr_m)
        for s in run
        for e in s.epoch.entries
    ]
    return _write_frame(pd.DataFrame(rows, columns=PSEUDORANGE_COLUMNS), path)


def read_pseudorange_csv(path: Union[str, Path], epoch_dt_s: float = 1.0) -> List[PseudorangeEpoch]:
    """
    Groups a raw pseudorange CSV back into epochs, ordered by epoch index.

    The utc column is optional; without it the epochs carry no UTC instant.
    """
    df = pd.read_csv(path)
    missing = set(PSEUDORANGE_COLUMNS) - {"utc"} - set(df.columns)
    if missing:
        raise ValueError(f"{path} lacks pseudorange columns: {sorted(missing)}")
    epochs = []
    for k, group in df.groupby("epoch", sort=True):
        utc = None
        if "utc" in group.columns and pd.notna(group["utc"].iloc[0]):
            utc = pd.to_datetime(group["utc"].iloc[0], utc=True).to_pydatetime()
        entries = tuple(
            PseudorangeEntry(int(r.sat_id), EcefPoint(r.sx, r.sy, r.sz), float(r.pr_m))
            for r in group.itertuples(index=False)
        )
        epochs.append(PseudorangeEpoch(epoch=int(k), t_s=int(k) * epoch_dt_s, entries=entries, utc=utc))
    return epochs


def _utc_key(t: dt.datetime) -> int:
    # whole milliseconds, the resolution of the CSV and of $GPRMC time
    return round(t.timestamp() * 1000)


class EpochIndex:
    """
    Finds the pseudorange epoch observed at a fix's UTC time.

    Epochs read without UTC instants are matched by elapsed time, taking the
    first fix looked up as the first epoch.
    """

    def __init__(self, epochs: Sequence[PseudorangeEpoch], epoch_dt_s: float = 1.0):
        self.epoch_dt_s = epoch_dt_s
        self._by_utc: Dict[int, PseudorangeEpoch] = {_utc_key(e.utc): e for e in epochs if e.utc is not None}
        self._by_offset: Dict[int, PseudorangeEpoch] = {}
        if epochs:
            first = epochs[0].epoch
            self._by_offset = {e.epoch - first: e for e in epochs}
        self._t0: Optional[dt.datetime] = None

    def find(self, utc: dt.datetime) -> Optional[PseudorangeEpoch]:
        if self._by_utc:
            return self._by_utc.get(_utc_key(utc))
        if self._t0 is None:
            self._t0 = utc
        return self._by_offset.get(round((utc - self._t0).total_seconds() / self.epoch_dt_s))
