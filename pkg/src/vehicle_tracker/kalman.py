"""
Kalman filters for GPS position correction

Pseudorange mode: 4-state [Gx, Gy, Gz, bu] ECEF filter with identity
transition, re-linearized each epoch against the predicted state.
Position mode: 2-state random walk in local east/north meters for stations
that only receive coordinates.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .errors import (
    DegenerateRange,
    EmptyTrack,
    InitializationFailed,
    NoConvergence,
    SingularGeometry,
    SingularInnovationCovariance,
    TooFarApart,
)
from .geodesy import EcefPoint, GeodeticPoint, ecef_to_geodetic, enu_offset_m, offset_to_geodetic
from .gnss_sim import MIN_SATELLITES, PseudorangeEpoch, least_squares_fix, ranges_m
from .models import GprmcFix
from .track import Track, TrackSample

logger = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-9


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return (p + p.T) / 2.0


def _is_psd(m: np.ndarray) -> bool:
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(m).max())):
        return False
    return np.linalg.eigvalsh(m).min() >= -PSD_TOLERANCE * max(np.trace(m), 0.0)


@dataclass(frozen=True)
class EcefState:
    """State [Gx, Gy, Gz, bu] in meters and its covariance"""

    x: np.ndarray
    P: np.ndarray

    @property
    def position(self) -> EcefPoint:
        return EcefPoint(*self.x[:3])

    @property
    def clock_bias_m(self) -> float:
        return float(self.x[3])


@dataclass(frozen=True)
class FilterConfig:
    """
    Pseudorange filter tuning.

    Q and P0 are 4x4 covariances in m^2, R_per_sat the variance of one
    pseudorange in m^2. Without x0 the filter starts from a least-squares fix
    of the first epoch.
    """

    Q: np.ndarray
    R_per_sat: float
    P0: np.ndarray
    x0: Optional[np.ndarray] = None
    joseph: bool = False

    def __post_init__(self):
        errors = []
        if np.shape(self.Q) != (4, 4) or not _is_psd(np.asarray(self.Q, dtype=float)):
            errors.append("Q must be a symmetric PSD 4x4 matrix")
        if np.shape(self.P0) != (4, 4) or not _is_psd(np.asarray(self.P0, dtype=float)):
            errors.append("P0 must be a symmetric PSD 4x4 matrix")
        if not self.R_per_sat > 0:
            errors.append("R_per_sat must be > 0")
        if self.x0 is not None and np.shape(self.x0) != (4,):
            errors.append("x0 must be a 4-vector")
        if errors:
            raise ValueError("Invalid filter configuration:\n" + "\n".join(f"- {e}" for e in errors))

    @classmethod
    def from_sigmas(
        cls,
        q_pos_m: float = 2.0,
        q_clk_m: float = 5.0,
        r_per_sat_m: float = 10.0,
        p0_pos_m: float = 100.0,
        p0_clk_m: float = 1000.0,
        x0: Optional[Sequence[float]] = None,
        joseph: bool = False,
    ) -> "FilterConfig":
        """Diagonal Q, P0 and R from one-sigma values in meters per epoch."""
        return cls(
            Q=np.diag([q_pos_m ** 2] * 3 + [q_clk_m ** 2]),
            R_per_sat=r_per_sat_m ** 2,
            P0=np.diag([p0_pos_m ** 2] * 3 + [p0_clk_m ** 2]),
            x0=None if x0 is None else np.asarray(x0, dtype=float),
            joseph=joseph,
        )

    @classmethod
    def from_defaults(cls, defaults) -> "FilterConfig":
        return cls.from_sigmas(
            q_pos_m=defaults.q_pos_m,
            q_clk_m=defaults.q_clk_m,
            r_per_sat_m=defaults.r_per_sat_m,
            p0_pos_m=defaults.p0_pos_m,
            p0_clk_m=defaults.p0_clk_m,
            joseph=defaults.joseph,
        )


@dataclass(frozen=True)
class PositionState:
    """[east_m, north_m] about ref, with covariance"""

    x: np.ndarray
    P: np.ndarray
    ref: GeodeticPoint


# === PSEUDORANGE MODE ===

def predict(s: EcefState, cfg: FilterConfig) -> EcefState:
    """Identity transition: the state is carried over and Q added to P."""
    return EcefState(s.x.copy(), _symmetrize(s.P + cfg.Q))


def measurement_row(sat: EcefPoint, est_pos: EcefPoint) -> np.ndarray:
    """
    Linearized pseudorange row for one satellite.

    Args:
        sat (EcefPoint): Satellite position.
        est_pos (EcefPoint): Receiver position estimate.

    Returns:
        np.ndarray: [-los_x, -los_y, -los_z, 1] with los the unit vector from the estimate to the satellite.
    """
    los = np.subtract(sat, est_pos[:3]).astype(float)
    rng = float(np.sqrt(np.sum(los * los)))
    if rng <= 1.0:
        raise DegenerateRange(f"Satellite {sat} is within 1 m of the estimate")
    return np.append(-los / rng, 1.0)


def update(s: EcefState, epoch: PseudorangeEpoch, cfg: FilterConfig) -> Tuple[EcefState, np.ndarray]:
    """
    Measurement update with the pseudoranges of one epoch.

    The innovation uses the nonlinear predicted pseudorange at the prior
    estimate; H is linearized at the same point.

    Args:
        s (EcefState): Predicted state.
        epoch (PseudorangeEpoch): At least one pseudorange.
        cfg (FilterConfig): Filter tuning.

    Returns:
        Tuple[EcefState, np.ndarray]: Posterior state and the innovations z - h(x).
    """
    if len(epoch) == 0:
        raise ValueError(f"Epoch {epoch.epoch} has no pseudoranges")
    sat_pos = epoch.sat_positions
    h = np.array([measurement_row(sat, s.x[:3]) for sat in sat_pos])
    predicted = ranges_m(sat_pos, s.x) + s.x[3]
    innovations = epoch.pseudoranges - predicted

    r = cfg.R_per_sat * np.eye(len(epoch))
    ph_t = s.P @ h.T
    innovation_cov = _symmetrize(h @ ph_t + r)
    try:
        # K = P H^T S^-1, with S symmetric
        gain = linalg.cho_solve(linalg.cho_factor(innovation_cov), ph_t.T).T
    except linalg.LinAlgError:
        raise SingularInnovationCovariance(f"Innovation covariance is singular at epoch {epoch.epoch}") from None

    x = s.x + gain @ innovations
    i_kh = np.eye(4) - gain @ h
    if cfg.joseph:
        p = i_kh @ s.P @ i_kh.T + gain @ r @ gain.T
    else:
        p = i_kh @ s.P
    return EcefState(x, _symmetrize(p)), innovations


class PseudorangeFilter:
    """Per-receiver predict/update loop over pseudorange epochs"""

    def __init__(self, cfg: FilterConfig):
        self.cfg = cfg
        self.state: Optional[EcefState] = None
        self.epochs_seen = 0

    def initialize(self, epoch: PseudorangeEpoch) -> EcefState:
        x0 = self.cfg.x0
        if x0 is None:
            try:
                pos, bu = least_squares_fix(epoch)
            except (SingularGeometry, NoConvergence, ValueError) as e:
                raise InitializationFailed(f"Cannot initialize from epoch {epoch.epoch}: {e}") from e
            x0 = np.array([*pos, bu])
        self.state = EcefState(np.asarray(x0, dtype=float).copy(), np.asarray(self.cfg.P0, dtype=float).copy())
        return self.state

    def step(self, epoch: PseudorangeEpoch) -> TrackSample:
        """
        Advances the filter by one epoch.

        The first epoch seeds the state and is then used as the first update.
        Epochs with fewer than 4 satellites only predict.
        """
        first = self.state is None
        if first:
            if len(epoch) < MIN_SATELLITES and self.cfg.x0 is None:
                raise InitializationFailed(
                    f"First epoch has {len(epoch)} satellites, {MIN_SATELLITES} are needed to initialize"
                )
            self.initialize(epoch)
        else:
            self.state = predict(self.state, self.cfg)

        predicted_only = len(epoch) < MIN_SATELLITES
        if predicted_only:
            logger.warning(f"Epoch {epoch.epoch}: {len(epoch)} satellites, predict only")
        else:
            self.state, _ = update(self.state, epoch, self.cfg)
        self.epochs_seen += 1

        return TrackSample(
            epoch=epoch.epoch,
            pos=ecef_to_geodetic(self.state.position),
            predicted_only=predicted_only,
            clock_bias_m=self.state.clock_bias_m,
        )


def run_pseudorange_filter(epochs: Iterable[PseudorangeEpoch], cfg: FilterConfig) -> Track:
    """
    Filters a pseudorange stream into a geodetic track, one sample per epoch.

    Args:
        epochs (Iterable[PseudorangeEpoch]): Epochs in time order.
        cfg (FilterConfig): Filter tuning.

    Returns:
        Track: Filtered positions with the clock offset estimate per sample.
    """
    kf = PseudorangeFilter(cfg)
    track = Track("filtered")
    for epoch in epochs:
        track.append(kf.step(epoch))
    if len(track) == 0:
        raise InitializationFailed("Pseudorange stream is empty")
    predicted = sum(1 for s in track if s.predicted_only)
    logger.info(f"Pseudorange filter: {len(track)} epochs, {predicted} predict-only")
    return track


# === POSITION MODE ===

class PositionFilter:
    """
    Random-walk filter on east/north offsets from a local reference.

    The reference is re-anchored at the current estimate once the vehicle
    moves more than reanchor_deg away from it.
    """

    def __init__(
        self,
        q_pos_m: float,
        r_pos_m: float,
        ref: Optional[GeodeticPoint] = None,
        reanchor_deg: float = 0.5,
    ):
        if q_pos_m < 0 or r_pos_m <= 0:
            raise ValueError("q_pos_m must be >= 0 and r_pos_m > 0")
        self.q_var = q_pos_m ** 2
        self.r_var = r_pos_m ** 2
        self.ref = ref
        self.reanchor_deg = reanchor_deg
        self.state: Optional[PositionState] = None

    @property
    def estimate(self) -> Optional[GeodeticPoint]:
        if self.state is None:
            return None
        return offset_to_geodetic(self.state.ref, *self.state.x)

    def _reanchor(self, p: GeodeticPoint) -> None:
        d_lat = abs(p.lat_deg - self.state.ref.lat_deg)
        d_lon = abs((p.lon_deg - self.state.ref.lon_deg + 180.0) % 360.0 - 180.0)
        if max(d_lat, d_lon) < self.reanchor_deg:
            return
        current = self.estimate
        logger.warning(f"Position filter re-anchored from {self.state.ref} to {current}")
        self.state = PositionState(np.zeros(2), self.state.P, GeodeticPoint(current.lat_deg, current.lon_deg, p.alt_m))

    def step(self, p: Union[GeodeticPoint, GprmcFix]) -> GeodeticPoint:
        """Filters one coordinate measurement and returns the corrected position."""
        if isinstance(p, GprmcFix):
            p = GeodeticPoint(p.lat_deg, p.lon_deg, 0.0)
        if self.state is None:
            here = GeodeticPoint(p.lat_deg, p.lon_deg, p.alt_m)
            ref = self.ref if self.ref is not None else here
            try:
                x0 = np.array(enu_offset_m(ref, p))
            except TooFarApart:
                logger.warning(f"First fix {p} is more than 1 deg from reference {ref}, anchoring at the fix")
                ref, x0 = here, np.zeros(2)
            # confident start at the first fix; a random walk has no better prior
            self.state = PositionState(x0, self.q_var * np.eye(2), ref)
            return self.estimate

        self._reanchor(p)
        try:
            z = np.array(enu_offset_m(self.state.ref, p))
        except TooFarApart:
            logger.warning(f"Fix {p} jumped more than 1 deg, restarting position filter")
            self.state = None
            return self.step(p)

        # scalar gain per axis: H = I, R = r^2 I, Q = q^2 I
        p_prior = self.state.P + self.q_var * np.eye(2)
        gain = p_prior @ np.linalg.inv(p_prior + self.r_var * np.eye(2))
        x = self.state.x + gain @ (z - self.state.x)
        self.state = PositionState(x, _symmetrize((np.eye(2) - gain) @ p_prior), self.state.ref)
        return self.estimate


def run_position_filter(
    fixes: Iterable[Union[GprmcFix, GeodeticPoint]],
    q_pos_m: float,
    r_pos_m: float,
    ref: Optional[GeodeticPoint] = None,
    reanchor_deg: float = 0.5,
) -> Track:
    """
    Filters transmitted coordinates in local east/north meters.

    Args:
        fixes (Iterable): $GPRMC fixes or geodetic points in arrival order.
        q_pos_m (float): Random-walk sigma per epoch and axis, meters.
        r_pos_m (float): Measurement sigma per axis, meters.
        ref (GeodeticPoint): Local reference; the first fix when omitted.
        reanchor_deg (float): Distance from ref that triggers re-anchoring.

    Returns:
        Track: One filtered point per input fix.
    """
    kf = PositionFilter(q_pos_m, r_pos_m, ref, reanchor_deg)
    track = Track("filtered")
    for k, fix in enumerate(fixes):
        utc = fix.timestamp if isinstance(fix, GprmcFix) else None
        track.append(TrackSample(epoch=k, pos=kf.step(fix), utc=utc))
    if len(track) == 0:
        raise EmptyTrack("Position filter needs at least one fix")
    return track

