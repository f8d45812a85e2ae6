"""
Tests for the pseudorange EKF and the position-domain filter
"""

import datetime as dt

import numpy as np
import pytest

from src.vehicle_tracker.accuracy import compare
from src.vehicle_tracker.errors import DegenerateRange, EmptyTrack, InitializationFailed
from src.vehicle_tracker.geodesy import (
    EcefPoint,
    GeodeticPoint,
    enu_offset_m,
    geodetic_to_ecef,
    offset_to_geodetic,
)
from src.vehicle_tracker.gnss_sim import (
    NoiseModel,
    PseudorangeEntry,
    PseudorangeEpoch,
    TrajectoryConfig,
    build_constellation,
    calibrate_pr_sigma,
    least_squares_fix,
    simulate_run,
)
from src.vehicle_tracker.kalman import (
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
from src.vehicle_tracker.models import GprmcFix
from src.vehicle_tracker.track import Track

ORIGIN = GeodeticPoint(40.0, 44.5, 0.0)


@pytest.fixture(scope="module")
def sats():
    return build_constellation(6, seed=7, origin=ORIGIN)


@pytest.fixture(scope="module")
def noiseless_run(sats):
    traj = TrajectoryConfig("static", ORIGIN, duration_epochs=100)
    return list(simulate_run(traj, sats, NoiseModel()))


@pytest.fixture(scope="module")
def long_noiseless_run(sats):
    traj = TrajectoryConfig("static", ORIGIN, duration_epochs=500)
    return list(simulate_run(traj, sats, NoiseModel()))


def _truth_state(bu: float = 0.0) -> np.ndarray:
    return np.array([*geodetic_to_ecef(ORIGIN), bu])


def _shift(epoch: PseudorangeEpoch, c: float) -> PseudorangeEpoch:
    return PseudorangeEpoch(epoch.epoch, epoch.t_s, tuple(
        PseudorangeEntry(e.satellite_id, e.satellite_pos, e.pr_m + c) for e in epoch.entries
    ))


class TestFilterConfig:
    def test_from_sigmas(self):
        cfg = FilterConfig.from_sigmas(q_pos_m=2.0, q_clk_m=5.0, r_per_sat_m=10.0)
        assert np.allclose(np.diag(cfg.Q), [4.0, 4.0, 4.0, 25.0])
        assert cfg.R_per_sat == 100.0

    def test_rejects_non_psd_q(self):
        with pytest.raises(ValueError, match="Q must be"):
            FilterConfig(Q=-np.eye(4), R_per_sat=1.0, P0=np.eye(4))

    def test_rejects_asymmetric_p0(self):
        p0 = np.eye(4)
        p0[0, 1] = 0.5
        with pytest.raises(ValueError, match="P0 must be"):
            FilterConfig(Q=np.eye(4), R_per_sat=1.0, P0=p0)

    def test_rejects_non_positive_r(self):
        with pytest.raises(ValueError, match="R_per_sat"):
            FilterConfig(Q=np.eye(4), R_per_sat=0.0, P0=np.eye(4))


class TestPredictUpdate:
    def test_predict_keeps_state_and_adds_q(self):
        cfg = FilterConfig.from_sigmas()
        s = EcefState(_truth_state(12.0), np.eye(4) * 7.0)
        out = predict(s, cfg)
        assert np.array_equal(out.x, s.x)
        assert np.allclose(out.P, s.P + cfg.Q)

    def test_measurement_row(self):
        row = measurement_row(EcefPoint(0.0, 0.0, 2000.0), EcefPoint(0.0, 0.0, 1000.0))
        assert np.allclose(row, [0.0, 0.0, -1.0, 1.0])

    def test_degenerate_range(self):
        with pytest.raises(DegenerateRange):
            measurement_row(EcefPoint(5.0, 0.0, 0.0), EcefPoint(5.5, 0.0, 0.0))

    def test_update_at_truth_is_fixed_point(self, noiseless_run):
        cfg = FilterConfig.from_sigmas()
        s = EcefState(_truth_state(), np.diag([25.0, 25.0, 25.0, 100.0]))
        post, innovations = update(s, noiseless_run[0].epoch, cfg)
        assert np.all(innovations == 0.0)
        assert np.array_equal(post.x, s.x)
        assert np.trace(post.P) < np.trace(s.P)

    def test_update_matches_textbook_formula(self, noiseless_run):
        cfg = FilterConfig.from_sigmas(r_per_sat_m=8.0)
        x = _truth_state(40.0) + np.array([30.0, -20.0, 15.0, 0.0])
        p = np.diag([400.0, 300.0, 500.0, 900.0])
        epoch = noiseless_run[0].epoch
        post, innovations = update(EcefState(x, p), epoch, cfg)

        sat_pos = epoch.sat_positions
        los = sat_pos - x[:3]
        ranges = np.linalg.norm(los, axis=1)
        h = np.column_stack((-los / ranges[:, None], np.ones(len(sat_pos))))
        y = epoch.pseudoranges - (ranges + x[3])
        s_cov = h @ p @ h.T + cfg.R_per_sat * np.eye(len(sat_pos))
        k = p @ h.T @ np.linalg.inv(s_cov)
        assert np.allclose(innovations, y, rtol=0.0, atol=1e-6)
        assert np.allclose(post.x, x + k @ y, rtol=0.0, atol=1e-6)
        assert np.allclose(post.P, (np.eye(4) - k @ h) @ p, rtol=1e-7, atol=1e-6)

    def test_joseph_form_agrees(self, noiseless_run):
        x = _truth_state() + np.array([10.0, 10.0, -10.0, 5.0])
        p = np.diag([100.0, 100.0, 100.0, 400.0])
        epoch = noiseless_run[0].epoch
        a, _ = update(EcefState(x, p), epoch, FilterConfig.from_sigmas())
        b, _ = update(EcefState(x, p), epoch, FilterConfig.from_sigmas(joseph=True))
        assert np.allclose(a.x, b.x, rtol=0.0, atol=1e-9)
        assert np.allclose(a.P, b.P, rtol=1e-6, atol=1e-9)

    def test_satellite_order_does_not_matter(self, noiseless_run):
        cfg = FilterConfig.from_sigmas()
        x = _truth_state() + np.array([25.0, -5.0, 12.0, 3.0])
        p = np.diag([100.0, 100.0, 100.0, 400.0])
        epoch = noiseless_run[0].epoch
        perm = np.random.default_rng(1).permutation(len(epoch))
        shuffled = PseudorangeEpoch(epoch.epoch, epoch.t_s, tuple(epoch.entries[i] for i in perm))
        a, _ = update(EcefState(x, p), epoch, cfg)
        b, _ = update(EcefState(x, p), shuffled, cfg)
        # one ulp of an ECEF coordinate is just under 1e-9 m
        assert np.abs(a.x - b.x).max() <= 1e-9
        assert np.allclose(a.P, b.P, rtol=1e-7, atol=1e-7)

    def test_covariance_stays_symmetric_psd(self, sats):
        traj = TrajectoryConfig("static", ORIGIN, duration_epochs=100, rng_seed=2)
        epochs = [s.epoch for s in simulate_run(traj, sats, NoiseModel(pr_sigma_m=10.0))]
        cfg = FilterConfig.from_sigmas()
        s = EcefState(_truth_state(), cfg.P0)
        for k in range(10_000):
            s, _ = update(predict(s, cfg), epochs[k % len(epochs)], cfg)
            assert np.array_equal(s.P, s.P.T)
            assert np.linalg.eigvalsh(s.P).min() >= -1e-9 * np.trace(s.P)


class TestPseudorangeFilter:
    def test_first_epoch_needs_four_satellites(self, noiseless_run):
        epoch = noiseless_run[0].epoch
        short = PseudorangeEpoch(0, 0.0, epoch.entries[:3])
        with pytest.raises(InitializationFailed):
            PseudorangeFilter(FilterConfig.from_sigmas()).step(short)

    def test_empty_stream(self):
        with pytest.raises(InitializationFailed):
            run_pseudorange_filter([], FilterConfig.from_sigmas())

    def test_converges_from_offset_start(self, noiseless_run):
        x0 = _truth_state() + np.array([30.0, -20.0, 10.0, 0.0])
        cfg = FilterConfig.from_sigmas(q_pos_m=0.01, q_clk_m=0.01, x0=x0)
        track = run_pseudorange_filter([s.epoch for s in noiseless_run], cfg)
        assert len(track) == len(noiseless_run)
        final = np.array(geodetic_to_ecef(track[-1].pos))
        assert np.linalg.norm(final - _truth_state()[:3]) <= 3.0

    def test_clock_shift_only_moves_clock_estimate(self, noiseless_run):
        c = 5_000.0
        x0 = _truth_state() + np.array([20.0, 20.0, -20.0, 0.0])
        base = run_pseudorange_filter([s.epoch for s in noiseless_run], FilterConfig.from_sigmas(x0=x0))
        shifted = run_pseudorange_filter(
            [_shift(s.epoch, c) for s in noiseless_run],
            FilterConfig.from_sigmas(x0=x0 + np.array([0.0, 0.0, 0.0, c])),
        )
        for a, b in zip(base, shifted):
            assert np.linalg.norm(np.subtract(geodetic_to_ecef(a.pos), geodetic_to_ecef(b.pos))) < 1e-4
            assert b.clock_bias_m - a.clock_bias_m == pytest.approx(c, abs=1e-4)

    def test_short_epochs_predict_only(self, noiseless_run):
        epochs = [s.epoch for s in noiseless_run[:10]]
        epochs[5] = PseudorangeEpoch(5, 5.0, epochs[5].entries[:2])
        kf = PseudorangeFilter(FilterConfig.from_sigmas())
        samples = [kf.step(e) for e in epochs[:5]]
        trace_before = np.trace(kf.state.P)
        gap = kf.step(epochs[5])
        assert gap.predicted_only
        assert gap.pos == samples[-1].pos
        assert np.trace(kf.state.P) > trace_before
        assert not kf.step(epochs[6]).predicted_only

    def test_matches_least_squares_on_noiseless_data(self, long_noiseless_run):
        track = run_pseudorange_filter([s.epoch for s in long_noiseless_run], FilterConfig.from_sigmas())
        assert len(track) == 500
        for sample, sim in list(zip(track, long_noiseless_run))[1:]:
            ls_pos, _ = least_squares_fix(sim.epoch, geodetic_to_ecef(sim.truth))
            assert np.linalg.norm(np.subtract(geodetic_to_ecef(sample.pos), ls_pos)) < 1e-3

    def test_huge_measurement_noise_freezes_state(self, noiseless_run):
        x = _truth_state() + np.array([50.0, 0.0, 0.0, 0.0])
        cfg = FilterConfig.from_sigmas(r_per_sat_m=1e6)
        post, _ = update(EcefState(x, cfg.P0), noiseless_run[0].epoch, cfg)
        assert np.linalg.norm(post.x[:3] - x[:3]) < 1e-3

    def test_improves_on_single_epoch_fixes(self, sats):
        sigma = calibrate_pr_sigma(sats, ORIGIN, 42.8)
        traj = TrajectoryConfig("static", ORIGIN, duration_epochs=1000, rng_seed=11)
        run = list(simulate_run(traj, sats, NoiseModel(pr_sigma_m=sigma)))
        raw = Track.from_points("raw", [GeodeticPoint(s.fix.lat_deg, s.fix.lon_deg) for s in run])
        truth = Track.from_points("truth", [s.truth for s in run])
        filtered = run_pseudorange_filter([s.epoch for s in run], FilterConfig.from_sigmas(r_per_sat_m=sigma))
        raw_report, filtered_report, ratio = compare(raw, filtered, truth)
        assert 35.0 <= raw_report.two_drms_m <= 51.0
        assert filtered_report.two_drms_m <= 15.0
        assert ratio >= 2.5


class TestPositionFilter:
    def test_first_fix_passes_through(self):
        kf = PositionFilter(q_pos_m=1.0, r_pos_m=15.0)
        est = kf.step(GeodeticPoint(40.1, 44.6))
        assert est.lat_deg == pytest.approx(40.1, abs=1e-12)
        assert est.lon_deg == pytest.approx(44.6, abs=1e-12)
        assert np.allclose(kf.state.P, np.eye(2))

    def test_accepts_gprmc_fix(self):
        fix = GprmcFix(
            utc_time=dt.time(8, 0, 0), valid=True, lat_deg=40.0, lon_deg=44.5,
            speed_knots=0.0, course_deg=0.0, date=dt.date(2013, 6, 1),
        )
        est = PositionFilter(1.0, 15.0).step(fix)
        assert est.lat_deg == pytest.approx(40.0)

    def test_invalid_tuning(self):
        with pytest.raises(ValueError):
            PositionFilter(q_pos_m=-1.0, r_pos_m=15.0)
        with pytest.raises(ValueError):
            PositionFilter(q_pos_m=1.0, r_pos_m=0.0)

    def test_smooths_static_noise(self):
        rng = np.random.default_rng(17)
        noise = rng.normal(0.0, 15.0, size=(3000, 2))
        fixes = [offset_to_geodetic(ORIGIN, e, n) for e, n in noise]
        filtered = run_position_filter(fixes, q_pos_m=1.0, r_pos_m=15.0)
        truth = Track.from_points("truth", [ORIGIN] * len(fixes))
        raw = Track.from_points("raw", fixes)
        _, filtered_report, ratio = compare(raw, filtered, truth)
        assert filtered_report.two_drms_m < 12.0
        assert ratio >= 4.0

    def test_follows_constant_offset_to_steady_state(self):
        target = offset_to_geodetic(ORIGIN, 40.0, -30.0)
        kf = PositionFilter(q_pos_m=1.0, r_pos_m=15.0, ref=ORIGIN)
        kf.step(ORIGIN)
        for _ in range(300):
            est = kf.step(target)
        east, north = enu_offset_m(target, est)
        assert np.hypot(east, north) < 6.0

    def test_reanchors_on_long_drives(self):
        kf = PositionFilter(q_pos_m=2000.0, r_pos_m=1.0)
        start = GeodeticPoint(10.0, 20.0)
        kf.step(start)
        for k in range(1, 70):
            last = GeodeticPoint(10.0 + 0.01 * k, 20.0)
            est = kf.step(last)
        assert kf.state.ref != start
        assert kf.state.ref.lat_deg > start.lat_deg + 0.4
        east, north = enu_offset_m(last, est)
        assert np.hypot(east, north) < 0.1

    def test_distant_first_fix_reanchors(self):
        fixes = [GeodeticPoint(10.0, 10.0), GeodeticPoint(10.0001, 10.0)]
        track = run_position_filter(fixes, 1.0, 15.0, ref=GeodeticPoint(0.0, 0.0))
        assert track[0].pos.lat_deg == pytest.approx(10.0, abs=1e-12)
        assert track[0].pos.lon_deg == pytest.approx(10.0, abs=1e-12)
        assert track[1].pos.lat_deg == pytest.approx(10.0001, abs=1e-4)

    def test_restarts_after_large_jump(self):
        kf = PositionFilter(q_pos_m=1.0, r_pos_m=15.0)
        kf.step(GeodeticPoint(10.0, 20.0))
        kf.step(GeodeticPoint(10.0001, 20.0))
        est = kf.step(GeodeticPoint(15.0, 25.0))
        assert est.lat_deg == pytest.approx(15.0, abs=1e-12)
        assert kf.state.ref.lat_deg == 15.0

    def test_empty_input(self):
        with pytest.raises(EmptyTrack):
            run_position_filter([], 1.0, 15.0)

    def test_track_carries_timestamps(self):
        fixes = [
            GprmcFix(
                utc_time=dt.time(8, 0, k), valid=True, lat_deg=40.0, lon_deg=44.5,
                speed_knots=0.0, course_deg=0.0, date=dt.date(2013, 6, 1),
            )
            for k in range(3)
        ]
        track = run_position_filter(fixes, 1.0, 15.0)
        assert [s.epoch for s in track] == [0, 1, 2]
        assert track[2].utc == dt.datetime(2013, 6, 1, 8, 0, 2, tzinfo=dt.timezone.utc)
