"""
Command-line entry point: simulate, decode, filter, eval, kml and station
"""

import argparse
import dataclasses
import logging
import sys
from typing import Dict, List, Optional, Sequence, Tuple

from .accuracy import compare
from .config import FilterDefaults, SimulationDefaults, StationConfig, load_yaml_defaults, logging_settings, print_config
from .errors import ChecksumMismatch, IoFailure, RangeViolation, TrackerError
from .geodesy import GeodeticPoint
from .gnss_sim import (
    EpochIndex,
    MultipathModel,
    NoiseModel,
    TrajectoryConfig,
    build_constellation,
    calibrate_pr_sigma,
    compute_dop,
    read_pseudorange_csv,
    simulate_run,
    write_pseudorange_csv,
    write_truth_csv,
)
from .kalman import FilterConfig, PositionFilter, PseudorangeFilter
from .kml import TrackPoint, load_track, read_csv, write_csv, write_kml
from .models import TelemetryRecord
from .station import StationCounters, run as run_station
from .telemetry import decode_record, encode_record

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_ALL_REJECTED = 2


def configure_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        handlers=handlers,
        force=True,
    )


def _override(obj, **values):
    """dataclasses.replace with None values dropped, so unset flags keep env/YAML values"""
    return dataclasses.replace(obj, **{k: v for k, v in values.items() if v is not None})


def _read_records(path: str) -> List[TelemetryRecord]:
    records = []
    try:
        with open(path, "r", encoding="utf-8", errors="replace") as f:
            lines = f.readlines()
    except OSError as e:
        raise IoFailure(f"Cannot read {path}: {e}") from e
    for n, line in enumerate(lines, start=1):
        try:
            records.append(decode_record(line))
        except TrackerError as e:
            logger.debug(f"Line {n} rejected: {e}")
    return records


# === COMMANDS ===

def cmd_simulate(args: argparse.Namespace, yaml_cfg: Dict) -> int:
    sim = _override(
        SimulationDefaults.from_yaml(yaml_cfg),
        pr_sigma_m=args.pr_sigma_m,
        target_2drms_m=args.target_2drms_m,
        n_satellites=args.satellites,
        vehicle_id=args.vehicle,
    )
    print_config(sim)
    origin = GeodeticPoint(sim.origin_lat_deg, sim.origin_lon_deg, sim.origin_alt_m)
    sats = build_constellation(
        sim.n_satellites, sim.constellation_seed, origin,
        min_elevation_deg=sim.min_elevation_deg, max_gdop=sim.max_gdop,
    )
    pr_sigma = sim.pr_sigma_m
    if pr_sigma is None:
        pr_sigma = calibrate_pr_sigma(sats, origin, sim.target_2drms_m)
        logger.info(f"Calibrated pseudorange sigma {pr_sigma:.2f} m for raw 2DRMS {sim.target_2drms_m} m")

    multipath = None
    if args.multipath_bias_m:
        multipath = MultipathModel(args.multipath_bias_m, args.multipath_len, args.multipath_prob)
    noise = NoiseModel(pr_sigma, args.clock_offset_m, args.clock_walk_m, multipath)
    traj = TrajectoryConfig(
        kind=args.traj,
        origin=origin,
        speed_kmh=args.speed_kmh if args.traj != "static" else 0.0,
        duration_epochs=args.epochs,
        epoch_dt_s=sim.epoch_dt_s,
        rng_seed=args.seed,
    )
    run = list(simulate_run(traj, sats, noise))

    try:
        with open(args.out_messages, "w", encoding="utf-8", newline="\n") as f:
            for s in run:
                f.write(encode_record(TelemetryRecord(vehicle_id=sim.vehicle_id, fix=s.fix, status=s.status)) + "\n")
    except OSError as e:
        raise IoFailure(f"Cannot write {args.out_messages}: {e}") from e
    write_truth_csv(run, args.out_truth)
    if args.out_pseudoranges:
        write_pseudorange_csv(run, args.out_pseudoranges)

    dop = compute_dop(sats, origin)
    print(f"simulated {len(run)} epochs, {len(sats)} satellites, GDOP {dop.gdop:.2f}, HDOP {dop.hdop:.2f}, pr_sigma {pr_sigma:.2f} m")
    print(f"messages: {args.out_messages}\ntruth: {args.out_truth}")
    return EXIT_OK


def cmd_decode(args: argparse.Namespace, yaml_cfg: Dict) -> int:
    counters = StationCounters()
    try:
        with open(args.input, "r", encoding="utf-8", errors="replace") as f:
            lines = f.readlines()
    except OSError as e:
        raise IoFailure(f"Cannot read {args.input}: {e}") from e
    for n, line in enumerate(lines, start=1):
        try:
            r = decode_record(line)
        except TrackerError as e:
            print(f"{n}: REJECTED {type(e).__name__}: {e}")
            if isinstance(e, ChecksumMismatch):
                counters.checksum_rejected += 1
            elif isinstance(e, RangeViolation):
                counters.range_rejected += 1
            else:
                counters.malformed += 1
            continue
        counters.accepted += 1
        fix, st = r.fix, r.status
        print(
            f"{n}: {r.vehicle_id} {fix.timestamp.isoformat()} {'A' if fix.valid else 'V'} "
            f"lat={fix.lat_deg:.6f} lon={fix.lon_deg:.6f} rpm={st.rpm:g} coolant={st.coolant_c:g}C "
            f"speed={st.speed_kmh:g}km/h throttle={st.throttle_pct:.1f}%"
        )
    print(f"decoded {counters.accepted} of {counters.total} lines, {counters.rejected} rejected")
    return EXIT_ALL_REJECTED if counters.total and counters.accepted == 0 else EXIT_OK


def cmd_filter(args: argparse.Namespace, yaml_cfg: Dict) -> int:
    defaults = _override(
        FilterDefaults.from_yaml(yaml_cfg),
        position_q_m=args.q_pos_m if args.mode == "position" else None,
        position_r_m=args.r_pos_m,
        q_pos_m=args.q_pos_m if args.mode == "pseudorange" else None,
        q_clk_m=args.q_clk_m,
        r_per_sat_m=args.r_per_sat_m,
        joseph=True if args.joseph else None,
    )
    records = _read_records(args.input)
    if not records:
        logger.error(f"No valid messages in {args.input}")
        return EXIT_ALL_REJECTED

    rows = []
    if args.mode == "position":
        filters: Dict[str, PositionFilter] = {}
        for r in records:
            kf = filters.setdefault(
                r.vehicle_id,
                PositionFilter(defaults.position_q_m, defaults.position_r_m, reanchor_deg=defaults.reanchor_deg),
            )
            raw = GeodeticPoint(r.fix.lat_deg, r.fix.lon_deg)
            rows.append((r.vehicle_id, TrackPoint(r.fix.timestamp, raw, r.status, "raw"),
                         TrackPoint(r.fix.timestamp, kf.step(raw), r.status, "filtered")))
    else:
        if not args.pseudoranges:
            logger.error("--pseudoranges is required with --mode pseudorange")
            return EXIT_FATAL
        epochs = read_pseudorange_csv(args.pseudoranges)
        cfg = FilterConfig.from_defaults(defaults)
        sessions: Dict[str, Tuple[PseudorangeFilter, EpochIndex]] = {}
        for r in records:
            if r.vehicle_id not in sessions:
                sessions[r.vehicle_id] = (PseudorangeFilter(cfg), EpochIndex(epochs))
            kf, index = sessions[r.vehicle_id]
            t = r.fix.timestamp
            raw = GeodeticPoint(r.fix.lat_deg, r.fix.lon_deg)
            epoch = index.find(t)
            if epoch is None:
                logger.warning(f"{r.vehicle_id}: no pseudorange epoch at {t.isoformat()}, passing fix through")
                filtered = raw
            else:
                pos = kf.step(epoch).pos
                filtered = GeodeticPoint(pos.lat_deg, pos.lon_deg)
            rows.append((r.vehicle_id, TrackPoint(t, raw, r.status, "raw"), TrackPoint(t, filtered, r.status, "filtered")))

    n = write_csv(rows, args.out)
    print(f"filtered {n} fixes ({args.mode}) -> {args.out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, yaml_cfg: Dict) -> int:
    raw = load_track(args.raw, "raw", args.vehicle)
    filtered = load_track(args.filtered, "filtered", args.vehicle)
    truth = load_track(args.truth, "truth") if args.truth else None
    raw_rep, filt_rep, ratio = compare(raw, filtered, truth)
    print(raw_rep.to_text("raw"))
    print(filt_rep.to_text("filtered"))
    print(f"improvement ratio: {ratio:.2f}")
    return EXIT_OK


def cmd_kml(args: argparse.Namespace, yaml_cfg: Dict) -> int:
    rows = [r for r in read_csv(args.input) if r[0] == args.vehicle]
    if not rows:
        logger.error(f"No rows for vehicle {args.vehicle} in {args.input}")
        return EXIT_ALL_REJECTED
    points = [raw for _, raw, _ in rows]
    if any(raw.pos != filtered.pos for _, raw, filtered in rows):
        points += [filtered for _, _, filtered in rows]
    write_kml(points, args.vehicle, args.out)
    print(f"{len(rows)} points -> {args.out}")
    return EXIT_OK


def cmd_station(args: argparse.Namespace, yaml_cfg: Dict) -> int:
    cfg = StationConfig.from_yaml(
        yaml_cfg,
        input=args.input,
        output_dir=args.out_dir,
        filter_mode=args.filter,
        kml_every_n=args.kml_every_n,
        pseudoranges=args.pseudoranges,
    )
    print_config(cfg)
    summary = run_station(cfg)
    print(summary.to_text())
    c = summary.counters
    return EXIT_ALL_REJECTED if c.total and c.accepted == 0 else EXIT_OK


# === PARSER ===

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vehicle_tracker", description="GPS-GSM vehicle tracking toolkit")
    parser.add_argument("--config", help="YAML defaults file (config/config.yml by default)")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a message stream with truth and pseudorange side channels")
    p.add_argument("--traj", choices=["static", "line", "circle"], default="static")
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--speed-kmh", type=float, default=40.0)
    p.add_argument("--pr-sigma-m", type=float, help="pseudorange noise sigma; calibrated when omitted")
    p.add_argument("--target-2drms-m", type=float, help="raw 2DRMS the calibration aims for")
    p.add_argument("--satellites", type=int)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--vehicle")
    p.add_argument("--clock-offset-m", type=float, default=0.0)
    p.add_argument("--clock-walk-m", type=float, default=0.0)
    p.add_argument("--multipath-bias-m", type=float, default=0.0)
    p.add_argument("--multipath-len", type=int, default=10)
    p.add_argument("--multipath-prob", type=float, default=0.01)
    p.add_argument("--out-messages", required=True)
    p.add_argument("--out-truth", required=True)
    p.add_argument("--out-pseudoranges")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("decode", help="decode a message file and report rejects")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("filter", help="filter decoded fixes into a station CSV")
    p.add_argument("--mode", choices=["position", "pseudorange"], default="position")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--pseudoranges")
    p.add_argument("--out", required=True)
    p.add_argument("--q-pos-m", type=float)
    p.add_argument("--r-pos-m", type=float)
    p.add_argument("--q-clk-m", type=float)
    p.add_argument("--r-per-sat-m", type=float)
    p.add_argument("--joseph", action="store_true")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("eval", help="accuracy of raw vs filtered tracks")
    p.add_argument("--raw", required=True)
    p.add_argument("--filtered", required=True)
    p.add_argument("--truth")
    p.add_argument("--vehicle")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("kml", help="KML track document from a station CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vehicle", required=True)
    p.set_defaults(func=cmd_kml)

    p = sub.add_parser("station", help="run the recipient station")
    p.add_argument("--input", required=True, help="file:PATH, stdin or tcp:PORT")
    p.add_argument("--out-dir")
    p.add_argument("--filter", choices=["position", "pseudorange", "off"])
    p.add_argument("--pseudoranges")
    p.add_argument("--kml-every-n", type=int)
    p.set_defaults(func=cmd_station)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        yaml_cfg = load_yaml_defaults(args.config)
        level, log_file = logging_settings(yaml_cfg)
        configure_logging(args.log_level or level, log_file)
        return args.func(args, yaml_cfg)
    except (ValueError, OSError, TrackerError) as e:
        # config errors, IoFailure and BindFailure are all fatal
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FATAL
    except KeyboardInterrupt:
        logger.info("Interrupted")
        return EXIT_OK
