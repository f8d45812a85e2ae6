"""
Recipient station
Decodes incoming telemetry lines, filters them per vehicle and keeps each
vehicle's CSV log and KML track current.
"""

import asyncio
import datetime as dt
import logging
import os
import signal
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Literal, Optional, Set, Tuple

from .accuracy import AccuracyReport, report, write_reports_csv
from .config import StationConfig
from .errors import (
    BindFailure,
    ChecksumMismatch,
    EstimationError,
    IoFailure,
    RangeViolation,
    TooFewPoints,
)
from .geodesy import GeodeticPoint
from .gnss_sim import EpochIndex, PseudorangeEpoch, read_pseudorange_csv
from .kalman import FilterConfig, PositionFilter, PseudorangeFilter
from .kml import TrackPoint, write_csv, write_kml
from .models import TelemetryRecord
from .telemetry import decode_record
from .track import Track, TrackSample

logger = logging.getLogger(__name__)

RejectReason = Literal["checksum", "malformed", "range"]


@dataclass(frozen=True)
class IngestOutcome:
    accepted: bool
    vehicle_id: Optional[str] = None
    reason: Optional[RejectReason] = None


@dataclass
class StationCounters:
    accepted: int = 0
    checksum_rejected: int = 0
    malformed: int = 0
    range_rejected: int = 0

    @property
    def rejected(self) -> int:
        return self.checksum_rejected + self.malformed + self.range_rejected

    @property
    def total(self) -> int:
        return self.accepted + self.rejected

    def count(self, outcome: IngestOutcome) -> None:
        if outcome.accepted:
            self.accepted += 1
        elif outcome.reason == "checksum":
            self.checksum_rejected += 1
        elif outcome.reason == "range":
            self.range_rejected += 1
        else:
            self.malformed += 1


@dataclass
class VehicleSession:
    """Filter state, point buffer and output files of one vehicle"""

    vehicle_id: str
    csv_path: Path
    kml_path: Path
    position_filter: Optional[PositionFilter] = None
    pseudorange_filter: Optional[PseudorangeFilter] = None
    epoch_index: Optional[EpochIndex] = None
    # (raw, filtered) per accepted message, arrival order
    points: List[Tuple[TrackPoint, TrackPoint]] = field(default_factory=list)
    flushed: int = 0

    @property
    def accepted(self) -> int:
        return len(self.points)

    @property
    def filtered(self) -> bool:
        return self.position_filter is not None or self.pseudorange_filter is not None

    def kml_points(self) -> List[TrackPoint]:
        raw = [r for r, _ in self.points]
        return raw + [f for _, f in self.points] if self.filtered else raw

    def flush(self) -> None:
        """Appends unwritten CSV rows and rewrites the KML document"""
        pending = self.points[self.flushed:]
        write_csv(((self.vehicle_id, r, f) for r, f in pending), self.csv_path, append=True)
        self.flushed = len(self.points)
        write_kml(self.kml_points(), self.vehicle_id, self.kml_path)

    def tracks(self) -> Tuple[Track, Track]:
        raw = Track("raw", [TrackSample(k, r.pos, r.t) for k, (r, _) in enumerate(self.points)])
        filtered = Track("filtered", [TrackSample(k, f.pos, f.t) for k, (_, f) in enumerate(self.points)])
        return raw, filtered


@dataclass
class VehicleSummary:
    vehicle_id: str
    accepted: int
    csv_path: Path
    kml_path: Path
    raw_report: Optional[AccuracyReport] = None
    filtered_report: Optional[AccuracyReport] = None


@dataclass
class StationSummary:
    counters: StationCounters
    vehicles: Dict[str, VehicleSummary]
    accuracy_path: Optional[Path] = None

    @property
    def output_paths(self) -> List[Path]:
        paths = [p for v in self.vehicles.values() for p in (v.csv_path, v.kml_path)]
        return paths + ([self.accuracy_path] if self.accuracy_path else [])

    def to_text(self) -> str:
        c = self.counters
        lines = [
            f"lines: {c.total}  accepted: {c.accepted}  checksum_rejected: {c.checksum_rejected}  "
            f"malformed: {c.malformed}  range_rejected: {c.range_rejected}"
        ]
        for v in self.vehicles.values():
            lines.append(f"{v.vehicle_id}: {v.accepted} points -> {v.csv_path}, {v.kml_path}")
            for label, rep in (("raw", v.raw_report), ("filtered", v.filtered_report)):
                if rep is not None:
                    lines.append(rep.to_text(f"  {label}"))
        return "\n".join(lines)


class Station:
    """
    Routes decoded messages to per-vehicle sessions.

    A Station is driven from one thread or one event loop, so all mutations
    of a vehicle's session are serialized.
    """

    def __init__(self, config: StationConfig, epochs: Optional[List[PseudorangeEpoch]] = None):
        self.config = config
        self.sessions: Dict[str, VehicleSession] = {}
        self.counters = StationCounters()
        self.epochs = epochs
        if config.filter_mode == "pseudorange" and epochs is None:
            self.epochs = read_pseudorange_csv(config.pseudoranges)
        self._prepare_output_dir()

    def _prepare_output_dir(self) -> None:
        out = self.config.output_dir
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise IoFailure(f"Cannot create output directory {out}: {e}") from e
        if not os.access(out, os.W_OK):
            raise IoFailure(f"Output directory {out} is not writable")

    def _new_session(self, vehicle_id: str) -> VehicleSession:
        out = self.config.output_dir
        session = VehicleSession(vehicle_id, out / f"{vehicle_id}.csv", out / f"{vehicle_id}.kml")
        f = self.config.filter
        if self.config.filter_mode == "position":
            session.position_filter = PositionFilter(f.position_q_m, f.position_r_m, reanchor_deg=f.reanchor_deg)
        elif self.config.filter_mode == "pseudorange":
            session.pseudorange_filter = PseudorangeFilter(FilterConfig.from_defaults(f))
            session.epoch_index = EpochIndex(self.epochs)
        # start the log fresh so re-runs reproduce it exactly
        write_csv([], session.csv_path)
        logger.info(f"New vehicle session {vehicle_id}")
        return session

    def _filter(self, session: VehicleSession, raw: GeodeticPoint, utc: dt.datetime) -> GeodeticPoint:
        if session.position_filter is not None:
            return session.position_filter.step(raw)
        if session.pseudorange_filter is not None:
            epoch = session.epoch_index.find(utc)
            if epoch is None:
                logger.warning(f"{session.vehicle_id}: no pseudorange epoch at {utc.isoformat()}, passing fix through")
                return raw
            try:
                return session.pseudorange_filter.step(epoch).pos
            except EstimationError as e:
                logger.warning(f"{session.vehicle_id}: pseudorange filter failed at epoch {epoch.epoch} ({e})")
                return raw
        return raw

    def _accept(self, record: TelemetryRecord) -> None:
        session = self.sessions.get(record.vehicle_id)
        if session is None:
            session = self.sessions[record.vehicle_id] = self._new_session(record.vehicle_id)
        fix = record.fix
        raw = GeodeticPoint(fix.lat_deg, fix.lon_deg)
        t = fix.timestamp
        filtered = self._filter(session, raw, t)
        session.points.append((
            TrackPoint(t, raw, record.status, "raw"),
            TrackPoint(t, GeodeticPoint(filtered.lat_deg, filtered.lon_deg), record.status, "filtered"),
        ))
        if session.accepted % self.config.kml_every_n == 0:
            try:
                session.flush()
            except IoFailure as e:
                # rows stay buffered and go out with the next flush
                logger.error(f"{session.vehicle_id}: {e}")

    def ingest_line(self, line: str) -> IngestOutcome:
        """
        Decodes one message line and routes it; never raises.

        Args:
            line (str): One SMS text, trailing newline allowed.

        Returns:
            IngestOutcome: Accepted with the vehicle id, or rejected with a reason.
        """
        try:
            record = decode_record(line)
        except ChecksumMismatch as e:
            outcome = IngestOutcome(False, reason="checksum")
            logger.debug(f"Rejected (checksum): {e}")
        except RangeViolation as e:
            outcome = IngestOutcome(False, reason="range")
            logger.debug(f"Rejected (range): {e}")
        except Exception as e:
            outcome = IngestOutcome(False, reason="malformed")
            logger.debug(f"Rejected (malformed): {e}")
        else:
            try:
                self._accept(record)
                outcome = IngestOutcome(True, vehicle_id=record.vehicle_id)
            except Exception as e:
                logger.error(f"Could not process message for {record.vehicle_id}: {e}")
                outcome = IngestOutcome(False, reason="malformed")
        self.counters.count(outcome)
        return outcome

    def reject(self, reason: RejectReason, detail: str) -> IngestOutcome:
        """Counts a line that never reached the decoder."""
        outcome = IngestOutcome(False, reason=reason)
        logger.debug(f"Rejected ({reason}): {detail}")
        self.counters.count(outcome)
        return outcome

    def ingest(self, lines: Iterable[str]) -> StationCounters:
        for line in lines:
            self.ingest_line(line)
        return self.counters

    def finalize(self) -> StationSummary:
        """Flushes every session and writes the per-vehicle accuracy table."""
        vehicles: Dict[str, VehicleSummary] = {}
        rows = []
        for vid, session in self.sessions.items():
            session.flush()
            summary = VehicleSummary(vid, session.accepted, session.csv_path, session.kml_path)
            raw, filtered = session.tracks()
            try:
                summary.raw_report = report(raw)
                rows.append((vid, "raw", summary.raw_report))
                if session.filtered:
                    summary.filtered_report = report(filtered)
                    rows.append((vid, "filtered", summary.filtered_report))
            except TooFewPoints:
                logger.info(f"{vid}: fewer than 2 points, no accuracy report")
            vehicles[vid] = summary
            logger.info(f"{vid}: {session.accepted} points written to {session.csv_path}")

        accuracy_path = None
        if vehicles:
            accuracy_path = self.config.output_dir / "accuracy.csv"
            write_reports_csv(rows, accuracy_path)
        c = self.counters
        logger.info(
            f"Station done: {c.total} lines, {c.accepted} accepted, {c.checksum_rejected} checksum, "
            f"{c.malformed} malformed, {c.range_rejected} range"
        )
        return StationSummary(c, vehicles, accuracy_path)


async def _skip_line(reader: asyncio.StreamReader) -> None:
    """Drops buffered bytes up to and including the next newline."""
    while True:
        try:
            await reader.readuntil(b"\n")
            return
        except asyncio.LimitOverrunError as e:
            await reader.readexactly(e.consumed)
        except asyncio.IncompleteReadError:
            return


async def serve_tcp(
    station: Station,
    host: str,
    port: int,
    stop: Optional[asyncio.Event] = None,
    on_ready: Optional[Callable[[int], None]] = None,
    line_limit: int = 2 ** 16,
) -> None:
    """
    Line-delimited TCP listener standing in for the GSM modem.

    Every connection is read line by line on the event loop until stop is set,
    then open connections are closed so the caller can finalize.

    Args:
        station (Station): Receives each line.
        host (str): Bind address.
        port (int): Bind port, 0 for any free port.
        stop (asyncio.Event): Shutdown signal; SIGINT/SIGTERM set it when omitted.
        on_ready (Callable[[int], None]): Called with the bound port.
        line_limit (int): Longest line in bytes; longer lines count as malformed.
    """
    install_signals = stop is None
    stop = stop or asyncio.Event()
    handlers: Set[asyncio.Task] = set()

    async def handle(reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        task = asyncio.current_task()
        handlers.add(task)
        peer = writer.get_extra_info("peername")
        logger.info(f"Connection from {peer}")
        try:
            while True:
                try:
                    raw = await reader.readuntil(b"\n")
                except asyncio.IncompleteReadError as e:
                    # unterminated last line
                    if e.partial:
                        station.ingest_line(e.partial.decode("utf-8", errors="replace"))
                    break
                except asyncio.LimitOverrunError:
                    await _skip_line(reader)
                    station.reject("malformed", f"line from {peer} exceeds {line_limit} bytes")
                    continue
                station.ingest_line(raw.decode("utf-8", errors="replace"))
        except ConnectionError as e:
            logger.warning(f"Connection from {peer} lost: {e}")
        finally:
            handlers.discard(task)
            writer.close()
            logger.info(f"Connection from {peer} closed")

    try:
        server = await asyncio.start_server(handle, host, port, limit=line_limit)
    except OSError as e:
        raise BindFailure(f"Cannot listen on {host}:{port}: {e}") from e

    if install_signals:
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            try:
                loop.add_signal_handler(sig, stop.set)
            except (NotImplementedError, RuntimeError, ValueError):
                pass

    bound = server.sockets[0].getsockname()[1]
    logger.info(f"Listening on {host}:{bound}")
    if on_ready is not None:
        on_ready(bound)
    try:
        await stop.wait()
    finally:
        server.close()
        # Server.wait_closed blocks on live connections, so end them first
        for task in list(handlers):
            task.cancel()
        if handlers:
            await asyncio.gather(*handlers, return_exceptions=True)
        await server.wait_closed()
    logger.info("TCP listener stopped")


def run(config: StationConfig, stdin=None) -> StationSummary:
    """
    Runs the station until its input ends (file, stdin) or a shutdown signal (tcp).

    Args:
        config (StationConfig): Validated station settings.
        stdin: Text stream used for the stdin source, sys.stdin by default.

    Returns:
        StationSummary: Counters, per-vehicle reports and output paths.
    """
    station = Station(config)
    kind, arg = config.input_kind, config.input_arg
    logger.info(f"Station reading {config.input}, filter={config.filter_mode}, output={config.output_dir}")
    if kind == "file":
        try:
            with open(arg, "r", encoding="utf-8", errors="replace") as f:
                station.ingest(f)
        except FileNotFoundError as e:
            raise IoFailure(f"Cannot read {arg}: {e}") from e
    elif kind == "stdin":
        station.ingest(stdin or sys.stdin)
    else:
        asyncio.run(serve_tcp(station, config.host, int(arg)))
    return station.finalize()
