"""
`score`: the daily batch scorer.

Reads admitted-patient CSVs (one file or every *.csv in a directory),
scores them with a probability bundle and appends one JSON line per
episode to the prediction log. Next to the log live:

    <log>.lock         single-writer lock holding the PID, removed on exit;
                       taken over when that process is gone
    <log>.seen.json    episode ids already logged (rebuilt from the log when absent)
    <log>.errors.jsonl rows that failed validation, one JSON object per line

In watch mode the input is re-scanned every interval and only episode ids
not yet in the log are scored, so restarts never double-log an episode.
"""

# Standard library imports
import argparse
import json
import logging
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Set

# Local application imports
from database import PredictionRecord, session_scope
from models import CommandResult, PredictionLogEntry
from mortality.base_config import Settings, log_activity, log_error, log_processing_step
from mortality.dataset import Cohort, RowError, read_csv_rows
from mortality.errors import DataError, LockError
from mortality.persist import ModelBundle, atomic_write_text, load_model, pipeline_from_bundle
from mortality.pipeline import PROBABILITY_KINDS, TrainedPipeline

from .common import resolve_out
from .rendering import get_console
from .train import parse_kind

logger = logging.getLogger(__name__)

NAME = "score"
COMPONENT = "BatchScorer"
MODE_ONCE = "once"
MODE_WATCH = "watch"


def register(subparsers, parent: argparse.ArgumentParser):
    parser = subparsers.add_parser(NAME, parents=[parent], help="Score admitted patients into the prediction log")
    parser.add_argument("bundle", help="Model bundle (.arx.json) of kind gbc, rf or knn")
    parser.add_argument("input", help="Admissions CSV, or a directory scanned for *.csv")
    parser.add_argument("--mode", choices=[MODE_ONCE, MODE_WATCH], default=MODE_ONCE)
    parser.add_argument("--interval", type=float, default=None,
                        help="Seconds between scans in watch mode (default: MORTALITY_WATCH_INTERVAL_SECONDS)")
    parser.add_argument("--max-cycles", type=int, default=None, help="Stop watch mode after this many scans")
    parser.add_argument("--db-url", default=None, help="Also insert predictions into this SQL database")
    parser.set_defaults(handler=handle)


def lock_path_for(log_path: Path) -> Path:
    return log_path.with_name(f"{log_path.name}.lock")


def seen_path_for(log_path: Path) -> Path:
    return log_path.with_name(f"{log_path.name}.seen.json")


def sidecar_path_for(log_path: Path) -> Path:
    return log_path.with_name(f"{log_path.name}.errors.jsonl")


def _process_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


class LogLock:
    """
    Exclusive lock file holding the owner's PID. A lock whose PID is no
    longer running (a crashed scorer) is taken over with a warning.
    """

    def __init__(self, path: Path):
        self.path = path

    def holder(self) -> Optional[int]:
        try:
            return int(self.path.read_text(encoding="utf-8").strip())
        except (OSError, ValueError):
            return None

    def _create(self) -> int:
        return os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)

    def __enter__(self) -> "LogLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = self._create()
        except FileExistsError:
            pid = self.holder()
            if pid is not None and _process_alive(pid):
                raise LockError(
                    f"Prediction log is locked by {self.path} (pid {pid}); another scorer is running"
                )
            logger.warning(f"⚠️ Removing stale lock {self.path} (pid {pid} is not running)")
            self.path.unlink(missing_ok=True)
            try:
                fd = self._create()
            except FileExistsError:
                raise LockError(f"Prediction log is locked by {self.path}; another scorer is starting")
        with os.fdopen(fd, "w") as f:
            f.write(f"{os.getpid()}\n")
        return self

    def __exit__(self, exc_type, exc, tb):
        self.path.unlink(missing_ok=True)
        return False


class MonotoneClock:
    """UTC RFC 3339 timestamps that never go backwards within one run"""

    def __init__(self):
        self.last: Optional[datetime] = None

    def now(self) -> str:
        current = datetime.now(timezone.utc)
        if self.last is not None and current < self.last:
            current = self.last
        self.last = current
        return current.strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass
class ScorerState:
    seen: Set[str] = field(default_factory=set)
    reported: Set[str] = field(default_factory=set)

    @classmethod
    def load(cls, log_path: Path) -> "ScorerState":
        state = cls()
        seen_path = seen_path_for(log_path)
        if seen_path.is_file():
            try:
                raw = json.loads(seen_path.read_text(encoding="utf-8"))
                state.seen.update(raw.get("episode_ids", []))
                state.reported.update(raw.get("reported_errors", []))
            except (json.JSONDecodeError, AttributeError) as e:
                logger.warning(f"⚠️ Ignoring unreadable state file {seen_path}: {e}")
        # the log is authoritative: ids logged before a crash count as seen
        if log_path.is_file():
            with open(log_path, encoding="utf-8") as f:
                for line_number, line in enumerate(f, start=1):
                    try:
                        state.seen.add(json.loads(line)["episode_id"])
                    except (json.JSONDecodeError, KeyError, TypeError):
                        logger.warning(f"⚠️ Unreadable prediction log line {line_number} in {log_path}")
        return state

    def save(self, log_path: Path):
        document = {"episode_ids": sorted(self.seen), "reported_errors": sorted(self.reported)}
        atomic_write_text(seen_path_for(log_path), json.dumps(document, indent=1) + "\n")


@dataclass
class CycleStats:
    scored: int = 0
    rejected: int = 0
    skipped: int = 0


def input_files(input_path: Path) -> List[Path]:
    if input_path.is_dir():
        return sorted(p for p in input_path.glob("*.csv") if p.is_file())
    return [input_path] if input_path.is_file() else []


def append_lines(path: Path, lines: List[str]):
    """One write per batch, opened in append mode and fsynced"""
    if not lines:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    fd = os.open(path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
    try:
        os.write(fd, "".join(lines).encode("utf-8"))
        os.fsync(fd)
    finally:
        os.close(fd)


def _sidecar_entry(clock: MonotoneClock, source: Path, error: RowError) -> Dict[str, Any]:
    return {
        "timestamp": clock.now(),
        "source": str(source),
        "row": error.row,
        "episode_id": error.episode_id,
        "column": error.column,
        "message": error.message,
    }


def mirror_to_database(database_url: str, entries: List[PredictionLogEntry]):
    """Insert entries into the predictions table; failures never touch the log"""
    try:
        with session_scope(database_url) as db:
            db.add_all([PredictionRecord(**entry.model_dump()) for entry in entries])
    except Exception as e:
        log_error(COMPONENT, "database_mirror", e, {"entries": len(entries)})


def score_cycle(pipeline: TrainedPipeline, bundle: ModelBundle, files: List[Path], log_path: Path,
                state: ScorerState, clock: MonotoneClock, skip_seen: bool,
                database_url: Optional[str] = None) -> CycleStats:
    """
    Score every valid, not yet seen row of files and append them to the log.

    Args:
        skip_seen: watch mode; rows whose episode_id is already logged are
            skipped and rejected rows are reported to the sidecar only once

    Returns:
        Counts of scored, rejected and skipped rows
    """
    stats = CycleStats()
    schema = pipeline.encoder.schema
    records = []
    sidecar: List[Dict[str, Any]] = []
    pending: Set[str] = set()

    def reject(source: Path, error: RowError):
        key = f"{source}|{error.row}|{error.episode_id}|{error.message}"
        if skip_seen and key in state.reported:
            return
        state.reported.add(key)
        sidecar.append(_sidecar_entry(clock, source, error))
        stats.rejected += 1

    for source in files:
        try:
            result = read_csv_rows(source, schema)
        except DataError as e:
            reject(source, RowError(row=0, column=e.column, message=str(e)))
            continue
        for error in result.errors:
            reject(source, error)
        for _, record in result.records:
            if skip_seen and (record.episode_id in state.seen or record.episode_id in pending):
                stats.skipped += 1
                continue
            pending.add(record.episode_id)
            records.append(record)

    entries: List[PredictionLogEntry] = []
    if records:
        scores = pipeline.score(Cohort(schema=schema, records=tuple(records)))
        threshold = float(pipeline.threshold)
        for record, score in zip(records, scores):
            score = float(score)
            entries.append(PredictionLogEntry(
                timestamp=clock.now(),
                patient_id=record.patient_id,
                episode_id=record.episode_id,
                score=score,
                label=int(score >= threshold),
                threshold=threshold,
                model_version=bundle.format_version,
                model_fingerprint=bundle.fingerprint,
            ))

    append_lines(log_path, [entry.model_dump_json() + "\n" for entry in entries])
    append_lines(sidecar_path_for(log_path), [json.dumps(item) + "\n" for item in sidecar])
    state.seen.update(entry.episode_id for entry in entries)
    state.save(log_path)
    stats.scored = len(entries)

    if entries and database_url:
        mirror_to_database(database_url, entries)
    if entries or sidecar:
        log_activity(COMPONENT, "Batch scored", {
            "scored": stats.scored,
            "rejected": stats.rejected,
            "skipped": stats.skipped,
            "positives": sum(e.label for e in entries),
        })
    return stats


def handle(args: argparse.Namespace, settings: Settings) -> CommandResult:
    bundle = load_model(args.bundle)
    parse_kind(bundle.kind, "batch scoring", PROBABILITY_KINDS)
    pipeline = pipeline_from_bundle(bundle)
    if pipeline.threshold is None:
        raise DataError(f"Bundle {args.bundle} carries no decision threshold")

    input_path = Path(args.input)
    if args.mode == MODE_ONCE and not input_path.exists():
        raise DataError(f"Input not found: {input_path}")

    log_path = resolve_out(args, settings, "predictions.jsonl")
    interval = args.interval if args.interval is not None else settings.watch_interval_seconds
    database_url = args.db_url or settings.database_url
    skip_seen = args.mode == MODE_WATCH

    log_processing_step(COMPONENT, "score", {
        "bundle": bundle.fingerprint, "kind": bundle.kind, "mode": args.mode, "log": str(log_path),
    })

    totals = CycleStats()
    cycles = 0
    clock = MonotoneClock()
    with LogLock(lock_path_for(log_path)):
        state = ScorerState.load(log_path)
        try:
            while True:
                stats = score_cycle(pipeline, bundle, input_files(input_path), log_path, state, clock,
                                    skip_seen, database_url)
                cycles += 1
                totals.scored += stats.scored
                totals.rejected += stats.rejected
                totals.skipped += stats.skipped
                logger.info(f"Cycle {cycles}: {stats.scored} scored, {stats.rejected} rejected, "
                            f"{stats.skipped} already logged")
                if args.mode == MODE_ONCE or (args.max_cycles is not None and cycles >= args.max_cycles):
                    break
                time.sleep(interval)
        except KeyboardInterrupt:
            logger.info("🛑 Batch scorer stopped")

    get_console(args.quiet).print(
        f"Scored {totals.scored} episodes into {log_path} "
        f"({totals.rejected} rejected, {totals.skipped} already logged)"
    )
    return CommandResult(
        command=NAME,
        success=True,
        outputs={
            "log": str(log_path),
            "errors": str(sidecar_path_for(log_path)),
            "scored": totals.scored,
            "rejected": totals.rejected,
            "skipped": totals.skipped,
            "cycles": cycles,
        },
    )
