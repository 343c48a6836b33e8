"""
Record parsing and the per-user chronological group-by.

Input is newline-delimited JSON, one TweetRecord per line. group_and_sort is an
external sort on (user_id, timestamp, tweet_id): records are buffered up to a
memory budget, spilled as sorted runs to disk and merged with heapq. The output
is identical whether or not anything was spilled.
"""

import heapq
import itertools
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

from pydantic import ValidationError

from app.models import TweetRecord, UserTimeline
from app.utils.files import decode_line, new_spill_path
from app.utils.parallel import ordered_map

log = logging.getLogger("mobility.ingest")

REJECTED_NO_LOCATION = "no-location"
REJECTED_MALFORMED = "malformed"

# Rough in-memory footprint of one parsed record, nested place included.
RECORD_BYTES_ESTIMATE = 1536
PARSE_BATCH_LINES = 10_000
# Spill runs merged at once; more runs are merged in intermediate passes.
MERGE_FAN_IN = 64


class RecordRejected(ValueError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass
class IngestStats:
    lines: int = 0
    accepted: int = 0
    rejected: Counter = field(default_factory=Counter)
    duplicates: int = 0
    users: int = 0
    spilled_runs: int = 0

    def as_dict(self) -> dict:
        return {
            "lines": self.lines,
            "accepted": self.accepted,
            "rejected": dict(sorted(self.rejected.items())),
            "duplicates": self.duplicates,
            "users": self.users,
            "spilled_runs": self.spilled_runs,
        }


def parse_record(line: str, timestamp_format: str = "epoch") -> TweetRecord:
    """Parse and validate one input line; raises RecordRejected."""
    try:
        return TweetRecord.model_validate_json(line, context={"timestamp_format": timestamp_format})
    except ValidationError as e:
        if any(err["type"] == "no_location" for err in e.errors()):
            raise RecordRejected(REJECTED_NO_LOCATION) from e
        raise RecordRejected(REJECTED_MALFORMED, str(e.errors()[0].get("msg", ""))) from e


def parse_lines(batch: tuple[Sequence[Union[bytes, str]], str]) -> tuple[list[TweetRecord], Counter]:
    """Parse raw lines; lines that are not valid UTF-8 count as malformed."""
    raw_lines, timestamp_format = batch
    records: list[TweetRecord] = []
    rejected: Counter = Counter()
    for raw in raw_lines:
        if not raw.strip():
            continue
        line = decode_line(raw)
        if line is None:
            rejected[REJECTED_MALFORMED] += 1
            continue
        try:
            records.append(parse_record(line, timestamp_format))
        except RecordRejected as e:
            rejected[e.reason] += 1
    return records, rejected


def _line_batches(paths: Iterable[Path], timestamp_format: str, stats: IngestStats) -> Iterator[tuple[list[bytes], str]]:
    for path in paths:
        with open(path, "rb") as f:
            while True:
                batch = list(itertools.islice(f, PARSE_BATCH_LINES))
                if not batch:
                    break
                stats.lines += sum(1 for line in batch if line.strip())
                yield batch, timestamp_format


def iter_records(
    paths: Iterable[Path],
    timestamp_format: str = "epoch",
    workers: int = 1,
    stats: Optional[IngestStats] = None,
) -> Iterator[TweetRecord]:
    """Parse every input file; rejections are counted into stats, never raised."""
    stats = stats if stats is not None else IngestStats()
    batches = _line_batches(paths, timestamp_format, stats)
    for records, rejected in ordered_map(parse_lines, batches, workers=workers):
        stats.accepted += len(records)
        stats.rejected.update(rejected)
        yield from records


def records_for_memory(max_memory_mb: int) -> int:
    """Number of records to buffer before spilling a sorted run."""
    return max(1, (max_memory_mb * 1024 * 1024) // RECORD_BYTES_ESTIMATE)


def _sort_key(record: TweetRecord) -> tuple[int, int, int]:
    return record.sort_key


def _write_run(records: Iterable[TweetRecord], path: Path) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(record.model_dump_json())
            f.write("\n")
    return path


def _spill(buffer: list[TweetRecord], tmp_dir: Optional[Path], live: list[Path]) -> Path:
    buffer.sort(key=_sort_key)
    path = new_spill_path(tmp_dir, prefix="ingest-run")
    live.append(path)
    return _write_run(buffer, path)


def _read_run(path: Path) -> Iterator[TweetRecord]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            yield TweetRecord.model_validate_json(line)


def _remove(paths: Iterable[Path], live: list[Path]) -> None:
    for path in list(paths):
        try:
            os.remove(path)
        except OSError:
            log.warning("Could not remove spill file %s", path)
        if path in live:
            live.remove(path)


def _reduce_runs(runs: list[Path], tmp_dir: Optional[Path], live: list[Path], fan_in: int, target: int) -> list[Path]:
    """Merge runs in groups of fan_in until at most target remain."""
    while len(runs) > target:
        merged: list[Path] = []
        for start in range(0, len(runs), fan_in):
            group = runs[start:start + fan_in]
            if len(group) == 1:
                merged.append(group[0])
                continue
            path = new_spill_path(tmp_dir, prefix="ingest-merge")
            live.append(path)
            _write_run(heapq.merge(*(_read_run(p) for p in group), key=_sort_key), path)
            _remove(group, live)
            merged.append(path)
        log.info("Merge pass: %d runs -> %d", len(runs), len(merged))
        runs = merged
    return runs


def _group(sorted_records: Iterable[TweetRecord], stats: IngestStats) -> Iterator[UserTimeline]:
    for user_id, group in itertools.groupby(sorted_records, key=lambda r: r.user_id):
        seen: set[int] = set()
        records: list[TweetRecord] = []
        duplicates = 0
        for record in group:
            if record.tweet_id in seen:
                duplicates += 1
                continue
            seen.add(record.tweet_id)
            records.append(record)
        stats.duplicates += duplicates
        stats.users += 1
        yield UserTimeline(user_id=user_id, duplicates=duplicates, records=records)


def group_and_sort(
    records: Iterable[TweetRecord],
    max_records: int = records_for_memory(512),
    tmp_dir: Optional[Path] = None,
    stats: Optional[IngestStats] = None,
    max_fan_in: int = MERGE_FAN_IN,
) -> Iterator[UserTimeline]:
    """
    Yield one UserTimeline per user in ascending user_id, each sorted by
    (timestamp, tweet_id). At most max_records records are held before a
    sorted run is spilled to tmp_dir, and at most max_fan_in runs are open
    at once while merging.
    """
    if max_fan_in < 2:
        raise ValueError(f"max_fan_in must be at least 2, got {max_fan_in}")
    stats = stats if stats is not None else IngestStats()
    live: list[Path] = []
    buffer: list[TweetRecord] = []
    try:
        runs: list[Path] = []
        for record in records:
            buffer.append(record)
            if len(buffer) >= max_records:
                runs.append(_spill(buffer, tmp_dir, live))
                buffer = []

        if not runs:
            buffer.sort(key=_sort_key)
            yield from _group(buffer, stats)
            return

        stats.spilled_runs = len(runs)
        log.info("Merging %d spilled runs", len(runs))
        # the in-memory tail takes one merge slot
        runs = _reduce_runs(runs, tmp_dir, live, max_fan_in, max_fan_in - 1)
        buffer.sort(key=_sort_key)
        merged = heapq.merge(*(_read_run(p) for p in runs), iter(buffer), key=_sort_key)
        yield from _group(merged, stats)
    finally:
        _remove(list(live), live)
