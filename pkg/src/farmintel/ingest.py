"""CSV ingestion with per-row validation.

Every rejection names the file, the 1-based line number (the header is line
1) and the offending column.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Any, Callable, Iterator

from .alerting.band import CHANNELS, IndicatorSample
from .alerting.thresholds import parse_iso
from .envforecast import SensorReading
from .production import DailyRecord, FeedPurchase

log = logging.getLogger(__name__)


class IngestError(ValueError):
    def __init__(self, path, line: int, column: str | None, message: str):
        self.path, self.line, self.column = str(path), line, column
        where = f"{path}:{line}" + (f", column {column}" if column else "")
        super().__init__(f"{where}: {message}")


def _ts(v: str) -> float:
    return parse_iso(v)


def _finite(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError(f"{v!r} is not finite")
    return x


def _nonneg(v: str) -> float:
    x = _finite(v)
    if x < 0:
        raise ValueError(f"{x} is negative")
    return x


def _pct(v: str) -> float:
    x = _finite(v)
    if not 0 <= x <= 100:
        raise ValueError(f"{x} outside [0, 100]")
    return x


def _count(v: str) -> int:
    x = int(v)
    if x < 0:
        raise ValueError(f"{x} is negative")
    return x


def _channel(v: str) -> str:
    if v not in CHANNELS:
        raise ValueError(f"channel {v!r} is not one of {CHANNELS}")
    return v


def _flag(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "open", "yes"):
        return True
    if s in ("0", "false", "closed", "no"):
        return False
    raise ValueError(f"{v!r} is not a boolean")


def _month(v: str) -> str:
    FeedPurchase(v, 0, 0)
    return v


@dataclass(frozen=True)
class FeederLabel:
    timestamp: float
    open: bool


@dataclass(frozen=True)
class Schema:
    name: str
    columns: tuple[tuple[str, Callable[[str], Any]], ...]
    build: Callable[..., Any]


SCHEMAS = {
    "sensor": Schema("sensor", (("timestamp_iso8601", _ts), ("sensor_id", str), ("temperature_c", _finite),
                                ("humidity_pct", _pct)), SensorReading),
    "indicator": Schema("indicator", (("timestamp_iso8601", _ts), ("channel", _channel), ("value", _nonneg)),
                        IndicatorSample),
    "production": Schema("production", (("date", date.fromisoformat), ("eggs", _count), ("deaths", _count),
                                        ("flock_size", _count), ("age_weeks", _nonneg)), DailyRecord),
    "feed": Schema("feed", (("month", _month), ("kg", _nonneg), ("cost", _nonneg)), FeedPurchase),
    "feeder": Schema("feeder", (("timestamp_iso8601", _ts), ("open", _flag)), FeederLabel),
}


def parse_row(schema: Schema, row: dict, path, line: int):
    vals = []
    for col, conv in schema.columns:
        raw = row.get(col)
        if raw is None or raw == "":
            raise IngestError(path, line, col, "missing value")
        try:
            vals.append(conv(raw.strip()))
        except (ValueError, TypeError) as e:
            raise IngestError(path, line, col, str(e)) from None
    try:
        return schema.build(*vals)
    except ValueError as e:
        raise IngestError(path, line, None, str(e)) from None


def iter_records(path: str | Path, schema: str | Schema) -> Iterator[Any]:
    sch = SCHEMAS[schema] if isinstance(schema, str) else schema
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            log.warning("%s is empty", path)
            return
        missing = [c for c, _ in sch.columns if c not in reader.fieldnames]
        if missing:
            raise IngestError(path, 1, missing[0], f"header lacks column {missing[0]!r}")
        for row in reader:
            if not any((v or "").strip() for v in row.values()):
                continue
            yield parse_row(sch, row, path, reader.line_num)


def ingest(path: str | Path, schema: str | Schema) -> list:
    return list(iter_records(path, schema))


def write_csv(path: str | Path, schema: str, rows: list[tuple]) -> None:
    sch = SCHEMAS[schema]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([c for c, _ in sch.columns])
        w.writerows(rows)
