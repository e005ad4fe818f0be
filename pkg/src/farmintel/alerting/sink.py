"""Alert delivery: append-only JSONL log plus an optional JSON webhook.

Delivery problems are recorded in the returned :class:`Delivery` and in the
dead-letter file; they are never raised to the caller, so a dead webhook
cannot stall detection.
"""
from __future__ import annotations

import json
import logging
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .thresholds import Alert

log = logging.getLogger(__name__)

DEDUP_WINDOW_S = 30 * 60


def encode(alert: Alert) -> str:
    return json.dumps(alert.to_record(), separators=(",", ":"))


@dataclass
class Delivery:
    alert: Alert
    status: str  # "delivered" | "logged" | "suppressed" | "dead-lettered"
    attempts: int = 0
    errors: list[str] = field(default_factory=list)


def http_post(url: str, body: bytes, timeout: float) -> int:
    req = urllib.request.Request(url, data=body, method="POST",
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status
    except urllib.error.HTTPError as e:
        return e.code


class AlertSink:
    """Single-writer sink; ``emit`` may be called from several pipelines."""

    def __init__(self, log_path: str | Path, *, webhook_url: str | None = None,
                 dead_letter_path: str | Path | None = None,
                 dedup_window_s: float = DEDUP_WINDOW_S,
                 attempts: int = 3, backoff_s: float = 0.5, backoff_cap_s: float = 4.0,
                 timeout_s: float = 5.0,
                 post: Callable[[str, bytes, float], int] = http_post,
                 sleep: Callable[[float], None] = time.sleep):
        if attempts < 1:
            raise ValueError("attempts must be at least 1")
        self.log_path = Path(log_path)
        self.webhook_url = webhook_url
        self.dead_letter_path = Path(dead_letter_path) if dead_letter_path else \
            self.log_path.with_name(self.log_path.stem + ".deadletter.jsonl")
        self.dedup_window_s = dedup_window_s
        self.attempts = attempts
        self.backoff_s = backoff_s
        self.backoff_cap_s = backoff_cap_s
        self.timeout_s = timeout_s
        self._post = post
        self._sleep = sleep
        self._last: dict[tuple[str, str | None], float] = {}
        self._lock = threading.Lock()
        self.log_path.parent.mkdir(parents=True, exist_ok=True)

    def emit(self, alert: Alert) -> Delivery:
        with self._lock:
            key = (alert.kind, alert.channel)
            last = self._last.get(key)
            if last is not None and 0 <= alert.timestamp - last < self.dedup_window_s:
                return Delivery(alert, "suppressed")
            self._last[key] = alert.timestamp
            line = encode(alert)
            with self.log_path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            if not self.webhook_url:
                return Delivery(alert, "logged")
            return self._deliver(alert, line)

    def _deliver(self, alert: Alert, line: str) -> Delivery:
        d = Delivery(alert, "delivered")
        for k in range(self.attempts):
            d.attempts += 1
            try:
                status = self._post(self.webhook_url, line.encode(), self.timeout_s)
                if 200 <= status < 300:
                    return d
                d.errors.append(f"HTTP {status}")
            except (OSError, ValueError) as e:
                d.errors.append(f"{type(e).__name__}: {e}")
            if k + 1 < self.attempts:
                self._sleep(min(self.backoff_cap_s, self.backoff_s * 2 ** k))
        d.status = "dead-lettered"
        log.warning("webhook delivery failed after %d attempts: %s", d.attempts, d.errors[-1])
        rec = dict(alert.to_record(), error=d.errors[-1], attempts=d.attempts)
        with self.dead_letter_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
        return d


def read_log(path: str | Path) -> list[Alert]:
    with Path(path).open(encoding="utf-8") as fh:
        return [Alert.from_record(json.loads(line)) for line in fh if line.strip()]
