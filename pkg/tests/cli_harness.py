"""Demo inputs and one invocation per subcommand, shared by the CLI and acceptance tests."""
from __future__ import annotations

from pathlib import Path

from farmintel.cli import main

CONFIG = "clock: '2024-01-22T00:00:00Z'\nalerting:\n  poll_s: 0.01\n  retry_s: 0.01\n"


def build_demo(root: Path) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.yaml").write_text(CONFIG)
    assert main(["demo-data", "--out", str(root / "in")]) == 0
    d = root / "in"
    assert main(["alerts", "build-band", "--indicators", str(d / "indicators_history.csv"),
                 "--out", str(root / "bands.json")]) == 0
    assert main(["eggs", "calibrate", "--log", str(d / "calibration.jsonl"), "--out", str(root / "calib.json")]) == 0
    return root


def commands(root: Path) -> dict[str, list[str]]:
    d = root / "in"
    return {
        "optimize-cmaes": ["optimize", "--layout", str(d / "layout.json"), "--evals", "2000"],
        "optimize-map-elites": ["optimize", "--algo", "map-elites", "--evals", "2000"],
        "forecast-env": ["forecast-env", "--data", str(d / "sensors.csv"), "--target", "hum", "--grid"],
        "alerts-run": ["alerts", "run", "--env", str(d / "sensors.csv"), "--indicators",
                       str(d / "indicators_today.csv"), "--feeder", str(d / "feeder.csv"),
                       "--band", str(root / "bands.json")],
        "daemon": ["daemon", "--env", str(d / "sensors.csv"), "--indicators", str(d / "indicators_today.csv"),
                   "--band", str(root / "bands.json"), "--max-idle-polls", "2"],
        "eggs-count": ["eggs", "count", "--log", str(d / "session.jsonl"), "--calib", str(root / "calib.json")],
        "forecast-prod": ["forecast-prod", "--production", str(d / "production.csv"), "--feed", str(d / "feed.csv"),
                          "--indicators", str(d / "production_indicators.csv"),
                          "--env", str(d / "production_sensors.csv"), "--evaluate"],
        "recommend": ["recommend", "--context", str(d / "context.json"),
                      "--weather-fixture", str(d / "weather.json")],
        "demo-data": ["demo-data"],
    }


def snapshot(out: Path) -> dict[str, bytes]:
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
