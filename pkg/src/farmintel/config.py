"""Application config, seed derivation and run manifests."""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path
from typing import Any

import yaml

from . import __version__
from .alerting.thresholds import ThresholdConfig, parse_iso
from .eggcount.calibrate import CalibrationConfig
from .optimize.config import ConfigError, OptimizerConfig
from .production import PeriodSchedule
from .recommend import WeatherRules

# keys that locate inputs or steer logging rather than change results
NON_SEMANTIC = ("paths", "log_level")


@dataclass(frozen=True)
class TrackerConfig:
    max_dist: float = 50.0
    max_missed: int = 5

    def __post_init__(self):
        if self.max_dist <= 0 or self.max_missed < 0:
            raise ValueError("tracker needs max_dist > 0 and max_missed >= 0")


@dataclass(frozen=True)
class AlertingConfig:
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    dedup_window_min: float = 30.0
    webhook_url: str | None = None
    attempts: int = 3
    backoff_s: float = 0.5
    timeout_s: float = 5.0
    forecast_lookback: int = 3
    forecast_horizon: int = 3
    forecast_profile: bool = True
    poll_s: float = 1.0
    retry_s: float = 5.0

    def __post_init__(self):
        if self.dedup_window_min < 0 or self.attempts < 1 or self.backoff_s < 0 or self.timeout_s <= 0:
            raise ValueError("alerting needs dedup_window_min >= 0, attempts >= 1, backoff_s >= 0, timeout_s > 0")
        if self.forecast_lookback < 1 or self.forecast_horizon < 1:
            raise ValueError("forecast_lookback and forecast_horizon must be at least 1")
        if self.poll_s <= 0 or self.retry_s <= 0:
            raise ValueError("poll_s and retry_s must be positive")


@dataclass(frozen=True)
class ProductionConfig:
    cycle_start: date | None = None
    train_fraction: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


@dataclass
class AppConfig:
    seed: int = 0
    clock: str = "real"  # "real" or an ISO timestamp for replay
    paths: dict[str, str] = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    alerting: AlertingConfig = field(default_factory=AlertingConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    schedule: PeriodSchedule = field(default_factory=PeriodSchedule)
    production: ProductionConfig = field(default_factory=ProductionConfig)
    recommend: WeatherRules = field(default_factory=WeatherRules)
    raw: dict = field(default_factory=dict, repr=False)

    def now(self) -> float:
        return time.time() if self.clock == "real" else parse_iso(self.clock)

    def semantic(self) -> dict:
        return {k: v for k, v in _normalized(self).items() if k not in NON_SEMANTIC}

    def hash(self) -> str:
        return sha256_text(json.dumps(self.semantic(), sort_keys=True, separators=(",", ":")))

    def module_seed(self, module: str) -> int:
        return derive_seed(self.seed, module)

    @classmethod
    def from_dict(cls, d: dict | None) -> AppConfig:
        d = dict(d or {})
        unknown = set(d) - {"seed", "clock", "paths", "optimizer", "alerting", "tracker", "calibration",
                            "schedule", "production", "recommend", "log_level"}
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            cfg = cls(raw=d)
            if "seed" in d:
                cfg.seed = int(d["seed"])
            if "clock" in d:
                cfg.clock = str(d["clock"])
                if cfg.clock != "real":
                    parse_iso(cfg.clock)
            cfg.paths = {str(k): str(v) for k, v in (d.get("paths") or {}).items()}
            opt = dict(d.get("optimizer") or {})
            bad = set(opt) - {"max_evaluations", "cmaes", "map_elites", "periodic_genes"}
            if bad:
                raise ConfigError(f"unknown optimizer keys: {', '.join(sorted(bad))}")
            # the genotype length is only known once a layout is loaded
            OptimizerConfig.from_dict(opt, dim=max(opt.get("periodic_genes") or [0]) + 1)
            cfg.optimizer = opt
            al = dict(d.get("alerting") or {})
            th = ThresholdConfig(**al.pop("thresholds", {}))
            cfg.alerting = AlertingConfig(thresholds=th, **al)
            cfg.tracker = TrackerConfig(**(d.get("tracker") or {}))
            cfg.calibration = CalibrationConfig.from_dict(d.get("calibration") or {})
            cfg.schedule = PeriodSchedule.from_dict(d.get("schedule") or {})
            prod = dict(d.get("production") or {})
            if prod.get("cycle_start") is not None:
                prod["cycle_start"] = date.fromisoformat(str(prod["cycle_start"]))
            cfg.production = ProductionConfig(**prod)
            cfg.recommend = WeatherRules(**(d.get("recommend") or {}))
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid config: {e}") from None
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> AppConfig:
        if path is None:
            return cls.from_dict({})
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: not valid YAML/JSON: {e}") from None
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data)


def _normalized(cfg: AppConfig) -> dict:
    def plain(v: Any):
        if isinstance(v, date):
            return v.isoformat()
        if isinstance(v, (list, tuple)):
            return [plain(x) for x in v]
        if isinstance(v, dict):
            return {str(k): plain(x) for k, x in v.items()}
        return v
    d = asdict(cfg)
    d.pop("raw")
    return plain(d)


def derive_seed(seed: int, module: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}:{module}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    inputs: dict[str, dict] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    version: str = __version__
    status: str = "ok"

    def add_input(self, role: str, path: str | Path) -> None:
        p = Path(path)
        self.inputs[role] = {"name": p.name, "sha256": sha256_file(p)}

    def add_output(self, path: str | Path, root: str | Path) -> None:
        p = Path(path)
        try:
            name = p.resolve().relative_to(Path(root).resolve()).as_posix()
        except ValueError:
            name = p.name
        self.outputs[name] = sha256_file(p)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"

    def write(self, out_dir: str | Path) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path
