"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or config, 2 runtime fault.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date, timedelta
from pathlib import Path

import yaml

from . import __version__
from .alerting.band import build_dynamic_band, load_bands, save_bands
from .alerting.sink import AlertSink
from .alerting.thresholds import iso
from .config import AppConfig, RunManifest
from .daemon import Daemon, EnvPipeline, IndicatorPipeline, StreamTail, feeder_alerts
from .eggcount.calibrate import CalibrationResult, calibrate
from .eggcount.session import CountingSession, read_detection_log
from .envforecast import (InsufficientHistory, aggregate_hourly, fit_forecast_model, forecast_iterative,
                          format_grid, grid_search)
from .geometry import GeometryError, decode_genotype, paper_farm
from .ingest import IngestError, ingest
from .optimize.config import ConfigError
from .optimize.placement import (layout_from_dict, layout_to_dict, placement_config, poses_record,
                                 render_svg, run_placement)
from .recommend import RecommendationContext, WeatherParseError, fetch_weather, recommend

log = logging.getLogger("farmintel")

EXIT_OK, EXIT_INVALID, EXIT_FAULT = 0, 1, 2
TOP_K = 5


class InvalidInput(Exception):
    pass


VALIDATION_ERRORS = (InvalidInput, IngestError, ConfigError, GeometryError, WeatherParseError,
                     json.JSONDecodeError, FileNotFoundError, IsADirectoryError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


class Run:
    """Per-invocation context: config, output directory and the manifest being built."""

    def __init__(self, args: argparse.Namespace, command: str):
        self.args = args
        self.cfg = AppConfig.load(getattr(args, "config", None))
        if getattr(args, "seed", None) is not None:
            self.cfg.seed = args.seed
        out = getattr(args, "out", None)
        if out is None and getattr(args, "out_file", None):
            out = Path(args.out_file).parent
        self.out = Path(out or "farmintel-out")
        self.manifest = RunManifest(command, self.cfg.hash(), self.cfg.seed)

    def input(self, role: str, path: str | None, *, required: bool = True) -> Path | None:
        path = path or self.cfg.paths.get(role)
        if path is None:
            if required:
                raise InvalidInput(f"missing input: --{role.replace('_', '-')}")
            return None
        p = Path(path)
        if not p.is_file():
            raise InvalidInput(f"input file {p} does not exist")
        self.manifest.add_input(role, p)
        return p

    def write(self, name: str | Path, text: str, *, exact: bool = False) -> Path:
        """Write ``name`` inside the output directory, or at ``name`` itself when ``exact``."""
        p = Path(name) if exact else self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        self.manifest.add_output(p, self.out)
        return p

    def finish(self) -> None:
        self.manifest.write(self.out)


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


# --- optimize ------------------------------------------------------------------------

def cmd_optimize(run: Run) -> int:
    a = run.args
    p = run.input("layout", a.layout, required=False)
    if p is None:
        layout, spec = paper_farm()
    else:
        layout, spec = layout_from_dict(yaml.safe_load(p.read_text(encoding="utf-8")) or {})
    default_evals = 200_000 if a.algo == "cmaes" else 300_000
    evals = a.evals or run.cfg.optimizer.get("max_evaluations", default_evals)
    overrides = {k: v for k, v in run.cfg.optimizer.items() if k != "max_evaluations"}
    config = placement_config(spec, a.algo, evals=evals, seed=run.cfg.module_seed("optimize"),
                              overrides=overrides)
    report, arch = run_placement(layout, spec, a.algo, config)
    poses = decode_genotype(report.genotype, layout, spec)
    body = report.to_dict()
    body["poses"] = poses_record(poses)
    body["layout"] = layout_to_dict(layout, spec)
    run.write("report.json", _dump(body))
    run.write("best.svg", render_svg(layout, spec, poses, title=f"{a.algo} best {report.fitness:.4f}"))
    if arch is not None:
        run.write("archive.csv", arch.to_csv())
        for k, (key, elite) in enumerate(arch.top(TOP_K), 1):
            bits = "".join(str(b) for b in key)
            run.write(f"top_{k:02d}_{bits}.svg",
                      render_svg(layout, spec, decode_genotype(elite.genotype, layout, spec),
                                 title=f"cell {bits} {elite.fitness:.4f}"))
    print(f"{a.algo}: fitness {report.fitness:.6f} after {report.evaluations} evaluations"
          + (f", {len(arch)} archive cells" if arch is not None else ""))
    run.finish()
    return EXIT_OK


# --- environment forecasting ----------------------------------------------------------

def cmd_forecast_env(run: Run) -> int:
    a = run.args
    readings = ingest(run.input("data", a.data), "sensor")
    if not readings:
        raise InvalidInput(f"{a.data} holds no readings")
    series = aggregate_hourly(readings)
    target = {"temp": "temperature", "hum": "humidity"}[a.target]
    use_profile = a.profile == "on"
    model = fit_forecast_model(series, target, a.lookback, use_profile)
    t0 = series.hour_at(len(series))
    values = forecast_iterative(model, series, t0, a.horizon)
    fc = {"target": target, "lookback": a.lookback, "use_profile": use_profile,
          "forecast": [{"ts": iso(t0 + 3600 * k), "value": round(v, 6)} for k, v in enumerate(values)]}
    run.write("model.json", model.to_json() + "\n")
    run.write("forecast.json", _dump(fc))
    if a.grid:
        table = format_grid(grid_search(series))
        run.write("grid.tsv", table + "\n")
        print(table)
    print(_dump(fc), end="")
    run.finish()
    return EXIT_OK


# --- alerting -------------------------------------------------------------------------

def cmd_build_band(run: Run) -> int:
    a = run.args
    samples = ingest(run.input("indicators", a.indicators), "indicator")
    channels = sorted({s.channel for s in samples})
    if not channels:
        raise InvalidInput(f"{a.indicators} holds no indicator samples")
    bands = {ch: build_dynamic_band(samples, ch) for ch in channels}
    path = run.write(a.out_file, save_bands(bands) + "\n", exact=True)
    print(f"wrote bands for {', '.join(channels)} to {path}")
    run.finish()
    return EXIT_OK


def _sink(run: Run, webhook: str | None) -> AlertSink:
    al = run.cfg.alerting
    log_path = run.out / "alerts.jsonl"
    log_path.parent.mkdir(parents=True, exist_ok=True)
    log_path.write_text("", encoding="utf-8")
    dead = run.out / "alerts.deadletter.jsonl"
    if dead.exists():
        dead.unlink()
    return AlertSink(log_path, webhook_url=webhook or al.webhook_url, dead_letter_path=dead,
                     dedup_window_s=al.dedup_window_min * 60, attempts=al.attempts,
                     backoff_s=al.backoff_s, timeout_s=al.timeout_s)


def _env_pipeline(cfg: AppConfig) -> EnvPipeline:
    al = cfg.alerting
    return EnvPipeline(al.thresholds, lookback=al.forecast_lookback, horizon=al.forecast_horizon,
                       use_profile=al.forecast_profile)


def _record_sink_outputs(run: Run, sink: AlertSink) -> None:
    for p in (sink.log_path, sink.dead_letter_path):
        if p.exists():
            run.manifest.add_output(p, run.out)


def cmd_alerts_run(run: Run) -> int:
    a = run.args
    env_path = run.input("env", a.env, required=False)
    ind_path = run.input("indicators", a.indicators, required=False)
    feeder_path = run.input("feeder", a.feeder, required=False)
    band_path = run.input("band", a.band, required=ind_path is not None)
    if env_path is None and ind_path is None and feeder_path is None:
        raise InvalidInput("give at least one of --env, --indicators, --feeder")
    bands = load_bands(band_path.read_text(encoding="utf-8")) if band_path else {}

    alerts = []
    if env_path is not None:
        env = _env_pipeline(run.cfg)
        for r in sorted(ingest(env_path, "sensor"), key=lambda r: (r.timestamp, r.sensor_id)):
            alerts += env.push(r)
        alerts += env.flush()
    if ind_path is not None:
        ind = IndicatorPipeline(bands)
        for s in ingest(ind_path, "indicator"):
            alerts += ind.push(s)
    if feeder_path is not None:
        alerts += feeder_alerts(ingest(feeder_path, "feeder"), run.cfg.schedule.feeding)

    sink = _sink(run, a.webhook)
    counts: dict[str, int] = {}
    for al in sorted(alerts, key=lambda x: (x.timestamp, x.kind, x.channel or "", x.source)):
        d = sink.emit(al)
        counts[d.status] = counts.get(d.status, 0) + 1
    _record_sink_outputs(run, sink)
    print(f"{len(alerts)} alerts: " + ", ".join(f"{v} {k}" for k, v in sorted(counts.items())))
    run.finish()
    return EXIT_OK


def cmd_daemon(run: Run) -> int:
    a = run.args
    band_path = run.input("band", a.band)
    bands = load_bands(band_path.read_text(encoding="utf-8"))
    streams = []
    for role, path, schema in (("env", a.env, "sensor"), ("indicators", a.indicators, "indicator")):
        path = path or run.cfg.paths.get(role)
        if path:
            streams.append(StreamTail(role, Path(path), schema))
    if not streams:
        raise InvalidInput("daemon needs --env and/or --indicators")
    al = run.cfg.alerting
    sink = _sink(run, a.webhook)
    daemon = Daemon(sink, _env_pipeline(run.cfg), IndicatorPipeline(bands), streams,
                    poll_s=al.poll_s, retry_s=al.retry_s)
    daemon.install_signal_handlers()
    daemon.run(max_idle_polls=a.max_idle_polls)
    for st in streams:
        if st.path.is_file():
            run.manifest.add_input(st.name, st.path)
    _record_sink_outputs(run, sink)
    run.manifest.status = "stopped" if daemon.stopping else "idle"
    run.finish()
    print(f"daemon emitted {daemon.emitted} alerts; rejected rows: "
          + ", ".join(f"{st.name}={st.rejected}" for st in streams))
    return EXIT_OK


# --- eggs -----------------------------------------------------------------------------

def _frames(path: Path):
    try:
        return list(read_detection_log(path))
    except ValueError as e:
        raise InvalidInput(str(e)) from None


def cmd_eggs_calibrate(run: Run) -> int:
    a = run.args
    frames = _frames(run.input("log", a.log))
    result = calibrate([d for f in frames for d in f.detections], run.cfg.calibration)
    path = run.write(a.out_file, result.to_json() + "\n", exact=True)
    print(f"calibrated {len(result.lines)} spring lines; wrote {path}")
    run.finish()
    return EXIT_OK


def cmd_eggs_count(run: Run) -> int:
    a = run.args
    frames = _frames(run.input("log", a.log))
    calib_path = run.input("calib", a.calib)
    try:
        calib = CalibrationResult.from_json(calib_path.read_text(encoding="utf-8"))
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidInput(f"{calib_path}: bad calibration file: {e}") from None
    tr = run.cfg.tracker
    tallies = CountingSession(calib, max_dist=tr.max_dist, max_missed=tr.max_missed).run(frames)
    run.write("counts.json", _dump(tallies))
    for k, v in tallies.items():
        print(f"{k}\t{v}")
    run.finish()
    return EXIT_OK


# --- production -----------------------------------------------------------------------

def cmd_forecast_prod(run: Run) -> int:
    from .production import (FeedLedger, ProductionData, ablation_grid, dumps, env_days, features_from,
                             fit_production_model, forecast_report, format_ablation, indicator_days,
                             make_samples)
    a = run.args
    records = ingest(run.input("production", a.production), "production")
    if not records:
        raise InvalidInput(f"{a.production} holds no production records")
    records.sort(key=lambda r: r.day)
    feed_path = run.input("feed", a.feed, required=False)
    ind_path = run.input("indicators", a.indicators, required=False)
    env_path = run.input("env", a.env, required=False)
    env = env_days(aggregate_hourly(ingest(env_path, "sensor"))) if env_path else None
    ind = indicator_days(ingest(ind_path, "indicator"), run.cfg.schedule) if ind_path else None
    try:
        data = ProductionData.build(records, env, ind)
    except ValueError as e:
        raise InvalidInput(str(e)) from None

    sources = ["production"] + (["sensor"] if env else []) + (["audio/video"] if ind else [])
    names = features_from(sources)
    samples = make_samples(data, names)
    if len(samples) < len(names) + 2:
        raise InsufficientHistory(f"only {len(samples)} complete training days for {len(names)} features")
    model = fit_production_model(samples, names)
    D = records[-1].day + timedelta(days=1)
    ledger = None
    if feed_path is not None:
        start = run.cfg.production.cycle_start or records[0].day
        ledger = FeedLedger(ingest(feed_path, "feed"), start)
    report = forecast_report(model, data, D, ledger)
    report["sources"] = sources
    report["horizon_days"] = 10
    run.write("model.json", dumps(model.to_dict()) + "\n")
    run.write("forecast.json", dumps(report) + "\n")
    print(dumps(report))
    if a.evaluate:
        rows = ablation_grid(data, label=Path(a.production).stem, mask=names,
                             train_fraction=run.cfg.production.train_fraction)
        table = format_ablation(rows)
        run.write("ablation.tsv", table + "\n")
        print(table)
    run.finish()
    return EXIT_OK


# --- recommendations ------------------------------------------------------------------

def cmd_recommend(run: Run) -> int:
    a = run.args
    ctx_path = run.input("context", a.context)
    ctx = RecommendationContext.from_dict(json.loads(ctx_path.read_text(encoding="utf-8")))
    ctx.rules = run.cfg.recommend
    if ctx.now is None:
        ctx.now = run.cfg.now()
    if a.weather_fixture:
        ctx.weather = fetch_weather(fixture=run.input("weather_fixture", a.weather_fixture))
    elif a.weather_url:
        ctx.weather = fetch_weather(url=a.weather_url)
    text = recommend(ctx).to_json() + "\n"
    run.write("recommendations.json", text)
    print(text, end="")
    run.finish()
    return EXIT_OK


# --- demo data ------------------------------------------------------------------------

def cmd_demo_data(run: Run) -> int:
    """Write a self-consistent set of synthetic inputs for every subcommand."""
    from . import synth
    from .eggcount.session import write_detection_log
    from .ingest import write_csv
    seed = run.cfg.module_seed("demo-data")
    out = run.out
    out.mkdir(parents=True, exist_ok=True)

    def track(name):
        run.manifest.add_output(out / name, out)

    write_csv(out / "sensors.csv", "sensor", [(iso(r.timestamp), r.sensor_id, r.temperature, r.humidity)
                                              for r in synth.env_readings(seed, days=21)])
    write_csv(out / "indicators_history.csv", "indicator",
              [(iso(s.timestamp), s.channel, round(s.value, 5)) for s in synth.indicator_history(seed, days=14)])
    today = synth.indicator_history(seed + 1, days=1, start=synth.EPOCH + 14 * 86400, noise=0.35)
    write_csv(out / "indicators_today.csv", "indicator",
              [(iso(s.timestamp), s.channel, round(s.value, 5)) for s in today])
    labels = synth.feeder_labels(seed, pattern=(False,) * 3 + (True,) * 2 + (False,) * 3)
    t0 = synth.EPOCH + 14 * 86400 + 6 * 3600 - 3 * 27 * 2
    write_csv(out / "feeder.csv", "feeder", [(iso(t0 + 2 * i), int(v)) for i, v in enumerate(labels)])
    write_detection_log(synth.egg_calibration_log(seed, spurious=0.1), out / "calibration.jsonl")
    frames, truth = synth.egg_counting_session(seed)
    write_detection_log(frames, out / "session.jsonl")
    (out / "session_truth.json").write_text(_dump(truth.tallies), encoding="utf-8")
    fx = synth.production_fixture(seed, days=365)
    write_csv(out / "production.csv", "production",
              [(r.day.isoformat(), r.eggs, r.deaths, r.flock_size, r.age_weeks) for r in fx.records])
    write_csv(out / "production_sensors.csv", "sensor",
              [(iso(int(h)), "s0", round(float(t), 3), round(float(u), 3))
               for h, t, u in zip(fx.env.hours, fx.env.temperature, fx.env.humidity)])
    write_csv(out / "production_indicators.csv", "indicator",
              [(iso(s.timestamp), s.channel, round(s.value, 5)) for s in fx.indicators[::2]])
    first = fx.records[0].day
    months = sorted({(first + timedelta(days=i)).strftime("%Y-%m") for i in range(len(fx.records))})
    write_csv(out / "feed.csv", "feed", [(m, 3600, 1980) for m in months])
    (out / "layout.json").write_text(_dump(layout_to_dict(*paper_farm())), encoding="utf-8")
    (out / "context.json").write_text(_dump({
        "now": "2024-07-01T06:00:00Z",
        "farm_forecast": [{"ts": "2024-07-01T07:00:00Z", "temperature": 36.2, "humidity": 64.0}],
        "productivity": {"per_bird": 0.66, "ts": "2024-07-01T00:00:00Z"},
        "alerts": [{"ts": "2024-07-01T05:40:00Z", "kind": "indicator-high", "channel": "audio",
                    "value": 3.1, "threshold": 2.4, "source": "observed"}],
    }), encoding="utf-8")
    (out / "weather.json").write_text(_dump({"days": [
        {"day": (date(2024, 7, 1) + timedelta(days=i)).isoformat(), "temp_min": 24 + i, "temp_max": 36 + i,
         "wind_max_kmh": 12, "cloud_max_pct": 20, "rain_max_pct": 10} for i in range(3)]}), encoding="utf-8")
    for p in sorted(out.iterdir()):
        if p.name != "manifest.json":
            track(p.name)
    print(f"wrote demo inputs to {out}")
    run.finish()
    return EXIT_OK


# --- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file")
    common.add_argument("--seed", type=int, help="master seed; overrides the config")
    common.add_argument("--log-level", default=None, choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    out_dir = argparse.ArgumentParser(add_help=False)
    out_dir.add_argument("--out", help="output directory (default farmintel-out)")

    p = _Parser(prog="farmintel", parents=[common, out_dir], description="Poultry farm analytics toolkit")
    p.add_argument("--version", action="version", version=f"farmintel {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    # subparser copies of the global flags must not clobber values given before the subcommand
    for group in (common, out_dir):
        for act in group._actions:
            act.default = argparse.SUPPRESS

    o = sub.add_parser("optimize", parents=[common, out_dir], help="optimize camera placement")
    o.add_argument("--layout", help="layout file (default: the built-in reference farm)")
    o.add_argument("--algo", choices=("cmaes", "map-elites"), default="cmaes")
    o.add_argument("--evals", type=int, help="evaluation budget")
    o.set_defaults(func=cmd_optimize)

    f = sub.add_parser("forecast-env", parents=[common, out_dir], help="hourly temperature/humidity forecast")
    f.add_argument("--data")
    f.add_argument("--target", choices=("temp", "hum"), default="temp")
    f.add_argument("--lookback", type=int, default=3)
    f.add_argument("--profile", choices=("on", "off"), default="on")
    f.add_argument("--horizon", type=int, default=3)
    f.add_argument("--grid", action="store_true", help="also run the lookback x profile x horizon grid")
    f.set_defaults(func=cmd_forecast_env)

    al = sub.add_parser("alerts", help="alerting").add_subparsers(dest="action", required=True,
                                                                   parser_class=_Parser)
    b = al.add_parser("build-band", parents=[common], help="build per-channel dynamic bands")
    b.add_argument("--indicators")
    b.add_argument("--out", dest="out_file", default="bands.json", help="band file to write")
    b.add_argument("--out-dir", dest="out", default=argparse.SUPPRESS,
                   help="directory for the manifest (default: the file's directory)")
    b.set_defaults(func=cmd_build_band)
    r = al.add_parser("run", parents=[common, out_dir], help="check files once and write the alert log")
    r.add_argument("--env")
    r.add_argument("--indicators")
    r.add_argument("--feeder", help="feeder clip labels CSV (timestamp_iso8601,open)")
    r.add_argument("--band")
    r.add_argument("--webhook")
    r.set_defaults(func=cmd_alerts_run)

    e = sub.add_parser("eggs", help="egg counting").add_subparsers(dest="action", required=True,
                                                                    parser_class=_Parser)
    c = e.add_parser("calibrate", parents=[common], help="recover spring lines and counting ROIs")
    c.add_argument("--log")
    c.add_argument("--out", dest="out_file", default="calibration.json", help="calibration file to write")
    c.add_argument("--out-dir", dest="out", default=argparse.SUPPRESS,
                   help="directory for the manifest (default: the file's directory)")
    c.set_defaults(func=cmd_eggs_calibrate)
    n = e.add_parser("count", parents=[common, out_dir], help="count eggs per weight class")
    n.add_argument("--log")
    n.add_argument("--calib")
    n.set_defaults(func=cmd_eggs_count)

    fp = sub.add_parser("forecast-prod", parents=[common, out_dir], help="10-day production and cost forecast")
    fp.add_argument("--production")
    fp.add_argument("--feed")
    fp.add_argument("--indicators")
    fp.add_argument("--env", help="sensor CSV for the environmental features")
    fp.add_argument("--evaluate", action="store_true", help="print the data-source ablation grid")
    fp.set_defaults(func=cmd_forecast_prod)

    rc = sub.add_parser("recommend", parents=[common, out_dir], help="management recommendations")
    rc.add_argument("--context")
    wx = rc.add_mutually_exclusive_group()
    wx.add_argument("--weather-fixture")
    wx.add_argument("--weather-url")
    rc.set_defaults(func=cmd_recommend)

    d = sub.add_parser("daemon", parents=[common, out_dir], help="tail input files and emit alerts")
    d.add_argument("--env")
    d.add_argument("--indicators")
    d.add_argument("--band")
    d.add_argument("--webhook")
    d.add_argument("--max-idle-polls", type=int, help="exit after this many polls without new data")
    d.set_defaults(func=cmd_daemon)

    dd = sub.add_parser("demo-data", parents=[common, out_dir], help="write synthetic inputs for every command")
    dd.set_defaults(func=cmd_demo_data)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = getattr(args, "log_level", None) or "WARNING"
    logging.basicConfig(level=getattr(logging, level), format="%(levelname)s %(name)s: %(message)s")
    command = args.command + (f" {args.action}" if getattr(args, "action", None) else "")
    try:
        run = Run(args, command)
        return args.func(run)
    except VALIDATION_ERRORS as e:
        print(f"farmintel: invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001 - the exit code contract covers every other failure
        log.debug("runtime fault", exc_info=True)
        print(f"farmintel: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
