from __future__ import annotations

import hashlib
import json
import logging

import pytest

from farmintel.config import AppConfig, RunManifest, derive_seed, sha256_file
from farmintel.ingest import SCHEMAS, IngestError, ingest, iter_records, write_csv
from farmintel.optimize.config import ConfigError
from farmintel.synth import EPOCH

HEADER = "timestamp_iso8601,sensor_id,temperature_c,humidity_pct\n"


def sensor_rows(n):
    return "".join(f"2024-01-01T00:{i:02d}:00Z,s1,25.0,50.0\n" for i in range(n))


def test_out_of_range_humidity_names_line_and_column(tmp_path):
    p = tmp_path / "s.csv"
    rows = sensor_rows(5) + "2024-01-01T00:10:00Z,s1,25.0,140\n"
    p.write_text(HEADER + rows)
    with pytest.raises(IngestError) as exc:
        ingest(p, "sensor")
    assert exc.value.line == 7 and exc.value.column == "humidity_pct"
    assert f"{p}:7, column humidity_pct" in str(exc.value)


def test_rows_before_a_bad_row_are_yielded(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text(HEADER + sensor_rows(3) + "garbage,s1,1,1\n")
    it = iter_records(p, "sensor")
    got = [next(it) for _ in range(3)]
    assert got[0].timestamp == EPOCH and got[0].sensor_id == "s1"
    with pytest.raises(IngestError, match=":5, column timestamp_iso8601"):
        next(it)


def test_empty_file_warns_and_yields_nothing(tmp_path, caplog):
    p = tmp_path / "e.csv"
    p.write_text("")
    with caplog.at_level(logging.WARNING):
        assert ingest(p, "sensor") == []
    assert "empty" in caplog.text


def test_missing_header_column_is_line_one(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("timestamp_iso8601,sensor_id,temperature_c\n")
    with pytest.raises(IngestError) as exc:
        ingest(p, "sensor")
    assert exc.value.line == 1 and exc.value.column == "humidity_pct"


@pytest.mark.parametrize("schema,row,column", [
    ("indicator", "2024-01-01T00:00:00Z,radar,1.0", "channel"),
    ("indicator", "2024-01-01T00:00:00Z,audio,-1", "value"),
    ("production", "2024-01-01,12,x,100,20", "deaths"),
    ("feed", "2024-13,10,10", "month"),
    ("feeder", "2024-01-01T00:00:00Z,maybe", "open"),
    ("sensor", "2024-01-01T00:00:00Z,s1,nan,50", "temperature_c"),
])
def test_each_schema_rejects_bad_values(tmp_path, schema, row, column):
    p = tmp_path / "x.csv"
    p.write_text(",".join(c for c, _ in SCHEMAS[schema].columns) + "\n" + row + "\n")
    with pytest.raises(IngestError) as exc:
        ingest(p, schema)
    assert exc.value.line == 2 and exc.value.column == column


def test_write_then_read_round_trip(tmp_path):
    p = tmp_path / "f.csv"
    write_csv(p, "feed", [("2024-01", 100.0, 50.0), ("2024-02", 120.0, 60.0)])
    got = ingest(p, "feed")
    assert [(r.month, r.kg, r.cost) for r in got] == [("2024-01", 100.0, 50.0), ("2024-02", 120.0, 60.0)]


# --- config ------------------------------------------------------------------------

def test_hash_ignores_paths_and_log_level():
    a = AppConfig.from_dict({"seed": 1})
    b = AppConfig.from_dict({"seed": 1, "paths": {"sensor": "/elsewhere.csv"}, "log_level": "DEBUG"})
    assert a.hash() == b.hash()


@pytest.mark.parametrize("change", [
    {"seed": 2},
    {"alerting": {"thresholds": {"temp_high": 34.0}}},
    {"alerting": {"dedup_window_min": 10}},
    {"optimizer": {"max_evaluations": 1000}},
    {"tracker": {"max_dist": 40}},
    {"calibration": {"roi_half_width": 25}},
    {"recommend": {"wind_kmh": 30}},
])
def test_hash_changes_with_semantic_parameters(change):
    base = {"seed": 1}
    assert AppConfig.from_dict({**base, **change}).hash() != AppConfig.from_dict(base).hash()


def test_explicit_defaults_hash_like_omitted_ones():
    assert AppConfig.from_dict({"alerting": {"attempts": 3}}).hash() == AppConfig.from_dict({}).hash()


def test_derived_seeds_are_stable_and_distinct():
    expected = int.from_bytes(hashlib.sha256(b"7:optimize").digest()[:4], "big")
    assert derive_seed(7, "optimize") == expected
    assert derive_seed(7, "optimize") != derive_seed(7, "eggcount")
    assert derive_seed(7, "optimize") != derive_seed(8, "optimize")
    assert AppConfig.from_dict({"seed": 7}).module_seed("optimize") == expected


@pytest.mark.parametrize("bad", [
    {"sead": 1},
    {"alerting": {"attempts": 0}},
    {"alerting": {"thresholds": {"temp_high": 10}}},
    {"tracker": {"max_dist": -1}},
    {"optimizer": {"cmaes": {"sigma0": 5}}},
    {"optimizer": {"restarts": 3}},
    {"clock": "yesterday"},
    {"production": {"cycle_start": "not-a-date"}},
])
def test_invalid_config_is_a_config_error(bad):
    with pytest.raises(ConfigError):
        AppConfig.from_dict(bad)


def test_load_yaml_and_fixed_clock(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 3\nclock: '2024-01-01T00:00:00Z'\nalerting:\n  webhook_url: http://x\n")
    cfg = AppConfig.load(p)
    assert cfg.seed == 3 and cfg.now() == EPOCH and cfg.alerting.webhook_url == "http://x"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        AppConfig.load(p)


def test_manifest_records_digests_without_timestamps(tmp_path):
    (tmp_path / "in.csv").write_text("a\n")
    out = tmp_path / "out"
    out.mkdir()
    (out / "r.json").write_text("{}")
    m = RunManifest("optimize", "abc", 5)
    m.add_input("layout", tmp_path / "in.csv")
    m.add_output(out / "r.json", out)
    d = json.loads(m.write(out).read_text())
    assert d["inputs"]["layout"] == {"name": "in.csv", "sha256": sha256_file(tmp_path / "in.csv")}
    assert list(d["outputs"]) == ["r.json"]
    assert m.to_json() == RunManifest(**{k: v for k, v in d.items()}).to_json()
