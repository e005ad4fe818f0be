from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from farmintel.alerting import (Alert, AlertSink, DynamicBand, EnvValue, FeederInterval, IndicatorSample,
                                ThresholdConfig, build_dynamic_band, check_dynamic, check_feeder, check_forecast,
                                check_static, load_bands, read_log, save_bands, smooth_feeder,
                                weighted_percentile, window_states)
from farmintel.alerting.band import circular_delta, window_weight
from farmintel.synth import EPOCH, FEEDER_PATTERN, feeder_labels

# --- static thresholds ---------------------------------------------------------------


@pytest.mark.parametrize("t,kinds", [(35.0, []), (35.01, ["heat"]), (18.0, []), (17.99, ["cold"]), (25.0, [])])
def test_temperature_bounds_are_inside_the_comfort_band(t, kinds):
    assert [a.kind for a in check_static(EnvValue(0, t, 50.0))] == kinds


@pytest.mark.parametrize("h,kinds", [(40.0, []), (39.9, ["humidity-low"]), (60.0, []), (60.1, ["humidity-high"])])
def test_humidity_bounds_are_inside_the_comfort_band(h, kinds):
    assert [a.kind for a in check_static(EnvValue(0, 25.0, h))] == kinds


def test_missing_values_are_skipped():
    assert check_static(EnvValue(0, None, None)) == []


def test_threshold_config_must_be_ordered():
    with pytest.raises(ValueError):
        ThresholdConfig(temp_high=10, temp_low=20)


def test_forecast_reports_earliest_violation_per_kind():
    vals = [EnvValue(3, 36.0, 50.0), EnvValue(1, 30.0, 65.0), EnvValue(2, 37.0, 70.0)]
    out = check_forecast(vals)
    assert [(a.kind, a.timestamp, a.value) for a in out] == [("humidity-high", 1, 65.0), ("heat", 2, 37.0)]
    assert all(a.source == "forecast" for a in out)


def test_alert_record_round_trip_and_key_order():
    a = Alert("indicator-low", EPOCH + 90, 0.25, 0.5, "audio")
    rec = a.to_record()
    assert list(rec) == ["ts", "kind", "channel", "value", "threshold", "source"]
    assert rec["ts"] == "2024-01-01T00:01:30Z"
    assert Alert.from_record(rec) == a
    with pytest.raises(ValueError):
        Alert("smoke", 0, 1, 1)


# --- dynamic band --------------------------------------------------------------------

def brute_force_band(samples, minute, q):
    pool = []
    for s in samples:
        d = (s.minute - minute) % 1440
        d = min(d, 1440 - d)
        w = max(0.0, 1 - d / 60)
        if w > 0:
            pool.append((s.value, w))
    pool.sort()
    total = sum(w for _, w in pool)
    acc = 0.0
    for v, w in pool:
        acc += w
        if acc >= q * total - 1e-9 * total:
            return v
    return pool[-1][0]


def two_level_days(days=3):
    out = []
    for d in range(days):
        for m in range(0, 1440, 5):
            out.append(IndicatorSample(EPOCH + 86400 * d + 60 * m, "audio", 1.0 if m < 720 else 3.0))
    return out


def test_two_level_band_matches_brute_force_oracle():
    hist = two_level_days()
    band = build_dynamic_band(hist, "audio")
    for m in [0, 100, 659, 660, 690, 700, 719, 720, 740, 779, 780, 1000, 1400, 1439]:
        assert band.upper[m] == brute_force_band(hist, m, 0.95)
        assert band.lower[m] == brute_force_band(hist, m, 0.25)
    assert band.upper[300] == band.lower[300] == 1.0
    assert band.upper[1000] == band.lower[1000] == 3.0


def test_weighted_percentile_by_hand():
    v = np.array([1.0, 2.0, 3.0, 4.0])
    w = np.array([1.0, 1.0, 1.0, 1.0])
    assert weighted_percentile(v, w, 0.25) == 1.0
    assert weighted_percentile(v, w, 0.5) == 2.0
    assert weighted_percentile(v, w, 0.95) == 4.0
    assert weighted_percentile(v, np.array([0.0, 0.0, 0.0, 5.0]), 0.25) == 4.0


def test_kernel_and_circular_delta():
    assert window_weight(np.array([0, 30, 60, -30])) == pytest.approx([1.0, 0.5, 0.0, 0.5])
    assert list(circular_delta([0, 1439, 10], [1439, 0, 1430])) == [1, -1, 20]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_band_is_ordered_everywhere(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(50, 400))
    minutes = rng.integers(0, 1440 * 3, n)
    vals = rng.lognormal(0, 1, n)
    band = build_dynamic_band([IndicatorSample(EPOCH + 60 * m, "video", v) for m, v in zip(minutes, vals)], "video")
    assert np.all(band.lower <= band.center) and np.all(band.center <= band.upper)
    assert not np.any(np.isnan(band.center))


def test_band_does_not_depend_on_sample_order():
    hist = two_level_days(2)
    a = build_dynamic_band(hist, "audio")
    b = build_dynamic_band(list(reversed(hist)), "audio")
    assert np.array_equal(a.upper, b.upper) and np.array_equal(a.center, b.center)


def test_dynamic_check_is_strict():
    band = DynamicBand("audio", np.full(1440, 2.0), np.full(1440, 3.0), np.full(1440, 1.0))
    at = lambda v: check_dynamic(IndicatorSample(EPOCH, "audio", v), band)
    assert at(3.0) is None and at(1.0) is None
    assert at(3.01).kind == "indicator-high"
    assert at(0.99).kind == "indicator-low"
    assert at(0.99).channel == "audio"


def test_band_file_round_trip():
    band = build_dynamic_band(two_level_days(1), "audio")
    back = load_bands(save_bands({"audio": band}))["audio"]
    assert np.array_equal(back.upper, band.upper) and np.array_equal(back.lower, band.lower)
    with pytest.raises(ValueError):
        DynamicBand.from_dict({"channel": "audio", "center": [1], "upper": [1], "lower": [1]})


def test_negative_indicator_rejected():
    with pytest.raises(ValueError):
        IndicatorSample(0, "audio", -0.1)


# --- feeder --------------------------------------------------------------------------

def test_window_vote_is_strict_majority():
    assert window_states([True, False], window=2) == [False]
    assert window_states([True, True, False], window=3) == [True]
    # short trailing window votes over its own length
    assert window_states([False] * 3 + [True], window=3) == [False, True]


def test_noise_free_labels_are_recovered_exactly():
    labels = feeder_labels(0, flip=0.0)
    ivs = smooth_feeder(labels)
    # pattern: open, open, open, closed, open, open; each window is 27 clips of 2 s
    assert ivs == [FeederInterval(0.0, 3 * 54.0), FeederInterval(4 * 54.0, 6 * 54.0)]
    assert FEEDER_PATTERN == (True, True, True, False, True, True)


@settings(max_examples=60)
@given(st.lists(st.booleans(), max_size=300))
def test_intervals_are_disjoint_ordered_and_bounded(labels):
    ivs = smooth_feeder(labels, start=100.0)
    for a, b in zip(ivs, ivs[1:]):
        assert a.open_end < b.open_start
    assert all(iv.open_start < iv.open_end for iv in ivs)
    assert sum(iv.duration for iv in ivs) <= 2.0 * len(labels) + 1e-9
    assert all(iv.open_end <= 100.0 + 2.0 * len(labels) for iv in ivs)


def test_feeder_anomalies():
    ivs = [FeederInterval(100, 200), FeederInterval(1000, 1100)]
    alerts = check_feeder(ivs, [(50, 150), (400, 500)])
    assert [(a.timestamp, a.value, a.threshold) for a in alerts] == [(400, 0.0, 100), (1000, 100, 0.0)]
    assert all(a.kind == "feeder-anomaly" for a in alerts)


# --- sink ----------------------------------------------------------------------------

def test_dedup_is_per_kind_and_channel(tmp_path):
    sink = AlertSink(tmp_path / "a.jsonl")
    r = [sink.emit(Alert("indicator-high", EPOCH, 3, 2, "audio")),
         sink.emit(Alert("indicator-high", EPOCH + 60, 3, 2, "video")),
         sink.emit(Alert("indicator-high", EPOCH + 29 * 60, 3, 2, "audio")),
         sink.emit(Alert("indicator-high", EPOCH + 30 * 60, 3, 2, "audio"))]
    assert [d.status for d in r] == ["logged", "logged", "suppressed", "logged"]
    assert len(read_log(tmp_path / "a.jsonl")) == 3


def test_failed_webhook_retries_with_backoff_then_dead_letters(tmp_path):
    sleeps, calls = [], []

    def post(url, body, timeout):
        calls.append(body)
        raise OSError("connection refused")

    sink = AlertSink(tmp_path / "a.jsonl", webhook_url="http://127.0.0.1:9/x", post=post, sleep=sleeps.append)
    d = sink.emit(Alert("heat", EPOCH, 36, 35))
    assert d.status == "dead-lettered" and d.attempts == 3
    assert sleeps == [0.5, 1.0]
    assert json.loads(calls[0]) == Alert("heat", EPOCH, 36, 35).to_record()
    # the alert log is written whatever happens downstream
    assert len(read_log(tmp_path / "a.jsonl")) == 1
    dead = [json.loads(x) for x in (tmp_path / "a.deadletter.jsonl").read_text().splitlines()]
    assert dead[0]["kind"] == "heat" and dead[0]["attempts"] == 3 and "refused" in dead[0]["error"]


def test_webhook_recovers_on_retry(tmp_path):
    codes = iter([503, 200])
    sink = AlertSink(tmp_path / "a.jsonl", webhook_url="http://x", post=lambda u, b, t: next(codes),
                     sleep=lambda s: None)
    d = sink.emit(Alert("cold", EPOCH, 10, 18))
    assert d.status == "delivered" and d.attempts == 2 and d.errors == ["HTTP 503"]


def test_webhook_posts_json_over_http(tmp_path):
    got = {}

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            got["type"] = self.headers["Content-Type"]
            got["body"] = self.rfile.read(int(self.headers["Content-Length"]))
            self.send_response(204)
            self.end_headers()

        def log_message(self, *args):
            pass

    server = HTTPServer(("127.0.0.1", 0), Handler)
    t = threading.Thread(target=server.handle_request)
    t.start()
    sink = AlertSink(tmp_path / "a.jsonl", webhook_url=f"http://127.0.0.1:{server.server_port}/alerts")
    d = sink.emit(Alert("humidity-high", EPOCH, 70, 60))
    t.join(5)
    server.server_close()
    assert d.status == "delivered"
    assert got["type"] == "application/json"
    assert got["body"].decode() == (tmp_path / "a.jsonl").read_text().strip()


def test_concurrent_emitters_write_whole_lines(tmp_path):
    sink = AlertSink(tmp_path / "a.jsonl", dedup_window_s=0)

    def worker(ch, k):
        for i in range(200):
            sink.emit(Alert("indicator-high", EPOCH + 1000 * k + i, 1.0, 0.5, ch))

    threads = [threading.Thread(target=worker, args=(ch, k)) for k, ch in enumerate(["audio", "video"] * 2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(read_log(tmp_path / "a.jsonl")) == 800
