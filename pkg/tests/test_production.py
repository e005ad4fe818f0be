from __future__ import annotations

from datetime import date, timedelta

import numpy as np
import pytest

from farmintel.alerting.band import IndicatorSample
from farmintel.envforecast import HourlySeries
from farmintel.production import (FEATURE_NAMES, FEATURES, USED, DailyRecord, FeedLedger, FeedPurchase,
                                  InsufficientHistory, PeriodSchedule, ProductionData, ProductionModel,
                                  ablation_grid, build_features, chronological_split, cost_per_egg, env_days,
                                  evaluate_mae, features_from, fit_arrays, fit_production_model, format_ablation,
                                  indicator_days, make_samples, productivity_from_eggs, target_rate)
from farmintel.synth import EPOCH, production_fixture

D0 = date(2024, 1, 1)


def records(n, eggs=lambda i: 80 + i, deaths=lambda i: i % 3, flock=100):
    return [DailyRecord(D0 + timedelta(days=i), eggs(i), deaths(i), flock, 30.0 + i / 7) for i in range(n)]


def test_feature_table_has_forty_named_entries():
    assert len(FEATURES) == len(FEATURE_NAMES) == 40
    assert len(USED) == 15
    assert {src for _, src, _ in FEATURES.values()} == {"production", "sensor", "audio/video"}


def test_production_features_by_hand():
    data = ProductionData.build(records(20))
    fv = build_features(data, D0 + timedelta(days=10))
    # window D-7..D-1 is days 3..9
    assert fv["f14"] == np.mean([80 + i for i in range(3, 10)])
    assert fv["f15"] == np.mean([87, 88, 89])
    assert fv["f17"] == np.mean([7 % 3, 8 % 3, 9 % 3])
    assert fv["f7"] == pytest.approx(30.0 + 9 / 7 + 1 / 7)
    assert fv["f40"] == 100.0


def test_features_never_look_at_day_d_or_later():
    a = records(20)
    b = a[:10] + [DailyRecord(r.day, 0, 50, 1, r.age_weeks) for r in a[10:]]
    D = D0 + timedelta(days=10)
    fa = build_features(ProductionData.build(a), D)
    fb = build_features(ProductionData.build(b), D)
    assert np.array_equal(fa.values, fb.values, equal_nan=True)


def test_missing_history_names_each_feature():
    data = ProductionData.build(records(20))
    fv = build_features(data, D0 + timedelta(days=5))
    assert "f14" in fv.missing() and "f15" not in fv.missing()
    with pytest.raises(InsufficientHistory, match="f14") as exc:
        build_features(data, D0 + timedelta(days=5), required=("f14", "f1"))
    assert "f1" in str(exc.value) and "no sensor data" in str(exc.value)


def test_env_days_daily_statistics():
    temps = np.r_[np.arange(24.0), np.full(24, 5.0)]
    hums = np.r_[np.full(24, 50.0), np.arange(24.0)]
    temps[3] = np.nan
    out = env_days(HourlySeries(EPOCH, temps, hums))
    d = out[D0]
    assert (d.temp_min, d.temp_max) == (0.0, 23.0)
    assert d.temp_avg == pytest.approx((276 - 3) / 23)
    assert out[D0 + timedelta(days=1)].hum_avg == pytest.approx(11.5)


def test_period_schedule_and_indicator_bucketing():
    s = PeriodSchedule()
    assert [s.period_of(m) for m in (360, 419, 420, 1200, 200, 299, 300, 960)] == \
        ["feeding", "feeding", "rest", "night", "night", "night", "rest", "feeding"]
    samples = [IndicatorSample(EPOCH + 60 * m, "audio", float(m)) for m in (361, 1300, 600)]
    days = indicator_days(samples, s)
    assert list(days[D0].get("audio", "feeding")) == [361.0]
    assert sorted(days[D0].get("audio")) == [361.0, 600.0, 1300.0]
    with pytest.raises(ValueError):
        PeriodSchedule.from_dict({"night": ["25:00", "05:00"]})


def test_top_and_low_five_pool_the_window():
    samples = []
    for day in range(4):
        for k in range(10):
            samples.append(IndicatorSample(EPOCH + 86400 * day + 60 * (360 + k), "audio", float(10 * day + k)))
    data = ProductionData.build(records(5), indicators=indicator_days(samples))
    fv = build_features(data, D0 + timedelta(days=4))
    # days 1..3 pooled: values 10..19, 20..29, 30..39
    assert fv["f30"] == np.mean([35, 36, 37, 38, 39])
    assert fv["f32"] == np.mean([10, 11, 12, 13, 14])
    assert fv["f20"] == np.mean(np.arange(10, 40))


def test_target_is_mean_rate_over_next_ten_days():
    data = ProductionData.build(records(30))
    D = D0 + timedelta(days=5)
    assert target_rate(data, D) == pytest.approx(np.mean([(80 + i) / 100 for i in range(6, 16)]))
    # partial window at the end of the record averages what exists
    assert target_rate(data, D0 + timedelta(days=27)) == pytest.approx(np.mean([1.08, 1.09]))
    assert target_rate(data, D0 + timedelta(days=29)) is None


def test_split_is_chronological_and_purged():
    data = ProductionData.build(records(100))
    samples = make_samples(data, ("f14", "f15"))
    train, test = chronological_split(samples, 0.8)
    first = test[0].day
    assert all(s.day < first for s in train)
    assert all(s.day + timedelta(days=10) < first for s in train)
    assert len(train) + len(test) + 10 == len(samples)
    with pytest.raises(ValueError):
        chronological_split(samples, 1.0)


def test_model_recovers_a_linear_target_exactly():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 3))
    y = X @ [0.1, -0.2, 0.05] + 0.7
    m = fit_arrays(X, y, ("f1", "f4", "f7"))
    assert m.weights == pytest.approx([0.1, -0.2, 0.05])
    back = ProductionModel.from_dict(m.to_dict())
    assert back.features == m.features and np.array_equal(back.weights, m.weights)


def test_productivity_flags_instead_of_clamping():
    p = productivity_from_eggs(110.0, 100)
    assert p.per_bird == pytest.approx(1.1) and p.anomalous
    assert not productivity_from_eggs(50.0, 100).anomalous
    with pytest.raises(ValueError):
        productivity_from_eggs(1.0, 0)


def test_mae_oracle():
    assert evaluate_mae([1, 2, 3], [2, 2, 1]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        evaluate_mae([], [])


def test_cost_per_egg_by_hand():
    ledger = FeedLedger([FeedPurchase("2024-01", 3000, 1500), FeedPurchase("2024-02", 3000, 1500),
                         FeedPurchase("2023-12", 999, 999)], date(2024, 1, 1))
    r = cost_per_egg(ledger, date(2024, 2, 29), 600)
    # 60 days inclusive
    assert r.daily_feed_kg == pytest.approx(100.0)
    assert r.daily_feed_cost == pytest.approx(50.0)
    assert r.cost_per_egg == pytest.approx(50 / 600) and r.status == "ok"
    assert cost_per_egg(ledger, date(2024, 1, 1), 0).status == "undefined"
    assert cost_per_egg(FeedLedger([], date(2024, 1, 1)), date(2024, 1, 5), 10).status == "no-data"
    with pytest.raises(ValueError):
        cost_per_egg(ledger, date(2023, 12, 31), 10)


def test_data_validation():
    with pytest.raises(ValueError):
        DailyRecord(D0, -1, 0, 10, 20.0)
    with pytest.raises(ValueError):
        FeedPurchase("2024-13", 1, 1)
    r = records(3)
    with pytest.raises(ValueError):
        ProductionData.build([r[1], r[0]])


def test_features_from_respects_sources():
    assert features_from(["production"]) == ("f7", "f14", "f15", "f17")
    assert set(features_from(["production", "sensor"])) == {"f1", "f4", "f7", "f14", "f15", "f17"}


def test_ablation_on_fixture_improves_with_each_source():
    fx = production_fixture(0, days=365)
    data = ProductionData.build(fx.records, env_days(fx.env), indicator_days(fx.indicators))
    rows = ablation_grid(data)
    maes = [r.mae for r in rows]
    assert maes[0] > maes[1] > maes[2]
    assert len({(r.n_train, r.n_test) for r in rows}) == 1
    table = format_ablation(rows).splitlines()
    assert len(table) == 4 and table[0].startswith("Data\tModel")


def test_uninformative_indicators_do_not_help_much():
    fx = production_fixture(0, days=365, informative=False)
    data = ProductionData.build(fx.records, env_days(fx.env), indicator_days(fx.indicators))
    rows = ablation_grid(data)
    assert rows[2].mae > 0.9 * rows[1].mae
    assert fit_production_model(make_samples(data)[:50]).features == USED
