from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from farmintel.geometry import CoverageObjective, paper_farm
from farmintel.optimize.cmaes import CMAES, CMAESParameters, cmaes_run, repair
from farmintel.optimize.config import ConfigError, ObjectiveError, OptimizerConfig
from farmintel.optimize.map_elites import Archive, archive_stats, map_elites_run
from farmintel.optimize.placement import layout_from_dict, layout_to_dict, placement_config, render_svg


def sphere(center):
    c = np.asarray(center)
    return lambda x: -float(np.sum((x - c) ** 2))


def test_default_population_formula():
    assert CMAESParameters(18).lam == 4 + int(3 * math.log(18)) == 12
    p = CMAESParameters(18, 400)
    assert p.mu == 200
    assert p.weights.sum() == pytest.approx(1.0)
    assert np.all(np.diff(p.weights) < 0)


def test_cmaes_converges_on_shifted_sphere():
    cfg = OptimizerConfig(dim=5, max_evaluations=6000, seed=2)
    rep = cmaes_run(sphere(np.full(5, 0.3)), cfg)
    assert rep.fitness > -1e-10
    assert rep.genotype == pytest.approx(np.full(5, 0.3), abs=1e-4)


def test_cmaes_budget_is_never_exceeded_and_history_is_monotone():
    hist: list[float] = []
    cfg = OptimizerConfig(dim=4, max_evaluations=1003, seed=0)
    rep = cmaes_run(sphere(np.full(4, 0.9)), cfg, history=hist)
    assert rep.evaluations <= 1003
    assert all(b >= a for a, b in zip(hist, hist[1:]))


def test_flat_objective_spends_the_whole_budget():
    cfg = OptimizerConfig(dim=6, max_evaluations=20_000, seed=4)
    rep = cmaes_run(lambda x: 0.5, cfg)
    assert rep.evaluations == 20_000
    assert rep.fitness == 0.5


def test_target_fitness_stops_early():
    cfg = OptimizerConfig(dim=3, max_evaluations=100_000, seed=1)
    rep = cmaes_run(sphere(np.full(3, 0.5)), cfg, target_fitness=-1e-3)
    assert rep.fitness >= -1e-3
    assert rep.evaluations < 100_000


def test_cmaes_is_deterministic_per_seed():
    cfg = OptimizerConfig(dim=4, max_evaluations=800, seed=9)
    a = cmaes_run(sphere(np.full(4, 0.2)), cfg)
    b = cmaes_run(sphere(np.full(4, 0.2)), cfg)
    assert a.to_dict() == b.to_dict()


def test_non_finite_objective_raises_with_context():
    cfg = OptimizerConfig(dim=2, max_evaluations=100, seed=0)
    with pytest.raises(ObjectiveError, match="non-finite"):
        cmaes_run(lambda x: math.nan, cfg)


def test_degenerate_sigma_is_detected():
    es = CMAES(np.zeros(3), 1e-20, np.random.default_rng(0))
    assert es.degenerate


@settings(max_examples=60)
@given(arrays(np.float64, (5, 6), elements=st.floats(-3, 3)))
def test_repair_wraps_periodic_and_clamps_others(xs):
    out = repair(xs, periodic=(2, 5))
    assert np.all((out >= 0) & (out <= 1))
    assert out[:, [0, 1, 3, 4]] == pytest.approx(np.clip(xs[:, [0, 1, 3, 4]], 0, 1))
    assert out[:, [2, 5]] == pytest.approx(np.clip(np.mod(xs[:, [2, 5]], 1.0), 0, 1))


def test_config_validation():
    with pytest.raises(ConfigError):
        OptimizerConfig.from_dict({"max_evaluations": 0}, dim=3)
    with pytest.raises(ConfigError):
        OptimizerConfig.from_dict({"cmaes": {"sigma0": 2.0}}, dim=3)
    with pytest.raises(ConfigError):
        OptimizerConfig.from_dict({"map_elites": {"variation": "cvt"}}, dim=3)
    with pytest.raises(ConfigError):
        OptimizerConfig.from_dict({"periodic_genes": [3]}, dim=3)
    assert OptimizerConfig.from_dict({}, dim=3).max_evaluations == 200_000


# --- archive -----------------------------------------------------------------------

def test_archive_replaces_only_on_strict_improvement():
    arch = Archive()
    assert arch.insert((1, 0), [0.1], 0.5)
    assert not arch.insert((1, 0), [0.2], 0.5)
    assert arch[(1, 0)].genotype[0] == 0.1
    assert arch.insert((1, 0), [0.3], 0.6)
    assert arch[(1, 0)].fitness == 0.6
    with pytest.raises(ValueError):
        arch.insert((1, 0, 1), [0.1], 1.0)


def test_archive_csv_round_trip():
    arch = Archive()
    rng = np.random.default_rng(0)
    for _ in range(30):
        arch.insert(tuple(rng.integers(0, 2, 4)), rng.random(3), float(rng.random()))
    back = Archive.from_csv(arch.to_csv())
    assert back.keys() == arch.keys()
    for k in arch.keys():
        assert back[k].fitness == arch[k].fitness
        assert np.array_equal(back[k].genotype, arch[k].genotype)


def test_map_elites_on_placement_respects_descriptor_space():
    layout, spec = paper_farm()
    obj = CoverageObjective(layout, spec)
    cfg = placement_config(spec, "map-elites", evals=6000, seed=3)
    seen = []
    arch = map_elites_run(obj, obj.descriptor, cfg, on_batch=lambda a, n: seen.append(n))
    assert seen[-1] == 6000
    assert arch.capacity == 256
    assert 0 < len(arch) <= 256
    assert all(sum(k) <= spec.count for k in arch.keys())
    # each elite's stored fitness is reproducible from its genotype and descriptor
    for key, elite in arch:
        assert obj(elite.genotype) == elite.fitness
        assert obj.descriptor(elite.genotype) == key
    stats = archive_stats(arch)
    assert stats["filled"] == len(arch) and stats["best"] == arch.best()[1].fitness


def test_map_elites_is_deterministic_per_seed():
    cfg = OptimizerConfig(dim=3, max_evaluations=3000, seed=5)
    desc = lambda x: tuple(int(v > 0.5) for v in x)
    a = map_elites_run(sphere(np.full(3, 0.7)), desc, cfg)
    b = map_elites_run(sphere(np.full(3, 0.7)), desc, cfg)
    assert a.to_csv() == b.to_csv()


def test_iso_line_dd_variation_stays_in_box():
    cfg = OptimizerConfig.from_dict({"max_evaluations": 4000, "map_elites": {"variation": "iso_line_dd"},
                                     "periodic_genes": [1]}, dim=4)
    desc = lambda x: tuple(int(v > 0.5) for v in x)
    arch = map_elites_run(sphere(np.full(4, 0.25)), desc, cfg)
    for _, e in arch:
        assert np.all((e.genotype >= 0) & (e.genotype <= 1))
    assert arch[(0, 0, 0, 0)].fitness > -1e-3


# --- placement plumbing --------------------------------------------------------------

def test_layout_dict_round_trip():
    layout, spec = paper_farm()
    l2, s2 = layout_from_dict(layout_to_dict(layout, spec))
    assert l2 == layout and s2 == spec


def test_layout_missing_key_is_reported():
    d = layout_to_dict(*paper_farm())
    del d["camera"]
    with pytest.raises(ValueError, match="camera"):
        layout_from_dict(d)


def test_placement_presets():
    _, spec = paper_farm()
    c = placement_config(spec, "cmaes", evals=1000, seed=0)
    assert c.cmaes.population == 400
    assert c.periodic_genes == (2, 5, 8, 11, 14, 17)
    m = placement_config(spec, "map-elites", evals=1000, seed=0, overrides={"map_elites": {"batch": 32}})
    assert m.map_elites.variation == "iso_line_dd" and m.map_elites.batch == 32
    with pytest.raises(ConfigError):
        placement_config(spec, "nsga2", evals=1000, seed=0)


def test_svg_render_has_one_triangle_per_camera():
    layout, spec = paper_farm()
    obj = CoverageObjective(layout, spec)
    svg = render_svg(layout, spec, obj.poses(np.full(18, 0.4)))
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert svg.count("<polygon") == 6
    assert svg.count("<line") == len(layout.beams)
