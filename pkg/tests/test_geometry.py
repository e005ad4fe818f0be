from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from farmintel.geometry import (HORIZONTAL, VERTICAL, Beam, CameraPose, CameraSpec, CoverageObjective, FarmLayout,
                                GeometryError, beam_usage_descriptor, coverage_fraction, coverage_grid,
                                decode_genotype, encode_poses, fov_triangle, min_camera_estimate, paper_farm)


def brute_force_grid(poses, spec, layout):
    """Cell-centre membership by sign tests on every cell, no bounding boxes."""
    nx, ny = layout.grid_shape
    xs = layout.origin[0] + (np.arange(nx) + 0.5) * layout.pixel_size
    ys = layout.origin[1] + (np.arange(ny) + 0.5) * layout.pixel_size
    px, py = np.meshgrid(xs, ys, indexing="ij")
    out = np.zeros((nx, ny), dtype=bool)
    for p in poses:
        a, b, c = fov_triangle(p, spec)
        def side(u, v):
            return (v[0] - u[0]) * (py - u[1]) - (v[1] - u[1]) * (px - u[0])
        s = [side(a, b), side(b, c), side(c, a)]
        out |= (np.all([x >= -1e-9 for x in s], axis=0)) | (np.all([x <= 1e-9 for x in s], axis=0))
    return out


def test_paper_farm_grid_is_205_by_65():
    layout, spec = paper_farm()
    assert layout.grid_shape == (205, 65)
    assert len(layout.beams) == 8
    assert spec.count == 6


def test_min_camera_estimate_paper_numbers():
    layout, spec = paper_farm()
    assert min_camera_estimate(layout, spec) == 6


def test_half_base_is_depth_times_tan_half_fov():
    spec = CameraSpec(102.0, 5.0)
    assert spec.half_base == pytest.approx(5.0 * math.tan(math.radians(51.0)), rel=1e-12)


def test_fov_triangle_height_equals_depth():
    spec = CameraSpec(60.0, 4.0)
    apex, right, left = fov_triangle(CameraPose(1.0, 2.0, 90.0, 0), spec)
    assert apex == pytest.approx([1.0, 2.0])
    # viewing +Y: base at y = 2 + depth
    assert right[1] == pytest.approx(6.0) and left[1] == pytest.approx(6.0)
    assert abs(right[0] - left[0]) == pytest.approx(2 * spec.half_base)


def test_hand_computed_small_raster():
    # 2x2 m farm, 0.5 m cells; camera at origin looking along +X with a 90 degree, 1 m deep triangle
    layout = FarmLayout(2.0, 2.0, 0.5, (Beam(HORIZONTAL, 0.0),))
    spec = CameraSpec(90.0, 1.0)
    grid = coverage_grid([CameraPose(0.0, 0.0, 0.0, 0)], spec, layout)
    covered = {tuple(ij) for ij in np.argwhere(grid.cells)}
    # (0.75, 0.75) lies exactly on the triangle edge y = x and counts as covered
    assert covered == {(0, 0), (1, 0), (1, 1)}
    assert grid.fraction == pytest.approx(3 / 16)


def test_cell_on_boundary_is_covered():
    layout = FarmLayout(1.0, 1.0, 1.0, (Beam(HORIZONTAL, 0.0),))
    # base edge passes through the single cell centre (0.5, 0.5)
    spec = CameraSpec(90.0, 0.5)
    assert coverage_fraction([CameraPose(0.5, 0.0, 90.0, 0)], spec, layout) == 1.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=6))
def test_raster_matches_brute_force(cams):
    layout, _ = paper_farm()
    spec = CameraSpec(102.0, 5.0, len(cams))
    genes = np.array([g for c in cams for g in c])
    poses = decode_genotype(genes, layout, spec)
    assert np.array_equal(coverage_grid(poses, spec, layout).cells, brute_force_grid(poses, spec, layout))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=18, max_size=18))
def test_decoded_poses_lie_on_their_beams(genes):
    layout, spec = paper_farm()
    for p in decode_genotype(genes, layout, spec):
        b = layout.beams[p.beam_index]
        on = p.y if b.axis == HORIZONTAL else p.x
        assert on == pytest.approx(b.offset)
        assert 0.0 <= p.x <= layout.length and 0.0 <= p.y <= layout.width
        assert 0.0 <= p.orientation_deg < 360.0


def test_snap_tie_goes_to_lowest_beam_index():
    layout, spec = paper_farm()
    # (0.1, 0.1) is 0.1 m from both the y=0 beam (index 0) and the x=0 beam (index 3)
    genes = np.tile([0.1 / 20.5, 0.1 / 6.5, 0.0], 6)
    p = decode_genotype(genes, layout, spec)[0]
    assert p.beam_index == 0
    assert (p.x, p.y) == pytest.approx((0.1, 0.0))


def test_objective_matches_pose_pipeline():
    layout, spec = paper_farm()
    obj = CoverageObjective(layout, spec)
    rng = np.random.default_rng(3)
    for _ in range(20):
        g = rng.random(18)
        poses = decode_genotype(g, layout, spec)
        assert obj(g) == pytest.approx(coverage_fraction(poses, spec, layout), abs=1e-15)
        assert obj.descriptor(g) == beam_usage_descriptor(poses, layout)
        assert sum(obj.descriptor(g)) <= 6


def test_translation_invariance():
    layout, spec = paper_farm()
    rng = np.random.default_rng(11)
    poses = decode_genotype(rng.random(18), layout, spec)
    moved = coverage_grid([p.translated(3.7, -1.2) for p in poses], spec, layout.translated(3.7, -1.2))
    assert np.array_equal(moved.cells, coverage_grid(poses, spec, layout).cells)


def test_encode_inverts_scaling_for_on_beam_poses():
    layout, spec = paper_farm()
    poses = decode_genotype(np.random.default_rng(5).random(18), layout, spec)
    again = decode_genotype(encode_poses(poses, layout), layout, spec)
    for a, b in zip(poses, again):
        assert (a.x, a.y, a.orientation_deg) == pytest.approx((b.x, b.y, b.orientation_deg), abs=1e-9)


@pytest.mark.parametrize("fov", [0.0, 180.0, -5.0, 200.0])
def test_fov_outside_open_interval_rejected(fov):
    with pytest.raises(GeometryError):
        CameraSpec(fov, 5.0)


def test_bad_genotypes_rejected():
    layout, spec = paper_farm()
    with pytest.raises(GeometryError):
        decode_genotype(np.full(17, 0.5), layout, spec)
    with pytest.raises(GeometryError):
        decode_genotype(np.r_[np.full(17, 0.5), 1.2], layout, spec)


def test_layout_validation():
    with pytest.raises(GeometryError):
        FarmLayout(10.0, 5.0, 0.1, ())
    with pytest.raises(GeometryError):
        FarmLayout(10.0, 5.0, 0.1, (Beam(VERTICAL, 11.0),))
    with pytest.raises(GeometryError):
        Beam("diagonal", 1.0)
