import math

import numpy as np
import pytest

import jstat
from jstat.geometry import (
    Window,
    WindowError,
    dilation_coverage_fraction,
    make_grid,
    two_rect_window,
)


class TestWindow:
    def test_unit_square_volume(self):
        assert jstat.unit_square().volume() == 1.0

    def test_two_rect_volume_is_exactly_one(self):
        assert two_rect_window().volume() == 2 * 3.125 * 0.16 == 1.0

    def test_unit_cube_volume(self):
        assert jstat.unit_cube().volume() == 1.0

    def test_volume_additive_over_components(self):
        rng = np.random.default_rng(3)
        comps = []
        x0 = 0.0
        for _ in range(4):
            wd, ht = rng.uniform(0.2, 1.0, size=2)
            comps.append(((x0, 0.0), (x0 + wd, ht)))
            x0 += wd + 0.05
        w = jstat.rect_union2d(comps)
        total = sum((hi[0] - lo[0]) * (hi[1] - lo[1]) for lo, hi in comps)
        assert w.volume() == pytest.approx(total, abs=0.0)

    def test_degenerate_sides_rejected(self):
        with pytest.raises(WindowError):
            jstat.rect2d((0, 0), (0, 1))

    def test_overlapping_union_rejected(self):
        with pytest.raises(WindowError):
            jstat.rect_union2d([((0, 0), (1, 1)), ((0.5, 0.5), (2, 2))])

    def test_touching_union_rejected(self):
        with pytest.raises(WindowError):
            jstat.rect_union2d([((0, 0), (1, 1)), ((1.0, 0), (2, 1))])

    def test_json_round_trip(self):
        for w in (jstat.unit_square(), jstat.unit_cube(), two_rect_window()):
            assert Window.from_json(w.to_json()) == w

    def test_unknown_kind_rejected(self):
        with pytest.raises(WindowError):
            Window.from_dict({"kind": "disc", "lo": [0, 0], "hi": [1, 1]})


class TestBoundaryDistance:
    def test_square_center(self):
        assert jstat.unit_square().boundary_distance((0.5, 0.5)) == 0.5

    def test_square_nearest_side(self):
        assert jstat.unit_square().boundary_distance((0.1, 0.3)) == pytest.approx(0.1, abs=0)

    def test_cube_near_face(self):
        assert jstat.unit_cube().boundary_distance((0.5, 0.5, 0.02)) == pytest.approx(
            0.02, abs=1e-15
        )

    def test_outside_point_rejected(self):
        with pytest.raises(WindowError):
            jstat.unit_square().boundary_distance((1.5, 0.5))
        # the gap between union components is outside the window
        with pytest.raises(WindowError):
            two_rect_window().boundary_distance((1.0, 0.17))

    def test_union_uses_component_boundary(self):
        w = two_rect_window()
        # 0.01 below the gap-facing edge of the lower component
        assert w.boundary_distance((1.0, 0.15)) == pytest.approx(0.01, abs=1e-12)

    def test_bounded_by_half_smallest_side(self):
        w = two_rect_window()
        rng = np.random.default_rng(11)
        pts = jstat.sim_binomial(w, 300, seed=4).points
        d = w.boundary_distance(pts)
        assert np.all(d <= 0.16 / 2 + 1e-12)
        assert np.all(d > 0)


class TestMakeGrid:
    def test_unit_square_default_lattice(self):
        g = make_grid(jstat.unit_square(), 65536)
        assert g.m == 65536
        assert g.spacing == pytest.approx(1.0 / 256)
        assert np.all(jstat.unit_square().contains(g.points))

    def test_unit_cube_lattice(self):
        g = make_grid(jstat.unit_cube(), 262144)
        assert g.m == 262144
        assert g.spacing == pytest.approx(1.0 / 64)

    def test_two_rect_clipped_count(self):
        w = two_rect_window()
        g = make_grid(w, 65536)
        # oracle: recount the lattice points lying strictly inside
        assert np.all(w.contains(g.points))
        assert 0.75 * 65536 <= g.m <= 1.25 * 65536
        # lattice regularity: coordinates are on a single h-spaced comb
        for ax in range(2):
            steps = np.diff(np.unique(g.points[:, ax]))
            assert np.all(np.abs(steps / g.spacing - np.round(steps / g.spacing)) < 1e-9)

    def test_deterministic(self):
        a = make_grid(jstat.unit_square(), 10000)
        b = make_grid(jstat.unit_square(), 10000)
        assert np.array_equal(a.points, b.points)

    def test_target_too_small_rejected(self):
        with pytest.raises(WindowError):
            make_grid(jstat.unit_square(), 50)


class TestDilationCoverage:
    def test_empty_pattern_gives_zero(self):
        w = jstat.unit_square()
        g = make_grid(w, 1024)
        ed = np.full(g.m, np.inf)
        for r in (0.0, 0.1, 10.0):
            assert dilation_coverage_fraction(w, g, ed, r) == 0.0

    def test_zero_radius_gives_zero(self):
        w = jstat.unit_square()
        g = make_grid(w, 1024)
        p = jstat.sim_binomial(w, 50, seed=8)
        ed = jstat.empty_space_distances(p, g).values
        assert dilation_coverage_fraction(w, g, ed, 0.0) == 0.0

    def test_single_disc_area(self):
        w = jstat.unit_square()
        g = make_grid(w, 65536)
        p = jstat.PointPattern(points=[[0.5, 0.5]], window=w)
        ed = jstat.empty_space_distances(p, g).values
        frac = dilation_coverage_fraction(w, g, ed, 0.1)
        assert frac == pytest.approx(math.pi * 0.01, abs=4 * g.spacing)

    def test_error_shrinks_with_resolution(self):
        w = jstat.unit_square()
        p = jstat.PointPattern(points=[[0.5, 0.5]], window=w)
        radii = np.linspace(0.07, 0.13, 13)
        errs = {}
        for target in (4096, 16384):
            g = make_grid(w, target)
            ed = jstat.empty_space_distances(p, g).values
            e = [
                abs(dilation_coverage_fraction(w, g, ed, r) - math.pi * r * r)
                for r in radii
            ]
            # per-radius error bounded by C * h * perimeter with C = 4
            assert max(e) <= 4 * g.spacing * 2 * math.pi * radii.max()
            errs[target] = np.mean(e)
        assert errs[16384] <= 0.6 * errs[4096] + 1e-4

    def test_nondecreasing_step_function(self):
        w = jstat.unit_square()
        g = make_grid(w, 4096)
        p = jstat.sim_binomial(w, 80, seed=21)
        ed = jstat.empty_space_distances(p, g).values
        rs = np.linspace(0, 0.3, 200)
        vals = dilation_coverage_fraction(w, g, ed, rs)
        assert np.all(np.diff(vals) >= 0)
        assert vals.min() >= 0.0 and vals.max() <= 1.0
        # exact distances are included on the right
        assert dilation_coverage_fraction(w, g, ed, float(ed.max())) == 1.0
