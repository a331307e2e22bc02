import math

import numpy as np
import pytest

import jstat
from jstat.simulate import (
    SimConfig,
    SimulationError,
    matern2_primary_intensity,
    matern2_retained_intensity,
    replicate_seed,
    sim_binomial,
    sim_matern2,
    sim_matern_cluster,
    sim_poisson,
)


def se_of_mean(x):
    return np.std(x, ddof=1) / math.sqrt(len(x))


class TestDeterminism:
    def test_same_seed_identical(self):
        w = jstat.unit_square()
        for make in (
            lambda rep: sim_poisson(w, 80.0, 42, rep),
            lambda rep: sim_binomial(w, 70, 42, rep),
            lambda rep: sim_matern2(w, 90.0, 0.05, 42, rep),
            lambda rep: sim_matern_cluster(w, 20.0, 3.0, 0.08, 42, rep),
        ):
            assert np.array_equal(make(0).points, make(0).points)
            assert not np.array_equal(make(0).points, make(1).points)

    def test_replicate_seed_split_is_stable(self):
        a = np.random.Generator(np.random.Philox(replicate_seed(7, 3))).random(4)
        b = np.random.Generator(np.random.Philox(replicate_seed(7, 3))).random(4)
        c = np.random.Generator(np.random.Philox(replicate_seed(7, 4))).random(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_tuple_stream_keys(self):
        w = jstat.unit_square()
        a = sim_poisson(w, 50.0, 1, replicate=(2, 5))
        b = sim_poisson(w, 50.0, 1, replicate=(2, 5))
        c = sim_poisson(w, 50.0, 1, replicate=(5, 2))
        assert np.array_equal(a.points, b.points)
        assert not np.array_equal(a.points, c.points)


class TestPoisson:
    def test_count_law_unit_square(self):
        w = jstat.unit_square()
        counts = np.array([sim_poisson(w, 100.0, 10, k).n for k in range(2000)])
        assert abs(counts.mean() - 100.0) <= 3 * math.sqrt(100.0 / 2000)
        var_se = math.sqrt((100 * 301 - 100.0**2) / 2000)  # Poisson fourth moment
        assert abs(counts.var(ddof=1) - 100.0) <= 3 * var_se

    def test_mean_count_thin_rectangle(self):
        w = jstat.rect2d((0.0, 0.0), (10.0, 1.0))
        counts = np.array([sim_poisson(w, 10.0, 11, k).n for k in range(2000)])
        assert abs(counts.mean() - 100.0) <= 3 * math.sqrt(100.0 / 2000)

    def test_points_strictly_inside(self):
        w = jstat.two_rect_window()
        p = sim_poisson(w, 200.0, 12)
        assert np.all(w.contains(p.points))

    def test_invalid_intensity(self):
        with pytest.raises(SimulationError):
            sim_poisson(jstat.unit_square(), 0.0, 1)


class TestBinomial:
    def test_zero_points(self):
        assert sim_binomial(jstat.unit_square(), 0, 5).n == 0

    def test_exact_count_always(self):
        w = jstat.unit_square()
        assert all(sim_binomial(w, 100, 6, k).n == 100 for k in range(20))

    def test_equal_area_component_split(self):
        w = jstat.two_rect_window()
        p = sim_binomial(w, 1000, 7)
        in_first = int((w.component_of(p.points) == 0).sum())
        assert abs(in_first - 500) <= 3 * math.sqrt(1000 * 0.25)


class TestMatern2:
    def test_zero_radius_is_unthinned(self):
        w = jstat.unit_square()
        counts = np.array([sim_matern2(w, 60.0, 0.0, 13, k).n for k in range(2000)])
        assert abs(counts.mean() - 60.0) <= 3 * se_of_mean(counts)

    def test_hard_core_gap_every_realisation(self):
        w = jstat.unit_square()
        for k in range(50):
            p = sim_matern2(w, 100.0, 0.1, 14, k)
            if p.n < 2:
                continue
            d2 = ((p.points[:, None, :] - p.points[None, :, :]) ** 2).sum(axis=2)
            np.fill_diagonal(d2, np.inf)
            assert math.sqrt(d2.min()) >= 0.1

    def test_retained_intensity_formula(self):
        # oracle: the thinning formula, itself cross-checked below
        lam_p, R = 100.0, 0.06
        target = matern2_retained_intensity(lam_p, R, 2)
        w = jstat.unit_square()
        counts = np.array([sim_matern2(w, lam_p, R, 15, k).n for k in range(1500)])
        assert abs(counts.mean() - target) <= 3 * se_of_mean(counts)

    def test_formula_against_independent_thinning(self):
        # test-local dependent thinning on a torus-free oversized box
        lam_p, R = 120.0, 0.05
        rng = np.random.default_rng(99)
        lo, hi = -0.25, 1.25
        area = (hi - lo) ** 2
        kept = []
        for _ in range(400):
            n = rng.poisson(lam_p * area)
            pts = rng.uniform(lo, hi, size=(n, 2))
            marks = rng.random(n)
            d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
            np.fill_diagonal(d2, np.inf)
            near = d2 <= R * R
            beaten = near & (marks[None, :] <= marks[:, None])
            surv = pts[~beaten.any(axis=1)]
            inside = np.all((surv > 0) & (surv < 1), axis=1)
            kept.append(int(inside.sum()))
        kept = np.asarray(kept, dtype=float)
        target = matern2_retained_intensity(lam_p, R, 2)
        assert abs(kept.mean() - target) <= 3 * se_of_mean(kept)

    def test_primary_intensity_inversion(self):
        lam_p = matern2_primary_intensity(50.0, 0.04, 2)
        assert matern2_retained_intensity(lam_p, 0.04, 2) == pytest.approx(50.0)

    def test_unreachable_target_rejected(self):
        # the retained intensity cannot exceed 1 / (pi R^2)
        with pytest.raises(SimulationError, match="unreachable"):
            matern2_primary_intensity(100.0, 0.1, 2)


class TestMaternCluster:
    def test_mean_count_matches_kappa_mu(self):
        w = jstat.unit_square()
        counts = np.array(
            [sim_matern_cluster(w, 25.0, 4.0, 0.1, 16, k).n for k in range(2000)]
        )
        assert abs(counts.mean() - 100.0) <= 3 * se_of_mean(counts)

    def test_quadrat_overdispersion(self):
        w = jstat.unit_square()
        edges = np.linspace(0, 1, 5)
        quad = []
        for k in range(300):
            p = sim_matern_cluster(w, 12.5, 8.0, 0.05, 17, k)
            ix = np.clip(np.digitize(p.points[:, 0], edges) - 1, 0, 3)
            iy = np.clip(np.digitize(p.points[:, 1], edges) - 1, 0, 3)
            quad.extend(np.bincount(ix * 4 + iy, minlength=16))
        quad = np.asarray(quad, dtype=float)
        index = quad.var(ddof=1) / quad.mean()
        # dispersion index is 1 under Poisson with SE ~ sqrt(2/(N-1))
        assert index > 1 + 3 * math.sqrt(2 / (len(quad) - 1))

    def test_offspring_within_radius_of_parent(self):
        w = jstat.unit_square()
        pattern, parents, pid = sim_matern_cluster(
            w, 25.0, 4.0, 0.1, 18, 0, return_parents=True
        )
        assert len(pid) == pattern.n
        d = np.sqrt(((pattern.points - parents[pid]) ** 2).sum(axis=1))
        assert np.all(d <= 0.1)

    def test_3d_offspring_within_ball(self):
        w = jstat.unit_cube()
        pattern, parents, pid = sim_matern_cluster(
            w, 30.0, 4.0, 0.12, 19, 0, return_parents=True
        )
        d = np.sqrt(((pattern.points - parents[pid]) ** 2).sum(axis=1))
        assert np.all(d <= 0.12)
        assert abs(pattern.intensity / 120.0 - 1) < 0.5


def _strip_coverage(pattern, grid, edge_mask, center_mask, r_star):
    es = jstat.empty_space_distances(pattern, grid).values
    return (es[edge_mask] <= r_star).mean(), (es[center_mask] <= r_star).mean()


class TestEdgeStationarity:
    """Dilated-window generation leaves the restriction stationary.

    Compared against a test-local oracle that simulates on a much larger
    region and clips, per grid strip (near the boundary vs the middle).
    """

    @pytest.mark.parametrize("model", ["matern-cluster", "matern2"])
    def test_edge_vs_oracle(self, model):
        w = jstat.unit_square()
        grid = jstat.make_grid(w, 1024)
        bd = grid.boundary_distances
        edge = bd < 0.1
        center = bd >= 0.25
        r_star = 0.06
        reps = 600
        rng = np.random.default_rng(2718)
        lib_edge = np.empty(reps)
        lib_center = np.empty(reps)
        orc_edge = np.empty(reps)
        orc_center = np.empty(reps)
        lo, hi = -0.35, 1.35
        area = (hi - lo) ** 2
        for k in range(reps):
            if model == "matern-cluster":
                lib = sim_matern_cluster(w, 25.0, 4.0, 0.1, 20, k)
                parents = rng.uniform(lo, hi, size=(rng.poisson(25.0 * area), 2))
                counts = rng.poisson(4.0, size=len(parents))
                rad = 0.1 * np.sqrt(rng.random(int(counts.sum())))
                ang = rng.random(int(counts.sum())) * 2 * math.pi
                pts = np.repeat(parents, counts, axis=0) + np.stack(
                    [rad * np.cos(ang), rad * np.sin(ang)], axis=1
                )
            else:
                lib = sim_matern2(w, 100.0, 0.1, 21, k)
                prim = rng.uniform(lo, hi, size=(rng.poisson(100.0 * area), 2))
                marks = rng.random(len(prim))
                d2 = ((prim[:, None, :] - prim[None, :, :]) ** 2).sum(axis=2)
                np.fill_diagonal(d2, np.inf)
                beaten = (d2 <= 0.01) & (marks[None, :] <= marks[:, None])
                pts = prim[~beaten.any(axis=1)]
            inside = np.all((pts > 0) & (pts < 1), axis=1)
            oracle = jstat.PointPattern(points=np.unique(pts[inside], axis=0), window=w)
            lib_edge[k], lib_center[k] = _strip_coverage(lib, grid, edge, center, r_star)
            orc_edge[k], orc_center[k] = _strip_coverage(
                oracle, grid, edge, center, r_star
            )
        for a, b in ((lib_edge, orc_edge), (lib_center, orc_center)):
            se = math.sqrt(a.var(ddof=1) / reps + b.var(ddof=1) / reps)
            assert abs(a.mean() - b.mean()) <= 3 * se


class TestSimConfig:
    def test_dispatch_and_params_checked(self):
        w = jstat.unit_square()
        cfg = SimConfig(model="matern-cluster", window=w, kappa=25.0, mu=4.0, R=0.1, seed=3)
        direct = sim_matern_cluster(w, 25.0, 4.0, 0.1, 3, 0)
        assert np.array_equal(cfg.sample(0).points, direct.points)
        with pytest.raises(SimulationError):
            SimConfig(model="poisson", window=w)
        with pytest.raises(SimulationError):
            SimConfig(model="gibbs", window=w, lam=5.0)
