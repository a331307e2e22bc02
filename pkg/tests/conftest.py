import numpy as np
import pytest

import jstat
from jstat.estimate import EstimateTable
from jstat.inference import build_null

# base seed for all frozen Monte Carlo fixtures
ACC_SEED = 20260810

# r abscissae used by the shared Poisson ensemble; includes the exact
# distances the assertions probe
ACC_R = np.unique(np.concatenate([np.linspace(0.0, 0.121, 500), [0.04, 0.05, 0.06, 0.08]]))

R0_100 = 0.0856  # 0.9 quantile of the analytic Poisson F at intensity 100, 2D


@pytest.fixture(scope="session")
def unit_sq():
    return jstat.unit_square()


@pytest.fixture(scope="session")
def grid_256(unit_sq):
    g = jstat.make_grid(unit_sq, 65536)
    g.boundary_distances
    return g


@pytest.fixture(scope="session")
def acc_rgrid():
    return jstat.RGrid(ACC_R)


def stack_tables(patterns, grid, rgrid, columns):
    """Per-column (values, defined) stacks over a list of patterns."""
    out = {name: ([], []) for name in columns}
    for p in patterns:
        tab = EstimateTable.compute(p, grid=grid, rgrid=rgrid)
        for name in columns:
            est = tab.columns[name]
            out[name][0].append(est.values)
            out[name][1].append(est.defined)
    return {
        name: (np.asarray(vals), np.asarray(defs)) for name, (vals, defs) in out.items()
    }


@pytest.fixture(scope="session")
def poisson_ensemble(unit_sq, grid_256, acc_rgrid):
    """500 Poisson(100) replicates, all estimator columns, 256x256 grid."""
    pats = [jstat.sim_poisson(unit_sq, 100.0, ACC_SEED, replicate=k) for k in range(500)]
    cols = (
        "F_uncorr",
        "G_uncorr",
        "J_W",
        "F_rs",
        "G_rs",
        "J_rs",
        "F_km",
        "G_km",
        "J_km",
    )
    return stack_tables(pats, grid_256, acc_rgrid, cols)


@pytest.fixture(scope="session")
def null_jw(unit_sq):
    """Null distribution of the uncorrected J under Poisson(100), 2000 reps."""
    config = jstat.SimConfig(model="poisson", window=unit_sq, lam=100.0, seed=ACC_SEED)
    return build_null(config, variant="uncorrected", reps=2000, grid_target=16384)
