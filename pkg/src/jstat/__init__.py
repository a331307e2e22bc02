"""Spatial summary functions F, G and J for point patterns in bounded windows.

The headline tool is the uncorrected window-based J estimator: the plain
ratio of empirical distance distributions, which needs no edge correction
yet stays interpretable (identically 1 under complete spatial randomness).
The package also provides border-method and Kaplan-Meier corrected
comparators, seeded simulators for the null and alternative models, Monte
Carlo CSR tests and a power-study harness.
"""

from ._version import __version__
from .estimate import (
    CSV_COLUMNS,
    KAPLAN_MEIER,
    REDUCED_SAMPLE,
    UNCORRECTED,
    EstimateTable,
    EstimationError,
    FunctionEstimate,
    RGrid,
    estimate_F_km,
    estimate_F_rs,
    estimate_F_uncorrected,
    estimate_G_km,
    estimate_G_rs,
    estimate_G_uncorrected,
    estimate_J_variant,
    estimate_JW,
)
from .geometry import (
    EvaluationGrid,
    Window,
    WindowError,
    ball_volume,
    box3d,
    dilation_coverage_fraction,
    make_grid,
    rect2d,
    rect_union2d,
    two_rect_window,
    unit_cube,
    unit_square,
)
from .inference import (
    ConfigMismatchError,
    Envelope,
    NullDistribution,
    PowerCell,
    TestResult,
    build_null,
    envelope,
    estimate_J_for_variant,
    poisson_F,
    poisson_F_quantile,
    power_study,
    tau,
    test_csr,
    write_power_csv,
)
from .patterns import (
    DistanceSet,
    GridIndex,
    PatternError,
    PointPattern,
    empty_space_distances,
    max_distances,
    nn_distances,
)
from .simulate import (
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
