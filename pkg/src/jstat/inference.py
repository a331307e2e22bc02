"""Null distributions, the integrated test statistic, CSR tests and power.

The test statistic integrates the standardized deviation of a J estimate
from its Poisson value 1:

    tau = sum over grid cells in (0, r0] of (J(r) - 1) / sigma(r) * dr,

where sigma(r) is the per-r sample standard deviation of the estimator
under the Poisson null and r0 is the 0.9 quantile of the analytic Poisson
empty-space function. Rejection thresholds are empirical quantiles of tau
over the null replicates. Clustering pushes tau negative, regularity
positive.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._version import __version__
from .estimate import (
    KAPLAN_MEIER,
    REDUCED_SAMPLE,
    UNCORRECTED,
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
)
from .geometry import DEFAULT_GRID_TARGET, EvaluationGrid, Window, ball_volume, make_grid
from .patterns import PointPattern, empty_space_distances, nn_distances
from .simulate import SimConfig, sim_binomial

log = logging.getLogger(__name__)

VARIANTS = (UNCORRECTED, REDUCED_SAMPLE, KAPLAN_MEIER)
QUANTILE_LEVELS = (0.025, 0.05, 0.95, 0.975)
SIGMA_FLOOR = 1e-6


class ConfigMismatchError(EstimationError):
    """Null distribution and observed pattern disagree on window or intensity."""


def poisson_F(r, lam: float, dim: int):
    """Analytic empty-space function of a Poisson process, 1 - exp(-lam v_d r^d)."""
    r = np.asarray(r, dtype=float)
    return 1.0 - np.exp(-lam * ball_volume(dim) * r**dim)


def poisson_F_quantile(q: float, lam: float, dim: int) -> float:
    """Distance r with poisson_F(r) = q."""
    if not 0 < q < 1:
        raise EstimationError("quantile level must be in (0, 1)")
    return (-math.log1p(-q) / (lam * ball_volume(dim))) ** (1.0 / dim)


def default_null_rgrid(lam: float, dim: int, count: int = 512) -> RGrid:
    """r grid reaching the 0.99 quantile of the analytic Poisson F."""
    return RGrid.regular(poisson_F_quantile(0.99, lam, dim), count)


def estimate_J_for_variant(
    pattern: PointPattern, grid: EvaluationGrid, rgrid: RGrid, variant: str
) -> FunctionEstimate:
    """One pattern's J estimate of the requested variant on a shared grid."""
    if variant not in VARIANTS:
        raise EstimationError(f"unknown estimator variant {variant!r}")
    with_censor = variant != UNCORRECTED
    es = empty_space_distances(pattern, grid, with_censor=with_censor)
    nn = nn_distances(pattern, with_censor=with_censor)
    if variant == UNCORRECTED:
        F = estimate_F_uncorrected(es, rgrid)
        G = estimate_G_uncorrected(nn, rgrid)
    elif variant == REDUCED_SAMPLE:
        F = estimate_F_rs(es, rgrid)
        G = estimate_G_rs(nn, rgrid)
    else:
        F = estimate_F_km(es, rgrid)
        G = estimate_G_km(nn, rgrid)
    return estimate_J_variant(F, G)


def _config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(eq=False)
class NullDistribution:
    """Per-r moments of a J variant under Poisson, plus sampled tau values."""

    variant: str
    window: Window
    intensity: float
    grid_target: int
    rgrid: RGrid
    r0: float
    mean: np.ndarray
    sd: np.ndarray
    tau_samples: np.ndarray
    quantiles: dict[str, float]
    reps: int
    seed: int
    transform: str = "identity"
    undefined_counts: np.ndarray | None = None

    def __post_init__(self):
        r = self.rgrid.values
        if not (r[0] <= self.r0 <= r[-1]):
            raise EstimationError("r0 must lie within the r grid range")
        q = [self.quantiles[k] for k in ("q025", "q05", "q95", "q975")]
        if not (q[0] <= q[1] <= q[2] <= q[3]):
            raise EstimationError("null quantiles out of order")

    @property
    def config_hash(self) -> str:
        return _config_hash(
            {
                "variant": self.variant,
                "window": self.window.to_dict(),
                "intensity": self.intensity,
                "grid_target": self.grid_target,
                "rgrid": [float(self.rgrid.values[-1]), len(self.rgrid)],
                "transform": self.transform,
            }
        )

    def save(self, path):
        payload = {
            "variant": self.variant,
            "window": self.window.to_dict(),
            "intensity": self.intensity,
            "grid_target": self.grid_target,
            "rgrid": self.rgrid.values.tolist(),
            "r0": self.r0,
            "mean": np.where(np.isnan(self.mean), None, self.mean).tolist(),
            "sd": np.where(np.isnan(self.sd), None, self.sd).tolist(),
            "tau_samples": self.tau_samples.tolist(),
            "quantiles": self.quantiles,
            "reps": self.reps,
            "seed": self.seed,
            "transform": self.transform,
            "undefined_counts": None
            if self.undefined_counts is None
            else self.undefined_counts.tolist(),
            "config_hash": self.config_hash,
            "version": __version__,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "NullDistribution":
        with open(path) as fh:
            payload = json.load(fh)
        null = cls(
            variant=payload["variant"],
            window=Window.from_dict(payload["window"]),
            intensity=payload["intensity"],
            grid_target=payload["grid_target"],
            rgrid=RGrid(np.asarray(payload["rgrid"], dtype=float)),
            r0=payload["r0"],
            mean=np.array([np.nan if v is None else v for v in payload["mean"]]),
            sd=np.array([np.nan if v is None else v for v in payload["sd"]]),
            tau_samples=np.asarray(payload["tau_samples"], dtype=float),
            quantiles=payload["quantiles"],
            reps=payload["reps"],
            seed=payload["seed"],
            transform=payload.get("transform", "identity"),
            undefined_counts=None
            if payload.get("undefined_counts") is None
            else np.asarray(payload["undefined_counts"]),
        )
        stored = payload.get("config_hash")
        if stored is not None and stored != null.config_hash:
            raise ConfigMismatchError(f"{path}: stored config hash does not match contents")
        return null


def _apply_transform(values: np.ndarray, transform: str) -> np.ndarray:
    if transform == "identity":
        return values
    if transform == "sqrt":
        return np.sqrt(values)
    raise EstimationError(f"unknown transform {transform!r}")


def _tau_sum(values, defined, rgrid: RGrid, r0, sd, return_truncation=False):
    """Discrete tau: cell i covers (r[i-1], r[i]] and is evaluated at r[i].

    Cells with a null standard deviation below SIGMA_FLOOR (degenerate near
    r = 0 where every replicate gives J = 1) are excluded; the sum stops at
    the first undefined estimate cell at or below r0.
    """
    r = rgrid.values
    in_range = r[1:] <= r0
    width = np.diff(r)
    sigma = sd[1:]
    usable = in_range & (np.nan_to_num(sigma, nan=0.0) >= SIGMA_FLOOR)
    ok = defined[1:]
    undefined_in_range = in_range & ~ok
    truncated = bool(undefined_in_range.any())
    if truncated:
        stop = int(np.argmax(undefined_in_range))
        live = np.zeros(len(width), dtype=bool)
        live[:stop] = True
    else:
        live = np.ones(len(width), dtype=bool)
    sel = usable & live
    contrib = (values[1:][sel] - 1.0) / sigma[sel] * width[sel]
    tau_value = float(np.sum(contrib))
    if return_truncation:
        return tau_value, truncated
    return tau_value


def build_null(
    config: SimConfig,
    variant: str = UNCORRECTED,
    reps: int = 10000,
    rgrid: RGrid | None = None,
    grid_target: int | None = None,
    transform: str = "identity",
    jobs: int = 1,
) -> NullDistribution:
    """Estimate the null distribution of a J variant under Poisson.

    Simulates ``reps`` Poisson patterns, tabulates the chosen estimator on a
    shared r grid, and records the per-r mean and standard deviation plus the
    tau value of every replicate. r0 is the 0.9 quantile of the analytic
    Poisson F. Errors out if the estimator is undefined in more than 1% of
    replicates at some r at or below r0.
    """
    if config.model != "poisson":
        raise EstimationError("the null distribution is built from a Poisson config")
    if reps < 100:
        raise EstimationError("need at least 100 null replicates")
    w = config.window
    lam = config.lam
    if grid_target is None:
        grid_target = DEFAULT_GRID_TARGET[w.dim]
    grid = make_grid(w, grid_target)
    grid.boundary_distances  # materialize before any threading
    if rgrid is None:
        rgrid = default_null_rgrid(lam, w.dim)
    r0 = poisson_F_quantile(0.9, lam, w.dim)

    nr = len(rgrid)
    values = np.empty((reps, nr))
    defined = np.empty((reps, nr), dtype=bool)

    def one(k):
        pattern = config.sample(replicate=k)
        est = estimate_J_for_variant(pattern, grid, rgrid, variant)
        return k, est.values, est.defined

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for k, v, dfn in pool.map(one, range(reps)):
                values[k] = v
                defined[k] = dfn
    else:
        for k in range(reps):
            _, values[k], defined[k] = one(k)

    values = _apply_transform(values, transform)
    n_def = defined.sum(axis=0)
    undefined_counts = reps - n_def
    bad = (rgrid.values <= r0) & (undefined_counts > 0.01 * reps)
    if bad.any():
        worst = rgrid.values[bad][0]
        raise EstimationError(
            f"estimator undefined in more than 1% of replicates at r={worst:.4g} <= r0; "
            "use a smaller r0 / r grid"
        )
    with np.errstate(invalid="ignore"):
        masked = np.where(defined, values, np.nan)
        mean = np.nanmean(masked, axis=0)
        sd = np.where(n_def > 1, np.nanstd(masked, axis=0, ddof=1), np.nan)

    tau_samples = np.array(
        [_tau_sum(values[k], defined[k], rgrid, r0, sd) for k in range(reps)]
    )
    qs = np.quantile(tau_samples, QUANTILE_LEVELS)
    quantiles = dict(zip(("q025", "q05", "q95", "q975"), map(float, qs)))
    return NullDistribution(
        variant=variant,
        window=w,
        intensity=lam,
        grid_target=grid_target,
        rgrid=rgrid,
        r0=r0,
        mean=mean,
        sd=sd,
        tau_samples=tau_samples,
        quantiles=quantiles,
        reps=reps,
        seed=config.seed,
        transform=transform,
        undefined_counts=undefined_counts,
    )


def tau(jhat: FunctionEstimate, null: NullDistribution) -> float:
    """Integrated standardized deviation of one J estimate from 1.

    The estimate must be tabulated on the null's r grid. Undefined cells at
    or below r0 terminate the sum (for the uncorrected estimator this point
    is r_Fmax, where the estimate leaves its domain).
    """
    if jhat.rgrid != null.rgrid:
        raise EstimationError("estimate and null distribution use different r grids")
    vals = _apply_transform(jhat.values, null.transform)
    value, truncated = _tau_sum(
        vals, jhat.defined, null.rgrid, null.r0, null.sd, return_truncation=True
    )
    if truncated:
        log.debug("tau sum truncated before r0 (estimate undefined)")
    return value


@dataclass(frozen=True)
class TestResult:
    """CSR test decisions for one pattern against a prebuilt null."""

    tau: float
    quantiles: dict[str, float]
    reject_two_sided: bool
    reject_clustering: bool
    reject_regularity: bool
    variant: str
    n: int
    intensity: float

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "quantiles": self.quantiles,
            "decisions": {
                "two_sided_5pct": "reject" if self.reject_two_sided else "accept",
                "clustering_5pct": "reject" if self.reject_clustering else "accept",
                "regularity_5pct": "reject" if self.reject_regularity else "accept",
            },
            "variant": self.variant,
            "n": self.n,
            "intensity": self.intensity,
        }


def _decide(tau_value: float, quantiles: dict[str, float]) -> tuple[bool, bool, bool]:
    two = not (quantiles["q025"] <= tau_value <= quantiles["q975"])
    clus = tau_value < quantiles["q05"]
    reg = tau_value > quantiles["q95"]
    return two, clus, reg


def check_null_matches(pattern: PointPattern, null: NullDistribution) -> None:
    """Window must match the null exactly; the count must be Poisson-plausible."""
    if pattern.window != null.window:
        raise ConfigMismatchError("pattern window does not match the null's window")
    expected = null.intensity * pattern.window.volume()
    slack = 4.0 * math.sqrt(expected)
    if abs(pattern.n - expected) > slack:
        raise ConfigMismatchError(
            f"pattern count {pattern.n} is inconsistent with null intensity "
            f"{null.intensity:g} (expected {expected:.1f} +/- {slack:.1f})"
        )


def test_csr(
    pattern: PointPattern, null: NullDistribution, grid: EvaluationGrid | None = None
) -> TestResult:
    """Monte Carlo test of complete spatial randomness for one pattern."""
    check_null_matches(pattern, null)
    if grid is None:
        grid = make_grid(pattern.window, null.grid_target)
    jhat = estimate_J_for_variant(pattern, grid, null.rgrid, null.variant)
    t = tau(jhat, null)
    two, clus, reg = _decide(t, null.quantiles)
    return TestResult(
        tau=t,
        quantiles=null.quantiles,
        reject_two_sided=two,
        reject_clustering=clus,
        reject_regularity=reg,
        variant=null.variant,
        n=pattern.n,
        intensity=pattern.intensity,
    )


@dataclass(eq=False)
class Envelope:
    """Pointwise min/max curves of a J variant over null simulations."""

    rgrid: RGrid
    observed: np.ndarray
    observed_defined: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    env_defined: np.ndarray
    variant: str
    n_sims: int
    seed: int

    def exits_below(self) -> bool:
        ok = self.observed_defined & self.env_defined
        return bool(np.any(self.observed[ok] < self.lo[ok]))

    def to_csv(self, path):
        import csv as _csv

        with open(path, "w", newline="") as fh:
            w = _csv.writer(fh, lineterminator="\n")
            w.writerow(("r", "observed", "env_min", "env_max"))
            for i, r in enumerate(self.rgrid.values):
                row = [repr(float(r))]
                row.append(repr(float(self.observed[i])) if self.observed_defined[i] else "")
                if self.env_defined[i]:
                    row.append(repr(float(self.lo[i])))
                    row.append(repr(float(self.hi[i])))
                else:
                    row.extend(["", ""])
                w.writerow(row)


def envelope(
    pattern: PointPattern,
    variant: str,
    n_sims: int,
    seed: int,
    rgrid: RGrid | None = None,
    grid_target: int | None = None,
    jobs: int = 1,
) -> Envelope:
    """Simulation envelope from binomial null patterns with the observed count.

    Conditions on the observed number of points: each simulation places that
    many uniform points in the same window. Pointwise min and max are taken
    over the simulations wherever they are defined.
    """
    if n_sims < 1:
        raise EstimationError("need at least one simulation for an envelope")
    grid = make_grid(pattern.window, grid_target)
    grid.boundary_distances
    if rgrid is None:
        from .estimate import default_rgrid_for

        rgrid = default_rgrid_for(pattern, grid)
    obs = estimate_J_for_variant(pattern, grid, rgrid, variant)

    nr = len(rgrid)
    vals = np.empty((n_sims, nr))
    dfn = np.empty((n_sims, nr), dtype=bool)

    def one(k):
        sim = sim_binomial(pattern.window, pattern.n, seed, replicate=k)
        est = estimate_J_for_variant(sim, grid, rgrid, variant)
        return k, est.values, est.defined

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for k, v, d in pool.map(one, range(n_sims)):
                vals[k] = v
                dfn[k] = d
    else:
        for k in range(n_sims):
            _, vals[k], dfn[k] = one(k)

    env_defined = dfn.any(axis=0)
    lo = np.min(np.where(dfn, vals, np.inf), axis=0)
    hi = np.max(np.where(dfn, vals, -np.inf), axis=0)
    lo[~env_defined] = np.nan
    hi[~env_defined] = np.nan
    return Envelope(
        rgrid=rgrid,
        observed=obs.values,
        observed_defined=obs.defined,
        lo=lo,
        hi=hi,
        env_defined=env_defined,
        variant=variant,
        n_sims=n_sims,
        seed=seed,
    )


@dataclass(frozen=True)
class PowerCell:
    """Rejection proportions for one alternative-parameter setting."""

    model: str
    params: dict
    reps: int
    n_failed: int
    reject_two_sided: float
    reject_clustering: float
    reject_regularity: float
    variant: str


def _cell_config(model: str, params: dict, null: NullDistribution, seed: int) -> SimConfig:
    w = null.window
    lam = null.intensity
    if model == "poisson":
        return SimConfig(model="poisson", window=w, lam=lam, seed=seed)
    if model == "matern2":
        # primary intensity pinned to the null's, so R -> 0 recovers the null
        return SimConfig(model="matern2", window=w, lam_p=lam, R=params["R"], seed=seed)
    if model == "matern-cluster":
        mu = params["mu"]
        return SimConfig(
            model="matern-cluster",
            window=w,
            kappa=lam / mu,
            mu=mu,
            R=params["R"],
            seed=seed,
        )
    raise EstimationError(f"unknown power-study model {model!r}")


def power_study(
    model: str,
    cells: list[dict],
    null: NullDistribution,
    reps: int,
    seed: int,
    grid_target: int | None = None,
    jobs: int = 1,
) -> list[PowerCell]:
    """Rejection proportion of each CSR test over a grid of alternatives.

    Every cell simulates ``reps`` patterns of the alternative model (at the
    null's intensity), computes tau against the prebuilt null, and records
    the proportion rejected by the two-sided and the two one-sided tests.
    Replicates where estimation fails (fewer than two points) are counted
    in ``n_failed``, not silently dropped.
    """
    if reps < 50:
        raise EstimationError("need at least 50 replicates per power cell")
    grid = make_grid(null.window, grid_target if grid_target is not None else null.grid_target)
    grid.boundary_distances
    out = []
    for ci, params in enumerate(cells):
        config = _cell_config(model, params, null, seed)

        def one(k, _config=config, _ci=ci):
            pattern = _config.sample(replicate=(_ci, k))
            if pattern.n < 2:
                return None
            jhat = estimate_J_for_variant(pattern, grid, null.rgrid, null.variant)
            return _decide(tau(jhat, null), null.quantiles)

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(one, range(reps)))
        else:
            results = [one(k) for k in range(reps)]
        failed = sum(r is None for r in results)
        good = [r for r in results if r is not None]
        denom = max(len(good), 1)
        counts = np.sum(np.asarray(good, dtype=float), axis=0) if good else np.zeros(3)
        if failed:
            log.warning("power cell %s: %d/%d replicates failed estimation", params, failed, reps)
        out.append(
            PowerCell(
                model=model,
                params=dict(params),
                reps=reps,
                n_failed=failed,
                reject_two_sided=float(counts[0] / denom),
                reject_clustering=float(counts[1] / denom),
                reject_regularity=float(counts[2] / denom),
                variant=null.variant,
            )
        )
    return out


def write_power_csv(cells: list[PowerCell], path) -> None:
    import csv as _csv

    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh, lineterminator="\n")
        w.writerow(
            (
                "param1",
                "param2",
                "reps",
                "reject_two_sided",
                "reject_cluster",
                "reject_regular",
                "estimator",
            )
        )
        for cell in cells:
            p1 = cell.params.get("R", "")
            p2 = cell.params.get("mu", "")
            w.writerow(
                [
                    repr(float(p1)) if p1 != "" else "",
                    repr(float(p2)) if p2 != "" else "",
                    cell.reps,
                    repr(cell.reject_two_sided),
                    repr(cell.reject_clustering),
                    repr(cell.reject_regularity),
                    cell.variant,
                ]
            )
