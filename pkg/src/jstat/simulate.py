"""Seeded point-process generators: the null model and the alternatives.

All generators are pure functions of (window, parameters, seed, replicate).
Replicate streams are split from the base seed with
``SeedSequence(seed, spawn_key=(replicate,))`` feeding a Philox counter-based
generator, so replicates are independent and any subset can be regenerated
in isolation, in any order, on any number of workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Window, ball_volume
from .patterns import PointPattern

MODELS = ("poisson", "binomial", "matern2", "matern-cluster")


class SimulationError(ValueError):
    """Invalid simulation parameters."""


def replicate_seed(seed: int, replicate=0) -> np.random.SeedSequence:
    """Child seed sequence for one replicate (or a tuple-valued stream key)."""
    key = replicate if isinstance(replicate, tuple) else (replicate,)
    return np.random.SeedSequence(seed, spawn_key=key)


def _rng(seed: int, replicate) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(replicate_seed(seed, replicate)))


def _uniform_in_window(window: Window, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. uniform points, components weighted by volume, strictly inside."""
    comp = window.components
    sides = comp[:, 1] - comp[:, 0]
    vols = np.prod(sides, axis=1)
    cumfrac = np.cumsum(vols) / vols.sum()
    pts = np.empty((n, window.dim))
    todo = np.arange(n)
    while todo.size:
        which = np.searchsorted(cumfrac, rng.random(todo.size), side="right")
        which = np.minimum(which, len(comp) - 1)
        u = rng.random((todo.size, window.dim))
        pts[todo] = comp[which, 0] + u * sides[which]
        # a draw can land exactly on a face through rounding; redraw those
        todo = todo[~window.contains(pts[todo])]
    return pts


def sim_poisson(window: Window, lam: float, seed: int, replicate=0) -> PointPattern:
    """Homogeneous Poisson process with intensity ``lam`` restricted to the window."""
    if lam <= 0:
        raise SimulationError("lam must be positive")
    rng = _rng(seed, replicate)
    n = rng.poisson(lam * window.volume())
    return PointPattern(points=_uniform_in_window(window, int(n), rng), window=window)


def sim_binomial(window: Window, n: int, seed: int, replicate=0) -> PointPattern:
    """Exactly n i.i.d. uniform points in the window."""
    if n < 0:
        raise SimulationError("n must be nonnegative")
    rng = _rng(seed, replicate)
    return PointPattern(points=_uniform_in_window(window, int(n), rng), window=window)


def _padded_box_points(window: Window, pad: float, intensity: float, rng):
    """Poisson points on the bounding box grown by ``pad`` on every side.

    The grown box is a superset of the window dilated by B(0, pad), which is
    exactly the region whose points can influence the restriction to the
    window for interactions of range ``pad``.
    """
    lo, hi = window.bbox()
    lo = lo - pad
    hi = hi + pad
    vol = float(np.prod(hi - lo))
    n = int(rng.poisson(intensity * vol))
    return lo + rng.random((n, window.dim)) * (hi - lo)


def _min_mark_within(points: np.ndarray, marks: np.ndarray, radius: float) -> np.ndarray:
    """True where another point within ``radius`` has a smaller-or-equal mark."""
    n = len(points)
    killed = np.zeros(n, dtype=bool)
    block = max(1, int(2e6 // max(n, 1)))
    for s in range(0, n, block):
        e = min(n, s + block)
        diff = points[s:e, None, :] - points[None, :, :]
        d2 = (diff * diff).sum(axis=2)
        near = d2 <= radius * radius
        near[np.arange(s, e) - s, np.arange(s, e)] = False
        # ties lose on both sides, preserving the hard core
        beaten = near & (marks[None, :] <= marks[s:e, None])
        killed[s:e] = beaten.any(axis=1)
    return killed


def sim_matern2(
    window: Window, lam_p: float, R: float, seed: int, replicate=0
) -> PointPattern:
    """Matérn Model II hard-core process by dependent thinning.

    Primary Poisson points with intensity ``lam_p`` carry i.i.d. uniform
    marks; a primary survives iff no other primary within distance R has a
    smaller mark. Primaries are generated on the window dilated by R so the
    restriction to the window is distributionally stationary. The output has
    minimum pairwise distance >= R in every realisation.
    """
    if lam_p <= 0:
        raise SimulationError("lam_p must be positive")
    if R < 0:
        raise SimulationError("R must be nonnegative")
    rng = _rng(seed, replicate)
    prim = _padded_box_points(window, R, lam_p, rng)
    marks = rng.random(len(prim))
    if R == 0 or len(prim) < 2:
        survivors = prim
    else:
        survivors = prim[~_min_mark_within(prim, marks, R)]
    inside = window.contains(survivors) if len(survivors) else np.zeros(0, dtype=bool)
    return PointPattern(points=survivors[inside], window=window)


def _uniform_in_ball(dim: int, R: float, n: int, rng) -> np.ndarray:
    radii = R * rng.random(n) ** (1.0 / dim)
    if dim == 2:
        theta = rng.random(n) * 2.0 * math.pi
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    else:
        v = rng.normal(size=(n, dim))
        norms = np.sqrt((v * v).sum(axis=1))
        while np.any(norms == 0):  # measure zero, but keep it airtight
            bad = norms == 0
            v[bad] = rng.normal(size=(int(bad.sum()), dim))
            norms = np.sqrt((v * v).sum(axis=1))
        dirs = v / norms[:, None]
    return dirs * radii[:, None]


def sim_matern_cluster(
    window: Window,
    kappa: float,
    mu: float,
    R: float,
    seed: int,
    replicate=0,
    return_parents: bool = False,
):
    """Matérn cluster process: Poisson parents, Poisson(mu) offspring in a ball.

    Parents with intensity ``kappa`` are generated on the window dilated by
    R (parents outside never contribute offspring inside); each gets a
    Poisson(mu) number of offspring uniform in the radius-R ball around it.
    The returned pattern holds the offspring inside the window; parents are
    discarded unless ``return_parents`` is set, in which case
    ``(pattern, parents, parent_index)`` is returned with one parent index
    per retained offspring.
    """
    if kappa <= 0 or mu <= 0 or R <= 0:
        raise SimulationError("kappa, mu and R must be positive")
    rng = _rng(seed, replicate)
    parents = _padded_box_points(window, R, kappa, rng)
    counts = rng.poisson(mu, size=len(parents))
    total = int(counts.sum())
    parent_ids = np.repeat(np.arange(len(parents)), counts)
    offspring = parents[parent_ids] + _uniform_in_ball(window.dim, R, total, rng)
    inside = window.contains(offspring) if total else np.zeros(0, dtype=bool)
    pattern = PointPattern(points=offspring[inside], window=window)
    if return_parents:
        return pattern, parents, parent_ids[inside]
    return pattern


def matern2_retained_intensity(lam_p: float, R: float, dim: int) -> float:
    """Intensity of the Matérn II process thinned from Poisson(``lam_p``)."""
    if R == 0:
        return lam_p
    v = ball_volume(dim, R)
    return (1.0 - math.exp(-lam_p * v)) / v


def matern2_primary_intensity(target: float, R: float, dim: int) -> float:
    """Primary intensity whose Matérn II thinning retains ``target`` intensity.

    Raises
    ------
    SimulationError
        If the target is at or above the model's ceiling ``1 / v_d R^d``.
    """
    if R == 0:
        return target
    v = ball_volume(dim, R)
    if target * v >= 1.0:
        raise SimulationError(
            f"retained intensity {target} unreachable for R={R} in {dim}D; "
            f"Matérn II cannot exceed {1.0 / v:.4g}"
        )
    return -math.log1p(-target * v) / v


@dataclass(frozen=True)
class SimConfig:
    """One simulation setup: model, window, parameters and base seed."""

    model: str
    window: Window
    seed: int = 0
    lam: float | None = None  # poisson intensity
    n: int | None = None  # binomial count
    lam_p: float | None = None  # matern2 primary intensity
    R: float | None = None  # hard-core / cluster radius
    mu: float | None = None  # mean offspring per parent
    kappa: float | None = None  # parent intensity

    def __post_init__(self):
        if self.model not in MODELS:
            raise SimulationError(f"unknown model {self.model!r}")
        need = {
            "poisson": ("lam",),
            "binomial": ("n",),
            "matern2": ("lam_p", "R"),
            "matern-cluster": ("kappa", "mu", "R"),
        }[self.model]
        for name in need:
            if getattr(self, name) is None:
                raise SimulationError(f"model {self.model!r} needs parameter {name!r}")

    def sample(self, replicate=0) -> PointPattern:
        if self.model == "poisson":
            return sim_poisson(self.window, self.lam, self.seed, replicate)
        if self.model == "binomial":
            return sim_binomial(self.window, self.n, self.seed, replicate)
        if self.model == "matern2":
            return sim_matern2(self.window, self.lam_p, self.R, self.seed, replicate)
        return sim_matern_cluster(
            self.window, self.kappa, self.mu, self.R, self.seed, replicate
        )

    def to_dict(self) -> dict:
        d = {"model": self.model, "window": self.window.to_dict(), "seed": self.seed}
        for name in ("lam", "n", "lam_p", "R", "mu", "kappa"):
            v = getattr(self, name)
            if v is not None:
                d[name] = v
        return d
