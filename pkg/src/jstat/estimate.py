"""Distribution-function estimators for F, G and the three J variants.

The window-based J estimate is the ratio of the plain empirical distance
distributions, with no edge correction:

    J_W(r) = (1 - G_uncorr(r)) / (1 - F_uncorr(r)),   defined while F < 1.

For comparison the reduced-sample (border) and Kaplan-Meier corrected
estimators are provided; each pairs an F with a G estimate and feeds the
same ratio. All estimates are tabulated on a shared, strictly increasing
r grid starting at 0 so ratios and envelopes are pointwise. Undefined
values are masked, never NaN-propagated, and serialize as empty CSV cells.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import EvaluationGrid, Window, make_grid
from .patterns import (
    EMPTY_SPACE,
    NN,
    DistanceSet,
    PointPattern,
    empty_space_distances,
    max_distances,
    nn_distances,
)

UNCORRECTED = "uncorrected"
REDUCED_SAMPLE = "rs"
KAPLAN_MEIER = "km"

# column order of the estimate CSV
CSV_COLUMNS = ("F_uncorr", "G_uncorr", "J_W", "F_rs", "G_rs", "J_rs", "F_km", "G_km", "J_km")


class EstimationError(ValueError):
    """Estimator preconditions violated (tags, grids, sample sizes)."""


@dataclass(frozen=True, eq=False)
class RGrid:
    """Strictly increasing distance abscissae starting at 0."""

    values: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or len(r) < 2:
            raise EstimationError("r grid needs at least two values")
        if r[0] != 0.0 or not np.all(np.diff(r) > 0) or not np.all(np.isfinite(r)):
            raise EstimationError("r grid must start at 0 and increase strictly")
        object.__setattr__(self, "values", r)

    @classmethod
    def regular(cls, r_max: float, count: int = 512) -> "RGrid":
        return cls(np.linspace(0.0, float(r_max), count))

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, RGrid):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


@dataclass(eq=False)
class FunctionEstimate:
    """A tabulated estimate of F, G or J on an r grid.

    ``values`` holds NaN wherever ``defined`` is False. ``estimator`` is one
    of ``uncorrected``, ``rs``, ``km``; ``target`` is ``F``, ``G`` or ``J``.
    """

    rgrid: RGrid
    values: np.ndarray
    defined: np.ndarray
    estimator: str
    target: str
    r_fmax: float | None = None
    r_gmax: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        d = np.asarray(self.defined, dtype=bool)
        if v.shape != (len(self.rgrid),) or d.shape != v.shape:
            raise EstimationError("values/defined must match the r grid length")
        v = v.copy()
        v[~d] = np.nan
        self.values = v
        self.defined = d


def _edf(values: np.ndarray, rgrid: RGrid) -> np.ndarray:
    s = np.sort(values)
    # +inf entries (empty pattern) never count as <= r
    return np.searchsorted(s, rgrid.values, side="right") / len(values)


def estimate_F_uncorrected(es: DistanceSet, rgrid: RGrid) -> FunctionEstimate:
    """Plain EDF of the grid empty-space distances (no edge correction).

    This is the dilation coverage fraction sampled on the r grid; with the
    pattern restricted to the window it underestimates the true F.
    """
    if es.kind != EMPTY_SPACE:
        raise EstimationError("estimate_F_uncorrected needs empty-space distances")
    vals = _edf(es.values, rgrid)
    finite = es.values[np.isfinite(es.values)]
    r_fmax = float(finite.max()) if len(finite) else None
    return FunctionEstimate(
        rgrid=rgrid,
        values=vals,
        defined=np.ones(len(rgrid), dtype=bool),
        estimator=UNCORRECTED,
        target="F",
        r_fmax=r_fmax,
    )


def estimate_G_uncorrected(nn: DistanceSet, rgrid: RGrid) -> FunctionEstimate:
    """Plain EDF of nearest-neighbour distances, denominator the observed count."""
    if nn.kind != NN:
        raise EstimationError("estimate_G_uncorrected needs nearest-neighbour distances")
    if len(nn.values) < 2:
        raise EstimationError("G estimation needs at least two points")
    vals = _edf(nn.values, rgrid)
    return FunctionEstimate(
        rgrid=rgrid,
        values=vals,
        defined=np.ones(len(rgrid), dtype=bool),
        estimator=UNCORRECTED,
        target="G",
        r_gmax=float(nn.values.max()),
    )


def _require_censor(ds: DistanceSet, what: str) -> np.ndarray:
    if ds.censor is None:
        raise EstimationError(f"{what} needs censor (boundary) distances")
    return ds.censor


def _reduced_sample(values, censor, rgrid: RGrid):
    r = rgrid.values
    c_sorted = np.sort(censor)
    m = len(values)
    denom = m - np.searchsorted(c_sorted, r, side="left")
    # points whose event can ever be observed uncensored
    obs = values <= censor
    ev_sorted = np.sort(values[obs])
    cen_obs_sorted = np.sort(censor[obs])
    numer = np.searchsorted(ev_sorted, r, side="right") - np.searchsorted(
        cen_obs_sorted, r, side="left"
    )
    defined = denom > 0
    vals = np.full(len(r), np.nan)
    vals[defined] = numer[defined] / denom[defined]
    return vals, defined


def estimate_F_rs(es: DistanceSet, rgrid: RGrid) -> FunctionEstimate:
    """Reduced-sample (border method) estimate of F.

    At distance r only grid points at least r from the boundary are
    eligible: F_rs(r) = #{dist <= r and censor >= r} / #{censor >= r},
    masked where the eligible set is empty.
    """
    censor = _require_censor(es, "estimate_F_rs")
    if es.kind != EMPTY_SPACE:
        raise EstimationError("estimate_F_rs needs empty-space distances")
    vals, defined = _reduced_sample(es.values, censor, rgrid)
    finite = es.values[np.isfinite(es.values)]
    return FunctionEstimate(
        rgrid=rgrid,
        values=vals,
        defined=defined,
        estimator=REDUCED_SAMPLE,
        target="F",
        r_fmax=float(finite.max()) if len(finite) else None,
    )


def estimate_G_rs(nn: DistanceSet, rgrid: RGrid) -> FunctionEstimate:
    """Reduced-sample (border method) estimate of G over the data points."""
    censor = _require_censor(nn, "estimate_G_rs")
    if nn.kind != NN:
        raise EstimationError("estimate_G_rs needs nearest-neighbour distances")
    if len(nn.values) < 2:
        raise EstimationError("G estimation needs at least two points")
    vals, defined = _reduced_sample(nn.values, censor, rgrid)
    return FunctionEstimate(
        rgrid=rgrid,
        values=vals,
        defined=defined,
        estimator=REDUCED_SAMPLE,
        target="G",
        r_gmax=float(nn.values.max()),
    )


def _kaplan_meier_curve(values, censor):
    """Event times and cumulative values of the product-limit estimator.

    Observations are t = min(value, censor) with an event when the value is
    uncensored; ties are grouped. Within a censoring-free run of event times
    the product telescopes to a single integer ratio, so before the first
    censored observation the values coincide bit for bit with the plain EDF.
    """
    t = np.minimum(values, censor)
    event = values <= censor
    m = len(t)
    if m == 0:
        return np.empty(0), np.empty(0), np.nan, False
    uniq, inv = np.unique(t, return_inverse=True)
    d = np.bincount(inv, weights=event.astype(float)).astype(np.int64)
    tot = np.bincount(inv)
    c = tot - d
    at_risk = m - (np.cumsum(tot) - tot)
    # segment boundaries: any time with censored observations
    boundary = c > 0
    seg = np.concatenate(([0], np.cumsum(boundary)))[:-1]
    # at-risk at each segment start
    seg_first = np.searchsorted(seg, np.arange(seg[-1] + 1), side="left")
    a_seg = at_risk[seg_first]
    after_events = at_risk - d
    # prefix product of closed-segment factors
    b_idx = np.nonzero(boundary)[0]
    prefix = np.concatenate(([1.0], np.cumprod(after_events[b_idx] / a_seg[seg[b_idx]])))
    surv = prefix[seg] * (after_events / a_seg[seg])
    cum = np.where(
        seg == 0, (m - after_events) / m, 1.0 - surv
    )
    ev = d > 0
    # a curve that reaches survival 0 stays there past the last observation
    closed = bool(ev.any()) and surv[np.nonzero(ev)[0][-1]] == 0.0
    return uniq[ev], cum[ev], float(uniq[-1]), closed


def _km(values, censor, rgrid: RGrid):
    times, cum, t_max, closed = _kaplan_meier_curve(values, censor)
    r = rgrid.values
    if closed:
        defined = np.ones(len(r), dtype=bool)
    elif np.isfinite(t_max):
        defined = r <= t_max
    else:
        defined = np.zeros(len(r), dtype=bool)
    vals = np.zeros(len(r))
    if len(times):
        idx = np.searchsorted(times, r, side="right") - 1
        hit = idx >= 0
        vals[hit] = cum[idx[hit]]
    vals = np.where(defined, vals, np.nan)
    return vals, defined


def estimate_F_km(es: DistanceSet, rgrid: RGrid) -> FunctionEstimate:
    """Kaplan-Meier estimate of F with the boundary distance as censor.

    Product-limit over the censored sample (t, delta) with
    t = min(dist, censor) and an event when dist <= censor; reduces exactly
    to the uncorrected EDF when nothing is censored. Masked beyond the
    largest observation.
    """
    censor = _require_censor(es, "estimate_F_km")
    if es.kind != EMPTY_SPACE:
        raise EstimationError("estimate_F_km needs empty-space distances")
    vals, defined = _km(es.values, censor, rgrid)
    finite = es.values[np.isfinite(es.values)]
    return FunctionEstimate(
        rgrid=rgrid,
        values=vals,
        defined=defined,
        estimator=KAPLAN_MEIER,
        target="F",
        r_fmax=float(finite.max()) if len(finite) else None,
    )


def estimate_G_km(nn: DistanceSet, rgrid: RGrid) -> FunctionEstimate:
    """Kaplan-Meier estimate of G over the data points."""
    censor = _require_censor(nn, "estimate_G_km")
    if nn.kind != NN:
        raise EstimationError("estimate_G_km needs nearest-neighbour distances")
    if len(nn.values) < 2:
        raise EstimationError("G estimation needs at least two points")
    vals, defined = _km(nn.values, censor, rgrid)
    return FunctionEstimate(
        rgrid=rgrid,
        values=vals,
        defined=defined,
        estimator=KAPLAN_MEIER,
        target="G",
        r_gmax=float(nn.values.max()),
    )


def estimate_J_variant(Fhat: FunctionEstimate, Ghat: FunctionEstimate) -> FunctionEstimate:
    """J = (1 - G) / (1 - F) wherever both inputs are defined and F < 1.

    The F and G estimates must come from the same estimator family and share
    the r grid.
    """
    if Fhat.target != "F" or Ghat.target != "G":
        raise EstimationError("estimate_J_variant needs one F and one G estimate")
    if Fhat.estimator != Ghat.estimator:
        raise EstimationError(
            f"estimator tag mismatch: {Fhat.estimator!r} vs {Ghat.estimator!r}"
        )
    if Fhat.rgrid != Ghat.rgrid:
        raise EstimationError("F and G estimates must share one r grid")
    defined = Fhat.defined & Ghat.defined & (np.nan_to_num(Fhat.values, nan=1.0) < 1.0)
    vals = np.full(len(Fhat.rgrid), np.nan)
    vals[defined] = (1.0 - Ghat.values[defined]) / (1.0 - Fhat.values[defined])
    return FunctionEstimate(
        rgrid=Fhat.rgrid,
        values=vals,
        defined=defined,
        estimator=Fhat.estimator,
        target="J",
        r_fmax=Fhat.r_fmax,
        r_gmax=Ghat.r_gmax,
    )


def estimate_JW(
    pattern: PointPattern, grid: EvaluationGrid, rgrid: RGrid
) -> FunctionEstimate:
    """The uncorrected window-based J estimate for one pattern.

    Defined exactly while the uncorrected F is below 1, i.e. for
    r < r_Fmax; equals 0 on [r_Gmax, r_Fmax) when r_Gmax < r_Fmax.
    """
    if pattern.n < 2:
        raise EstimationError("J estimation needs at least two points")
    es = empty_space_distances(pattern, grid)
    nn = nn_distances(pattern)
    F = estimate_F_uncorrected(es, rgrid)
    G = estimate_G_uncorrected(nn, rgrid)
    return estimate_J_variant(F, G)


def default_rgrid_for(pattern: PointPattern, grid: EvaluationGrid, count: int = 512) -> RGrid:
    """Default r grid: 0 to the 0.99 empirical quantile of empty-space distances."""
    es = empty_space_distances(pattern, grid)
    finite = es.values[np.isfinite(es.values)]
    if len(finite) == 0:
        raise EstimationError("cannot size an r grid from an empty pattern")
    return RGrid.regular(float(np.quantile(finite, 0.99)), count)


@dataclass(eq=False)
class EstimateTable:
    """All estimator columns for one pattern on a shared r grid."""

    rgrid: RGrid
    columns: dict[str, FunctionEstimate]
    r_fmax: float | None = None
    r_gmax: float | None = None

    @classmethod
    def compute(
        cls,
        pattern: PointPattern,
        grid: EvaluationGrid | None = None,
        rgrid: RGrid | None = None,
        grid_target: int | None = None,
    ) -> "EstimateTable":
        """Estimate every variant; with n < 2 only the F columns are kept."""
        if grid is None:
            grid = make_grid(pattern.window, grid_target)
        if rgrid is None:
            rgrid = default_rgrid_for(pattern, grid)
        es = empty_space_distances(pattern, grid, with_censor=True)
        cols: dict[str, FunctionEstimate] = {
            "F_uncorr": estimate_F_uncorrected(es, rgrid),
            "F_rs": estimate_F_rs(es, rgrid),
            "F_km": estimate_F_km(es, rgrid),
        }
        r_fmax = cols["F_uncorr"].r_fmax
        r_gmax = None
        if pattern.n >= 2:
            nn = nn_distances(pattern, with_censor=True)
            cols["G_uncorr"] = estimate_G_uncorrected(nn, rgrid)
            cols["G_rs"] = estimate_G_rs(nn, rgrid)
            cols["G_km"] = estimate_G_km(nn, rgrid)
            cols["J_W"] = estimate_J_variant(cols["F_uncorr"], cols["G_uncorr"])
            cols["J_rs"] = estimate_J_variant(cols["F_rs"], cols["G_rs"])
            cols["J_km"] = estimate_J_variant(cols["F_km"], cols["G_km"])
            r_gmax = cols["G_uncorr"].r_gmax
        else:
            warnings.warn(
                "pattern has fewer than 2 points; G and J columns are undefined",
                stacklevel=2,
            )
        return cls(rgrid=rgrid, columns=cols, r_fmax=r_fmax, r_gmax=r_gmax)

    def to_csv(self, path):
        r = self.rgrid.values
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("r",) + CSV_COLUMNS)
            for i in range(len(r)):
                row = [repr(float(r[i]))]
                for name in CSV_COLUMNS:
                    est = self.columns.get(name)
                    if est is not None and est.defined[i]:
                        row.append(repr(float(est.values[i])))
                    else:
                        row.append("")
                w.writerow(row)
