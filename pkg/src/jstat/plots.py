"""Figure rendering for the CLI report paths.

Every figure is rendered from the same data that goes into the delimited
output files, so a saved PNG always matches its CSV sibling.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .estimate import EstimateTable
from .inference import Envelope, PowerCell
from .patterns import PointPattern

_J_STYLE = {"J_W": "-", "J_rs": "--", "J_km": ":"}


def plot_pattern(pattern: PointPattern):
    fig, ax = plt.subplots(figsize=(6, 6))
    if pattern.dim != 2:
        raise ValueError("pattern plotting is 2D only")
    for lo, hi in pattern.window.components:
        ax.add_patch(
            plt.Rectangle(lo, hi[0] - lo[0], hi[1] - lo[1], fill=False, lw=1.2, ec="k")
        )
    if pattern.n:
        ax.plot(pattern.points[:, 0], pattern.points[:, 1], "k.", ms=4)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"n = {pattern.n}")
    fig.tight_layout()
    return fig


def plot_estimates(table: EstimateTable):
    fig, (ax_fg, ax_j) = plt.subplots(1, 2, figsize=(11, 4.5))
    r = table.rgrid.values
    for name in ("F_uncorr", "F_rs", "F_km", "G_uncorr", "G_rs", "G_km"):
        est = table.columns.get(name)
        if est is None:
            continue
        ls = "-" if name.startswith("F") else "--"
        ax_fg.plot(r[est.defined], est.values[est.defined], ls, lw=1, label=name)
    ax_fg.set_xlabel("r")
    ax_fg.set_ylabel("EDF")
    ax_fg.legend(fontsize=8)
    for name, ls in _J_STYLE.items():
        est = table.columns.get(name)
        if est is None:
            continue
        ax_j.plot(r[est.defined], est.values[est.defined], ls, lw=1.2, label=name)
    ax_j.axhline(1.0, color="0.6", lw=0.8)
    ax_j.set_xlabel("r")
    ax_j.set_ylabel("J(r)")
    ax_j.legend(fontsize=8)
    fig.tight_layout()
    return fig


def plot_envelope(env: Envelope):
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    r = env.rgrid.values
    ok = env.env_defined
    ax.fill_between(r[ok], env.lo[ok], env.hi[ok], color="0.85", label=f"{env.n_sims}-sim envelope")
    obs = env.observed_defined
    ax.plot(r[obs], env.observed[obs], "k-", lw=1.4, label=f"observed ({env.variant})")
    ax.axhline(1.0, color="0.6", lw=0.8)
    ax.set_xlabel("r")
    ax.set_ylabel("J(r)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def plot_power(cells: list[PowerCell]):
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    by_mu: dict = {}
    for c in cells:
        by_mu.setdefault(c.params.get("mu"), []).append(c)
    for mu, group in sorted(by_mu.items(), key=lambda kv: (kv[0] is not None, kv[0])):
        group = sorted(group, key=lambda c: c.params.get("R", 0.0))
        x = [c.params.get("R", 0.0) for c in group]
        y = [c.reject_two_sided for c in group]
        label = "two-sided" if mu is None else f"two-sided, mu={mu:g}"
        ax.plot(x, y, "o-", lw=1.2, label=label)
    ax.axhline(0.05, color="0.6", lw=0.8)
    ax.set_xlabel("R")
    ax.set_ylabel("rejection proportion")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def save(fig, path):
    fig.savefig(path, dpi=150)
    plt.close(fig)
