"""
Comparison estimators built from the same ingredients.

``fit_regular_bayes`` restricts the Dirichlet model to equal-width bins and
picks the number of bins by marginal likelihood.  ``fit_klcv`` chooses an
irregular partition by Kullback-Leibler cross-validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .grid import GridMesh, build_mesh, default_kn, estimate_support
from .model import HistogramEstimate, PriorConfig, phi0_pairs

__all__ = [
    "RegularFit",
    "KLCVFit",
    "fit_klcv",
    "fit_regular_bayes",
    "import_external_results",
    "klcv_bin_score",
    "regular_criterion",
]


@dataclass
class RegularFit:
    estimate: HistogramEstimate
    criterion: np.ndarray  # criterion[k - 1] for k = 1..k_cap

    @property
    def k(self) -> int:
        return self.estimate.k


def _unit_data(data, support):
    x = np.asarray(data, dtype=float).ravel()
    lo, hi = support if support is not None else (None, None)
    transform = estimate_support(x, lo, hi)
    z = np.sort(np.clip(transform.to_unit(x), 0.0, 1.0))
    return z, transform


def regular_criterion(z_sorted, prior: PriorConfig, k: int, k_cap: int) -> float:
    """
    Log marginal likelihood of the ``k`` equal-bin histogram plus ``log p(k)``.

    There is one regular partition per ``k``, so no partition-count term
    enters.  ``p(k)`` is the k-prior normalized over ``1..k_cap``.
    """
    mesh = build_mesh(z_sorted, "regular", k)
    idx = np.arange(k + 1)
    n = mesh.n
    phi = math.fsum(phi0_pairs(mesh, prior, idx[:-1], idx[1:]))
    return phi + prior.log_pk(k, k_cap) + gammaln(prior.a) - gammaln(prior.a + n)


def fit_regular_bayes(data, prior: PriorConfig | None = None, k_cap: int | None = None, support=None) -> RegularFit:
    """
    Best equal-width histogram under the Dirichlet model.

    ``k_cap`` defaults to one less than the nominal irregular mesh size
    ``ceil(4 n / log(n)^2)``.
    """
    prior = prior or PriorConfig()
    z, transform = _unit_data(data, support)
    n = z.size
    if k_cap is None:
        k_cap = max(default_kn(n) - 1, 1)
    if k_cap < 1:
        raise ValueError(f"k_cap must be at least 1, got {k_cap}")
    crit = np.array([regular_criterion(z, prior, k, k_cap) for k in range(1, k_cap + 1)])
    k = int(np.argmax(crit)) + 1
    mesh = build_mesh(z, "regular", k)
    counts = np.diff(mesh.lower_counts)
    g = prior.g0_at(mesh.cuts)
    theta = (prior.a * np.diff(g) + counts) / (prior.a + n)
    est = HistogramEstimate(mesh.cuts, theta, transform, float(crit[k - 1]), "regular_bayes")
    return RegularFit(est, crit)


@dataclass
class KLCVFit:
    estimate: HistogramEstimate
    cut_indices: tuple
    score: float
    mesh: GridMesh


def klcv_bin_score(counts, widths) -> np.ndarray:
    """``N log(N - 1) - N log|I|`` per bin; ``-inf`` when ``N < 2``."""
    counts = np.asarray(counts, dtype=float)
    widths = np.asarray(widths, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = counts * np.log(counts - 1.0) - counts * np.log(widths)
    s = np.where(counts == 2, -2.0 * np.log(widths), s)
    return np.where(counts >= 2, s, -np.inf)


def _klcv_table(mesh: GridMesh, min_width: float) -> np.ndarray:
    size = mesh.size
    i, j = np.triu_indices(size + 1, k=1)
    counts = mesh.prefix_counts[j] - mesh.lower_counts[i]
    widths = mesh.cuts[j] - mesh.cuts[i]
    s = klcv_bin_score(counts, widths)
    s = np.where(widths > min_width, s, -np.inf)
    table = np.full((size + 1, size + 1), -np.inf)
    table[i, j] = s
    return table


def fit_klcv(data, grid: str = "quantile", k_n: int | None = None, support=None, min_width: float | None = None) -> KLCVFit:
    """
    Histogram maximizing the KL cross-validation criterion over a mesh.

    Every bin needs at least two observations and a width (on the unit
    scale) above ``min_width``, by default ``log(n)**1.5 / n``.  Bin
    probabilities are the empirical frequencies.  Among equal scores the
    earliest preceding cut wins at each DP stage.
    """
    z, transform = _unit_data(data, support)
    n = z.size
    mesh = build_mesh(z, grid, k_n or default_kn(n))
    if min_width is None:
        min_width = math.log(n) ** 1.5 / n
    table = _klcv_table(mesh, min_width)
    size = mesh.size
    best = np.full(size + 1, -np.inf)
    back = np.zeros(size + 1, dtype=np.intp)
    best[0] = 0.0
    for j in range(1, size + 1):
        cand = best[:j] + table[:j, j]
        i = int(np.argmax(cand))
        best[j], back[j] = cand[i], i
    if not np.isfinite(best[size]):
        raise ValueError("no partition satisfies the KLCV bin constraints")
    idx = [size]
    while idx[-1] != 0:
        idx.append(int(back[idx[-1]]))
    idx = tuple(reversed(idx))
    counts = np.array([mesh.count(a, b) for a, b in zip(idx, idx[1:])], dtype=float)
    est = HistogramEstimate(mesh.cuts[list(idx)], counts / n, transform, float(best[size]), "klcv")
    return KLCVFit(est, idx, float(best[size]), mesh)


def import_external_results(path):
    """Read externally computed risks (``method,density,n,loss,risk`` CSV)."""
    from .simulation import read_risk_csv

    return read_risk_csv(path)
