"""
Losses between a true density and a fitted histogram.

Integrals are split into panels on which both functions are smooth: the
histogram breaks, the density's breakpoints and modes, and a set of its
quantiles.  Each panel gets a 20-node Gauss-Legendre rule.  Panels on the
side of an infinite peak are integrated in the variable ``u = |x - s|**(1/4)``
so the singularity at ``s`` does not spoil the rule.  Mass of ``f0`` outside
the histogram support is taken from the cdf.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import xlogy

from .densities import INF_LEFT, TestDensity, plateau_modes
from .model import HistogramEstimate
from .quadrature import DEFAULT_ORDER, panel_integrals

__all__ = [
    "LOSSES",
    "extract_modes",
    "hellinger",
    "kl_loss",
    "l2_loss",
    "loss",
    "pid_loss",
]

LOSSES = ("hellinger", "l2", "kl", "pid")


def _panels(f0: TestDensity, lo: float, hi: float, breaks=()):
    """Panel edges on ``[lo, hi]``, constant-height index and singular anchors."""
    pts = [lo, hi, *breaks, *f0.breakpoints, *f0.resolution_points]
    pts += [m.location for m in f0.modes]
    pts += [s for s in f0.support if np.isfinite(s)]
    edges = np.unique(np.asarray(pts, dtype=float))
    edges = edges[(edges >= lo) & (edges <= hi)]

    npan = edges.size - 1
    anchor_l = np.full(npan, np.nan)
    anchor_r = np.full(npan, np.nan)
    peaks = [m for m in f0.modes if m.infinite]
    if peaks:
        mids = 0.5 * (edges[:-1] + edges[1:])
        locs = np.array([m.location for m in peaks])
        nearest = np.argmin(np.abs(mids[:, None] - locs[None, :]), axis=1)
        for p, m in enumerate(peaks):
            sel = nearest == p
            if m.kind == INF_LEFT:
                sel &= edges[:-1] >= m.location
                anchor_l[sel] = m.location
            else:
                sel &= edges[1:] <= m.location
                anchor_r[sel] = m.location
    return edges, anchor_l, anchor_r


def _integrate(f0, func, lo, hi, breaks=(), order=DEFAULT_ORDER, heights=None):
    """
    Sum over panels of ``func(x, h)`` where ``h`` is the histogram height on
    each panel (``heights`` is a callable of the panel midpoints).
    """
    if not hi > lo:
        return 0.0
    edges, al, ar = _panels(f0, lo, hi, breaks)
    mids = 0.5 * (edges[:-1] + edges[1:])
    h = np.zeros(mids.size) if heights is None else np.asarray(heights(mids), dtype=float)
    vals = panel_integrals(lambda x: func(x, h[:, None]), edges, order, al, ar)
    return math.fsum(vals)


def _outside_mass(f0: TestDensity, lo: float, hi: float) -> float:
    return float(f0.cdf(lo)) + float(1.0 - f0.cdf(hi))


def _hellinger_hist(e1: HistogramEstimate, e2: HistogramEstimate) -> float:
    # both piecewise constant: exact sum over the merged breaks
    edges = np.union1d(e1.breaks, e2.breaks)
    mids = 0.5 * (edges[:-1] + edges[1:])
    w = np.diff(edges)
    sq = (np.sqrt(e1.pdf(mids)) - np.sqrt(e2.pdf(mids))) ** 2
    return math.sqrt(max(math.fsum(sq * w), 0.0))


def hellinger(f0, est: HistogramEstimate, order: int = DEFAULT_ORDER) -> float:
    """
    Hellinger distance ``(int (sqrt f0 - sqrt f)^2)^(1/2)``, in ``[0, sqrt 2]``.

    ``f0`` is a :class:`TestDensity` or another :class:`HistogramEstimate`.
    """
    if isinstance(f0, HistogramEstimate):
        return _hellinger_hist(f0, est)
    lo, hi = est.transform.lo, est.transform.hi

    def integrand(x, h):
        return (np.sqrt(f0.pdf(x)) - np.sqrt(h)) ** 2

    inside = _integrate(f0, integrand, lo, hi, est.breaks, order, est.pdf)
    sq = inside + _outside_mass(f0, lo, hi)
    return math.sqrt(max(sq, 0.0))


def l2_loss(f0: TestDensity, est: HistogramEstimate, order: int = DEFAULT_ORDER) -> float:
    """
    L2 distance ``(int (f0 - f)^2)^(1/2)``.

    Unbounded supports are cut at the ``1e-10`` and ``1 - 1e-10`` quantiles of
    ``f0``; the dropped part is at most ``max f0 * 2e-10``.
    """
    if not f0.square_integrable:
        raise ValueError(f"{f0.name} is not square integrable; L2 loss is undefined")
    lo, hi = est.transform.lo, est.transform.hi
    flo, fhi = f0.finite_support
    sq = lambda x, h: (f0.pdf(x) - h) ** 2  # noqa: E731
    total = _integrate(f0, sq, lo, hi, est.breaks, order, est.pdf)
    total += _integrate(f0, sq, flo, min(lo, fhi), (), order)
    total += _integrate(f0, sq, max(hi, flo), fhi, (), order)
    return math.sqrt(max(total, 0.0))


def kl_loss(f0: TestDensity, est: HistogramEstimate, order: int = DEFAULT_ORDER) -> float:
    """
    Kullback-Leibler divergence ``int f0 log(f0 / f)``.

    Returns ``inf`` when ``f0`` puts mass where the histogram is zero, which
    includes any ``f0`` with unbounded support.
    """
    lo, hi = est.transform.lo, est.transform.hi
    if _outside_mass(f0, lo, hi) > 0.0 or np.any(est.heights <= 0.0):
        return math.inf

    def integrand(x, h):
        f = f0.pdf(x)
        return xlogy(f, f) - xlogy(f, h)

    return max(_integrate(f0, integrand, lo, hi, est.breaks, order, est.pdf), 0.0)


def extract_modes(est: HistogramEstimate) -> list:
    """
    Modes of a histogram on the original scale.

    Runs of equal-height bins count as one; a run is a mode when every
    neighbouring run is strictly lower, and the mode sits at its midpoint.
    """
    return plateau_modes(est.breaks, est.heights)


def pid_loss(f0: TestDensity, tolerances, est: HistogramEstimate) -> int:
    """
    Spurious plus unidentified peaks.

    With ``l0`` true modes, ``l`` histogram modes and ``C`` the number of true
    modes that have some histogram mode within their tolerance, the loss is
    ``(l0 - C) + (l - C)``.
    """
    modes = extract_modes(est)
    hit = sum(1 for tol in tolerances if any(tol.matches(s) for s in modes))
    return (len(tolerances) - hit) + (len(modes) - hit)


def loss(name: str, f0: TestDensity, est: HistogramEstimate, tolerances=None) -> float:
    """Dispatch by loss name (one of :data:`LOSSES`)."""
    if name == "hellinger":
        return hellinger(f0, est)
    if name == "l2":
        return l2_loss(f0, est)
    if name == "kl":
        return kl_loss(f0, est)
    if name == "pid":
        if tolerances is None:
            from .densities import tolerances as _tol

            tolerances = _tol(f0)
        return float(pid_loss(f0, tolerances, est))
    raise ValueError(f"unknown loss {name!r}; expected one of {LOSSES}")
