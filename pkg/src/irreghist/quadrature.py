"""Composite Gauss-Legendre quadrature over explicit panels."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

DEFAULT_ORDER = 20


@lru_cache(maxsize=16)
def _rule(order: int):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    # map from [-1, 1] to [0, 1]
    return 0.5 * (nodes + 1.0), 0.5 * weights


def panel_integrals(func, edges, order: int = DEFAULT_ORDER, anchor_left=None, anchor_right=None):
    """
    Integral of ``func`` over each panel ``[edges[i], edges[i+1]]``.

    ``func`` is called once on a 2-D array of nodes.  A panel with a finite
    ``anchor_left[i] = s <= a`` is integrated in ``u`` with ``x = s + u**4``
    (``anchor_right[i] = s >= b`` uses ``x = s - u**4``).  This removes
    singularities like ``|x - s|**(-1/2)`` at or near the anchor.
    """
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1, None], edges[1:, None]
    t, wt = _rule(order)
    npan = a.shape[0]
    sl = np.full(npan, np.nan) if anchor_left is None else np.asarray(anchor_left, float)
    sr = np.full(npan, np.nan) if anchor_right is None else np.asarray(anchor_right, float)
    use_l, use_r = np.isfinite(sl), np.isfinite(sr)
    if np.any(use_l & use_r):
        raise ValueError("a panel can have only one anchor")

    x = a + (b - a) * t
    jac = np.broadcast_to((b - a) * wt, x.shape).copy()
    for use, s, sign in ((use_l, sl, 1.0), (use_r, sr, -1.0)):
        if not np.any(use):
            continue
        sa = s[use, None]
        # distances from the anchor to the panel ends, in the u variable
        da, db = sign * (a[use] - sa), sign * (b[use] - sa)
        if np.any(np.minimum(da, db) < 0):
            raise ValueError("anchor lies inside a panel")
        u0, u1 = np.minimum(da, db) ** 0.25, np.maximum(da, db) ** 0.25
        u = u0 + (u1 - u0) * t
        x[use] = sa + sign * u**4
        jac[use] = 4.0 * u**3 * (u1 - u0) * wt
    vals = np.asarray(func(x), dtype=float)
    return np.sum(vals * jac, axis=1)


def integrate(func, edges, order: int = DEFAULT_ORDER, **kwargs) -> float:
    """Total of :func:`panel_integrals`."""
    return float(np.sum(panel_integrals(func, edges, order, **kwargs)))


def sign_change_points(func, lo: float, hi: float, samples: int = 65) -> list:
    """Roots of a continuous ``func`` on ``[lo, hi]`` bracketed on a sample grid."""
    xs = np.linspace(lo, hi, samples)
    vals = np.asarray(func(xs), dtype=float)
    roots = []
    for i in range(samples - 1):
        va, vb = vals[i], vals[i + 1]
        if va == 0.0:
            if 0 < i:
                roots.append(xs[i])
        elif va * vb < 0:
            roots.append(brentq(lambda s: float(func(np.asarray(s))), xs[i], xs[i + 1], xtol=1e-14))
    return roots
