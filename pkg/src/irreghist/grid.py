"""
Candidate cut-point meshes and support rescaling.

All histogram fitting happens on the unit interval.  Data are first mapped
onto ``[0, 1]`` by an affine :class:`SupportTransform`, a mesh of candidate
cut points is built from the rescaled sample, and bin counts for any pair of
mesh indices are then read off a prefix-count array in O(1).

Bins follow the convention ``I_1 = [t_0, t_1]`` and ``I_j = (t_{j-1}, t_j]``
for ``j >= 2`` so that every point of ``[0, 1]`` lands in exactly one bin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "GridMesh",
    "SupportTransform",
    "build_mesh",
    "default_kn",
    "estimate_support",
    "read_data",
    "MESH_KINDS",
]

MESH_KINDS = ("regular", "quantile", "order_statistic")


class DataError(ValueError):
    """Raised for unusable input samples (empty, degenerate, non-numeric)."""


@dataclass(frozen=True)
class SupportTransform:
    """Affine map from ``[lo, hi]`` onto the unit interval."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise DataError("support endpoints must be finite")
        if not self.hi > self.lo:
            raise DataError(f"degenerate support [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def to_unit(self, x):
        return (np.asarray(x, dtype=float) - self.lo) / self.width

    def from_unit(self, z):
        return self.lo + np.asarray(z, dtype=float) * self.width


def estimate_support(data, lo: float | None = None, hi: float | None = None) -> SupportTransform:
    """
    Support of the histogram: the sample range unless overridden.

    Either endpoint can be fixed independently, e.g. ``lo=0`` gives the
    ``[0, x_(n)]`` support used for positive data.
    """
    x = np.asarray(data, dtype=float).ravel()
    if x.size < 2:
        raise DataError(f"need at least 2 observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DataError("data contain non-finite values")
    xmin, xmax = float(x.min()), float(x.max())
    if lo is None and hi is None and not xmax > xmin:
        raise DataError("all observations are equal; support has zero width")
    lo = xmin if lo is None else float(lo)
    hi = xmax if hi is None else float(hi)
    if xmin < lo or xmax > hi:
        raise DataError(f"data range [{xmin}, {xmax}] exceeds support [{lo}, {hi}]")
    return SupportTransform(lo, hi)


def default_kn(n: int) -> int:
    """Default mesh size ``ceil(4 n / log(n)^2)`` (natural log)."""
    if n < 2:
        raise ValueError(f"default mesh size needs n >= 2, got {n}")
    return int(math.ceil(4.0 * n / math.log(n) ** 2))


@dataclass(frozen=True, eq=False)
class GridMesh:
    """
    Ordered cut points on ``[0, 1]`` with prefix data counts.

    ``prefix_counts[i]`` is the number of observations ``<= cuts[i]``; the
    first entry therefore counts the points sitting exactly at 0, which
    belong to the first (closed) bin.
    """

    cuts: np.ndarray
    prefix_counts: np.ndarray
    n: int

    def __post_init__(self):
        cuts = np.asarray(self.cuts, dtype=float)
        counts = np.asarray(self.prefix_counts, dtype=np.int64)
        if cuts.ndim != 1 or cuts.size < 2:
            raise ValueError("a mesh needs at least the two endpoints 0 and 1")
        if cuts[0] != 0.0 or cuts[-1] != 1.0:
            raise ValueError("mesh endpoints must be exactly 0 and 1")
        if np.any(np.diff(cuts) <= 0):
            raise ValueError("mesh cuts must be strictly increasing")
        if counts.shape != cuts.shape or counts[-1] != self.n or np.any(np.diff(counts) < 0):
            raise ValueError("prefix counts inconsistent with cuts or n")
        cuts.flags.writeable = False
        counts.flags.writeable = False
        object.__setattr__(self, "cuts", cuts)
        object.__setattr__(self, "prefix_counts", counts)

    @classmethod
    def from_cuts(cls, cuts, z_sorted) -> "GridMesh":
        z = np.asarray(z_sorted, dtype=float)
        counts = np.searchsorted(z, cuts, side="right")
        return cls(np.asarray(cuts, dtype=float), counts, int(z.size))

    @property
    def size(self) -> int:
        """Effective mesh size: the number of elementary intervals."""
        return self.cuts.size - 1

    @property
    def lower_counts(self) -> np.ndarray:
        """Prefix counts to subtract at a left endpoint (0 at index 0)."""
        out = self.prefix_counts.copy()
        out[0] = 0
        return out

    def count(self, i: int, j: int) -> int:
        """Number of observations in the bin from cut ``i`` to cut ``j``."""
        lower = 0 if i == 0 else self.prefix_counts[i]
        return int(self.prefix_counts[j] - lower)

    def submesh(self, indices) -> "GridMesh":
        """Mesh restricted to the given cut indices (must include both ends)."""
        idx = np.asarray(indices, dtype=np.intp)
        if idx[0] != 0 or idx[-1] != self.size:
            raise ValueError("sub-mesh must keep both endpoints")
        return GridMesh(self.cuts[idx], self.prefix_counts[idx], self.n)

    def to_json(self) -> str:
        return json.dumps(
            {"cuts": self.cuts.tolist(), "prefix_counts": self.prefix_counts.tolist(), "n": self.n}
        )

    @classmethod
    def from_json(cls, text: str) -> "GridMesh":
        obj = json.loads(text)
        return cls(np.asarray(obj["cuts"]), np.asarray(obj["prefix_counts"]), int(obj["n"]))


def _empirical_quantile(z_sorted: np.ndarray, j: np.ndarray, k: int) -> np.ndarray:
    # smallest order statistic with rank >= ceil(j n / k), integer arithmetic
    n = z_sorted.size
    rank = -(-(j * n) // k)
    return z_sorted[np.maximum(rank, 1) - 1]


def build_mesh(z, kind: str = "quantile", k_n: int | None = None) -> GridMesh:
    """
    Build the candidate mesh for rescaled data ``z`` in ``[0, 1]``.

    Parameters
    ----------
    z : array_like
        Rescaled sample.
    kind : {'regular', 'quantile', 'order_statistic'}
        ``regular`` gives ``k_n`` equal bins; ``quantile`` puts cuts at the
        empirical ``j/k_n`` quantiles; ``order_statistic`` uses midpoints
        between consecutive distinct order statistics, thinned uniformly to
        at most ``k_n - 1`` interior cuts.
    k_n : int, optional
        Nominal number of elementary intervals; defaults to
        :func:`default_kn`.  Repeated quantiles collapse, so the effective
        mesh size can be smaller.
    """
    z = np.sort(np.asarray(z, dtype=float).ravel())
    if z.size and (z[0] < 0.0 or z[-1] > 1.0):
        raise ValueError("rescaled data must lie in [0, 1]")
    if k_n is None:
        k_n = default_kn(z.size)
    if k_n < 1:
        raise ValueError(f"k_n must be positive, got {k_n}")

    if kind == "regular":
        cuts = np.arange(k_n + 1) / k_n
    elif kind == "quantile":
        if z.size == 0:
            raise ValueError("quantile mesh needs data")
        interior = _empirical_quantile(z, np.arange(1, k_n), k_n)
        cuts = _with_endpoints(interior)
    elif kind == "order_statistic":
        distinct = np.unique(z)
        mids = 0.5 * (distinct[:-1] + distinct[1:])
        if mids.size > k_n - 1:
            pick = np.unique(np.round(np.linspace(0, mids.size - 1, k_n - 1)).astype(np.intp))
            mids = mids[pick]
        cuts = _with_endpoints(mids)
    else:
        raise ValueError(f"unknown mesh kind {kind!r}; expected one of {MESH_KINDS}")
    return GridMesh.from_cuts(cuts, z)


def _with_endpoints(interior: np.ndarray) -> np.ndarray:
    interior = np.unique(interior)
    interior = interior[(interior > 0.0) & (interior < 1.0)]
    return np.concatenate(([0.0], interior, [1.0]))


def read_data(path) -> np.ndarray:
    """Read a newline-delimited numeric file; blank lines are skipped."""
    values = []
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise DataError(f"{path}:{lineno}: not a number: {line!r}") from None
    return np.asarray(values, dtype=float)
