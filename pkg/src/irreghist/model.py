"""
The random irregular histogram model.

Conditional on a partition with ``k`` bins the bin probabilities carry a
Dirichlet prior centred on a reference density ``g0``; integrating them out
gives a log posterior for the partition that splits into a per-bin part
(``phi0`` summed over bins) and a part depending only on ``k``
(:func:`log_psi`).  The per-bin additivity is what makes exact dynamic
programming over the mesh possible.
"""

from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

from .grid import GridMesh, SupportTransform

__all__ = [
    "HistogramEstimate",
    "KPrior",
    "Partition",
    "PriorConfig",
    "enumerate_partitions",
    "evaluate_density",
    "log_posterior_unnorm",
    "log_psi",
    "model_average_density",
    "phi0",
    "phi0_matrix",
    "posterior_mean_theta",
    "MAX_ENUMERATION_SIZE",
]

MAX_ENUMERATION_SIZE = 20


class ModelError(ValueError):
    """Raised for invalid prior configurations or partitions."""


@dataclass(frozen=True)
class KPrior:
    """
    Prior on the number of bins, supported on ``{1, ..., k_n}``.

    ``kind`` is ``'uniform'``, ``'power'`` (mass proportional to
    ``1/k**param``) or ``'poisson'`` (Poisson(param) restricted to
    ``k >= 1`` and truncated at ``k_n``).
    """

    kind: str = "uniform"
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "power", "poisson"):
            raise ModelError(f"unknown prior on k: {self.kind!r}")
        if self.kind == "poisson" and not self.param > 0:
            raise ModelError("poisson prior needs a positive rate")

    @classmethod
    def parse(cls, spec: "str | KPrior") -> "KPrior":
        """Parse ``'uniform'``, ``'power:2'`` / ``'power(2)'`` or ``'poisson:1'``."""
        if isinstance(spec, KPrior):
            return spec
        m = re.fullmatch(r"\s*(\w+)\s*(?:[:(]\s*([-+0-9.eE]+)\s*\)?)?\s*", spec)
        if not m:
            raise ModelError(f"cannot parse prior on k: {spec!r}")
        kind, param = m.group(1).lower(), m.group(2)
        if kind == "uniform":
            return cls("uniform", 0.0)
        if param is None:
            raise ModelError(f"prior {kind!r} needs a parameter, e.g. '{kind}:1'")
        return cls(kind, float(param))

    @property
    def label(self) -> str:
        if self.kind == "uniform":
            return "uniform"
        return f"{self.kind}:{self.param:g}"

    def log_pmf(self, k_n: int) -> np.ndarray:
        """Normalized log masses for ``k = 1..k_n`` (index 0 is k = 1)."""
        return _log_pmf(self.kind, self.param, int(k_n))


@lru_cache(maxsize=256)
def _log_pmf(kind: str, param: float, k_n: int) -> np.ndarray:
    k = np.arange(1, k_n + 1, dtype=float)
    if kind == "uniform":
        logw = np.zeros(k_n)
    elif kind == "power":
        logw = -param * np.log(k)
    else:
        logw = k * math.log(param) - gammaln(k + 1.0)
    out = logw - logsumexp(logw)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PriorConfig:
    """
    Prior hyperparameters.

    Parameters
    ----------
    a : float
        Total Dirichlet concentration; bin ``I`` gets ``a * G0(I)``.
    k_prior : KPrior or str
        Prior on the number of bins.
    k_n : int, optional
        Size of the mesh the partition prior lives on.  Left unset it is
        taken from whichever mesh the prior is used with; set it explicitly
        when searching a reduced grid so the prior stays that of the full
        mesh.
    g0_cdf : callable, optional
        CDF of the reference density on ``[0, 1]``; ``None`` is uniform.
    """

    a: float = 5.0
    k_prior: KPrior = field(default_factory=KPrior)
    k_n: int | None = None
    g0_cdf: Callable | None = None

    def __post_init__(self):
        if not (self.a > 0 and np.isfinite(self.a)):
            raise ModelError(f"concentration must be positive, got {self.a}")
        object.__setattr__(self, "k_prior", KPrior.parse(self.k_prior))
        if self.k_n is not None and self.k_n < 1:
            raise ModelError(f"k_n must be positive, got {self.k_n}")

    def with_kn(self, k_n: int) -> "PriorConfig":
        return replace(self, k_n=int(k_n))

    def resolve_kn(self, mesh: GridMesh) -> int:
        return mesh.size if self.k_n is None else self.k_n

    def g0_at(self, cuts) -> np.ndarray:
        cuts = np.asarray(cuts, dtype=float)
        if self.g0_cdf is None:
            return cuts
        return np.asarray(self.g0_cdf(cuts), dtype=float)

    def log_pk(self, k: int, k_n: int) -> float:
        if not 1 <= k <= k_n:
            raise ModelError(f"k = {k} outside prior support 1..{k_n}")
        return float(self.k_prior.log_pmf(k_n)[k - 1])


@dataclass(frozen=True)
class Partition:
    """Increasing mesh indices from 0 to the last mesh index."""

    cut_indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.cut_indices)
        if len(idx) < 2 or idx[0] != 0 or any(b <= a for a, b in zip(idx, idx[1:])):
            raise ModelError(f"invalid partition indices {idx}")
        object.__setattr__(self, "cut_indices", idx)

    @property
    def k(self) -> int:
        return len(self.cut_indices) - 1

    def check(self, mesh: GridMesh):
        if self.cut_indices[-1] != mesh.size:
            raise ModelError("partition does not end at the last mesh cut")

    def cuts(self, mesh: GridMesh) -> np.ndarray:
        return mesh.cuts[list(self.cut_indices)]

    def counts(self, mesh: GridMesh) -> np.ndarray:
        idx = np.asarray(self.cut_indices)
        return mesh.prefix_counts[idx[1:]] - mesh.lower_counts[idx[:-1]]


def _lgamma(x):
    # lgamma(x) = lgamma(x + 1) - log(x) keeps tiny arguments finite
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x < 1.0, gammaln(x + 1.0) - np.log(x), gammaln(x))


def _bin_concentration(prior: PriorConfig, lo: float, hi: float):
    g = prior.g0_at([lo, hi])
    a_bin = prior.a * (g[1] - g[0])
    if not a_bin > 0:
        raise ModelError(f"reference density has no mass on [{lo}, {hi}]")
    return a_bin


def phi0(mesh: GridMesh, prior: PriorConfig, i: int, j: int) -> float:
    """
    Log marginal-likelihood contribution of the bin from cut ``i`` to ``j``.

    ``lgamma(a_I + N_I) - lgamma(a_I) - N_I * log|I|``.
    """
    if not 0 <= i < j <= mesh.size:
        raise ModelError(f"invalid bin indices ({i}, {j})")
    lo, hi = mesh.cuts[i], mesh.cuts[j]
    a_bin = _bin_concentration(prior, lo, hi)
    count = mesh.count(i, j)
    return float(_lgamma(a_bin + count) - _lgamma(a_bin) - count * math.log(hi - lo))


def phi0_pairs(mesh: GridMesh, prior: PriorConfig, i, j, g=None) -> np.ndarray:
    """Vectorized :func:`phi0` over index arrays with ``i < j``."""
    i = np.asarray(i, dtype=np.intp)
    j = np.asarray(j, dtype=np.intp)
    if g is None:
        g = prior.g0_at(mesh.cuts)
    a_bin = prior.a * (g[j] - g[i])
    if np.any(a_bin <= 0):
        raise ModelError("reference density assigns zero mass to a mesh bin")
    counts = mesh.prefix_counts[j] - mesh.lower_counts[i]
    width = mesh.cuts[j] - mesh.cuts[i]
    return _lgamma(a_bin + counts) - _lgamma(a_bin) - counts * np.log(width)


def phi0_matrix(mesh: GridMesh, prior: PriorConfig) -> np.ndarray:
    """``M[i, j] = phi0(i, j)`` for ``i < j``, ``-inf`` elsewhere."""
    size = mesh.size + 1
    i, j = np.triu_indices(size, k=1)
    out = np.full((size, size), -np.inf)
    out[i, j] = phi0_pairs(mesh, prior, i, j)
    return out


def log_psi(prior: PriorConfig, k: int, n: int, k_n: int | None = None) -> float:
    """
    The part of the log posterior depending on ``k`` alone.

    ``log p(k) + lgamma(a) - lgamma(a + n) - log C(k_n - 1, k - 1)``.
    """
    k_n = prior.k_n if k_n is None else k_n
    if k_n is None:
        raise ModelError("k_n unknown: set it on the prior or pass it")
    return float(
        prior.log_pk(k, k_n) + float(_lgamma(prior.a)) - gammaln(prior.a + n) - _log_binom(k_n - 1, k - 1)
    )


def log_psi_vector(prior: PriorConfig, n: int, k_n: int, k_max: int) -> np.ndarray:
    """:func:`log_psi` for ``k = 1..k_max``."""
    k = np.arange(1, k_max + 1)
    log_binom = gammaln(k_n) - gammaln(k) - gammaln(k_n - k + 1)
    return prior.k_prior.log_pmf(k_n)[:k_max] + float(_lgamma(prior.a)) - gammaln(prior.a + n) - log_binom


def _log_binom(m: int, r: int) -> float:
    return float(gammaln(m + 1) - gammaln(r + 1) - gammaln(m - r + 1))


def log_posterior_unnorm(mesh: GridMesh, prior: PriorConfig, partition: Partition) -> float:
    """Unnormalized log posterior of a partition: sum of ``phi0`` plus ``log_psi``."""
    partition.check(mesh)
    idx = partition.cut_indices
    phi = math.fsum(phi0(mesh, prior, i, j) for i, j in zip(idx, idx[1:]))
    return phi + log_psi(prior, partition.k, mesh.n, prior.resolve_kn(mesh))


def posterior_mean_theta(mesh: GridMesh, prior: PriorConfig, partition: Partition) -> np.ndarray:
    """Posterior mean bin probabilities ``(a_j + N_j) / (a + n)``."""
    partition.check(mesh)
    g = prior.g0_at(partition.cuts(mesh))
    a_bins = prior.a * np.diff(g)
    if np.any(a_bins <= 0):
        raise ModelError("reference density assigns zero mass to a bin")
    return (a_bins + partition.counts(mesh)) / (prior.a + mesh.n)


@dataclass(frozen=True, eq=False)
class HistogramEstimate:
    """
    A fitted histogram: unit-scale cuts, bin probabilities and the support map.

    Extra fields record how the partition was chosen and are carried into
    the JSON output.
    """

    cuts: np.ndarray
    theta: np.ndarray
    transform: SupportTransform
    score: float | None = None
    method: str | None = None

    def __post_init__(self):
        cuts = np.asarray(self.cuts, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        if cuts.size != theta.size + 1:
            raise ModelError("need one more cut than bin probabilities")
        object.__setattr__(self, "cuts", cuts)
        object.__setattr__(self, "theta", theta)

    @property
    def k(self) -> int:
        return self.theta.size

    @property
    def breaks(self) -> np.ndarray:
        """Bin edges on the original scale."""
        out = self.transform.from_unit(self.cuts)
        out[0], out[-1] = self.transform.lo, self.transform.hi
        return out

    @property
    def heights(self) -> np.ndarray:
        """Density value in each bin on the original scale."""
        return self.theta / (np.diff(self.cuts) * self.transform.width)

    def pdf(self, x):
        """Density at ``x``; zero outside the support."""
        x = np.asarray(x, dtype=float)
        z = self.transform.to_unit(x)
        idx = np.clip(np.searchsorted(self.cuts, z, side="left"), 1, self.k) - 1
        inside = (x >= self.transform.lo) & (x <= self.transform.hi)
        out = np.where(inside, self.heights[idx], 0.0)
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        out = {
            "breaks": self.breaks.tolist(),
            "probs": self.theta.tolist(),
            "density": self.heights.tolist(),
            "k": self.k,
        }
        if self.score is not None:
            out["score"] = self.score
        if self.method is not None:
            out["method"] = self.method
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "HistogramEstimate":
        breaks = np.asarray(obj["breaks"], dtype=float)
        transform = SupportTransform(float(breaks[0]), float(breaks[-1]))
        cuts = transform.to_unit(breaks)
        cuts[0], cuts[-1] = 0.0, 1.0
        return cls(cuts, np.asarray(obj["probs"]), transform, obj.get("score"), obj.get("method"))


def evaluate_density(est: HistogramEstimate, x):
    return est.pdf(x)


def enumerate_partitions(size: int):
    """
    All partitions of a mesh with ``size`` elementary intervals.

    Ordered by number of bins, then lexicographically, so the first
    maximizer found is the preferred one under the tie-break rule.
    """
    interior = range(1, size)
    for k in range(1, size + 1):
        for chosen in itertools.combinations(interior, k - 1):
            yield Partition((0, *chosen, size))


def _check_enumerable(mesh: GridMesh):
    if mesh.size > MAX_ENUMERATION_SIZE:
        raise ModelError(
            f"mesh has {mesh.size} intervals; exhaustive enumeration is limited "
            f"to {MAX_ENUMERATION_SIZE}"
        )


def model_average_density(mesh: GridMesh, prior: PriorConfig, x, transform: SupportTransform | None = None):
    """
    Posterior-mean density averaged over every partition of a small mesh.

    ``x`` is on the original scale of ``transform`` (unit scale if omitted).
    """
    transform = transform or SupportTransform(0.0, 1.0)
    parts, weights = partition_weights(mesh, prior)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for w, p in zip(weights, parts):
        est = HistogramEstimate(p.cuts(mesh), posterior_mean_theta(mesh, prior, p), transform)
        out = out + w * est.pdf(x)
    return out if out.ndim else float(out)


def partition_weights(mesh: GridMesh, prior: PriorConfig) -> tuple[list, np.ndarray]:
    """Normalized posterior probabilities of every partition of a small mesh."""
    _check_enumerable(mesh)
    parts = list(enumerate_partitions(mesh.size))
    scores = np.array([log_posterior_unnorm(mesh, prior, p) for p in parts])
    return parts, np.exp(scores - logsumexp(scores))
