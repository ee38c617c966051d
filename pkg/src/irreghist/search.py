"""
MAP partition search.

:func:`dp_map` is the exact optimizer over all partitions of a mesh.  For
large meshes :func:`greedy_reduce` first picks a small sub-mesh by forward
selection and the DP then runs on that.  :func:`brute_force_map` enumerates
every partition and exists to check the other two.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import GridMesh, build_mesh, default_kn, estimate_support
from .model import (
    HistogramEstimate,
    KPrior,
    Partition,
    PriorConfig,
    _check_enumerable,
    enumerate_partitions,
    log_posterior_unnorm,
    log_psi,
    log_psi_vector,
    phi0,
    phi0_matrix,
    phi0_pairs,
    posterior_mean_theta,
)

__all__ = [
    "FitConfig",
    "FitResult",
    "SearchResult",
    "brute_force_map",
    "dp_map",
    "fit",
    "fit_detailed",
    "greedy_reduce",
    "EXACT_THRESHOLD",
]

EXACT_THRESHOLD = 600


@dataclass
class SearchResult:
    partition: Partition
    score: float
    method: str
    stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "cut_indices": list(self.partition.cut_indices),
            "k": self.partition.k,
            "score": self.score,
            "method": self.method,
            "stats": self.stats,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def dp_map(mesh: GridMesh, prior: PriorConfig, k_max: int | None = None) -> SearchResult:
    """
    Exact MAP partition over ``mesh`` with at most ``k_max`` bins.

    ``best[m][j]`` is the largest summed ``phi0`` of any ``m``-bin partition
    of ``[cut_0, cut_j]``; the answer maximizes ``best[k][last] + log_psi(k)``.
    Ties go to fewer bins, then to the smaller preceding cut at each stage.
    """
    t0 = time.perf_counter()
    size = mesh.size
    k_max = size if k_max is None else int(k_max)
    if k_max < 1:
        raise ValueError(f"k_max must be at least 1, got {k_max}")
    if k_max > size:
        raise ValueError(f"k_max = {k_max} exceeds the mesh size {size}")
    k_n = prior.resolve_kn(mesh)
    if k_max > k_n:
        raise ValueError(f"k_max = {k_max} exceeds the prior support k_n = {k_n}")

    phi = phi0_matrix(mesh, prior)
    back = np.zeros((k_max + 1, size + 1), dtype=np.intp)
    prev = phi[0].copy()
    last = np.empty(k_max)
    last[0] = prev[size]
    for m in range(2, k_max + 1):
        # m bins ending at cut j need j >= m; the previous block ends at i >= m - 1
        cand = prev[m - 1 : size, None] + phi[m - 1 : size, m:]
        arg = np.argmax(cand, axis=0)
        cur = np.full(size + 1, -np.inf)
        cur[m:] = cand[arg, np.arange(cand.shape[1])]
        back[m, m:] = arg + (m - 1)
        last[m - 1] = cur[size]
        prev = cur

    total = last + log_psi_vector(prior, mesh.n, k_n, k_max)
    k = int(np.argmax(total)) + 1
    idx = [size]
    for m in range(k, 1, -1):
        idx.append(int(back[m, idx[-1]]))
    idx.append(0)
    part = Partition(tuple(reversed(idx)))
    return SearchResult(
        part,
        log_posterior_unnorm(mesh, prior, part),
        "dp_exact",
        {"mesh_size": size, "k_max": k_max, "seconds": time.perf_counter() - t0},
    )


def greedy_reduce(mesh: GridMesh, prior: PriorConfig, q_target: int) -> GridMesh:
    """
    Forward selection of at most ``q_target`` interior cuts.

    Starting from the single bin ``[0, 1]``, repeatedly add the mesh cut whose
    insertion most increases the summed ``phi0`` of the current bins (the
    ``k``-only term is left out; it is settled by the DP afterwards).  Ties
    go to the lowest cut index.
    """
    if q_target < 2:
        raise ValueError(f"q_target must be at least 2, got {q_target}")
    size = mesh.size
    g = prior.g0_at(mesh.cuts)
    selected = np.array([0, size], dtype=np.intp)
    remaining = np.arange(1, size, dtype=np.intp)
    while selected.size - 2 < q_target and remaining.size:
        pos = np.searchsorted(selected, remaining)
        left, right = selected[pos - 1], selected[pos]
        gain = (
            phi0_pairs(mesh, prior, left, remaining, g)
            + phi0_pairs(mesh, prior, remaining, right, g)
            - phi0_pairs(mesh, prior, left, right, g)
        )
        best = int(np.argmax(gain))
        selected = np.insert(selected, pos[best], remaining[best])
        remaining = np.delete(remaining, best)
    return mesh.submesh(selected)


def brute_force_map(mesh: GridMesh, prior: PriorConfig) -> SearchResult:
    """
    MAP partition by exhaustive enumeration (meshes of at most 20 intervals).

    Ties go to fewer bins, then to the lexicographically smallest indices.
    """
    t0 = time.perf_counter()
    _check_enumerable(mesh)
    size = mesh.size
    k_n = prior.resolve_kn(mesh)
    table = {(i, j): phi0(mesh, prior, i, j) for i in range(size) for j in range(i + 1, size + 1)}
    psi = {k: log_psi(prior, k, mesh.n, k_n) for k in range(1, size + 1)}
    best, best_score, seen = None, -math.inf, 0
    for part in enumerate_partitions(size):
        idx = part.cut_indices
        score = math.fsum(table[b] for b in zip(idx, idx[1:])) + psi[part.k]
        seen += 1
        if score > best_score:
            best, best_score = part, score
    return SearchResult(
        best,
        log_posterior_unnorm(mesh, prior, best),
        "brute_force",
        {"mesh_size": size, "partitions": seen, "seconds": time.perf_counter() - t0},
    )


@dataclass(frozen=True)
class FitConfig:
    """
    Settings for :func:`fit`.

    ``support`` fixes the histogram support as ``(lo, hi)``; either entry may
    be ``None`` to use the sample extreme.  ``k_n`` overrides the nominal
    mesh size.  Meshes with more than ``exact_threshold`` intervals are first
    reduced greedily to ``q_n`` interior cuts (default
    ``min(mesh size, ceil(sqrt(n)))``) unless ``exact`` is set.
    """

    a: float = 5.0
    k_prior: str = "uniform"
    grid: str = "quantile"
    support: tuple | None = None
    k_n: int | None = None
    k_max: int | None = None
    exact_threshold: int = EXACT_THRESHOLD
    q_n: int | None = None
    exact: bool = False
    g0_cdf: object = None

    def prior(self, k_n: int) -> PriorConfig:
        return PriorConfig(self.a, KPrior.parse(self.k_prior), k_n, self.g0_cdf)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("g0_cdf")
        return out


@dataclass
class FitResult:
    estimate: HistogramEstimate
    search: SearchResult
    mesh: GridMesh
    search_mesh: GridMesh
    prior: PriorConfig


def fit_detailed(data, config: FitConfig | None = None, **overrides) -> FitResult:
    """Fit the Bayes histogram and keep the intermediate objects."""
    config = config or FitConfig()
    if overrides:
        config = FitConfig(**{**config.__dict__, **overrides})
    x = np.asarray(data, dtype=float).ravel()
    lo, hi = config.support if config.support is not None else (None, None)
    transform = estimate_support(x, lo, hi)
    z = np.clip(transform.to_unit(x), 0.0, 1.0)
    n = z.size
    mesh = build_mesh(z, config.grid, config.k_n or default_kn(n))
    prior = config.prior(mesh.size)

    if config.exact or mesh.size <= config.exact_threshold:
        search_mesh = mesh
        k_max = config.k_max
        result = dp_map(mesh, prior, k_max)
    else:
        q = config.q_n or min(mesh.size, math.ceil(math.sqrt(n)))
        search_mesh = greedy_reduce(mesh, prior, q)
        k_max = None if config.k_max is None else min(config.k_max, search_mesh.size)
        result = dp_map(search_mesh, prior, k_max)
        result.method = "greedy_then_dp"
        result.stats["full_mesh_size"] = mesh.size

    theta = posterior_mean_theta(search_mesh, prior, result.partition)
    est = HistogramEstimate(
        result.partition.cuts(search_mesh), theta, transform, result.score, result.method
    )
    return FitResult(est, result, mesh, search_mesh, prior)


def fit(data, config: FitConfig | None = None, **overrides) -> HistogramEstimate:
    """
    Random irregular histogram of ``data``.

    Keyword overrides are applied on top of ``config`` (or the defaults),
    e.g. ``fit(x, a=10, grid="regular")``.
    """
    return fit_detailed(data, config, **overrides).estimate
