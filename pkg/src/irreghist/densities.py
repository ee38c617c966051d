"""
True densities for simulation: pdf/cdf/quantile, a seeded sampler, declared
modes and the tolerance each mode gets when scoring peak identification.

Densities are referenced by string id: catalog names (see :func:`catalog`),
``beta_1_<b>`` for the Beta(1, b) family, normal mixtures written as
``mix:0.5*N(0,0.1)+0.5*N(5,1)`` (mean, standard deviation), and piecewise
constant densities written as ``step:0,0.5,1|1.5,0.5`` (breaks | heights).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np
from scipy import stats
from scipy.optimize import brentq, minimize_scalar

from .quadrature import integrate, sign_change_points

__all__ = [
    "Mode",
    "ModeTolerance",
    "TestDensity",
    "catalog",
    "get_density",
    "mixture",
    "peak_tolerance",
    "piecewise_constant",
    "plateau_modes",
    "sample",
    "tolerances",
]

FINITE = "finite"
INF_LEFT = "infinite_left_boundary"
INF_RIGHT = "infinite_right_boundary"

# relative-mass threshold for isolating a peak, and bisection tolerance on gamma
PEAK_CRITERION = 0.2
GAMMA_XTOL = 1e-6
# probability level for truncating unbounded supports
TAIL_PROB = 1e-10


@dataclass(frozen=True)
class Mode:
    location: float
    kind: str = FINITE

    @property
    def infinite(self) -> bool:
        return self.kind != FINITE


@dataclass(frozen=True)
class ModeTolerance:
    """
    Matching rule for one true mode.

    Finite modes match an estimated mode strictly closer than ``delta``;
    infinite boundary peaks match any estimated mode inside ``region``.
    """

    mode: Mode
    delta: float | None = None
    region: tuple | None = None

    def matches(self, s: float) -> bool:
        if self.mode.infinite:
            return self.region[0] <= s <= self.region[1]
        return abs(s - self.mode.location) < self.delta

    @property
    def interval(self) -> tuple:
        if self.mode.infinite:
            return self.region
        t = self.mode.location
        return (t - self.delta, t + self.delta)


@dataclass(frozen=True, eq=False)
class TestDensity:
    """A fully specified density for simulation studies."""

    __test__ = False

    name: str
    pdf: Callable
    cdf: Callable
    quantile: Callable
    sampler: Callable  # (rng, n) -> array
    support: tuple
    breakpoints: tuple = ()
    modes: tuple = ()
    square_integrable: bool = True
    region_probs: dict = field(default_factory=dict)
    # extra panel points where the quantiles alone are too sparse
    scale_points: tuple = ()

    def sample(self, n: int, seed) -> np.ndarray:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return np.asarray(self.sampler(rng, int(n)), dtype=float)

    @property
    def finite_support(self) -> tuple:
        """Support with infinite ends replaced by extreme quantiles."""
        lo, hi = self.support
        if not np.isfinite(lo):
            lo = float(self.quantile(TAIL_PROB))
        if not np.isfinite(hi):
            hi = float(self.quantile(1.0 - TAIL_PROB))
        return lo, hi

    @cached_property
    def resolution_points(self) -> np.ndarray:
        """Quantiles, modes and breakpoints used to refine integration panels."""
        probs = np.linspace(0.0, 1.0, 65)[1:-1]
        pts = [float(self.quantile(p)) for p in probs]
        pts += [m.location for m in self.modes] + list(self.breakpoints) + list(self.scale_points)
        lo, hi = self.finite_support
        pts = np.unique(np.asarray(pts, dtype=float))
        return pts[(pts >= lo) & (pts <= hi)]


def _from_scipy(name, dist, modes=(), breakpoints=(), square_integrable=True, **kw) -> TestDensity:
    lo, hi = dist.support()
    return TestDensity(
        name=name,
        pdf=dist.pdf,
        cdf=dist.cdf,
        quantile=dist.ppf,
        sampler=lambda rng, n: dist.rvs(size=n, random_state=rng),
        support=(float(lo), float(hi)),
        breakpoints=tuple(breakpoints),
        modes=tuple(modes),
        square_integrable=square_integrable,
        **kw,
    )


def mixture(weights, means, sds, name: str | None = None) -> TestDensity:
    """Finite normal mixture; modes are located numerically."""
    w = np.asarray(weights, dtype=float)
    mu = np.asarray(means, dtype=float)
    sd = np.asarray(sds, dtype=float)
    if not (w.shape == mu.shape == sd.shape) or w.size == 0:
        raise ValueError("mixture needs matching weights, means and sds")
    if np.any(w <= 0) or np.any(sd <= 0):
        raise ValueError("mixture weights and sds must be positive")
    w = w / w.sum()

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.sum(w * stats.norm.pdf(x[..., None], mu, sd), axis=-1)

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.sum(w * stats.norm.cdf(x[..., None], mu, sd), axis=-1)

    lo_b, hi_b = float(np.min(mu - 40 * sd)), float(np.max(mu + 40 * sd))

    def quantile(q):
        q = np.asarray(q, dtype=float)
        out = np.array(
            [brentq(lambda s: float(cdf(s)) - qq, lo_b, hi_b, xtol=1e-13) if 0 < qq < 1 else
             (-np.inf if qq <= 0 else np.inf) for qq in q.ravel()]
        )
        return out.reshape(q.shape) if q.ndim else float(out[0])

    def sampler(rng, n):
        comp = rng.choice(w.size, size=n, p=w)
        return rng.normal(mu[comp], sd[comp])

    if name is None:
        terms = "+".join(f"{a:g}*N({m:g},{s:g})" for a, m, s in zip(w, mu, sd))
        name = f"mix:{terms}"
    return TestDensity(
        name=name,
        pdf=pdf,
        cdf=cdf,
        quantile=quantile,
        sampler=sampler,
        support=(-np.inf, np.inf),
        modes=tuple(Mode(t) for t in _mixture_modes(pdf, mu, sd)),
        scale_points=tuple(np.ravel(mu[:, None] + np.arange(-10, 11)[None, :] * sd[:, None])),
    )


def _mixture_modes(pdf, mu, sd) -> list:
    lo, hi = float(np.min(mu - 6 * sd)), float(np.max(mu + 6 * sd))
    step = float(np.min(sd)) / 40.0
    xs = np.linspace(lo, hi, int(math.ceil((hi - lo) / step)) + 1)
    f = pdf(xs)
    peaks = np.nonzero((f[1:-1] > f[:-2]) & (f[1:-1] >= f[2:]))[0] + 1
    out = []
    for i in peaks:
        res = minimize_scalar(
            lambda s: -float(pdf(np.asarray(s))), bounds=(xs[i - 1], xs[i + 1]),
            method="bounded", options={"xatol": 1e-12},
        )
        out.append(float(res.x))
    return out


def plateau_modes(edges, heights) -> list:
    """
    Modes of a piecewise constant function given by bin ``edges``/``heights``.

    Maximal runs of equal height are merged; a run is a mode if it is strictly
    higher than each neighbouring run (a run at either end has only one
    neighbour).  A constant function has no modes.  Each mode is placed at the
    midpoint of its run.
    """
    edges = np.asarray(edges, dtype=float)
    h = np.asarray(heights, dtype=float)
    starts = np.concatenate(([0], np.nonzero(np.diff(h) != 0)[0] + 1))
    if starts.size < 2:
        return []
    ends = np.concatenate((starts[1:], [h.size]))
    rh = h[starts]
    out = []
    for r in range(starts.size):
        left_ok = r == 0 or rh[r] > rh[r - 1]
        right_ok = r == starts.size - 1 or rh[r] > rh[r + 1]
        if left_ok and right_ok:
            out.append(0.5 * (edges[starts[r]] + edges[ends[r]]))
    return out


def piecewise_constant(breaks, heights, name: str | None = None) -> TestDensity:
    """Step density; heights are rescaled to integrate to one."""
    b = np.asarray(breaks, dtype=float)
    h = np.asarray(heights, dtype=float)
    if b.size != h.size + 1 or np.any(np.diff(b) <= 0) or np.any(h < 0):
        raise ValueError("step density needs increasing breaks and nonnegative heights")
    mass = h * np.diff(b)
    h = h / mass.sum()
    cum = np.concatenate(([0.0], np.cumsum(h * np.diff(b))))
    cum[-1] = 1.0

    def pdf(x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(b, x, side="right") - 1, 0, h.size - 1)
        return np.where((x >= b[0]) & (x <= b[-1]), h[idx], 0.0)

    def cdf(x):
        x = np.clip(np.asarray(x, dtype=float), b[0], b[-1])
        idx = np.clip(np.searchsorted(b, x, side="right") - 1, 0, h.size - 1)
        return cum[idx] + h[idx] * (x - b[idx])

    def quantile(q):
        q = np.asarray(q, dtype=float)
        idx = np.clip(np.searchsorted(cum, q, side="right") - 1, 0, h.size - 1)
        while np.any((h[idx] == 0) & (idx < h.size - 1)):
            idx = np.where(h[idx] == 0, idx + 1, idx)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = b[idx] + np.where(h[idx] > 0, (q - cum[idx]) / h[idx], 0.0)
        return np.clip(out, b[0], b[-1])

    if name is None:
        name = "step:" + ",".join(f"{v:g}" for v in b) + "|" + ",".join(f"{v:g}" for v in h)
    return TestDensity(
        name=name,
        pdf=pdf,
        cdf=cdf,
        quantile=quantile,
        sampler=lambda rng, n: quantile(rng.uniform(size=n)),
        support=(float(b[0]), float(b[-1])),
        breakpoints=tuple(float(v) for v in b),
        modes=tuple(Mode(t) for t in plateau_modes(b, h)),
    )


def _beta_one(b: float) -> TestDensity:
    # decreasing on [0, 1] with its maximum at the left boundary
    return _from_scipy(f"beta_1_{b:g}", stats.beta(1.0, b), modes=[Mode(0.0)], breakpoints=(0.0, 1.0))


def _build_catalog() -> dict:
    entries = [
        _from_scipy("uniform", stats.uniform(0, 1), breakpoints=(0.0, 1.0)),
        _from_scipy("normal", stats.norm(), modes=[Mode(0.0)]),
        _from_scipy("lognormal", stats.lognorm(1.0), modes=[Mode(math.exp(-1.0))], breakpoints=(0.0,)),
        _from_scipy("gamma_3_3", stats.gamma(3.0, scale=1.0 / 3.0), modes=[Mode(2.0 / 3.0)], breakpoints=(0.0,)),
        _from_scipy("beta_3_3", stats.beta(3.0, 3.0), modes=[Mode(0.5)], breakpoints=(0.0, 1.0)),
        _from_scipy("t3", stats.t(3.0), modes=[Mode(0.0)]),
        _from_scipy(
            "chisq1", stats.chi2(1.0), modes=[Mode(0.0, INF_LEFT)], breakpoints=(0.0,),
            square_integrable=False, region_probs={0.0: (0.0, 0.1)},
        ),
        _from_scipy(
            "beta_0.5_0.5", stats.beta(0.5, 0.5), modes=[Mode(0.0, INF_LEFT), Mode(1.0, INF_RIGHT)],
            breakpoints=(0.0, 1.0), square_integrable=False,
            region_probs={0.0: (0.0, 0.1), 1.0: (0.9, 1.0)},
        ),
        _from_scipy("triangular", stats.triang(0.5), modes=[Mode(0.5)], breakpoints=(0.0, 0.5, 1.0)),
        _beta_one(4.0),
        _beta_one(10.0),
        mixture([0.75, 0.25], [0.0, 1.5], [1.0, 1.0 / 3.0], name="mix_asym_bimodal"),
        mixture(
            [0.2] * 5, [0.0, 4.0, 6.0, 7.0, 7.6], [1.0, 1.0, 0.1, 0.1, 0.1], name="mix_twoscale5"
        ),
    ]
    return {d.name: d for d in entries}


@lru_cache(maxsize=1)
def _catalog() -> dict:
    return _build_catalog()


def catalog() -> list:
    """All named test densities."""
    return list(_catalog().values())


_MIX_TERM = re.compile(r"\s*([0-9.eE+-]+)\s*\*\s*N\(\s*([0-9.eE+-]+)\s*,\s*([0-9.eE+-]+)\s*\)\s*")


@lru_cache(maxsize=128)
def get_density(spec: str) -> TestDensity:
    """Look up a density by catalog name or parse a DSL id."""
    named = _catalog()
    if spec in named:
        return named[spec]
    if spec.startswith("mix:"):
        terms = spec[4:].split("+")
        parsed = []
        for term in terms:
            m = _MIX_TERM.fullmatch(term)
            if not m:
                raise ValueError(f"cannot parse mixture term {term!r} in {spec!r}")
            parsed.append(tuple(float(g) for g in m.groups()))
        w, mu, sd = zip(*parsed)
        return mixture(w, mu, sd, name=spec)
    if spec.startswith("step:"):
        try:
            b_txt, h_txt = spec[5:].split("|")
            return piecewise_constant(
                [float(v) for v in b_txt.split(",")], [float(v) for v in h_txt.split(",")], name=spec
            )
        except ValueError as err:
            raise ValueError(f"cannot parse step density {spec!r}: {err}") from None
    m = re.fullmatch(r"beta_1_([0-9.]+)", spec)
    if m:
        return _beta_one(float(m.group(1)))
    raise KeyError(f"unknown density {spec!r}")


def sample(f0: TestDensity | str, n: int, seed) -> np.ndarray:
    """``n`` draws from ``f0``; identical seeds give identical draws."""
    if isinstance(f0, str):
        f0 = get_density(f0)
    return f0.sample(n, seed)


def _peak_criterion(f0: TestDensity, t: float, gamma: float) -> float:
    lo_s, hi_s = f0.support
    lo, hi = max(t - gamma, lo_s), min(t + gamma, hi_s)
    mass = float(f0.cdf(hi) - f0.cdf(lo))
    if not mass > 0:
        return 0.0
    mean = mass / (hi - lo)
    dev = lambda x: f0.pdf(x) - mean  # noqa: E731
    pieces = [lo, hi, t] + [b for b in f0.breakpoints if lo < b < hi]
    pieces = sorted({p for p in pieces if lo <= p <= hi})
    edges = [pieces[0]]
    for a, b in zip(pieces, pieces[1:]):
        edges += sign_change_points(dev, a, b) + [b]
    edges = np.unique(edges)
    spread = integrate(lambda x: np.abs(dev(x)), edges)
    return spread / mass


def peak_tolerance(f0: TestDensity, mode_index: int) -> float:
    """
    Half the smallest window half-width around a finite mode at which the
    density stops looking flat.

    Finds the smallest ``gamma`` for which the mean absolute deviation of
    ``f0`` from its average over ``[t - gamma, t + gamma]`` (intersected with
    the support), relative to the mass there, exceeds 0.2; returns
    ``gamma / 2``.
    """
    mode = f0.modes[mode_index]
    if mode.infinite:
        raise ValueError("infinite peaks use a tolerance region, not a width")
    t = mode.location
    lo, hi = f0.finite_support
    g_max = max(t - lo, hi - t)
    grid = np.geomspace(g_max * 1e-7, g_max, 240)
    prev = 0.0
    for g in grid:
        if _peak_criterion(f0, t, g) > PEAK_CRITERION:
            a, b = prev, g
            while b - a > GAMMA_XTOL:
                mid = 0.5 * (a + b)
                if _peak_criterion(f0, t, mid) > PEAK_CRITERION:
                    b = mid
                else:
                    a = mid
            return 0.5 * b
        prev = g
    raise ValueError(f"{f0.name}: no window around {t:g} isolates a peak")


@lru_cache(maxsize=256)
def _tolerances_cached(f0: TestDensity) -> tuple:
    out = []
    for i, mode in enumerate(f0.modes):
        if mode.infinite:
            p_lo, p_hi = f0.region_probs[mode.location]
            out.append(ModeTolerance(mode, region=(float(f0.quantile(p_lo)), float(f0.quantile(p_hi)))))
        else:
            out.append(ModeTolerance(mode, delta=float(peak_tolerance(f0, i))))
    intervals = sorted(tol.interval for tol in out)
    for (a0, a1), (b0, b1) in zip(intervals, intervals[1:]):
        if b0 < a1:
            raise ValueError(f"{f0.name}: tolerance regions overlap")
    return tuple(out)


def tolerances(f0: TestDensity | str) -> tuple:
    """Tolerance for every declared mode of ``f0`` (validated disjoint)."""
    if isinstance(f0, str):
        f0 = get_density(f0)
    return _tolerances_cached(f0)
