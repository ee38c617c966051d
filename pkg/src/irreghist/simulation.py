"""
Monte Carlo risk estimation and the experiments built on it.

Every replication draws its sample from a generator seeded by
``(seed, density, n, method, b)``, so a cell's result does not depend on how
replications are spread over worker processes.  Results are reduced in
replication order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .baselines import fit_klcv, fit_regular_bayes
from .densities import get_density, tolerances
from .losses import LOSSES, loss as compute_loss
from .model import PriorConfig
from .search import FitConfig, fit

__all__ = [
    "CAMPAIGN_SCHEMA",
    "MethodSpec",
    "Pi0Entry",
    "ReplicationError",
    "RiskEntry",
    "RiskReport",
    "estimate_risk",
    "load_campaign",
    "pi0_experiment",
    "plot_data",
    "read_risk_csv",
    "replication_rng",
    "run_campaign",
    "run_cell",
    "sensitivity_concentration",
    "sensitivity_k_prior",
    "summarize",
]

SUPPORT_RULES = ("sample", "known")


class ReplicationError(RuntimeError):
    """A single replication failed; the whole cell is abandoned."""


# ----------------------------------------------------------------- methods


_METHOD_RE = re.compile(r"\s*(\w+)\s*(?:\[(.*)\])?\s*")
_OPTION_TYPES = {
    "rih": {"a": float, "k_prior": str, "grid": str, "exact": lambda v: v in ("1", "true", "yes"), "q_n": int},
    "regular_bayes": {"a": float, "k_prior": str, "k_cap": int},
    "klcv": {"grid": str},
}


@dataclass(frozen=True)
class MethodSpec:
    """
    A fitting method with options, written ``kind[key=value,...]``.

    Kinds are ``rih`` (the irregular Bayes histogram), ``regular_bayes`` and
    ``klcv``; e.g. ``rih[a=10,k_prior=power:2,grid=regular]``.
    """

    kind: str
    options: tuple = ()

    @classmethod
    def parse(cls, spec: "str | MethodSpec") -> "MethodSpec":
        if isinstance(spec, MethodSpec):
            return spec
        m = _METHOD_RE.fullmatch(spec)
        if not m or m.group(1) not in _OPTION_TYPES:
            raise ValueError(f"unknown method {spec!r}; kinds are {sorted(_OPTION_TYPES)}")
        kind, body = m.group(1), m.group(2)
        allowed = _OPTION_TYPES[kind]
        opts = {}
        for item in filter(None, (body or "").split(",")):
            key, sep, value = item.partition("=")
            key = key.strip()
            if not sep or key not in allowed:
                raise ValueError(f"bad option {item!r} for method {kind}; allowed: {sorted(allowed)}")
            opts[key] = allowed[key](value.strip())
        return cls(kind, tuple(sorted(opts.items())))

    @property
    def label(self) -> str:
        if not self.options:
            return self.kind
        body = ",".join(f"{k}={_fmt(v)}" for k, v in self.options)
        return f"{self.kind}[{body}]"

    def fit(self, x, support=None):
        opts = dict(self.options)
        if self.kind == "rih":
            return fit(x, FitConfig(support=support, **opts))
        if self.kind == "regular_bayes":
            prior = PriorConfig(opts.get("a", 5.0), opts.get("k_prior", "uniform"))
            return fit_regular_bayes(x, prior, opts.get("k_cap"), support).estimate
        return fit_klcv(x, opts.get("grid", "quantile"), support=support).estimate


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:g}"
    return str(v)


def support_for(density_id: str, x, rule: str):
    """
    Histogram support for a replication.

    ``sample`` uses the sample range; ``known`` fixes every finite endpoint of
    the true support and uses the sample extreme on unbounded sides.
    """
    if rule == "sample":
        return None
    if rule != "known":
        raise ValueError(f"unknown support rule {rule!r}; expected one of {SUPPORT_RULES}")
    lo, hi = get_density(density_id).support
    return (lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None)


def replication_rng(seed: int, density_id: str, n: int, method: str, b: int) -> np.random.Generator:
    """Generator for replication ``b`` of a cell, independent of scheduling."""
    key = [int(seed), zlib.crc32(density_id.encode()), int(n), zlib.crc32(method.encode()), int(b)]
    return np.random.default_rng(np.random.SeedSequence(key))


# ----------------------------------------------------------------- reports


@dataclass(frozen=True)
class RiskEntry:
    density: str
    n: int
    method: str
    loss: str
    risk: float
    B: int
    seed: int
    stderr: float


CSV_FIELDS = [f.name for f in fields(RiskEntry)]


@dataclass
class RiskReport:
    entries: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def extend(self, other):
        self.entries.extend(other)
        return self

    def get(self, density: str, n: int, method: str, loss: str) -> RiskEntry:
        for e in self.entries:
            if (e.density, e.n, e.method, e.loss) == (density, n, method, loss):
                return e
        raise KeyError((density, n, method, loss))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for e in self.entries:
            row = asdict(e)
            row["risk"] = repr(float(e.risk))
            row["stderr"] = repr(float(e.stderr))
            writer.writerow(row)
        return buf.getvalue()

    def write_csv(self, path):
        Path(path).write_text(self.to_csv())


def read_risk_csv(path) -> RiskReport:
    """
    Read a risk table.  Only ``method,density,n,loss,risk`` are required, so
    results computed elsewhere can be merged in; missing ``B``, ``seed`` and
    ``stderr`` become 0, -1 and NaN.
    """
    out = RiskReport()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"method", "density", "n", "loss", "risk"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            out.entries.append(
                RiskEntry(
                    row["density"], int(row["n"]), row["method"], row["loss"], float(row["risk"]),
                    int(row.get("B") or 0), int(row.get("seed") or -1), float(row.get("stderr") or "nan"),
                )
            )
    return out


# ----------------------------------------------------------------- cells


def _replicate(task):
    density_id, n, method, losses, support_rule, seed, b = task
    try:
        f0 = get_density(density_id)
        x = f0.sample(n, replication_rng(seed, density_id, n, method, b))
        est = MethodSpec.parse(method).fit(x, support_for(density_id, x, support_rule))
        vals = [compute_loss(name, f0, est) for name in losses]
        return vals, est.k
    except Exception as err:  # noqa: BLE001 - re-raised with context
        raise ReplicationError(f"{density_id}, n={n}, {method}, replication {b}: {err}") from err


def _map(func, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks, chunksize=chunk))


@dataclass
class CellResult:
    entries: list
    losses: np.ndarray  # (B, n_losses)
    ks: np.ndarray

    @property
    def mean_k(self) -> float:
        return float(np.mean(self.ks))


def run_cell(density_id, n, method, losses=("hellinger",), B=500, seed=0, workers=1, support="sample") -> CellResult:
    """All requested losses for ``B`` replications of one (density, n, method)."""
    if B < 1:
        raise ValueError(f"B must be at least 1, got {B}")
    for name in losses:
        if name not in LOSSES:
            raise ValueError(f"unknown loss {name!r}; expected one of {LOSSES}")
    method = MethodSpec.parse(method).label
    get_density(density_id)
    if "pid" in losses:
        tolerances(density_id)  # validate and warm the cache before forking
    tasks = [(density_id, int(n), method, tuple(losses), support, int(seed), b) for b in range(B)]
    results = _map(_replicate, tasks, workers)
    vals = np.array([r[0] for r in results], dtype=float).reshape(B, len(losses))
    ks = np.array([r[1] for r in results])
    entries = []
    for j, name in enumerate(losses):
        col = vals[:, j]
        risk = math.fsum(col) / B
        se = float(np.std(col, ddof=1) / math.sqrt(B)) if B > 1 else 0.0
        entries.append(RiskEntry(density_id, int(n), method, name, risk, int(B), int(seed), se))
    return CellResult(entries, vals, ks)


def estimate_risk(density_id, n, method, loss="hellinger", B=500, seed=0, workers=1, support="sample") -> RiskEntry:
    """Monte Carlo risk ``(1/B) sum_b loss(f0, fit(x_b))`` with its standard error."""
    return run_cell(density_id, n, method, (loss,), B, seed, workers, support).entries[0]


# ----------------------------------------------------------------- summaries


@dataclass
class Summary:
    rows: list  # dicts: density, n, loss, method, risk, lrr, rank
    median_rank: dict  # (loss, method) -> median rank over cells

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "median_rank": [
                {"loss": loss, "method": m, "median_rank": r} for (loss, m), r in sorted(self.median_rank.items())
            ],
        }


def log_relative_risk(risks) -> np.ndarray:
    """``log R - log min R``; zero risks give 0 for the best and ``inf`` otherwise."""
    r = np.asarray(risks, dtype=float)
    best = r.min()
    if best > 0:
        return np.log(r) - math.log(best)
    return np.where(r == best, 0.0, np.inf)


def summarize(report) -> Summary:
    """
    Per (density, n, loss) cell: log-relative risk against the best method and
    ranks (1 = best, ties share the average rank); then the median rank of
    each method over cells.
    """
    cells = {}
    for e in report:
        cells.setdefault((e.density, e.n, e.loss), []).append(e)
    rows, per_method = [], {}
    for (density, n, loss_name), group in sorted(cells.items()):
        risks = np.array([e.risk for e in group])
        lrr = log_relative_risk(risks)
        ranks = rankdata(risks, method="average")
        for e, l, r in zip(group, lrr, ranks):
            rows.append({"density": density, "n": n, "loss": loss_name, "method": e.method,
                         "risk": e.risk, "lrr": float(l), "rank": float(r)})
            per_method.setdefault((loss_name, e.method), []).append(float(r))
    medians = {key: float(np.median(v)) for key, v in per_method.items()}
    return Summary(rows, medians)


def plot_data(rows, x: str, y: str, group) -> dict:
    """
    Plot series from a list of row dicts: one series per distinct value of
    the ``group`` keys, points sorted by ``x``.
    """
    group = (group,) if isinstance(group, str) else tuple(group)
    series = {}
    for row in rows:
        label = ", ".join(str(row[g]) for g in group)
        series.setdefault(label, []).append((row[x], row[y]))
    out = []
    for label, pts in series.items():
        pts.sort()
        out.append({"label": label, "x": [p[0] for p in pts], "y": [p[1] for p in pts]})
    return {"series": out}


# ----------------------------------------------------------------- experiments

SENSITIVITY_DENSITIES = ("gamma_3_3", "beta_3_3", "t3")
SENSITIVITY_NS = (100, 1000, 10000)


@dataclass
class SensitivityResult:
    report: RiskReport
    rows: list  # dicts: density, n, setting, risk, stderr, log_rel_risk, mean_k
    reference: str

    def mean_k_by_setting(self) -> dict:
        """Mean MAP bin count per setting, aggregated over densities and n."""
        acc = {}
        for r in self.rows:
            acc.setdefault(r["setting"], []).append(r["mean_k"])
        return {s: float(np.mean(v)) for s, v in acc.items()}


def _sensitivity(settings, reference, densities, ns, B, seed, workers, grid) -> SensitivityResult:
    report, rows = RiskReport(), []
    for density_id in densities:
        for n in ns:
            cell = {}
            for label, method in settings.items():
                res = run_cell(density_id, n, method, ("hellinger",), B, seed, workers, "known")
                report.extend(res.entries)
                cell[label] = (res.entries[0], res.mean_k)
            ref = cell[reference][0].risk
            for label, (entry, mean_k) in cell.items():
                rows.append({
                    "density": density_id, "n": n, "setting": label, "risk": entry.risk,
                    "stderr": entry.stderr, "log_rel_risk": math.log(entry.risk) - math.log(ref),
                    "mean_k": mean_k,
                })
    return SensitivityResult(report, rows, reference)


def sensitivity_k_prior(
    priors=("uniform", "power:1", "power:2", "poisson:1"),
    densities=SENSITIVITY_DENSITIES,
    ns=SENSITIVITY_NS,
    B=500,
    seed=0,
    workers=1,
    a=1.0,
    grid="quantile",
) -> SensitivityResult:
    """Hellinger risk for several priors on ``k``, relative to the uniform one."""
    settings = {p: f"rih[a={a:g},grid={grid},k_prior={p}]" for p in priors}
    reference = "uniform" if "uniform" in settings else next(iter(settings))
    return _sensitivity(settings, reference, densities, ns, B, seed, workers, grid)


def sensitivity_concentration(
    values=(0.01, 0.1, 1.0, 10.0, 100.0),
    densities=SENSITIVITY_DENSITIES,
    ns=SENSITIVITY_NS,
    B=500,
    seed=0,
    workers=1,
    grid="quantile",
) -> SensitivityResult:
    """Hellinger risk and mean bin count over concentrations, relative to ``a = 1``."""
    settings = {f"{a:g}": f"rih[a={a:g},grid={grid},k_prior=uniform]" for a in values}
    reference = "1" if "1" in settings else next(iter(settings))
    return _sensitivity(settings, reference, densities, ns, B, seed, workers, grid)


def sample_pvalues(n: int, pi0: float, beta: float, rng) -> np.ndarray:
    """Draws from ``pi0 * U(0, 1) + (1 - pi0) * Beta(1, beta)``."""
    null = rng.uniform(size=n) < pi0
    return np.where(null, rng.uniform(size=n), rng.beta(1.0, beta, size=n))


@dataclass(frozen=True)
class Pi0Entry:
    pi0: float
    beta: float
    n: int
    method: str
    rmse: float
    bias: float
    B: int
    seed: int


def _pi0_replicate(task):
    pi0, beta, n, method, seed, b = task
    key = f"pi0={pi0!r},beta={beta!r}"
    x = sample_pvalues(n, pi0, beta, replication_rng(seed, key, n, method, b))
    est = MethodSpec.parse(method).fit(x, support=(0.0, 1.0))
    return float(est.pdf(1.0))


def pi0_experiment(pi0s=(0.5, 0.8, 0.95), betas=(2.0, 4.0, 10.0), ns=(200, 1000, 5000), B=500, seed=0,
                   method="rih", workers=1) -> list:
    """RMSE of ``f(1)`` as an estimate of the null proportion, histogram fitted on ``[0, 1]``."""
    method = MethodSpec.parse(method).label
    out = []
    for pi0 in pi0s:
        if not 0.0 <= pi0 <= 1.0:
            raise ValueError(f"pi0 must lie in [0, 1], got {pi0}")
        for beta in betas:
            for n in ns:
                tasks = [(float(pi0), float(beta), int(n), method, int(seed), b) for b in range(B)]
                est = np.array(_map(_pi0_replicate, tasks, workers))
                err = est - pi0
                out.append(Pi0Entry(float(pi0), float(beta), int(n), method,
                                    math.sqrt(math.fsum(err**2) / B), math.fsum(err) / B, int(B), int(seed)))
    return out


# ----------------------------------------------------------------- campaigns

CAMPAIGN_SCHEMA = {
    "type": "object",
    "required": ["densities", "n", "methods", "losses", "B", "seed"],
    "additionalProperties": False,
    "properties": {
        "densities": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "n": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "methods": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "losses": {"type": "array", "items": {"enum": list(LOSSES)}, "minItems": 1},
        "B": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "support": {"enum": list(SUPPORT_RULES)},
    },
}


class ConfigError(ValueError):
    pass


def load_campaign(source) -> dict:
    """Parse and validate a campaign config (path, JSON text or dict)."""
    import jsonschema

    if isinstance(source, dict):
        cfg = source
    else:
        text = Path(source).read_text() if not str(source).lstrip().startswith("{") else str(source)
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config is not valid JSON: {err}") from None
    validator = jsonschema.Draft7Validator(CAMPAIGN_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        lines = [f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid campaign config:\n  " + "\n  ".join(lines))
    for d in cfg["densities"]:
        try:
            get_density(d)
        except (KeyError, ValueError) as err:
            raise ConfigError(f"densities: {err}") from None
    for m in cfg["methods"]:
        try:
            MethodSpec.parse(m)
        except ValueError as err:
            raise ConfigError(f"methods: {err}") from None
    return cfg


def run_campaign(cfg: dict, workers: int = 1) -> RiskReport:
    """Every (density, n, method) cell of a validated campaign config."""
    report = RiskReport()
    for density_id in cfg["densities"]:
        for n in cfg["n"]:
            for method in cfg["methods"]:
                res = run_cell(density_id, n, method, tuple(cfg["losses"]), cfg["B"], cfg["seed"], workers,
                               cfg.get("support", "sample"))
                report.extend(res.entries)
    return report
