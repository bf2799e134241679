"""Monte Carlo comparisons, the verification suite and flat-file reports.

Configurations are JSON documents; tables are CSV with exactly
round-tripping floats (``repr``); report summaries are ``key=value`` lines.
"""

from __future__ import annotations

import csv
import io
import json
import math
import traceback
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import analytics, fracops
from .errors import DomainError, NumericalFailure
from .model import (
    BernsteinFamily,
    JumpDistribution,
    ModelParams,
    as_index,
    indices_with_total,
    multi_indices,
)
from .stochastic import RngStream, sample_compound, sample_inverse_stable

__all__ = [
    "CheckResult",
    "ComparisonReport",
    "DEFAULT_TOLERANCES",
    "ExperimentConfig",
    "estimate_pmf_mc",
    "load_default_config",
    "moment_check_inverse_stable",
    "read_table_csv",
    "verify_all",
    "write_table_csv",
]

KMAX_TOTAL_LIMIT = 12

DEFAULT_TOLERANCES = {
    "prop1": 1e-7,
    "prop2_time": 1e-7,
    "prop2_space": 1e-6,
    "pgf_caputo": 1e-7,
    "pgf_rl": 1e-8,
    "OT": 1e-5,
    "PA": 1e-7,
    "lambda": 1e-4,
    "route": 1e-9,
    "marginal": 1e-10,
    "pgf_series": 1e-8,
    "levy": 1e-12,
    "continuity": 1e-3,
    "pmf_tv": 0.015,
    "moment_se": 4.0,
}


# ------------------------------------------------------------ config -------

@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams
    t: float = 1.0
    samples: int = 100_000
    seed: int = 42
    kmax: tuple = ()
    jumps: JumpDistribution | None = None
    bernstein: BernsteinFamily | None = None
    tolerances: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kmax", as_index(self.kmax or (6,) * self.model.m, self.model.m))
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.tolerances)
        object.__setattr__(self, "tolerances", tol)
        if not (self.t > 0 and math.isfinite(self.t)):
            raise DomainError("t must be positive and finite")
        if self.samples < 1:
            raise DomainError("samples must be at least 1")
        if self.workers < 1:
            raise DomainError("workers must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if sum(self.kmax) > KMAX_TOTAL_LIMIT:
            raise DomainError(f"|kmax| must not exceed {KMAX_TOTAL_LIMIT}")
        bad = [k for k, v in tol.items() if not v > 0]
        if bad:
            raise DomainError(f"tolerances must be positive: {bad}")
        if self.jumps is not None:
            self.jumps.validate(self.model)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            mod = d["model"]
            params = ModelParams(tuple(mod["lam"]), mod["eta"], mod["nu"])
            jumps = d.get("jumps", "unit")
            if jumps in (None, "unit"):
                jumps = None
            else:
                jumps = JumpDistribution.from_dict(jumps)
            bern = d.get("bernstein")
            bern = None if bern is None else BernsteinFamily.from_dict(bern)
            return cls(model=params, t=float(d.get("t", 1.0)),
                       samples=int(d.get("samples", 100_000)), seed=int(d.get("seed", 42)),
                       kmax=tuple(d.get("kmax", ())), jumps=jumps, bernstein=bern,
                       tolerances=dict(d.get("tolerances", {})),
                       workers=int(d.get("workers", 1)))
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed configuration: {exc!r}") from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DomainError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def with_overrides(self, t=None, seed=None, samples=None, eta=None, nu=None,
                       workers=None) -> "ExperimentConfig":
        changes = {}
        if eta is not None or nu is not None:
            changes["model"] = self.model.replace(
                **{k: v for k, v in (("eta", eta), ("nu", nu)) if v is not None})
        for name, val in (("t", t), ("seed", seed), ("samples", samples), ("workers", workers)):
            if val is not None:
                changes[name] = val
        if not changes:
            return self
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return ExperimentConfig(**d)

    def to_dict(self) -> dict:
        d = {
            "model": {"lam": list(self.model.lam), "eta": self.model.eta, "nu": self.model.nu},
            "t": self.t, "samples": self.samples, "seed": self.seed,
            "kmax": list(self.kmax), "tolerances": dict(self.tolerances),
            "workers": self.workers,
        }
        d["jumps"] = "unit" if self.jumps is None else [
            {k: v for k, v in vars(f).items() if not (isinstance(v, float) and math.isnan(v))}
            for f in self.jumps.families]
        if self.bernstein is not None:
            f = self.bernstein
            d["bernstein"] = {"family": f.kind, "eta": f.eta} if f.kind == "stable" else \
                {"family": f.kind, "a": f.a, "b": f.b}
        return d


def load_default_config() -> ExperimentConfig:
    """The shipped desk-scale configuration."""
    text = resources.files("mfpp").joinpath("data/default.json").read_text(encoding="utf-8")
    return ExperimentConfig.from_dict(json.loads(text))


# ------------------------------------------------------------ reports ------

@dataclass
class CheckResult:
    check: str
    metric: str
    value: float
    tolerance: float
    passed: bool
    error: str | None = None


@dataclass
class ComparisonReport:
    """Named collection of checks plus optional per-cell comparison table."""

    name: str
    checks: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    table: list = field(default_factory=list)  # rows (key, analytic, empirical, se)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def add(self, check, metric, value, tolerance, passed=None, error=None):
        value = float(value)
        if passed is None:
            passed = error is None and value <= tolerance
        self.checks.append(CheckResult(check, metric, value, float(tolerance), bool(passed), error))
        return self.checks[-1]

    def add_error(self, check, metric, tolerance, exc):
        self.checks.append(CheckResult(check, metric, math.nan, float(tolerance), False,
                                       f"{type(exc).__name__}: {exc}"))

    def extend(self, other: "ComparisonReport"):
        self.checks.extend(other.checks)

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "metric", "value", "tolerance", "pass"])
        for c in self.checks:
            w.writerow([c.check, c.metric, repr(c.value), repr(c.tolerance),
                        "true" if c.passed else "false"])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    @staticmethod
    def checks_from_csv(text: str) -> list:
        rows = list(csv.reader(io.StringIO(text)))
        return [CheckResult(r[0], r[1], float(r[2]), float(r[3]), r[4] == "true")
                for r in rows[1:]]

    def summary(self) -> str:
        lines = [f"report={self.name}", f"passed={'true' if self.passed else 'false'}",
                 f"checks={len(self.checks)}",
                 f"failed={sum(not c.passed for c in self.checks)}"]
        for key, val in sorted(_flatten(self.config).items()):
            lines.append(f"config.{key}={val}")
        for c in self.checks:
            lines.append(f"{c.check}.{c.metric}={c.value!r}")
            if c.error:
                lines.append(f"{c.check}.error={c.error}")
        return "\n".join(lines) + "\n"


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def write_table_csv(rows, m, value_name="p", fh=None) -> str:
    """CSV with header ``k1..km,<value_name>``; ``rows`` are ``(k, value)``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"k{i + 1}" for i in range(m)] + [value_name])
    for k, v in rows:
        w.writerow(list(k) + [repr(float(v))])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_table_csv(text: str):
    """Inverse of :func:`write_table_csv`: list of ``(k, value)``."""
    rows = list(csv.reader(io.StringIO(text)))
    return [(tuple(int(x) for x in r[:-1]), float(r[-1])) for r in rows[1:]]


# --------------------------------------------------------- Monte Carlo -----

def _split(samples, workers):
    base, extra = divmod(samples, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


def _fan_out(config: ExperimentConfig, fn):
    # stream id = worker index; results are reduced in stream order
    sizes = _split(config.samples, config.workers)
    jobs = [(RngStream(config.seed, w), n) for w, n in enumerate(sizes) if n > 0]
    if config.workers == 1:
        return [fn(rng, n) for rng, n in jobs]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def _wilson_se(phat, n):
    # half-width of the z=1 Wilson score interval
    return math.sqrt(phat * (1.0 - phat) / n + 1.0 / (4.0 * n * n)) / (1.0 + 1.0 / n)


def _analytic_pmf(config: ExperimentConfig, k):
    if config.jumps is None or config.jumps.is_unit:
        return analytics.pmf(config.model, k, config.t)
    return analytics.compound_pmf(config.model, config.jumps, k, config.t)


def estimate_pmf_mc(config: ExperimentConfig):
    """Empirical pmf on ``k <= kmax`` against the analytic table.

    Returns ``(empirical, report)`` where ``empirical`` maps each ``k`` to its
    relative frequency. The total-variation distance includes the mass
    outside the box as one extra cell.
    """
    params = config.model
    jumps = config.jumps or JumpDistribution.unit(params.m)

    def run(rng, n):
        draws = np.asarray(sample_compound(params, jumps, config.t, rng, size=n))
        return Counter(map(tuple, draws.tolist()))

    counts = Counter()
    for part in _fan_out(config, run):
        counts.update(part)
    n = config.samples
    report = ComparisonReport("pmf_mc", config=config.to_dict())
    empirical = {}
    tv_inside = []
    max_abs = 0.0
    analytic_in = []
    for k in multi_indices(config.kmax):
        p = _analytic_pmf(config, k)
        e = counts.get(k, 0) / n
        empirical[k] = e
        analytic_in.append(p)
        tv_inside.append(abs(e - p))
        max_abs = max(max_abs, abs(e - p))
        report.table.append((k, p, e, _wilson_se(e, n)))
    e_out = 1.0 - math.fsum(empirical.values())
    p_out = max(0.0, 1.0 - math.fsum(analytic_in))
    tv = 0.5 * (math.fsum(tv_inside) + abs(e_out - p_out))
    report.add("pmf_mc", "tv", tv, config.tolerances["pmf_tv"])
    report.add("pmf_mc", "max_abs", max_abs, config.tolerances["pmf_tv"])
    return empirical, report


def moment_check_inverse_stable(nu, t, k_list, samples, seed, workers=1, n_se=4.0):
    """Empirical moments of ``L^nu(t)`` against ``k! t^(nu k) / Gamma(nu k + 1)``."""
    k_list = list(k_list)
    if any(k not in (1, 2, 3) for k in k_list):
        raise DomainError("moment orders must lie in {1, 2, 3}")
    params = ModelParams((1.0,), 1.0, nu)
    config = ExperimentConfig(model=params, t=t, samples=samples, seed=seed, kmax=(0,),
                              workers=workers)

    def run(rng, n):
        L = np.asarray(sample_inverse_stable(nu, t, rng, size=n), dtype=float)
        return [(math.fsum(L ** k), math.fsum(L ** (2 * k))) for k in k_list]

    parts = _fan_out(config, run)
    report = ComparisonReport("moments_inverse_stable",
                              config={"nu": nu, "t": t, "samples": samples, "seed": seed})
    for idx, k in enumerate(k_list):
        s1 = math.fsum(p[idx][0] for p in parts)
        s2 = math.fsum(p[idx][1] for p in parts)
        mean = s1 / samples
        var = max(0.0, s2 / samples - mean * mean)
        se = math.sqrt(var / samples) if samples > 1 else math.inf
        exact = math.factorial(k) * t ** (nu * k) / math.gamma(nu * k + 1.0)
        dev = abs(mean - exact)
        if se == 0.0:
            ok = math.isclose(mean, exact, rel_tol=1e-12, abs_tol=0.0)
        else:
            ok = dev <= n_se * se
        report.add(f"moment_{k}", "abs_dev", dev, n_se * se, passed=ok)
        report.table.append(((k,), exact, mean, se))
    return report


# -------------------------------------------------------- verification -----

def _guard(report, check, metric, tol, fn):
    try:
        val = fn()
    except (DomainError, NumericalFailure, ArithmeticError, ValueError) as exc:
        report.add_error(check, metric, tol, exc)
    except Exception as exc:  # noqa: BLE001  - never abort the suite
        report.add_error(check, metric, tol,
                         RuntimeError(f"{exc!r}\n{traceback.format_exc(limit=3)}"))
    else:
        report.add(check, metric, val, tol)


def _indices_upto(total, m):
    for K in range(total + 1):
        yield from indices_with_total(K, m)


def _alphas(m):
    return tuple(float(a) for a in np.linspace(0.4, 0.7, m)) if m > 1 else (0.4,)


def verify_all(config: ExperimentConfig, include_mc=True) -> ComparisonReport:
    """Run every residual, route equivalence, normalization, Levy and
    sampler check; component errors are recorded as failed checks."""
    p = config.model
    m = p.m
    t = config.t
    tol = config.tolerances
    rep = ComparisonReport("verify_all", config=config.to_dict())

    def worst(fn, indices):
        return max(fn(k) for k in indices)

    _guard(rep, "prop1", "max_residual", tol["prop1"],
           lambda: worst(lambda k: fracops.residual_prop1(p, k, t), _indices_upto(5, m)))

    p_time = p.replace(eta=1.0)
    geo = JumpDistribution.geometric(_alphas(m))
    _guard(rep, "prop2_time_geometric", "max_residual", tol["prop2_time"],
           lambda: worst(lambda k: fracops.residual_prop2_time(p_time, geo, k, t),
                         _indices_upto(3, m)))
    logj = JumpDistribution.logarithmic(_alphas(m))
    _guard(rep, "prop2_time_logarithmic", "max_residual", tol["prop2_time"],
           lambda: worst(lambda k: fracops.residual_prop2_time(
               logj.params_with_implied(1.0, p.nu), logj, k, t), _indices_upto(3, m)))
    for name, eta in (("half", 0.5), ("third", 1.0 / 3.0)):
        ps = p.replace(eta=eta, nu=1.0)
        _guard(rep, f"prop2_space_{name}", "max_residual", tol["prop2_space"],
               lambda ps=ps: worst(lambda k: fracops.residual_prop2_space(
                   ps, JumpDistribution.unit(m), k, t), _indices_upto(3, m)))
    _guard(rep, "pgf_caputo", "residual", tol["pgf_caputo"],
           lambda: fracops.residual_pgf_caputo(p, (0.5,) * m, t))
    _guard(rep, "pgf_rl", "residual", tol["pgf_rl"],
           lambda: fracops.residual_pgf_rl(p.replace(nu=1.0), (0.5,) * m, t))

    p1 = p.replace(nu=1.0)
    # at eta = 1 the stable subordinator is the pure drift t and is covered by prop1
    families = [("stable", BernsteinFamily.stable(p.eta))] if p.eta < 1.0 else []
    families.append(("gamma", BernsteinFamily.gamma(1.0, 1.0)))
    if config.bernstein is not None:
        families.append(("config", config.bernstein))
    for name, f in families:
        _guard(rep, f"OT_{name}", "max_residual", tol["OT"],
               lambda f=f: worst(lambda k: fracops.residual_OT(p1, f, k, t), _indices_upto(3, m)))

    _guard(rep, "PA_time", "max_residual", tol["PA"],
           lambda: worst(lambda k: fracops.residual_PA(p_time, _alphas(m), k, t),
                         _indices_upto(3, m)))

    try:
        k = (2,) + (1,) * (m - 1)
        a = fracops.residual_PA(p_time, (1.0,) * m, k, t)
        b = fracops.residual_corollary(p_time, k, t)
        # the reduction must hold identically, not merely within tolerance
        rep.add("PA_unit_reduction", "abs_diff", abs(a - b), 0.0, passed=(a == b))
    except Exception as exc:  # noqa: BLE001
        rep.add_error("PA_unit_reduction", "abs_diff", 0.0, exc)

    _guard(rep, "lambda_derivative", "max_abs_diff", tol["lambda"],
           lambda: worst(lambda k: fracops.lambda_derivative_check(p, k, t), _indices_upto(3, m)))

    _guard(rep, "route_fox_wright", "max_abs_diff", tol["route"],
           lambda: worst(lambda k: abs(analytics.pmf(p, k, t, route="series")
                                       - analytics.pmf(p, k, t, route="fox_wright")),
                         _indices_upto(6, m)))
    _guard(rep, "route_eta1", "max_abs_diff", tol["route"],
           lambda: worst(lambda k: abs(analytics.pmf(p_time, k, t, route="series")
                                       - analytics.pmf_eta1(p_time, k, t)),
                         _indices_upto(6, m)))

    def marginal():
        worst_diff = 0.0
        for K in range(0, 21):
            total = math.fsum(analytics.pmf(p, k, t) for k in indices_with_total(K, m))
            worst_diff = max(worst_diff, abs(total - analytics.total_count_pmf(p.s, p.eta, p.nu, t, K)))
        return worst_diff
    _guard(rep, "marginalization", "max_abs_diff", tol["marginal"], marginal)

    def pgf_series():
        u = (0.5,) * m
        acc = math.fsum(analytics.pmf(p, k, t) * 0.5 ** sum(k) for k in _indices_upto(60, m))
        return abs(acc - analytics.pgf(p, u, t))
    _guard(rep, "normalization_pgf", "abs_diff", tol["pgf_series"], pgf_series)

    unit = JumpDistribution.unit(m)
    _guard(rep, "levy_unit_jumps", "max_abs_diff", tol["levy"],
           lambda: worst(lambda k: abs(analytics.levy_measure_C(p, unit, k)
                                       - analytics.levy_measure_N(p, k)),
                         [k for k in _indices_upto(8, m) if any(k)]))

    def levy_eta1():
        dev = 0.0
        for k in (k for k in _indices_upto(6, m) if any(k)):
            axis = [i for i, x in enumerate(k) if x]
            on_axis = len(axis) == 1
            exp_n = p_time.lam[axis[0]] if on_axis and k[axis[0]] == 1 else 0.0
            exp_c = p_time.lam[axis[0]] * geo.table(axis[0])[k[axis[0]]] if on_axis else 0.0
            dev = max(dev, abs(analytics.levy_measure_N(p_time, k) - exp_n),
                      abs(analytics.levy_measure_C(p_time, geo, k) - exp_c))
        return dev
    _guard(rep, "levy_eta1", "max_abs_diff", tol["levy"], levy_eta1)

    def continuity():
        # cross term relative to lambda_j lambda_h t^2 just below nu = 1
        if analytics.z_nu(1.0) != 0.0:
            return math.inf
        pc = p.replace(eta=1.0, nu=0.9999)
        if m == 1:
            return analytics.z_nu(pc.nu)
        return analytics.covariance(pc, 0, 1, t) / (pc.lam[0] * pc.lam[1] * t * t)
    _guard(rep, "z_continuity", "relative_cross_term", tol["continuity"], continuity)

    if include_mc:
        try:
            _, mc = estimate_pmf_mc(config)
            rep.extend(ComparisonReport("pmf_mc", checks=mc.checks[:1]))
        except Exception as exc:  # noqa: BLE001
            rep.add_error("pmf_mc", "tv", tol["pmf_tv"], exc)
        try:
            mrep = moment_check_inverse_stable(p.nu, t, (1, 2), config.samples,
                                               config.seed, config.workers, tol["moment_se"])
            rep.extend(mrep)
        except Exception as exc:  # noqa: BLE001
            rep.add_error("moments", "abs_dev", tol["moment_se"], exc)
    return rep
