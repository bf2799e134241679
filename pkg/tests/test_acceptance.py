"""End-to-end acceptance criteria; each test records one PASS/FAIL line per part."""

import cmath
import math

import numpy as np
import pytest
from scipy import integrate

from mfpp import analytics as A
from mfpp import fracops as F
from mfpp.cli import main
from mfpp.harness import load_default_config, moment_check_inverse_stable, estimate_pmf_mc
from mfpp.model import (
    BernsteinFamily,
    JumpDistribution,
    ModelParams,
    convolution_power,
    indices_with_total,
    multi_indices,
)
from mfpp.specfun import mittag_leffler, mittag_leffler_3
from mfpp.stochastic import RngStream, sample_OT_process, sample_process

DESK = ModelParams((1.0, 2.0), 0.7, 0.8)


def upto(total, m=2):
    for K in range(total + 1):
        yield from indices_with_total(K, m)


def finish(acceptance, criterion, parts):
    for name, ok, detail in parts:
        acceptance(criterion, name, ok, detail)
    failed = [name for name, ok, _ in parts if not ok]
    assert not failed, f"criterion {criterion} failed parts: {failed}"


def test_criterion_1_special_functions(acceptance):
    parts = []
    xs = np.linspace(-20.0, 20.0, 401)
    err = max(abs(mittag_leffler(1, 1, x) - math.exp(x)) / max(1.0, math.exp(x)) for x in xs)
    parts.append(("E_11 = exp on [-20, 20]", err <= 1e-12, f"max scaled err {err:.2e}"))
    err = abs(mittag_leffler(0.5, 1, -1.0) - 0.4275835762)
    parts.append(("E_1/2(-1) erfc oracle", err <= 1e-9, f"err {err:.2e}"))
    err = max(abs(mittag_leffler_3(a, b, 1.0, x) - mittag_leffler(a, b, x))
              for a in (0.3, 0.6, 0.9) for b in (0.5, 1.0, 2.0) for x in (-8.0, -1.0, 0.5, 3.0))
    parts.append(("three-parameter gamma=1 reduction", err <= 1e-12, f"max err {err:.2e}"))
    err = max(abs(A.pmf(DESK, k, t, route="fox_wright") - A.pmf(DESK, k, t, route="series"))
              for t in (0.5, 1.0, 2.0) for k in upto(6))
    parts.append(("Fox-Wright vs series |k| <= 6", err <= 1e-9, f"max err {err:.2e}"))
    finish(acceptance, 1, parts)


def test_criterion_2_forward_equation_grid(acceptance):
    worst, where = 0.0, None
    for eta in (0.5, 0.7, 1.0):
        for nu in (0.6, 0.8, 1.0):
            p = ModelParams((1.0, 2.0), eta, nu)
            for t in (0.25, 0.5, 1.0, 2.0):
                for k in upto(5):
                    r = F.residual_prop1(p, k, t)
                    if r > worst:
                        worst, where = r, (eta, nu, t, k)
    finish(acceptance, 2, [("residual grid", worst <= 1e-7, f"max {worst:.2e} at {where}")])


def test_criterion_3_compound_equations(acceptance):
    parts = []
    geo = JumpDistribution.geometric((0.4, 0.7))
    p_time = DESK.replace(eta=1.0)
    err = max(F.residual_prop2_time(p_time, geo, k, 1.0) for k in upto(4))
    parts.append(("time, geometric jumps", err <= 1e-7, f"max {err:.2e}"))
    logj = JumpDistribution.logarithmic((0.4, 0.7))
    p_log = logj.params_with_implied(1.0, 0.8)
    err = max(F.residual_prop2_time(p_log, logj, k, 1.0) for k in upto(4))
    parts.append(("time, logarithmic jumps", err <= 1e-7, f"max {err:.2e}"))
    for label, eta in (("1/2", 0.5), ("1/3", 1.0 / 3.0)):
        p = DESK.replace(eta=eta, nu=1.0)
        err = max(max(F.residual_prop2_space(p, JumpDistribution.unit(2), k, 1.0),
                      F.residual_prop2_space(p, geo, k, 1.0)) for k in upto(4))
        parts.append((f"space, eta={label}", err <= 1e-6, f"max {err:.2e}"))
    for eta in (0.3, 0.7):
        err = F.residual_pgf_rl(DESK.replace(eta=eta, nu=1.0), (0.5, 0.5), 1.0)
        parts.append((f"pgf exponential rule, eta={eta}", err <= 1e-8, f"{err:.2e}"))
    finish(acceptance, 3, parts)


def test_criterion_4_state_probabilities(acceptance):
    parts = []
    cfg = load_default_config()
    p, t = cfg.model, cfg.t
    total = math.fsum(A.pmf(p, k, t) for k in upto(60))
    parts.append(("normalization over |k| <= 60", total >= 1 - 1e-6, f"sum {total:.6f}"))
    uni = ModelParams((p.lam[0],), p.eta, p.nu)
    err = max(abs(math.fsum(A.pmf(p, (k1, k2), t) for k2 in range(61)) - A.pmf(uni, (k1,), t))
              for k1 in range(6))
    parts.append(("marginalization", err <= 1e-6, f"max err {err:.2e}"))
    p1 = p.replace(eta=1.0)
    err = max(abs(A.pmf_eta1(p1, k, t) - A.pmf(p1, k, t, route="series")) for k in upto(6))
    parts.append(("eta=1 three-parameter route", err <= 1e-9, f"max err {err:.2e}"))
    finish(acceptance, 4, parts)


def test_criterion_5_lambda_derivative(acceptance):
    err = max(F.lambda_derivative_check(DESK, k, 1.0) for k in upto(3))
    finish(acceptance, 5, [("finite-difference representation |k| <= 3", err <= 1e-4,
                            f"max err {err:.2e}")])


def test_criterion_6_covariance_codifference(acceptance):
    parts = []
    p, t, n = ModelParams((1.0, 2.0), 1.0, 0.8), 1.0, 1_000_000
    x = sample_process(p, t, RngStream(606), size=n).astype(float)
    centered = x - x.mean(axis=0)
    worst = 0.0
    for j, h in ((0, 0), (0, 1), (1, 1)):
        prod = centered[:, j] * centered[:, h]
        se = prod.std(ddof=1) / math.sqrt(n)
        worst = max(worst, abs(prod.mean() - A.covariance(p, j, h, t)) / se)
    parts.append(("MC covariance", worst <= 4.0, f"max |dev|/SE {worst:.2f}"))
    parts.append(("Z(1) = 0", A.z_nu(1.0) == 0.0, f"Z(1) = {A.z_nu(1.0)!r}"))
    tau0 = A.codifference(DESK, 0, 1, 0.0)
    parts.append(("codifference at t=0", tau0 == 0, f"{tau0!r}"))
    # eta = nu = 1: E exp(i theta N_j) = exp(lambda_j t (e^{i theta} - 1))
    q = ModelParams((1.0, 2.0), 1.0, 1.0)
    err = 0.0
    for tt in (0.5, 1.0, 2.0):
        for j in range(2):
            for h in range(2):
                lj, lh = q.lam[j], q.lam[h]
                if j == h:
                    joint = 0.0
                else:
                    joint = lj * tt * (cmath.exp(1j) - 1) + lh * tt * (cmath.exp(-1j) - 1)
                oracle = joint - lj * tt * (cmath.exp(1j) - 1) - lh * tt * (cmath.exp(-1j) - 1)
                err = max(err, abs(A.codifference(q, j, h, tt) - oracle))
    parts.append(("codifference exponential reduction", err <= 1e-10, f"max err {err:.2e}"))
    finish(acceptance, 6, parts)


def _levy_quadrature(p, jumps, k):
    eta, s = p.eta, p.s

    def bracket(z):
        acc = 0.0
        for n in multi_indices(k):
            if not any(n):
                continue
            w = 1.0
            for i, (ni, ki) in enumerate(zip(n, k)):
                w *= (p.lam[i] * z) ** ni / math.factorial(ni) * convolution_power(jumps, i, ni, ki)
            acc += w
        return acc

    val, _ = integrate.quad(lambda z: math.exp(-s * z) * bracket(z) * z ** (-eta - 1.0),
                            0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)
    return eta / math.gamma(1.0 - eta) * val


def test_criterion_7_levy_measures(acceptance):
    parts = []
    unit = JumpDistribution.unit(2)
    same = all(A.levy_measure_C(DESK, unit, k) == A.levy_measure_N(DESK, k)
               for k in upto(8) if any(k))
    parts.append(("unit jumps rho_C == rho_N", same, "|k| <= 8"))
    p1 = DESK.replace(eta=1.0)
    geo = JumpDistribution.geometric((0.4, 0.7))
    exact = True
    for k in (k for k in upto(6) if any(k)):
        axis = [i for i, v in enumerate(k) if v]
        n_exp = p1.lam[axis[0]] if len(axis) == 1 and k[axis[0]] == 1 else 0.0
        c_exp = p1.lam[axis[0]] * geo.table(axis[0])[k[axis[0]]] if len(axis) == 1 else 0.0
        exact &= A.levy_measure_N(p1, k) == n_exp and A.levy_measure_C(p1, geo, k) == c_exp
    parts.append(("eta=1 branches", exact, "|k| <= 6"))
    pq = ModelParams((1.0, 2.0), 0.6, 1.0)
    rel = max(abs(A.levy_measure_C(pq, geo, k) / _levy_quadrature(pq, geo, k) - 1.0)
              for k in ((1, 0), (0, 2), (2, 1), (1, 3), (3, 3)))
    parts.append(("closed form vs quadrature", rel <= 1e-6, f"max rel err {rel:.2e}"))
    pm = ModelParams((1.0,), 0.5, 1.0)
    total = math.fsum(x.mass for x in A.levy_point_masses(pm, 80))
    rel = abs(total / pm.s ** pm.eta - 1.0)
    parts.append(("total mass over |k| <= 80", rel <= 1e-3, f"rel err {rel:.3e}"))
    finish(acceptance, 7, parts)


def test_criterion_8_general_subordinator(acceptance):
    parts = []
    p1 = DESK.replace(nu=1.0)
    for name, f in (("stable", BernsteinFamily.stable(0.7)), ("gamma", BernsteinFamily.gamma(1.0, 1.0))):
        err = max(F.residual_OT(p1, f, k, 1.0) for k in upto(4))
        parts.append((f"forward equation, {name}", err <= 1e-5, f"max {err:.2e}"))
    f = BernsteinFamily.stable(0.7)
    err = 0.0
    for u1 in np.linspace(0, 1, 5):
        for u2 in np.linspace(0, 1, 5):
            closed = DESK.s ** 0.7 * (1 - (u1 + 2 * u2) / DESK.s) ** 0.7
            err = max(err, abs(A.f_tilde(DESK, f, (u1, u2)) - closed))
    parts.append(("stable f_tilde closed form", err <= 1e-12, f"max err {err:.2e}"))
    g = BernsteinFamily.gamma(1.0, 1.0)
    x = sample_OT_process(p1, g, 1.0, 1.0, RngStream(808), size=1_000_000)
    z = 0.5 ** x.sum(axis=1)
    se = z.std(ddof=1) / math.sqrt(z.size)
    dev = abs(z.mean() - A.pgf_OT(p1, g, 1.0, (0.5, 0.5), 1.0))
    parts.append(("gamma pgf Monte Carlo", dev <= 3 * se, f"|dev|/SE {dev / se:.2f}"))
    finish(acceptance, 8, parts)


def test_criterion_9_polya_aeppli(acceptance):
    parts = []
    p = DESK.replace(eta=1.0)
    err = max(F.residual_PA(p, (0.4, 0.7), k, 1.0) for k in upto(3))
    parts.append(("time residual", err <= 1e-7, f"max {err:.2e}"))
    same = all(F.residual_PA(p, (1.0, 1.0), k, 1.0) == F.residual_corollary(p, k, 1.0)
               for k in upto(3))
    parts.append(("alpha=1 reduction bitwise", same, "|k| <= 3"))
    finish(acceptance, 9, parts)


def test_criterion_10_samplers(acceptance):
    parts = []
    rep = moment_check_inverse_stable(0.8, 1.0, (1, 2), 1_000_000, 1010)
    dev = max(c.value / c.tolerance * 4.0 for c in rep.checks)
    parts.append(("inverse-stable moments", rep.passed, f"max |dev|/SE {dev:.2f}"))
    _, mc = estimate_pmf_mc(load_default_config())
    tv = mc.checks[0].value
    parts.append(("process pmf total variation", tv < 0.015, f"TV {tv:.4f}"))
    finish(acceptance, 10, parts)


def test_criterion_11_cli(acceptance, tmp_path, capsys):
    parts = []
    code = main(["verify", "--out", str(tmp_path / "verify.csv")])
    parts.append(("verify on default config", code == 0, f"exit {code}"))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["simulate", "--out", str(a)])
    main(["simulate", "--out", str(b)])
    parts.append(("determinism", a.read_bytes() == b.read_bytes(), "two simulate runs"))
    finish(acceptance, 11, parts)
