"""Fractional operators and residual certification of the evolution equations.

State probabilities are represented as truncated series in ``t^nu`` with
50-digit coefficients (:class:`mfpp.model.PowerSeriesTNu`). Caputo and
integer-order derivatives act termwise on these series; the fractional
difference acts on the lattice of values at a fixed time. Every residual is
assembled in extended precision and only the final absolute value is
rounded to a float, so double-precision cancellation never enters.
"""

from __future__ import annotations

import functools
import math
import warnings
from typing import Callable

from scipy import integrate

from ._series import mp_context
from .analytics import pmf_OT
from .errors import DomainError, NumericalFailure
from .model import (
    BernsteinFamily,
    JumpDistribution,
    ModelParams,
    PowerSeriesTNu,
    SERIES_DPS,
    as_index,
    bernstein_eval,
    convolution_power,
    indices_with_total,
    leq,
    levy_moment_rate,
    multi_indices,
)

__all__ = [
    "LatticeFunction",
    "caputo_quadrature",
    "caputo_termwise",
    "frac_difference",
    "lambda_derivative_check",
    "pmf_series",
    "residual_corollary",
    "residual_OT",
    "residual_PA",
    "residual_pgf_caputo",
    "residual_pgf_rl",
    "residual_prop1",
    "residual_prop2_space",
    "residual_prop2_time",
    "rl_integer_derivative",
]

DEFAULT_ORDER = 120
MAX_ORDER = 4000
RL_TAIL_TOL = 1e-12
# coefficient tail target (with room for up to three termwise derivatives)
ORDER_LOG_TOL = math.log(1e-30)


def _ctx():
    return mp_context(SERIES_DPS)


# ------------------------------------------------------------ series -------

def _log_coeff_bound(s_eta, eta, nu, K, r):
    # log|c_r| of the total-count series, or None for an exact zero
    lm = r * math.log(s_eta) - math.lgamma(K + 1.0) - math.lgamma(nu * r + 1.0)
    for i in range(K):
        f = eta * r - i
        if f == 0.0:
            return None
        lm += math.log(abs(f))
    return lm


def series_order(params: ModelParams, K: int, t: float) -> int:
    """Truncation order making the tail of the ``|k| = K`` series negligible
    at time ``t`` (never below the default 120)."""
    s_eta = params.s ** params.eta
    log_t = math.log(t) if t > 0 else -math.inf
    start = int(K / params.eta) + 2
    below = 0
    for r in range(start, MAX_ORDER):
        lm = _log_coeff_bound(s_eta, params.eta, params.nu, K, r)
        if lm is None:
            below = 0
            continue
        lm += params.nu * r * log_t + 3.0 * math.log(r + 1.0)
        below = below + 1 if lm < ORDER_LOG_TOL else 0
        if below >= 3:
            return max(DEFAULT_ORDER, r)
    raise NumericalFailure(f"series in t^nu needs more than {MAX_ORDER} terms at t={t}")


@functools.lru_cache(maxsize=1024)
def _total_count_coeffs(s, eta, nu, K, order):
    ctx = _ctx()
    x = -(ctx.mpf(s) ** ctx.mpf(eta))
    kf = ctx.factorial(K)
    sign = (-1) ** K
    out = []
    xr = ctx.mpf(1)
    for r in range(order + 1):
        er = ctx.mpf(eta) * r
        ff = ctx.mpf(1)
        for i in range(K):
            ff *= er - i
        out.append(sign * xr * ff / (kf * ctx.gamma(ctx.mpf(nu) * r + 1)))
        xr *= x
    return tuple(out)


def pmf_series(params: ModelParams, k, order=DEFAULT_ORDER) -> PowerSeriesTNu:
    """Coefficients of ``p_k(t)`` as a series in ``t^nu`` up to ``order``.

    Coefficients at poles of the Gamma ratio are exact zeros.
    """
    k = as_index(k, params.m)
    ctx = _ctx()
    K = sum(k)
    base = _total_count_coeffs(params.s, params.eta, params.nu, K, order)
    split = ctx.factorial(K)
    s = ctx.mpf(params.s)
    for ki, lam in zip(k, params.lam):
        split *= (ctx.mpf(lam) / s) ** ki / ctx.factorial(ki)
    return PowerSeriesTNu(params.nu, [split * c for c in base])


def caputo_termwise(series: PowerSeriesTNu) -> PowerSeriesTNu:
    """Caputo derivative of order ``nu`` applied term by term:
    ``t^(nu r) -> Gamma(nu r + 1) / Gamma(nu (r-1) + 1) t^(nu (r-1))``."""
    factors = _power_rule_factors(series.nu, series.order)
    coeffs = [c * f for c, f in zip(series.coeffs[1:], factors)]
    return PowerSeriesTNu(series.nu, coeffs or [0])


@functools.lru_cache(maxsize=64)
def _power_rule_factors(nu, order):
    ctx = _ctx()
    nu = ctx.mpf(nu)
    return tuple(ctx.gamma(nu * r + 1) / ctx.gamma(nu * (r - 1) + 1)
                 for r in range(1, order + 1))


def rl_integer_derivative(series: PowerSeriesTNu, n: int, t, as_mp=False):
    """Right-sided Riemann-Liouville derivative of integer order ``n``:
    ``(-1)^n d^n/dt^n`` applied termwise at ``t > 0``.

    Raises
    ------
    NumericalFailure
        If the last differentiated term is not below 1e-12.
    """
    if n < 1 or int(n) != n:
        raise DomainError("order must be a positive integer")
    if not t > 0:
        raise DomainError("t must be positive")
    ctx = series.ctx()
    nu = ctx.mpf(series.nu)
    tt = ctx.mpf(t)
    acc = ctx.mpf(0)
    last = ctx.mpf(0)
    for r, c in enumerate(series.coeffs):
        p = nu * r
        ff = ctx.mpf(1)
        for i in range(n):
            ff *= p - i
        if ff == 0 or c == 0:
            last = ctx.mpf(0)
            continue
        last = c * ff * tt ** (p - n)
        acc += last
    if abs(last) >= RL_TAIL_TOL:
        raise NumericalFailure(
            f"series tail {float(abs(last)):.3g} too large for differentiation at t={t}",
            bound=float(abs(last)))
    out = (-1) ** n * acc
    return out if as_mp else float(out)


def caputo_quadrature(fn: Callable[[float], float], nu, t, h_rel=1e-5):
    """Caputo derivative of ``fn`` at ``t`` by quadrature.

    With ``s = t (1 - w^(1/(1-nu)))`` the kernel is absorbed and

        D^nu fn(t) = t^(1-nu) / Gamma(2-nu) * int_0^1 fn'(s(w)) dw,

    where ``fn'`` is a central difference with step ``1e-5 t``. Near ``s = 0``
    the step shrinks to ``1e-3 s``: ``fn`` is then only sampled on
    ``[0, inf)`` and the ``s^(nu-1)`` growth typical of series in ``t^nu``
    is resolved.
    """
    if not 0.0 < nu < 1.0:
        raise DomainError("quadrature route needs nu in (0, 1)")
    if t == 0:
        return 0.0
    h0 = h_rel * t
    p = 1.0 / (1.0 - nu)

    def deriv(w):
        s = t * (1.0 - w ** p)
        h = min(h0, 1e-3 * s)
        if h <= 0.0:
            return 0.0
        return (fn(s + h) - fn(s - h)) / (2.0 * h)

    with warnings.catch_warnings():
        # judged by the returned error estimate instead
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(deriv, 0.0, 1.0, limit=200, epsabs=1e-10, epsrel=1e-10)
    if not err < 1e-7:
        raise NumericalFailure(f"Caputo quadrature error estimate {err:.3g}", bound=err)
    return t ** (1.0 - nu) / math.gamma(2.0 - nu) * val


# ----------------------------------------------------------- lattice -------

class LatticeFunction:
    """Series ``p_k`` (or compound ``q_k``) for all ``k`` in a box.

    Lookups outside the non-negative orthant give the zero series.
    ``jumps`` switches to compound laws, whose series are the convolution
    weighted sums of the non-compound ones.
    """

    def __init__(self, params: ModelParams, kmax, order=DEFAULT_ORDER,
                 jumps: JumpDistribution | None = None):
        self.params = params
        self.kmax = as_index(kmax, params.m)
        self.order = order
        self.jumps = jumps
        if jumps is not None:
            jumps.validate(params)
        self._cache = {}
        self._zero = PowerSeriesTNu.zero(params.nu, order)

    def series(self, k) -> PowerSeriesTNu:
        k = tuple(k)
        if any(x < 0 for x in k):
            return self._zero
        if not leq(k, self.kmax):
            raise DomainError(f"{k} lies outside the box {self.kmax}")
        got = self._cache.get(k)
        if got is None:
            got = self._cache[k] = self._build(k)
        return got

    def _build(self, k):
        if self.jumps is None:
            return pmf_series(self.params, k, self.order)
        ctx = _ctx()
        acc = [ctx.mpf(0)] * (self.order + 1)
        for n in multi_indices(k):
            w = 1.0
            for i, (ni, ki) in enumerate(zip(n, k)):
                w *= convolution_power(self.jumps, i, ni, ki)
                if w == 0.0:
                    break
            if w == 0.0:
                continue
            wm = ctx.mpf(w)
            for r, c in enumerate(pmf_series(self.params, n, self.order).coeffs):
                acc[r] += wm * c
        return PowerSeriesTNu(self.params.nu, acc)

    def value(self, k, t):
        return self.series(k).evaluate_mp(t)[0]

    def at(self, t) -> Callable:
        """``k -> value at t`` (extended precision, zero off the orthant)."""
        memo = {}

        def f(k):
            k = tuple(k)
            if k not in memo:
                memo[k] = self.value(k, t)
            return memo[k]
        return f


# ---------------------------------------------------- fractional difference -

def _frac_difference_mp(params: ModelParams, F, k, extra=0):
    ctx = _ctx()
    eta = ctx.mpf(params.eta)
    s = ctx.mpf(params.s)
    lam = [ctx.mpf(x) for x in params.lam]
    total = ctx.mpf(0)
    binom = ctx.mpf(1)
    for j in range(sum(k) + extra + 1):
        if j > 0:
            binom *= (eta - (j - 1)) / j
        if binom == 0:
            break
        inner = ctx.mpf(0)
        for r in indices_with_total(j, params.m):
            shifted = tuple(a - b for a, b in zip(k, r))
            if any(x < 0 for x in shifted):
                continue
            w = ctx.factorial(j)
            for ri, li in zip(r, lam):
                w *= li ** ri / ctx.factorial(ri)
            inner += w * F(shifted)
        total += (-1) ** j * binom * inner / s ** j
    return total


def frac_difference(params: ModelParams, F, k, extra=0):
    """``(I - sum_i lambda_i B_i / s)^eta F`` at ``k``.

    ``B_i`` shifts coordinate ``i`` down by one and ``F`` vanishes off the
    non-negative orthant, so only ``j <= |k|`` binomial terms contribute;
    ``extra`` adds further (identically vanishing) terms.
    """
    k = as_index(k, params.m)
    return float(_frac_difference_mp(params, F, k, extra))


# ---------------------------------------------------------- residuals ------

def _lattice(params, k, t, jumps=None):
    order = series_order(params, sum(k), t)
    return LatticeFunction(params, k, order=order, jumps=jumps)


def residual_prop1(params: ModelParams, k, t):
    """``|D^nu p_k + s^eta (I - sum lambda_i B_i / s)^eta p_k|`` at ``t``."""
    k = as_index(k, params.m)
    lat = _lattice(params, k, t)
    ctx = _ctx()
    lhs = caputo_termwise(lat.series(k)).evaluate_mp(t)[0]
    rhs = -(ctx.mpf(params.s) ** ctx.mpf(params.eta)) * _frac_difference_mp(params, lat.at(t), k)
    return float(abs(lhs - rhs))


def _jump_rhs(params, jumps, F, k, ctx):
    # -s F(k) + sum_i lambda_i sum_{j=1..k_i} q^i_j F(k - j e_i)
    acc = -ctx.mpf(params.s) * F(k)
    for i, lam in enumerate(params.lam):
        for j in range(1, k[i] + 1):
            q = convolution_power(jumps, i, 1, j)
            if q == 0.0:
                continue
            shifted = k[:i] + (k[i] - j,) + k[i + 1:]
            acc += ctx.mpf(lam) * (ctx.mpf(q) * F(shifted))
    return acc


def residual_prop2_time(params: ModelParams, jumps: JumpDistribution, k, t):
    """Residual of the time-fractional compound equation (``eta = 1``)."""
    if params.eta != 1.0:
        raise DomainError("the time-fractional compound equation needs eta = 1")
    k = as_index(k, params.m)
    lat = _lattice(params, k, t, jumps)
    ctx = _ctx()
    lhs = caputo_termwise(lat.series(k)).evaluate_mp(t)[0]
    rhs = _jump_rhs(params, jumps, lat.at(t), k, ctx)
    return float(abs(lhs - rhs))


def _space_order(params):
    if params.nu != 1.0:
        raise DomainError("the space-fractional equation needs nu = 1")
    n = round(1.0 / params.eta)
    if abs(1.0 / params.eta - n) > 1e-12 or n not in (1, 2, 3):
        raise DomainError(
            "space-fractional residuals are available for 1/eta in {1, 2, 3} only")
    return n


def residual_prop2_space(params: ModelParams, jumps: JumpDistribution, k, t):
    """Residual of the space-fractional compound equation (``nu = 1``,
    integer ``1/eta``)."""
    n = _space_order(params)
    k = as_index(k, params.m)
    lat = _lattice(params, k, t, jumps)
    ctx = _ctx()
    lhs = rl_integer_derivative(lat.series(k), n, t, as_mp=True)
    rhs = -_jump_rhs(params, jumps, lat.at(t), k, ctx)
    return float(abs(lhs - rhs))


def residual_corollary(params: ModelParams, k, t, variant="time"):
    """Residual of the unit-jump equations (time: ``eta = 1``; space:
    ``nu = 1`` and integer ``1/eta``)."""
    k = as_index(k, params.m)
    ctx = _ctx()
    lat = _lattice(params, k, t)
    F = lat.at(t)
    if variant == "time":
        if params.eta != 1.0:
            raise DomainError("the time-fractional equation needs eta = 1")
        lhs = caputo_termwise(lat.series(k)).evaluate_mp(t)[0]
        sign = 1
    elif variant == "space":
        n = _space_order(params)
        lhs = rl_integer_derivative(lat.series(k), n, t, as_mp=True)
        sign = -1
    else:
        raise DomainError(f"unknown variant {variant!r}")
    acc = -ctx.mpf(params.s) * F(k)
    for i, lam in enumerate(params.lam):
        if k[i] >= 1:
            shifted = k[:i] + (k[i] - 1,) + k[i + 1:]
            acc += ctx.mpf(lam) * F(shifted)
    return float(abs(lhs - sign * acc))


def residual_PA(params: ModelParams, alphas, k, t, variant="time", form="corrected"):
    """Residual of the geometric-jump (Polya-Aeppli) equations.

    Parameters
    ----------
    alphas : sequence of float
        Geometric parameters in ``(0, 1]``.
    variant : {"time", "space"}
        ``time`` needs ``eta = 1`` (Caputo derivative); ``space`` needs
        ``nu = 1`` and integer ``1/eta``.
    form : {"corrected", "literal"}
        In the cross term the state index is shifted by ``e_i + j e_h``
        (``corrected``, which follows from the generating function) or by
        ``j e_h`` only (``literal``).
    """
    if form not in ("corrected", "literal"):
        raise DomainError(f"unknown form {form!r}")
    k = as_index(k, params.m)
    jumps = JumpDistribution.geometric(alphas)
    lat = _lattice(params, k, t, jumps)
    ctx = _ctx()
    F = lat.at(t)
    if variant == "time":
        if params.eta != 1.0:
            raise DomainError("the time-fractional equation needs eta = 1")

        def D(idx):
            if any(x < 0 for x in idx):
                return ctx.mpf(0)
            return caputo_termwise(lat.series(idx)).evaluate_mp(t)[0]
        sign = 1
    elif variant == "space":
        n = _space_order(params)

        def D(idx):
            if any(x < 0 for x in idx):
                return ctx.mpf(0)
            return rl_integer_derivative(lat.series(idx), n, t, as_mp=True)
        sign = -1
    else:
        raise DomainError(f"unknown variant {variant!r}")

    s = ctx.mpf(params.s)
    lam = [ctx.mpf(x) for x in params.lam]
    al = [ctx.mpf(float(a)) for a in alphas]
    m = params.m

    def down(idx, i, j=1):
        return idx[:i] + (idx[i] - j,) + idx[i + 1:]

    lhs = D(k)
    for i in range(m):
        if 1 - al[i] != 0:
            lhs -= (1 - al[i]) * D(down(k, i))
    acc = -s * F(k)
    for i in range(m):
        acc += (lam[i] * al[i] + s * (1 - al[i])) * F(down(k, i))
    for i in range(m):
        if 1 - al[i] == 0:
            continue
        cross = ctx.mpf(0)
        base = down(k, i) if form == "corrected" else k
        for h in range(m):
            if h == i:
                continue
            for j in range(1, k[h] + 1):
                cross += lam[h] * (1 - al[h]) ** (j - 1) * al[h] * F(down(base, h, j))
        acc -= (1 - al[i]) * cross
    return float(abs(lhs - sign * acc))


def residual_OT(params: ModelParams, f: BernsteinFamily, k, t, h_rel=1e-4):
    """Residual of the forward equation for ``N(H^f(t))`` (``nu = 1``).

    ``d/dt`` is a central difference of the inverted pgf with step
    ``1e-4 t``; the jump rates are the closed-form Levy moments.
    """
    k = as_index(k, params.m)
    h = h_rel * t
    up = pmf_OT(params, f, 1.0, t + h, k)
    dn = pmf_OT(params, f, 1.0, t - h, k)
    mid = pmf_OT(params, f, 1.0, t, k)
    deriv = (up[k] - dn[k]) / (2.0 * h)
    s = params.s
    rhs = -bernstein_eval(f, s) * mid[k]
    for j in multi_indices(k):
        if not any(j):
            continue
        w = levy_moment_rate(f, sum(j), s)
        for ji, lam in zip(j, params.lam):
            w *= lam ** ji / math.factorial(ji)
        rhs += mid[tuple(a - b for a, b in zip(k, j))] * w
    return abs(deriv - rhs)


# ---------------------------------------------------------- pgf checks -----

def _pgf_rate(params, u):
    return math.fsum(lam * (1.0 - ui) for lam, ui in zip(params.lam, u))


def residual_pgf_caputo(params: ModelParams, u, t, order=None):
    """``|D^nu G(u; t) + (sum lambda_i (1 - u_i))^eta G(u; t)|`` with the
    Caputo derivative applied termwise to the series of ``G``."""
    ctx = _ctx()
    c = ctx.mpf(_pgf_rate(params, u)) ** ctx.mpf(params.eta)
    if order is None:
        order = series_order(params.replace(lam=(max(_pgf_rate(params, u), 1e-300),)), 0, t)
    nu = ctx.mpf(params.nu)
    coeffs = []
    p = ctx.mpf(1)
    for r in range(order + 1):
        coeffs.append(p / ctx.gamma(nu * r + 1))
        p *= -c
    G = PowerSeriesTNu(params.nu, coeffs)
    lhs = caputo_termwise(G).evaluate_mp(t)[0]
    return float(abs(lhs + c * G.evaluate_mp(t)[0]))


def residual_pgf_rl(params: ModelParams, u, t):
    """Right-sided Riemann-Liouville derivative of order ``1/eta`` of the
    ``nu = 1`` pgf ``G(u; t) = exp(-c t)``, ``c = (sum lambda_i (1-u_i))^eta``,
    against ``c^(1/eta) G = sum lambda_i (1-u_i) G``.

    Non-integer orders use the integral definition with ``m = ceil(1/eta)``,
    evaluated by extended-precision quadrature and differentiation.
    """
    if params.nu != 1.0:
        raise DomainError("the exponential pgf identity needs nu = 1")
    ctx = mp_context(30)
    w = ctx.mpf(_pgf_rate(params, u))
    c = w ** ctx.mpf(params.eta)
    order = 1 / ctx.mpf(params.eta)
    tt = ctx.mpf(t)

    def G(x):
        return ctx.exp(-c * x)

    n_int = round(float(order))
    if abs(float(order) - n_int) < 1e-12:
        lhs = (-1) ** n_int * ctx.diff(G, tt, n_int)
    else:
        m = int(math.ceil(float(order)))
        beta = m - order

        def integral(x):
            return ctx.quad(lambda y: G(x + y) * y ** (beta - 1), [0, 1, ctx.inf])

        lhs = (-1) ** m * ctx.diff(integral, tt, m) / ctx.gamma(beta)
    return float(abs(lhs - w * G(tt)))


# ------------------------------------------------- lambda representation ---

def _ml_mp(ctx, alpha, z):
    # E_{alpha,1}(z) for moderate |z| by direct summation
    acc = ctx.mpf(0)
    term_abs = ctx.inf
    r = 0
    a = ctx.mpf(alpha)
    while r < 10 or term_abs > ctx.mpf(10) ** (-ctx.dps - 5):
        term = z ** r / ctx.gamma(a * r + 1)
        acc += term
        term_abs = abs(term)
        r += 1
        if r > 5000:
            raise NumericalFailure("Mittag-Leffler series did not converge")
    return acc


def _stirling2(n, j):
    return sum((-1) ** (j - i) * math.comb(j, i) * i ** n for i in range(j + 1)) // math.factorial(j)


def lambda_derivative_check(params: ModelParams, k, t, form="corrected", h_rel=1e-3):
    """``|p_k(t) - D_lambda E_{nu,1}(-s^eta t^nu)|`` by finite differences.

    ``form="corrected"`` uses ``prod_i (lambda_i^{k_i} / k_i!) (-d/d lambda_i)^{k_i}``;
    ``form="literal"`` uses ``prod_i (-lambda_i d/d lambda_i)^{k_i}``. Nested
    central differences of order ``k_i`` with step ``1e-3 lambda_i`` act on an
    extended-precision evaluation of the Mittag-Leffler function.
    """
    from .analytics import pmf
    k = as_index(k, params.m)
    if sum(k) > 3:
        raise DomainError("nested finite differences are limited to |k| <= 3")
    if form not in ("corrected", "literal"):
        raise DomainError(f"unknown form {form!r}")
    ctx = mp_context(40)
    eta = ctx.mpf(params.eta)
    tnu = ctx.mpf(t) ** ctx.mpf(params.nu)
    lam0 = [ctx.mpf(x) for x in params.lam]
    hs = [ctx.mpf(h_rel) * x for x in lam0]

    def g(lams):
        return _ml_mp(ctx, params.nu, -(sum(lams) ** eta) * tnu)

    def deriv(orders):
        # mixed partial derivative of g with the given orders at lambda
        stencils = []
        for n, h in zip(orders, hs):
            pts = [(ctx.mpf(n) / 2 - i, (-1) ** i * math.comb(n, i) / h ** n)
                   for i in range(n + 1)]
            stencils.append(pts)
        total = ctx.mpf(0)
        for combo in _product(stencils):
            w = ctx.mpf(1)
            lams = []
            for (off, wt), x0, h in zip(combo, lam0, hs):
                w *= wt
                lams.append(x0 + off * h)
            total += w * g(lams)
        return total

    if form == "corrected":
        out = deriv(k)
        for ki, x in zip(k, lam0):
            out *= (-x) ** ki / ctx.factorial(ki)
    else:
        # (-x d/dx)^n = (-1)^n sum_j S(n, j) x^j d^j/dx^j
        out = ctx.mpf(0)
        for js in _product([list(range(ki + 1)) for ki in k]):
            coef = ctx.mpf(1)
            for ki, j, x in zip(k, js, lam0):
                coef *= (-1) ** ki * _stirling2(ki, j) * x ** j
            if coef != 0:
                out += coef * deriv(js)
    return abs(pmf(params, k, t) - float(out))


def _product(lists):
    if not lists:
        yield ()
        return
    for head in lists[0]:
        for rest in _product(lists[1:]):
            yield (head,) + rest
