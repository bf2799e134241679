"""Closed-form laws of the space-time fractional (compound) Poisson vector.

State probabilities factor as a multinomial split of the total count,

    p_k(t) = |k|! / prod k_i! * prod (lambda_i / s)^{k_i} * P_{|k|}(t),

where ``P_K`` is the law of the total count, a univariate series in
``-(s^eta t^nu)``. The Gamma ratio ``Gamma(eta r + 1) / Gamma(eta r - K + 1)``
is the falling factorial ``(eta r)(eta r - 1)...(eta r - K + 1)``, which is
evaluated as a product so that terms at denominator poles are exact zeros.
"""

from __future__ import annotations

import cmath
import functools
import math
from dataclasses import dataclass

import numpy as np

from ._series import EPS, sum_series
from .errors import DomainError, NumericalFailure
from .model import (
    BernsteinFamily,
    JumpDistribution,
    ModelParams,
    as_index,
    bernstein_eval,
    convolution_power,
    indices_with_total,
    multi_indices,
    multinomial,
)
from .specfun import FoxWrightSpec, fox_wright, mittag_leffler, mittag_leffler_3, rgamma

__all__ = [
    "LevyPointMass",
    "char_fn",
    "codifference",
    "compound_pgf",
    "compound_pmf",
    "covariance",
    "f_tilde",
    "levy_measure_C",
    "levy_measure_N",
    "levy_point_masses",
    "pgf",
    "pgf_OT",
    "pmf",
    "pmf_eta1",
    "pmf_OT",
    "total_count_pmf",
    "z_nu",
]

PMF_TOL = 1e-12
PMF_MAX_TERMS = 5000
CODIFF_MAX_ABS = 10.0
OT_KMAX_TOTAL = 12
OT_TOL = 1e-8
OT_ALIAS = 1e-11
OT_AMP = 1e4
OT_ML_TOL = 1e-10


# ------------------------------------------------------------ total count --

def _falling_log_sign(x, K):
    # log|x (x-1) ... (x-K+1)| and its sign; None for an exact zero
    lm = 0.0
    sign = 1.0
    for i in range(K):
        f = x - i
        if f == 0.0:
            return None, 0.0
        if f < 0.0:
            sign = -sign
        lm += math.log(abs(f))
    return lm, sign


@functools.lru_cache(maxsize=4096)
def total_count_pmf(s, eta, nu, t, K):
    """``P(N_1(t) + ... + N_m(t) = K)`` for total intensity ``s``.

    This is the univariate law with intensity ``s``.
    """
    if K < 0:
        raise DomainError("K must be non-negative")
    if t == 0.0:
        return 1.0 if K == 0 else 0.0
    x = -(s ** eta) * t ** nu
    log_ax = math.log(-x)
    log_kf = math.lgamma(K + 1.0)

    def term(r):
        ff, sg = _falling_log_sign(eta * r, K)
        if ff is None:
            return 0.0, None
        lm = r * log_ax + ff - log_kf - math.lgamma(nu * r + 1.0)
        sign = sg if (K + r) % 2 == 0 else -sg
        if lm > 700.0:
            return None, lm
        return sign * math.exp(lm), lm

    def mp_term(ctx, r):
        er = ctx.mpf(eta) * r
        ff = ctx.mpf(1)
        for i in range(K):
            ff *= er - i
        return ctx.mpf(x) ** r * ff * (-1) ** K / (ctx.factorial(K) * ctx.gamma(ctx.mpf(nu) * r + 1))

    # terms grow until (nu r)^nu ~ |x|; past the budget the series is hopeless
    if (-x) ** (1.0 / nu) / nu > 0.1 * PMF_MAX_TERMS:
        value = _total_count_asymptotic(x, eta, nu, K)
        if value is not None:
            return value
    # eta r must pass K before the falling factorial stops vanishing
    r_min = int(K / eta) + 2
    try:
        value, _ = sum_series(term, mp_term, tol=PMF_TOL, r_min=r_min,
                              max_terms=PMF_MAX_TERMS, what=f"state probability series (K={K})")
    except NumericalFailure:
        value = _total_count_asymptotic(x, eta, nu, K)
        if value is None:
            raise
    return value


def _total_count_asymptotic(x, eta, nu, K):
    """Algebraic expansion of the total-count law for ``x = -(s^eta t^nu) << 0``.

    ``P_K = (-1)^K / K! d^K/dtheta^K E_{nu,1}(x theta^eta)`` at ``theta = 1``;
    differentiating ``E_nu(y) ~ -sum_j y^(-j) / Gamma(1 - nu j)`` termwise gives
    ``P_K ~ -(1/K!) sum_j x^(-j) (eta j)(eta j + 1)...(eta j + K - 1) / Gamma(1 - nu j)``.
    Only used for ``nu <= 2/3``, where no exponential terms reach the negative
    axis. Returns ``None`` when the smallest term cannot certify the tolerance.
    """
    if nu > 2.0 / 3.0:
        return None
    # |1/Gamma(1 - nu j)| = Gamma(nu j) |sin(pi nu j)| / pi oscillates, so the
    # stopping rule and the error estimate use the envelope without the sine
    terms = []
    prev = math.inf
    est = math.inf
    log_ax = math.log(-x)
    log_kf = math.lgamma(K + 1.0)
    for j in range(1, 400):
        log_env = -j * log_ax - log_kf + math.lgamma(nu * j) - math.log(math.pi)
        for i in range(K):
            log_env += math.log(eta * j + i)
        env = math.exp(log_env)
        if env > prev:
            est = prev
            break
        prev = env
        rg = rgamma(1.0 - nu * j)
        if rg != 0.0:
            rising = 1.0
            for i in range(K):
                rising *= eta * j + i
            terms.append(-(x ** -j) * rising * rg / math.exp(log_kf))
        if env < 1e-18:
            est = env
            break
    value = math.fsum(terms)
    if est > 1e-3 * PMF_TOL * max(1.0, abs(value)):
        return None
    return value


def _multinomial_split(params: ModelParams, k):
    # |k|! / prod k_i! * prod (lambda_i / s)^{k_i}
    s = params.s
    if params.m == 1:
        return 1.0
    lm = math.lgamma(sum(k) + 1.0)
    for ki, lam in zip(k, params.lam):
        lm += ki * math.log(lam / s) - math.lgamma(ki + 1.0)
    return math.exp(lm)


def pmf(params: ModelParams, k, t, route="auto"):
    """State probability ``P(N(t) = k)``.

    Parameters
    ----------
    route : {"auto", "series", "fox_wright"}
        ``series`` sums the power series in ``-(s^eta t^nu)`` directly;
        ``fox_wright`` evaluates the equivalent Fox-Wright form. ``auto``
        picks ``series``.
    """
    k = as_index(k, params.m)
    if t < 0:
        raise DomainError("time must be non-negative")
    if t == 0:
        return 1.0 if not any(k) else 0.0
    K = sum(k)
    if route in ("auto", "series"):
        return _multinomial_split(params, k) * total_count_pmf(
            params.s, params.eta, params.nu, float(t), K)
    if route != "fox_wright":
        raise DomainError(f"unknown route {route!r}")
    s = params.s
    spec = FoxWrightSpec(upper=[(1.0, params.eta), (1.0, 1.0)],
                         lower=[(1.0, params.nu), (1.0 - K, params.eta)])
    psi = fox_wright(spec, -(s ** params.eta) * t ** params.nu)
    lm = 0.0
    for ki, lam in zip(k, params.lam):
        lm += ki * math.log(lam / s) - math.lgamma(ki + 1.0)
    return (-1.0) ** K * math.exp(lm) * psi


def pmf_eta1(params: ModelParams, k, t):
    """State probability for ``eta = 1`` through the three-parameter
    Mittag-Leffler function."""
    if params.eta != 1.0:
        raise DomainError("pmf_eta1 requires eta = 1")
    k = as_index(k, params.m)
    if t == 0:
        return 1.0 if not any(k) else 0.0
    K = sum(k)
    nu = params.nu
    lm = math.lgamma(K + 1.0) + nu * K * math.log(t)
    for ki, lam in zip(k, params.lam):
        lm += ki * math.log(lam) - math.lgamma(ki + 1.0)
    e3 = mittag_leffler_3(nu, nu * K + 1.0, K + 1.0, -params.s * t ** nu)
    return math.exp(lm) * e3


# ------------------------------------------------------------------ pgfs ---

def _check_u(u, m):
    u = tuple(float(x) for x in np.atleast_1d(u))
    if len(u) != m:
        raise DomainError(f"u has length {len(u)}, expected {m}")
    if not all(0.0 <= x <= 1.0 for x in u):
        raise DomainError(f"u must lie in [0, 1]^m, got {u}")
    return u


def _ml_clock(nu, fval, t):
    # E_{nu,1}(-f t^nu), the transform of the inverse-stable clock at f
    if t == 0:
        return 1.0
    return mittag_leffler(nu, 1.0, -fval * t ** nu)


def pgf(params: ModelParams, u, t):
    """``E[prod u_i^{N_i(t)}] = E_{nu,1}(-(sum lambda_i (1 - u_i))^eta t^nu)``."""
    u = _check_u(u, params.m)
    w = math.fsum(lam * (1.0 - ui) for lam, ui in zip(params.lam, u))
    return _ml_clock(params.nu, w ** params.eta, t)


def compound_pgf(params: ModelParams, jumps: JumpDistribution, u, t):
    """pgf of the compound vector: ``pgf`` with ``u_i`` replaced by ``G_i(u_i)``."""
    jumps.validate(params)
    u = _check_u(u, params.m)
    w = math.fsum(lam * jumps.pgf_complement(i, ui)
                  for i, (lam, ui) in enumerate(zip(params.lam, u)))
    return _ml_clock(params.nu, w ** params.eta, t)


def compound_pmf(params: ModelParams, jumps: JumpDistribution, k, t, route="auto"):
    """``P(C(t) = k) = sum_{n <= k} P(N(t) = n) prod_i P(Y^i_1+...+Y^i_{n_i} = k_i)``."""
    jumps.validate(params)
    k = as_index(k, params.m)
    total = 0.0
    for n in multi_indices(k):
        w = 1.0
        for i, (ni, ki) in enumerate(zip(n, k)):
            w *= convolution_power(jumps, i, ni, ki)
            if w == 0.0:
                break
        if w == 0.0:
            continue
        total += w * pmf(params, n, t, route)
    return total


# --------------------------------------------------------------- moments ---

def z_nu(nu):
    """``Z(nu) = (1/nu) (1/Gamma(2 nu) - 1/(nu Gamma(nu)^2))``; zero at ``nu = 1``."""
    if not 0.0 < nu <= 1.0:
        raise DomainError(f"nu must lie in (0, 1], got {nu!r}")
    return (1.0 / math.gamma(2.0 * nu) - 1.0 / (nu * math.gamma(nu) ** 2)) / nu


def covariance(params: ModelParams, j, h, t):
    """``Cov(N_j(t), N_h(t))`` for ``eta = 1`` (coordinates are 0-based)."""
    if params.eta != 1.0:
        raise DomainError("the covariance is infinite unless eta = 1")
    nu = params.nu
    lj, lh = params.lam[j], params.lam[h]
    out = lj * lh * t ** (2.0 * nu) * z_nu(nu)
    if j == h:
        out += lj * t ** nu / math.gamma(nu + 1.0)
    return out


def char_fn(params: ModelParams, i, u, t):
    """``E[exp(i u N_i(t))]`` (principal branch of the complex power)."""
    w = params.lam[i] * (1.0 - cmath.exp(1j * u))
    return _complex_clock(params, w, t)


def _complex_clock(params, w, t):
    if t == 0:
        return 1.0 + 0.0j
    z = -(w ** params.eta) * t ** params.nu
    if abs(z) > CODIFF_MAX_ABS:
        raise NumericalFailure(
            f"complex Mittag-Leffler argument |z|={abs(z):.3g} exceeds {CODIFF_MAX_ABS}",
            bound=math.inf)
    return mittag_leffler(params.nu, 1.0, complex(z))


def codifference(params: ModelParams, j, h, t):
    """Codifference ``tau(N_j(t), N_h(t))``.

    The three characteristic functions are combined before one principal
    logarithm is taken, so independent coordinates give exactly zero and
    the imaginary part never picks up spurious multiples of ``2 pi``.
    """
    if t == 0:
        return 0j
    e_plus = 1.0 - cmath.exp(1j)
    e_minus = 1.0 - cmath.exp(-1j)
    lj, lh = params.lam[j], params.lam[h]
    joint = 1.0 if j == h else _complex_clock(params, lj * e_plus + lh * e_minus, t)
    ratio = joint / (_complex_clock(params, lj * e_plus, t) * _complex_clock(params, lh * e_minus, t))
    return cmath.log(ratio)


# ---------------------------------------------------------- Levy measures --

@dataclass(frozen=True)
class LevyPointMass:
    """Jump rate ``mass`` of the Levy measure at the lattice point ``k``."""

    k: tuple
    mass: float

    def __post_init__(self):
        if not any(self.k):
            raise DomainError("Levy measures do not charge the origin")
        if self.mass < 0:
            raise DomainError("mass must be non-negative")


def _nonzero(k):
    if not any(k):
        raise DomainError("Levy measures are defined on k > 0 only")


def _levy_term(params: ModelParams, n):
    # eta/Gamma(1-eta) * Gamma(|n|-eta) / s^(|n|-eta) * prod lambda^n / n!
    eta = params.eta
    N = sum(n)
    lm = math.lgamma(N - eta) - math.lgamma(1.0 - eta) - (N - eta) * math.log(params.s)
    for ni, lam in zip(n, params.lam):
        lm += ni * math.log(lam) - math.lgamma(ni + 1.0)
    return eta * math.exp(lm)


def levy_measure_N(params: ModelParams, k):
    """Levy measure of the counting vector (``nu = 1``) at ``k > 0``."""
    k = as_index(k, params.m)
    _nonzero(k)
    if params.eta == 1.0:
        if sum(k) == 1:
            return params.lam[k.index(1)]
        return 0.0
    return _levy_term(params, k)


def levy_measure_C(params: ModelParams, jumps: JumpDistribution, k):
    """Levy measure of the compound vector (``nu = 1``) at ``k > 0``."""
    jumps.validate(params)
    k = as_index(k, params.m)
    _nonzero(k)
    if params.eta == 1.0:
        nz = [i for i, x in enumerate(k) if x]
        if len(nz) != 1:
            return 0.0
        i = nz[0]
        return params.lam[i] * convolution_power(jumps, i, 1, k[i])
    total = 0.0
    for n in multi_indices(k):
        if not any(n):
            continue
        w = 1.0
        for i, (ni, ki) in enumerate(zip(n, k)):
            w *= convolution_power(jumps, i, ni, ki)
            if w == 0.0:
                break
        if w == 0.0:
            continue
        total += w * _levy_term(params, n)
    return total


def levy_point_masses(params: ModelParams, K, jumps=None):
    """All point masses with ``1 <= |k| <= K``."""
    out = []
    for total in range(1, K + 1):
        for k in indices_with_total(total, params.m):
            mass = levy_measure_N(params, k) if jumps is None else \
                levy_measure_C(params, jumps, k)
            out.append(LevyPointMass(k, mass))
    return out


# ------------------------------------------------- general subordinators ---

def _f_tilde_raw(params: ModelParams, f: BernsteinFamily, u):
    w = sum(lam * (1.0 - ui) for lam, ui in zip(params.lam, u))
    return bernstein_eval(f, w)


def f_tilde(params: ModelParams, f: BernsteinFamily, u):
    """``f~_m(lambda; u) = f(sum lambda_i (1 - u_i))``."""
    u = _check_u(u, params.m)
    w = math.fsum(lam * (1.0 - ui) for lam, ui in zip(params.lam, u))
    return bernstein_eval(f, w)


def pgf_OT(params: ModelParams, f: BernsteinFamily, nu, u, t):
    """pgf of ``N(H^f(L^nu(t)))``: ``E_{nu,1}(-t^nu f~_m(lambda; u))``."""
    u = _check_u(u, params.m)
    w = math.fsum(lam * (1.0 - ui) for lam, ui in zip(params.lam, u))
    return _ml_clock(nu, bernstein_eval(f, w), t)


def pmf_OT(params: ModelParams, f: BernsteinFamily, nu, t, kmax, return_bound=False):
    """Table ``p[k]`` of ``P(N(H^f(L^nu(t))) = k)`` for ``0 <= k <= kmax``.

    The pgf is sampled on a circle of radius ``r_i < 1`` per coordinate with
    ``c (kmax_i + 1)`` nodes and inverted by FFT; ``c`` is chosen so that the
    amplification ``prod r_i^{-k_i}`` stays below 1e4. Aliasing is bounded by
    ``max_i r_i^{N_i}``; rounding and Mittag-Leffler errors are amplified by
    ``prod r_i^{-k_i}``.

    Raises
    ------
    NumericalFailure
        If the resulting error bound exceeds 1e-8.
    """
    kmax = as_index(kmax, params.m)
    if sum(kmax) > OT_KMAX_TOTAL:
        raise DomainError(f"|kmax| must not exceed {OT_KMAX_TOTAL}")
    shape = tuple(x + 1 for x in kmax)
    if t == 0:
        out = np.zeros(shape)
        out[(0,) * params.m] = 1.0
        return (out, 0.0) if return_bound else out
    # nodes per coordinate keep the amplification prod r_i^{-k_i} below OT_AMP
    c = max(2, math.ceil(-math.log10(OT_ALIAS) / math.log10(OT_AMP)
                         * sum(x / (x + 1.0) for x in kmax)))
    sizes = [c * (x + 1) for x in kmax]
    radii = [OT_ALIAS ** (1.0 / n) for n in sizes]
    axes = [r * np.exp(2j * np.pi * np.arange(n) / n) for r, n in zip(radii, sizes)]
    grid = np.empty(sizes, dtype=complex)
    tnu = t ** nu
    for idx in np.ndindex(*sizes):
        u = [axes[i][j] for i, j in enumerate(idx)]
        fv = _f_tilde_raw(params, f, u)
        if nu == 1.0:
            grid[idx] = cmath.exp(-t * fv)
        else:
            grid[idx] = mittag_leffler(nu, 1.0, complex(-fv * tnu), tol=OT_ML_TOL)
    coef = np.fft.fftn(grid) / np.prod(sizes)
    coef = coef[tuple(slice(0, n) for n in shape)].real
    amp = np.ones(shape)
    for i, r in enumerate(radii):
        pw = r ** -np.arange(shape[i], dtype=float)
        amp = amp * pw.reshape([-1 if a == i else 1 for a in range(params.m)])
    out = coef * amp
    # the series engine certifies 1e-3 * tol per Mittag-Leffler value
    ml_err = 0.0 if nu == 1.0 else 1e-3 * OT_ML_TOL
    fft_err = 4.0 * EPS * math.log2(float(np.prod(sizes)))
    bound = OT_ALIAS + (fft_err + ml_err) * float(amp.max())
    if bound > OT_TOL:
        raise NumericalFailure(f"pgf inversion error bound {bound:.3g} exceeds {OT_TOL}",
                               bound=bound)
    return (out, bound) if return_bound else out
