"""Scalar special functions.

Gamma and log-Gamma with explicit pole handling, generalized binomial
coefficients, the two- and three-parameter Mittag-Leffler functions and the
Fox-Wright function :math:`{}_p\\Psi_q`.

All series are summed through :func:`mfpp._series.sum_series`, which falls back
to extended precision whenever double-precision cancellation would spoil the
requested accuracy.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

from ._series import mp_context, sum_series
from .errors import DomainError, NumericalFailure

__all__ = [
    "FoxWrightSpec",
    "fox_wright",
    "gamma_fn",
    "gamma_ratio",
    "gen_binomial",
    "is_pole",
    "lgamma_sign",
    "mittag_leffler",
    "mittag_leffler_3",
    "rgamma",
]

ML_SWITCH = 10.0
# beyond this z^(1/alpha) the exponential asymptotics are exact to rounding
ML_EXP_SWITCH = 60.0
DEFAULT_TOL = 1e-10
MAX_TERMS = 2000


# ---------------------------------------------------------------- Gamma ----

def is_pole(x, rtol=1e-9):
    """True when ``x`` is (numerically) a non-positive integer."""
    if x > 0.5:
        return False
    n = round(x)
    return abs(x - n) <= rtol * max(1.0, abs(x))


def gamma_fn(x):
    """Gamma function for real non-pole ``x``.

    Backed by :func:`math.gamma` (Lanczos approximation with reflection for
    ``x < 0.5``).

    Raises
    ------
    DomainError
        If ``x`` is 0, -1, -2, ...
    """
    if x <= 0 and x == math.floor(x):
        raise DomainError(f"Gamma has a pole at {x!r}")
    return math.gamma(x)


def lgamma_sign(x):
    """Return ``(log|Gamma(x)|, sign Gamma(x))`` for non-pole real ``x``."""
    if is_pole(x):
        raise DomainError(f"Gamma has a pole at {x!r}")
    if x > 0:
        return math.lgamma(x), 1.0
    sign = -1.0 if math.ceil(-x) % 2 else 1.0
    return math.lgamma(x), sign


def rgamma(x):
    """Reciprocal Gamma, exactly zero at the poles."""
    if is_pole(x):
        return 0.0
    if abs(x) < 170.0:
        return 1.0 / math.gamma(x)
    lg, sg = lgamma_sign(x)
    return sg * math.exp(-lg)


def gamma_ratio(num: Sequence[float], den: Sequence[float]) -> float:
    """``prod Gamma(a) / prod Gamma(b)`` evaluated through log-Gamma.

    A pole in the denominator makes the ratio an exact zero; a pole in the
    numerator raises :class:`DomainError`.
    """
    if any(is_pole(b) for b in den):
        return 0.0
    log_mag = 0.0
    sign = 1.0
    for a in num:
        lg, sg = lgamma_sign(a)
        log_mag += lg
        sign *= sg
    for b in den:
        lg, sg = lgamma_sign(b)
        log_mag -= lg
        sign *= sg
    return sign * math.exp(log_mag)


def gen_binomial(eta, j):
    """Generalized binomial coefficient ``eta (eta-1) ... (eta-j+1) / j!``.

    Uses the running product, so integer ``eta`` gives exact zeros for
    ``j > eta`` without ever touching a Gamma pole.
    """
    if j < 0:
        raise DomainError("j must be non-negative")
    out = 1.0
    for i in range(j):
        out *= (eta - i) / (i + 1)
    return out


# -------------------------------------------------------- Mittag-Leffler ---

def _check_ml(alpha, beta):
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"alpha must lie in (0, 1], got {alpha!r}")
    if not beta > 0.0:
        raise DomainError(f"beta must be positive, got {beta!r}")


def _log_pochhammer_over_factorial(gamma, r):
    # log((gamma)_r / r!) for gamma > 0
    return math.lgamma(gamma + r) - math.lgamma(gamma) - math.lgamma(r + 1.0)


def _ml_series(alpha, beta, gamma, z, tol, max_terms):
    """``sum_r (gamma)_r / r! * z^r / Gamma(alpha r + beta)``."""
    is_complex = isinstance(z, complex)
    az = abs(z)
    log_az = math.log(az)
    phase = z / az

    def term(r):
        lm = r * log_az - math.lgamma(alpha * r + beta)
        if gamma != 1.0:
            lm += _log_pochhammer_over_factorial(gamma, r)
        if lm > 700.0:
            return None, lm
        mag = math.exp(lm)
        return mag * phase ** r, lm

    def mp_term(ctx, r):
        zz = ctx.mpc(z) if is_complex else ctx.mpf(z)
        t = zz ** r * ctx.rgamma(ctx.mpf(alpha) * r + beta)
        if gamma != 1.0:
            t *= ctx.rf(ctx.mpf(gamma), r) / ctx.factorial(r)
        return t

    # terms grow until |z| ~ (alpha r + beta)^alpha
    peak = (az ** (1.0 / alpha) - beta) / alpha
    if peak > max_terms:
        raise NumericalFailure(
            f"Mittag-Leffler series needs about {peak:.3g} terms at |z|={az}",
            bound=math.inf)
    r_min = int(max(0.0, peak)) + 1
    value, _ = sum_series(term, mp_term, tol=tol, r_min=r_min,
                          max_terms=max_terms, what="Mittag-Leffler series")
    return value


def _ml_asymptotic(alpha, beta, x, tol):
    """Algebraic expansion of ``E_{alpha,beta}(x)`` for real ``x << 0``.

    Returns ``None`` when the expansion cannot certify ``tol``.
    """
    # |1/Gamma(beta - alpha k)| oscillates between the poles; stop and bound
    # on the envelope Gamma(alpha k + 1 - beta) / pi from the reflection formula
    terms = []
    prev = math.inf
    est = math.inf
    log_ax = math.log(-x)
    for k in range(1, 400):
        arg = alpha * k + 1.0 - beta
        env = math.exp(-k * log_ax + math.lgamma(arg) - math.log(math.pi)) if arg > 0 else \
            abs(x) ** -k * abs(rgamma(beta - alpha * k))
        if env > prev:
            est = prev
            break
        prev = env
        terms.append(-(x ** -k) * rgamma(beta - alpha * k))
        if env < 1e-18:
            est = env
            break
    # recessive exponentials decay on the negative axis only for alpha > 2/3
    if alpha > 2.0 / 3.0:
        ax = abs(x)
        expo = ax ** (1.0 / alpha) * math.cos(math.pi / alpha)
        est += (2.0 / alpha) * ax ** ((1.0 - beta) / alpha) * math.exp(expo)
    value = math.fsum(terms)
    if est > 1e-3 * tol * max(1.0, abs(value)):
        return None
    return value


def _ml_asymptotic_positive(alpha, beta, x):
    # dominant exponential plus the algebraic tail; other sectors are
    # exponentially smaller
    lead = x ** (1.0 / alpha)
    if lead > 709.0:
        raise NumericalFailure(f"E_{{{alpha},{beta}}}({x}) overflows", bound=math.inf)
    tail = 0.0
    for k in range(1, 30):
        t = x ** -k * rgamma(beta - alpha * k)
        tail -= t
        if abs(t) < 1e-18:
            break
    return x ** ((1.0 - beta) / alpha) * math.exp(lead) / alpha + tail


def mittag_leffler(alpha, beta, z, tol=DEFAULT_TOL, max_terms=MAX_TERMS):
    """Two-parameter Mittag-Leffler function ``E_{alpha,beta}(z)``.

    Parameters
    ----------
    alpha : float
        In ``(0, 1]``.
    beta : float
        Positive.
    z : float or complex
        Argument. Real input gives a float, complex input a complex result.

    Notes
    -----
    ``E_{1,1}`` is evaluated as ``exp``. Real arguments below ``-10`` use the
    algebraic asymptotic expansion when it certifies the tolerance. Positive
    arguments with ``z^(1/alpha) > 60`` use the exponential asymptotics; everything else goes through the
    power series. Values above one are accurate in the relative sense.
    """
    _check_ml(alpha, beta)
    if z == 0:
        out = rgamma(beta)
        return complex(out) if isinstance(z, complex) else out
    if alpha == 1.0 and beta == 1.0:
        return cmath.exp(z) if isinstance(z, complex) else math.exp(z)
    if not isinstance(z, complex) and z < 0:
        if z < -ML_SWITCH:
            value = _ml_asymptotic(alpha, beta, z, tol)
            if value is not None:
                return value
            return _ml_series(alpha, beta, 1.0, z, tol, max_terms)
        try:
            return _ml_series(alpha, beta, 1.0, z, tol, max_terms)
        except NumericalFailure as exc:
            value = _ml_asymptotic(alpha, beta, z, tol)
            if value is None:
                raise NumericalFailure(
                    f"E_{{{alpha},{beta}}}({z}): neither series nor asymptotics "
                    "reach the tolerance", bound=exc.bound) from exc
            return value
    if not isinstance(z, complex) and z ** (1.0 / alpha) > ML_EXP_SWITCH:
        return _ml_asymptotic_positive(alpha, beta, z)
    return _ml_series(alpha, beta, 1.0, z, tol, max_terms)


def mittag_leffler_3(alpha, beta, gamma, x, tol=DEFAULT_TOL, max_terms=MAX_TERMS):
    """Three-parameter (Prabhakar) Mittag-Leffler function.

    ``E^gamma_{alpha,beta}(x) = sum_j (gamma)_j x^j / (j! Gamma(alpha j + beta))``.
    """
    _check_ml(alpha, beta)
    if not gamma > 0.0:
        raise DomainError(f"gamma must be positive, got {gamma!r}")
    if x == 0:
        return rgamma(beta)
    if gamma == 1.0:
        return float(mittag_leffler(alpha, beta, float(x), tol, max_terms).real)
    try:
        return _ml_series(alpha, beta, float(gamma), x, tol, max_terms)
    except NumericalFailure:
        if x > 0:
            raise
    return _ml3_laplace(alpha, beta, float(gamma), -float(x), tol)


def _ml3_laplace(alpha, beta, gamma, a, tol):
    # t^(beta-1) E^gamma_{alpha,beta}(-a t^alpha) has Laplace transform
    # p^(alpha gamma - beta) / (p^alpha + a)^gamma; invert at t = 1 along a
    # Talbot contour at two working precisions
    vals = []
    for dps in (30, 45):
        ctx = mp_context(dps)
        al, be, ga, aa = (ctx.mpf(v) for v in (alpha, beta, gamma, a))

        def F(p):
            return p ** (al * ga - be) / (p ** al + aa) ** ga

        vals.append(ctx.invertlaplace(F, 1, method="talbot"))
    err = float(abs(vals[1] - vals[0]))
    value = float(vals[1])
    if err > tol * max(1.0, abs(value)):
        raise NumericalFailure(
            f"three-parameter Mittag-Leffler inversion error {err:.3g} at x={-a}", bound=err)
    return value


# ----------------------------------------------------------- Fox-Wright ----

@dataclass(frozen=True)
class FoxWrightSpec:
    """Parameters ``(a_h, alpha_h)`` on top and ``(b_k, beta_k)`` below."""

    upper: tuple
    lower: tuple

    def __post_init__(self):
        object.__setattr__(self, "upper", tuple((float(a), float(al)) for a, al in self.upper))
        object.__setattr__(self, "lower", tuple((float(b), float(be)) for b, be in self.lower))
        for _, al in self.upper + self.lower:
            if not al > 0.0:
                raise DomainError("all scale parameters must be positive")

    @property
    def margin(self):
        return sum(be for _, be in self.lower) - sum(al for _, al in self.upper)


def fox_wright(spec: FoxWrightSpec, z, tol=DEFAULT_TOL, max_terms=5000):
    """Fox-Wright function ``pPsi_q[spec](z)`` for real ``z``.

    Raises
    ------
    DomainError
        If the convergence margin ``sum beta - sum alpha`` is not above -1,
        or a numerator Gamma hits a pole.
    """
    if not spec.margin > -1.0:
        raise DomainError(
            f"Fox-Wright series diverges: margin {spec.margin} is not > -1")
    for a, al in spec.upper:
        for j in range(max_terms):
            if is_pole(a + al * j):
                raise DomainError(f"numerator Gamma pole at a={a}, j={j}")
            if a + al * j > 0:
                break
    if z == 0:
        return gamma_ratio([a for a, _ in spec.upper], [b for b, _ in spec.lower])

    log_az = math.log(abs(z))
    zsign = 1.0 if z > 0 else -1.0

    def term(j):
        if any(is_pole(b + be * j) for b, be in spec.lower):
            return 0.0, None
        lm = j * log_az - math.lgamma(j + 1.0)
        sign = zsign ** j
        for a, al in spec.upper:
            lg, sg = lgamma_sign(a + al * j)
            lm += lg
            sign *= sg
        for b, be in spec.lower:
            lg, sg = lgamma_sign(b + be * j)
            lm -= lg
            sign *= sg
        if lm > 700.0:
            return None, lm
        return sign * math.exp(lm), lm

    def mp_term(ctx, j):
        t = ctx.mpf(z) ** j / ctx.factorial(j)
        for a, al in spec.upper:
            t *= ctx.gamma(ctx.mpf(a) + ctx.mpf(al) * j)
        for b, be in spec.lower:
            arg = b + be * j
            if is_pole(arg):
                return ctx.mpf(0)
            t *= ctx.rgamma(ctx.mpf(b) + ctx.mpf(be) * j)
        return t

    # stay clear of the region where denominator poles interleave
    r_min = 10
    for b, be in spec.lower:
        if b <= 0:
            r_min = max(r_min, int(-b / be) + 2)
    value, _ = sum_series(term, mp_term, tol=tol, r_min=r_min, patience=3,
                          max_terms=max_terms, what="Fox-Wright series")
    return value
