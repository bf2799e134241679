"""Series summation with a cancellation-aware extended-precision fallback.

Terms are first summed in double precision. Every term carries an estimate of
its log-magnitude, from which a rounding-error bound for the whole sum is
derived. When that bound exceeds the requested accuracy the sum is recomputed
with mpmath at a working precision large enough to absorb the cancellation.
"""

from __future__ import annotations

import math
import threading

from mpmath.ctx_mp import MPContext

from .errors import NumericalFailure

EPS = 2.220446049250313e-16
LOG_TINY = math.log(1e-17)
MAX_DPS = 3000

_local = threading.local()


def mp_context(dps):
    """Thread-local mpmath context with at least ``dps`` decimal digits."""
    dps = 10 * math.ceil(dps / 10)
    cache = getattr(_local, "contexts", None)
    if cache is None:
        cache = _local.contexts = {}
    ctx = cache.get(dps)
    if ctx is None:
        ctx = MPContext()
        ctx.dps = dps
        cache[dps] = ctx
    return ctx


class _Neumaier:
    __slots__ = ("s", "c")

    def __init__(self):
        self.s = 0.0
        self.c = 0.0

    def add(self, x):
        t = self.s + x
        if abs(self.s) >= abs(x):
            self.c += (self.s - t) + x
        else:
            self.c += (x - t) + self.s
        self.s = t

    @property
    def value(self):
        return self.s + self.c


class _CompensatedSum:
    """Neumaier summation for real or complex terms."""

    def __init__(self):
        self.re = _Neumaier()
        self.im = _Neumaier()
        self.is_complex = False

    def add(self, x):
        if isinstance(x, complex):
            self.is_complex = True
            self.re.add(x.real)
            self.im.add(x.imag)
        else:
            self.re.add(x)

    @property
    def value(self):
        if self.is_complex:
            return complex(self.re.value, self.im.value)
        return self.re.value


def _converged(logmags, r, r_min, log_scale, patience):
    # the last `patience` terms are nonzero and shrinking with ratio q < 1;
    # past the peak the ratios of these series decrease, so the tail is at
    # most T_r q / (1 - q), which must be tiny relative to the sum
    if r < r_min or r + 1 < patience + 1:
        return False
    recent = logmags[-(patience + 1):]
    if any(lm is None for lm in recent):
        return False
    log_q = max(b - a for a, b in zip(recent, recent[1:]))
    if log_q >= math.log(0.99):
        return False
    return recent[-1] + log_q - math.log1p(-math.exp(log_q)) <= LOG_TINY + log_scale


def sum_series(term, mp_term, *, tol=1e-10, r_min=0, max_terms=2000,
               patience=2, what="series"):
    """Sum ``sum_r T_r`` to absolute accuracy ``tol * max(1, |S|)``.

    Parameters
    ----------
    term : callable
        ``term(r) -> (value, logmag)``. ``value`` is the double-precision term
        (float or complex) or ``None`` when it would overflow; ``logmag`` is
        ``log|T_r|`` or ``None`` for an exact zero term.
    mp_term : callable
        ``mp_term(ctx, r)`` returns the same term as an mpmath number.
    r_min : int
        No convergence test before this index (past any growth region).

    Returns
    -------
    value, info : float or complex, dict
        ``info`` holds the number of terms, the estimated error and whether
        extended precision was used.
    """
    acc = _CompensatedSum()
    logmags = []
    weighted = 0.0
    max_lm = -math.inf
    overflow = False
    n = None
    for r in range(max_terms):
        value, lm = term(r)
        logmags.append(lm)
        if lm is not None:
            max_lm = max(max_lm, lm)
            if value is None or lm > 700.0:
                overflow = True
            else:
                acc.add(value)
                weighted += abs(value) * (4.0 + abs(lm))
        if overflow:
            scale = max(0.0, max_lm)
        else:
            s = abs(acc.value)
            scale = math.log(s) if s > 1.0 else 0.0
        if _converged(logmags, r, r_min, scale, patience):
            n = r + 1
            break
    if n is None:
        raise NumericalFailure(
            f"{what}: no convergence within {max_terms} terms", bound=math.inf)

    if not overflow:
        total = acc.value
        err = EPS * weighted
        if err <= 1e-3 * tol * max(1.0, abs(total)):
            return total, {"terms": n, "error": err, "extended": False}

    # lose about log10(peak) digits to cancellation; keep 20 more
    dps = 22 + math.ceil(max(0.0, max_lm) / math.log(10.0))
    if dps > MAX_DPS:
        raise NumericalFailure(f"{what}: cancellation too severe", bound=math.inf)
    ctx = mp_context(dps)
    total = ctx.mpf(0)
    logmags = []
    n = None
    for r in range(max_terms):
        t = mp_term(ctx, r)
        total += t
        if t == 0:
            logmags.append(None)
        else:
            logmags.append(float(ctx.log(abs(t))))
        s = abs(total)
        scale = float(ctx.log(s)) if s > 1 else 0.0
        if _converged(logmags, r, r_min, scale, patience):
            n = r + 1
            break
    if n is None:
        raise NumericalFailure(
            f"{what}: no convergence within {max_terms} terms (extended precision)",
            bound=math.inf)
    if isinstance(total, ctx.mpc):
        out = complex(total)
    else:
        out = float(total)
    return out, {"terms": n, "error": 10.0 ** (-dps + 5) * math.exp(max(0.0, max_lm)),
                 "extended": True, "dps": dps}
