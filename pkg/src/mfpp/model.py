"""Model parameters, multi-indices, jump laws and Bernstein functions.

The objects here are plain immutable descriptions. The only mutable state is
the per-coordinate cache of convolution powers held by
:class:`JumpDistribution`, which is guarded by a lock.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ._series import mp_context
from .errors import DomainError
from .specfun import gen_binomial

MultiIndex = tuple

LAMBDA_RTOL = 1e-12
TAIL_TOL = 1e-12
PIG_JMAX = 400
PIG_TAIL_TOL = 1e-10
SERIES_DPS = 50


# ------------------------------------------------------------ parameters ---

@dataclass(frozen=True)
class ModelParams:
    """Intensities ``lam`` and the space/time indices ``eta``, ``nu``."""

    lam: tuple
    eta: float
    nu: float

    def __post_init__(self):
        lam = tuple(float(x) for x in np.atleast_1d(self.lam))
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "eta", float(self.eta))
        object.__setattr__(self, "nu", float(self.nu))
        if len(lam) < 1:
            raise DomainError("at least one coordinate is required")
        if not all(x > 0.0 and math.isfinite(x) for x in lam):
            raise DomainError(f"intensities must be positive and finite, got {lam}")
        for name in ("eta", "nu"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise DomainError(f"{name} must lie in (0, 1], got {v!r}")

    @property
    def m(self) -> int:
        return len(self.lam)

    @property
    def s(self) -> float:
        return s_lambda(self)

    def replace(self, **changes) -> "ModelParams":
        fields = {"lam": self.lam, "eta": self.eta, "nu": self.nu}
        fields.update(changes)
        return ModelParams(**fields)


def s_lambda(params: ModelParams) -> float:
    """Total intensity ``sum_i lambda_i``."""
    return math.fsum(params.lam)


# ---------------------------------------------------------- multi-indices --

def as_index(k, m=None) -> MultiIndex:
    k = tuple(int(x) for x in np.atleast_1d(k))
    if any(x < 0 for x in k):
        raise DomainError(f"multi-index entries must be non-negative, got {k}")
    if m is not None and len(k) != m:
        raise DomainError(f"multi-index {k} has length {len(k)}, expected {m}")
    return k


def leq(a: MultiIndex, b: MultiIndex) -> bool:
    """Componentwise ``a <= b``."""
    return all(x <= y for x, y in zip(a, b))


def precedes(a: MultiIndex, b: MultiIndex) -> bool:
    """``a <= b`` componentwise with ``a != b``."""
    return leq(a, b) and tuple(a) != tuple(b)


def multi_indices(kmax: Sequence[int]) -> Iterator[MultiIndex]:
    """All ``k`` with ``0 <= k <= kmax`` in lexicographic order."""
    return itertools.product(*(range(int(x) + 1) for x in kmax))


def indices_with_total(total: int, m: int) -> Iterator[MultiIndex]:
    """All ``k`` in ``N^m`` with ``|k| = total``."""
    if m == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in indices_with_total(total - first, m - 1):
            yield (first,) + rest


def multinomial(k: MultiIndex) -> int:
    out = 1
    acc = 0
    for x in k:
        acc += x
        out *= math.comb(acc, x)
    return out


# ------------------------------------------------------------ jump laws ----

@dataclass(frozen=True)
class JumpFamily:
    """Law of the jump sizes of one coordinate.

    ``kind`` is one of ``"unit"``, ``"geometric"`` (``alpha``), ``"pig"``
    (``beta``, ``mu``) or ``"logarithmic"`` (``alpha``).
    """

    kind: str
    alpha: float = float("nan")
    beta: float = float("nan")
    mu: float = float("nan")

    def __post_init__(self):
        if self.kind == "unit":
            return
        if self.kind == "geometric":
            if not 0.0 < self.alpha <= 1.0:
                raise DomainError(f"geometric alpha must lie in (0, 1], got {self.alpha}")
        elif self.kind == "logarithmic":
            if not 0.0 < self.alpha < 1.0:
                raise DomainError(f"logarithmic alpha must lie in (0, 1), got {self.alpha}")
        elif self.kind == "pig":
            if not (self.beta > 0.0 and self.mu > 0.0):
                raise DomainError("pig beta and mu must be positive")
        else:
            raise DomainError(f"unknown jump family {self.kind!r}")

    @property
    def implied_intensity(self):
        """The intensity this family forces, or ``None`` if unrestricted."""
        if self.kind == "pig":
            return self.mu / self.beta * (math.sqrt(1.0 + 2.0 * self.beta) - 1.0)
        if self.kind == "logarithmic":
            return -math.log(self.alpha)
        return None

    def pmf(self, j: int) -> float:
        if j < 1:
            return 0.0
        if self.kind == "unit":
            return 1.0 if j == 1 else 0.0
        if self.kind == "geometric":
            return (1.0 - self.alpha) ** (j - 1) * self.alpha
        if self.kind == "logarithmic":
            return -(1.0 - self.alpha) ** j / (j * math.log(self.alpha))
        x = 2.0 * self.beta / (2.0 * self.beta + 1.0)
        norm = math.sqrt(1.0 / (2.0 * self.beta + 1.0)) - 1.0
        return gen_binomial(j - 1.5, j) * x ** j / norm

    def pgf_complement(self, u: float) -> float:
        """``1 - E[u^Y]`` in closed form, exactly zero at ``u = 1``."""
        if self.kind == "unit":
            return 1.0 - u
        if self.kind == "geometric":
            return (1.0 - u) / (1.0 - (1.0 - self.alpha) * u)
        if self.kind == "logarithmic":
            la = math.log(self.alpha)
            return (la - math.log1p(-(1.0 - self.alpha) * u)) / la
        x = 2.0 * self.beta / (2.0 * self.beta + 1.0)
        norm = math.sqrt(1.0 - x) - 1.0
        return (math.sqrt(1.0 - x) - math.sqrt(1.0 - x * u)) / norm

    def j_max(self) -> int:
        """Truncation point of the support with a certified tail."""
        if self.kind == "unit":
            return 1
        if self.kind == "geometric":
            if self.alpha == 1.0:
                return 1
            # tail beyond J is (1 - alpha)^J
            return max(1, math.ceil(math.log(TAIL_TOL) / math.log1p(-self.alpha)))
        if self.kind == "logarithmic":
            # tail beyond J is at most (1-a)^(J+1) / ((J+1) |log a| a)
            q = 1.0 - self.alpha
            c = -math.log(self.alpha) * self.alpha
            j = 1
            while q ** (j + 1) / ((j + 1) * c) >= TAIL_TOL:
                j += 1
            return j
        return PIG_JMAX

    def table(self) -> np.ndarray:
        """``q[j]`` for ``0 <= j <= j_max`` with ``q[0] = 0``."""
        jm = self.j_max()
        q = np.zeros(jm + 1)
        if self.kind == "pig":
            x = 2.0 * self.beta / (2.0 * self.beta + 1.0)
            norm = math.sqrt(1.0 / (2.0 * self.beta + 1.0)) - 1.0
            c = 1.0
            for j in range(1, jm + 1):
                # C(j-3/2, j) = C(j-5/2, j-1) (j-3/2) / j
                c = c * (j - 1.5) / j
                q[j] = c * x ** j / norm
            tail = 1.0 - math.fsum(q)
            if tail > PIG_TAIL_TOL:
                raise DomainError(
                    f"pig beta={self.beta}: tail mass {tail:.3g} beyond j={jm} "
                    f"exceeds {PIG_TAIL_TOL}")
            return q
        for j in range(1, jm + 1):
            q[j] = self.pmf(j)
        return q


class JumpDistribution:
    """Independent jump-size laws, one :class:`JumpFamily` per coordinate."""

    def __init__(self, families: Sequence[JumpFamily]):
        self.families = tuple(families)
        if not self.families:
            raise DomainError("at least one coordinate is required")
        self._tables = [f.table() for f in self.families]
        self._powers = [dict() for _ in self.families]
        self._lock = threading.Lock()

    @classmethod
    def unit(cls, m: int) -> "JumpDistribution":
        return cls([JumpFamily("unit")] * m)

    @classmethod
    def geometric(cls, alphas) -> "JumpDistribution":
        return cls([JumpFamily("geometric", alpha=float(a)) for a in alphas])

    @classmethod
    def logarithmic(cls, alphas) -> "JumpDistribution":
        return cls([JumpFamily("logarithmic", alpha=float(a)) for a in alphas])

    @classmethod
    def pig(cls, betas, mus) -> "JumpDistribution":
        return cls([JumpFamily("pig", beta=float(b), mu=float(u))
                    for b, u in zip(betas, mus)])

    @classmethod
    def from_dict(cls, spec) -> "JumpDistribution":
        """Build from ``{"family": name, ...}`` or a list of such mappings."""
        if isinstance(spec, dict):
            m = spec.get("m")
            kind = spec["family"]
            if kind == "unit":
                return cls.unit(int(m))
            if kind in ("geometric", "logarithmic"):
                return getattr(cls, kind)(spec["alpha"])
            if kind == "pig":
                return cls.pig(spec["beta"], spec["mu"])
            raise DomainError(f"unknown jump family {kind!r}")
        return cls([JumpFamily(**item) for item in spec])

    def __repr__(self):
        return f"JumpDistribution({list(self.families)!r})"

    def __eq__(self, other):
        return isinstance(other, JumpDistribution) and self.families == other.families

    def __hash__(self):
        return hash(self.families)

    @property
    def m(self) -> int:
        return len(self.families)

    @property
    def is_unit(self) -> bool:
        return all(f.kind == "unit" for f in self.families)

    def implied_intensities(self):
        return tuple(f.implied_intensity for f in self.families)

    def validate(self, params: ModelParams) -> None:
        """Check that ``params`` is compatible with the jump laws.

        Raises
        ------
        DomainError
            On a dimension mismatch, or if a PIG/logarithmic coordinate has an
            intensity off its implied value by more than a relative 1e-12.
        """
        if params.m != self.m:
            raise DomainError(f"jump laws have m={self.m}, params have m={params.m}")
        for i, (lam, want) in enumerate(zip(params.lam, self.implied_intensities())):
            if want is not None and abs(lam - want) > LAMBDA_RTOL * want:
                raise DomainError(
                    f"coordinate {i}: {self.families[i].kind} jumps require "
                    f"lambda={want!r}, got {lam!r}")

    def params_with_implied(self, eta, nu, lam=None) -> ModelParams:
        """Params whose constrained intensities are set from the jump laws."""
        out = []
        for i, want in enumerate(self.implied_intensities()):
            if want is None:
                if lam is None:
                    raise DomainError(f"coordinate {i} needs an explicit intensity")
                out.append(float(lam[i]))
            else:
                out.append(want)
        return ModelParams(tuple(out), eta, nu)

    def table(self, i: int) -> np.ndarray:
        return self._tables[i]

    def pgf_complement(self, i: int, u: float) -> float:
        """``1 - E[u^{Y^i}]`` for coordinate ``i``."""
        return self.families[i].pgf_complement(u)

    def j_max(self, i: int) -> int:
        return len(self._tables[i]) - 1

    def power_table(self, i: int, h: int) -> np.ndarray:
        """Distribution of ``Y_1 + ... + Y_h`` on ``0..h*j_max``."""
        if h < 0:
            raise DomainError("h must be non-negative")
        cache = self._powers[i]
        got = cache.get(h)
        if got is not None:
            return got
        with self._lock:
            if h not in cache:
                if 0 not in cache:
                    cache[0] = np.array([1.0])
                top = max(x for x in cache if x <= h)
                arr = cache[top]
                q = self._tables[i]
                for g in range(top + 1, h + 1):
                    arr = np.convolve(arr, q)
                    # below g the power is identically zero
                    arr[:g] = 0.0
                    arr.setflags(write=False)
                    cache[g] = arr
            return cache[h]


def jump_pmf(dist: JumpDistribution, i: int, j: int) -> float:
    """``P(Y^i = j)`` for ``j >= 1``."""
    if j < 1:
        raise DomainError("jump sizes are positive integers")
    q = dist.table(i)
    return float(q[j]) if j < len(q) else dist.families[i].pmf(j)


def convolution_power(dist: JumpDistribution, i: int, h: int, j: int) -> float:
    """``P(Y^i_1 + ... + Y^i_h = j)``; exact zero for ``j < h``."""
    if h < 0 or j < 0:
        raise DomainError("h and j must be non-negative")
    if h == 0:
        return 1.0 if j == 0 else 0.0
    if j < h:
        return 0.0
    if h == 1:
        return jump_pmf(dist, i, j)
    arr = dist.power_table(i, h)
    return float(arr[j]) if j < len(arr) else 0.0


# ------------------------------------------------------- Bernstein pairs ---

@dataclass(frozen=True)
class BernsteinFamily:
    """Bernstein function ``f`` with its Levy measure ``rho_f``.

    ``stable``: ``f(mu) = mu^eta``, ``rho_f(dr) = eta / Gamma(1-eta) r^(-1-eta) dr``.
    ``gamma``: ``f(mu) = a log(1 + mu/b)``, ``rho_f(dr) = a e^(-b r) / r dr``.
    """

    kind: str
    eta: float = float("nan")
    a: float = float("nan")
    b: float = float("nan")

    @classmethod
    def stable(cls, eta) -> "BernsteinFamily":
        eta = float(eta)
        if not 0.0 < eta < 1.0:
            raise DomainError(f"stable index must lie in (0, 1), got {eta}")
        return cls("stable", eta=eta)

    @classmethod
    def gamma(cls, a, b, allow_zero_rate=False) -> "BernsteinFamily":
        a, b = float(a), float(b)
        if not a > 0.0:
            raise DomainError(f"gamma shape must be positive, got {a}")
        if not (b > 0.0 or (allow_zero_rate and b == 0.0)):
            raise DomainError(f"gamma rate must be positive, got {b}")
        return cls("gamma", a=a, b=b)

    @classmethod
    def from_dict(cls, spec) -> "BernsteinFamily":
        if spec["family"] == "stable":
            return cls.stable(spec["eta"])
        if spec["family"] == "gamma":
            return cls.gamma(spec["a"], spec["b"])
        raise DomainError(f"unknown Bernstein family {spec['family']!r}")


def bernstein_eval(f: BernsteinFamily, mu):
    """``f(mu)``; complex ``mu`` uses principal branches."""
    if mu == 0:
        return 0.0 * mu
    if f.kind == "stable":
        return mu ** f.eta
    if isinstance(mu, complex):
        import cmath
        return f.a * cmath.log(1.0 + mu / f.b)
    return f.a * math.log1p(mu / f.b)


def levy_moment_rate(f: BernsteinFamily, n: int, s: float) -> float:
    """``int_0^inf r^n e^(-s r) rho_f(dr)`` for ``n >= 1``."""
    if n < 1:
        raise DomainError("the moment integral diverges for n = 0")
    if not s > 0.0:
        raise DomainError("s must be positive")
    if f.kind == "stable":
        log_val = (math.lgamma(n - f.eta) - math.lgamma(1.0 - f.eta)
                   + (f.eta - n) * math.log(s))
        return f.eta * math.exp(log_val)
    return f.a * math.exp(math.lgamma(n) - n * math.log(s + f.b))


def levy_density(f: BernsteinFamily, r):
    """Density of ``rho_f`` at ``r > 0``."""
    if f.kind == "stable":
        return f.eta / math.gamma(1.0 - f.eta) * r ** (-1.0 - f.eta)
    return f.a * math.exp(-f.b * r) / r


# ---------------------------------------------------- power series in t^nu -

class PowerSeriesTNu:
    """Truncated series ``sum_{r<=R} c_r t^(nu r)`` with extended-precision
    coefficients."""

    __slots__ = ("nu", "coeffs")

    def __init__(self, nu, coeffs):
        self.nu = float(nu)
        ctx = mp_context(SERIES_DPS)
        self.coeffs = tuple(ctx.mpf(c) for c in coeffs)

    @staticmethod
    def ctx():
        return mp_context(SERIES_DPS)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def evaluate_mp(self, t):
        """Value and tail bound ``|c_R t^(nu R)|`` as mpmath numbers."""
        ctx = self.ctx()
        if t == 0:
            return self.coeffs[0], ctx.mpf(0)
        x = ctx.mpf(t) ** self.nu
        acc = ctx.mpf(0)
        p = ctx.mpf(1)
        for c in self.coeffs:
            acc += c * p
            p *= x
        tail = abs(self.coeffs[-1]) * x ** self.order
        return acc, tail

    def evaluate(self, t):
        """Return ``(value, tail_bound)`` as floats."""
        v, tail = self.evaluate_mp(t)
        return float(v), float(tail)

    def __call__(self, t) -> float:
        return self.evaluate(t)[0]

    def _aligned(self, other):
        if abs(self.nu - other.nu) > 0.0:
            raise DomainError("series in different powers of t cannot be combined")
        n = max(len(self.coeffs), len(other.coeffs))
        zero = self.ctx().mpf(0)
        a = self.coeffs + (zero,) * (n - len(self.coeffs))
        b = other.coeffs + (zero,) * (n - len(other.coeffs))
        return a, b

    def __add__(self, other):
        a, b = self._aligned(other)
        return PowerSeriesTNu(self.nu, [x + y for x, y in zip(a, b)])

    def __sub__(self, other):
        a, b = self._aligned(other)
        return PowerSeriesTNu(self.nu, [x - y for x, y in zip(a, b)])

    def scale(self, c):
        c = self.ctx().mpf(c)
        return PowerSeriesTNu(self.nu, [c * x for x in self.coeffs])

    def __rmul__(self, c):
        return self.scale(c)

    def truncate(self, order):
        return PowerSeriesTNu(self.nu, self.coeffs[: order + 1])

    @classmethod
    def zero(cls, nu, order=0):
        return cls(nu, [0] * (order + 1))
