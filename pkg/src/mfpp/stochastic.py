"""Samplers for the subordinators and the time-changed counting processes.

Only fixed-time marginals are produced. Every sampler accepts an optional
``size``; without it a single draw is returned (a float, or a tuple of ints
for count vectors), with it a numpy array whose leading axis is ``size``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError
from .model import BernsteinFamily, JumpDistribution, ModelParams

__all__ = [
    "RngStream",
    "sample_compound",
    "sample_inverse_stable",
    "sample_OT_process",
    "sample_poisson",
    "sample_process",
    "sample_stable",
]

_MASK64 = (1 << 64) - 1
# numpy's Poisson sampler rejects means near 2^63; far below that a normal
# draw is indistinguishable at double precision
POISSON_NORMAL_ABOVE = 1e12
_INT64_MAX = np.iinfo(np.int64).max
# float(_INT64_MAX) rounds up to 2^63, which does not fit; clip just below
_INT64_MAX_FLOAT = float(np.nextafter(2.0 ** 63, 0.0))
# per-coordinate jump counts above this are summed by a normal approximation
JUMP_NORMAL_ABOVE = 1_000_000


class RngStream:
    """Counter-based random stream identified by ``(seed, stream_id)``.

    Backed by numpy's Philox generator with the 128-bit key
    ``seed | stream_id << 64``. Equal identifiers give equal draw sequences;
    distinct stream ids give independent streams.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self._gen = None

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = self.seed | (self.stream_id << 64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def spawn(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def _gen(rng) -> np.random.Generator:
    return rng.generator if isinstance(rng, RngStream) else rng


def _unit_stable(eta, gen, size):
    # Kanter's representation of the positive eta-stable law with
    # Laplace transform exp(-mu^eta)
    u = 1.0 - gen.random(size)  # in (0, 1]
    e = gen.standard_exponential(size)
    pu = np.pi * u
    a = (np.sin(eta * pu) / np.sin(pu) ** (1.0 / eta)) * \
        (np.sin((1.0 - eta) * pu) / e) ** ((1.0 - eta) / eta)
    return a


def sample_stable(eta, t, rng, size=None):
    """Draw ``A^eta(t) = t^(1/eta) A^eta(1)``.

    ``eta = 1`` returns ``t`` itself and ``t = 0`` returns 0, without
    consuming random numbers.
    """
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"eta must lie in (0, 1], got {eta!r}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("time must be non-negative")
    if eta == 1.0:
        return t if size is None else np.broadcast_to(t_arr, _shape(size)).copy()
    if size is None and t_arr.ndim == 0 and t_arr == 0.0:
        return 0.0
    a = _unit_stable(eta, _gen(rng), size)
    out = t_arr ** (1.0 / eta) * a
    return float(out) if size is None and np.ndim(out) == 0 else out


def sample_inverse_stable(nu, t, rng, size=None):
    """Draw ``L^nu(t)`` through the marginal identity ``(t / A^nu(1))^nu``."""
    if not 0.0 < nu <= 1.0:
        raise DomainError(f"nu must lie in (0, 1], got {nu!r}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("time must be non-negative")
    if nu == 1.0:
        return t if size is None else np.broadcast_to(t_arr, _shape(size)).copy()
    if size is None and t_arr.ndim == 0 and t_arr == 0.0:
        return 0.0
    a = _unit_stable(nu, _gen(rng), size)
    out = (t_arr / a) ** nu
    return float(out) if size is None and np.ndim(out) == 0 else out


def _shape(size):
    return (size,) if isinstance(size, (int, np.integer)) else tuple(size)


def sample_poisson(mean, rng):
    """Poisson draws with saturation for astronomically large means."""
    gen = _gen(rng)
    mean = np.asarray(mean, dtype=float)
    big = mean > POISSON_NORMAL_ABOVE
    if not np.any(big):
        return gen.poisson(mean)
    small_draw = gen.poisson(np.where(big, 0.0, mean))
    approx = mean + np.sqrt(np.where(big, mean, 0.0)) * gen.standard_normal(mean.shape)
    approx = np.clip(np.rint(approx), 0, _INT64_MAX_FLOAT)
    return np.where(big, approx.astype(np.int64), small_draw)


def _counts(lam, clock, rng):
    lam = np.asarray(lam, dtype=float)
    clock = np.asarray(clock, dtype=float)
    return sample_poisson(clock[..., None] * lam, rng)


def _as_result(arr, size):
    if size is None:
        return tuple(int(x) for x in arr)
    return arr


def sample_process(params: ModelParams, t, rng, size=None):
    """Draw ``N(A^eta(L^nu(t)))``: independent Poisson counts given the clock."""
    if t < 0:
        raise DomainError("time must be non-negative")
    if t == 0:
        z = np.zeros(params.m if size is None else _shape(size) + (params.m,), dtype=np.int64)
        return _as_result(z, size)
    gen = _gen(rng)
    L = sample_inverse_stable(params.nu, t, gen, size)
    clock = sample_stable(params.eta, L, gen) if size is None else \
        _stable_at(params.eta, L, gen)
    return _as_result(_counts(params.lam, clock, gen), size)


def _stable_at(eta, times, gen):
    times = np.asarray(times, dtype=float)
    if eta == 1.0:
        return times
    return times ** (1.0 / eta) * _unit_stable(eta, gen, times.shape)


def _jump_sum(family, n, table, gen):
    # sum of n i.i.d. jumps for one coordinate
    if n == 0 or family.kind == "unit":
        return n
    if family.kind == "geometric":
        if family.alpha == 1.0:
            return n
        return n + int(gen.negative_binomial(n, family.alpha))
    if n > JUMP_NORMAL_ABOVE:
        j = np.arange(len(table))
        mean = float(np.dot(j, table))
        var = float(np.dot(j * j, table)) - mean * mean
        draw = n * mean + math.sqrt(n * var) * gen.standard_normal()
        return int(min(max(round(draw), n), _INT64_MAX))
    if family.kind == "logarithmic":
        return int(gen.logseries(1.0 - family.alpha, size=n).sum())
    p = table / table.sum()
    return int(gen.choice(len(p), size=n, p=p).sum())


def sample_compound(params: ModelParams, jumps: JumpDistribution, t, rng, size=None):
    """Draw the compound vector ``C_i = Y^i_1 + ... + Y^i_{N_i}``."""
    jumps.validate(params)
    gen = _gen(rng)
    counts = sample_process(params, t, gen, size)
    if jumps.is_unit:
        return counts
    arr = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    out = np.empty_like(arr)
    for row in range(arr.shape[0]):
        for i, fam in enumerate(jumps.families):
            out[row, i] = _jump_sum(fam, int(arr[row, i]), jumps.table(i), gen)
    return _as_result(out[0], None) if size is None else out


def sample_OT_process(params: ModelParams, f: BernsteinFamily, nu, t, rng, size=None):
    """Draw ``N(H^f(L^nu(t)))`` for a stable or gamma subordinator ``H^f``.

    ``params.eta`` is ignored; the Bernstein family replaces it.
    """
    if f.kind not in ("stable", "gamma"):
        raise DomainError(f"no sampler for Bernstein family {f.kind!r}")
    if t < 0:
        raise DomainError("time must be non-negative")
    m = params.m
    if t == 0:
        z = np.zeros(m if size is None else _shape(size) + (m,), dtype=np.int64)
        return _as_result(z, size)
    gen = _gen(rng)
    L = np.asarray(sample_inverse_stable(nu, t, gen, size), dtype=float)
    if f.kind == "stable":
        clock = _stable_at(f.eta, L, gen)
    else:
        shape = f.a * L
        clock = np.where(shape > 0, gen.gamma(np.where(shape > 0, shape, 1.0), 1.0 / f.b), 0.0)
    return _as_result(_counts(params.lam, clock, gen), size)
