"""Piecewise-constant random twist: distributions, sampling and averages.

The twist is ``theta(z) = theta_k`` on the k-th section, section lengths
``l_k`` and rates ``theta_k`` being independent i.i.d. sequences.  Every
realization owns a Philox stream keyed by ``(seed, stream index)``, so
ensembles are reproducible and independent of how work is split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .quadrature import integrate
from .su2 import DomainError

__all__ = [
    "TwoPointTwist",
    "UniformTwist",
    "GaussianTwist",
    "ExponentialLength",
    "FixedLength",
    "UniformLength",
    "FiberModel",
    "SegmentRealization",
    "sample_realization",
    "sample_segments",
    "expect",
    "theta_moment",
    "length_char_fn",
    "EXPECT_TOL",
]

EXPECT_TOL = 1e-10
# exponential lengths are integrated over [0, 40 <l>]; the dropped mass is e^-40
EXP_CUTOFF = 40.0
# gaussian twist is integrated over mean +- 8 sigma
GAUSS_CUTOFF = 8.0
_CHUNK = 256


# -- twist distributions -------------------------------------------------------


@dataclass(frozen=True)
class TwoPointTwist:
    """``shift + theta0`` or ``shift - theta0`` with equal probability."""

    theta0: float
    shift: float = 0.0
    kind = "two_point"

    @property
    def has_regular_twist(self) -> bool:
        return self.shift != 0.0

    @property
    def max_abs(self) -> float:
        return abs(self.shift) + abs(self.theta0)

    def atoms(self):
        return np.array([self.shift + self.theta0, self.shift - self.theta0]), np.array([0.5, 0.5])

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        sign = np.where(gen.random(n) < 0.5, 1.0, -1.0)
        return self.shift + sign * self.theta0


@dataclass(frozen=True)
class UniformTwist:
    low: float
    high: float
    kind = "uniform"

    def __post_init__(self):
        if not self.high > self.low:
            raise DomainError("uniform twist needs high > low")

    @classmethod
    def symmetric(cls, theta_max: float) -> "UniformTwist":
        return cls(-theta_max, theta_max)

    @property
    def has_regular_twist(self) -> bool:
        return self.low != -self.high

    @property
    def max_abs(self) -> float:
        return max(abs(self.low), abs(self.high))

    def atoms(self):
        return None

    def support(self):
        return self.low, self.high

    def pdf(self, x):
        return np.full_like(np.asarray(x, float), 1.0 / (self.high - self.low))

    def sample(self, gen, n):
        return self.low + (self.high - self.low) * gen.random(n)


@dataclass(frozen=True)
class GaussianTwist:
    mean: float
    sigma: float
    kind = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("gaussian twist needs sigma > 0")

    @property
    def has_regular_twist(self) -> bool:
        return self.mean != 0.0

    @property
    def max_abs(self) -> float:
        return abs(self.mean) + GAUSS_CUTOFF * self.sigma

    def atoms(self):
        return None

    def support(self):
        return self.mean - GAUSS_CUTOFF * self.sigma, self.mean + GAUSS_CUTOFF * self.sigma

    def pdf(self, x):
        u = (np.asarray(x, float) - self.mean) / self.sigma
        return np.exp(-0.5 * u * u) / (self.sigma * math.sqrt(2.0 * math.pi))

    def sample(self, gen, n):
        return gen.normal(self.mean, self.sigma, n)


# -- length distributions ------------------------------------------------------


@dataclass(frozen=True)
class ExponentialLength:
    mean: float
    kind = "exponential"

    def __post_init__(self):
        if not self.mean > 0:
            raise DomainError("mean length must be positive")

    def atoms(self):
        return None

    def support(self):
        return 0.0, EXP_CUTOFF * self.mean

    def pdf(self, x):
        return np.exp(-np.asarray(x, float) / self.mean) / self.mean

    def char_fn(self, lam):
        if not (lam.real * self.mean > -1.0):
            raise DomainError(f"1/(1 + lambda <l>) diverges for lambda = {lam}")
        return 1.0 / (1.0 + lam * self.mean)

    def sample(self, gen, n):
        out = gen.exponential(self.mean, n)
        # exponential draws can be exactly 0.0 with probability ~2^-53
        return np.where(out > 0.0, out, np.finfo(float).tiny)


@dataclass(frozen=True)
class FixedLength:
    l0: float
    kind = "fixed"

    def __post_init__(self):
        if not self.l0 > 0:
            raise DomainError("fixed length must be positive")

    @property
    def mean(self) -> float:
        return self.l0

    def atoms(self):
        return np.array([self.l0]), np.array([1.0])

    def char_fn(self, lam):
        return np.exp(-lam * self.l0)

    def sample(self, gen, n):
        return np.full(n, self.l0)


@dataclass(frozen=True)
class UniformLength:
    low: float
    high: float
    kind = "uniform"

    def __post_init__(self):
        if not (0 < self.low < self.high):
            raise DomainError("uniform lengths need 0 < low < high")

    @property
    def mean(self) -> float:
        return 0.5 * (self.low + self.high)

    def atoms(self):
        return None

    def support(self):
        return self.low, self.high

    def pdf(self, x):
        return np.full_like(np.asarray(x, float), 1.0 / (self.high - self.low))

    char_fn = None

    def sample(self, gen, n):
        out = self.low + (self.high - self.low) * gen.random(n)
        return np.maximum(out, self.low)


TwistDistribution = Union[TwoPointTwist, UniformTwist, GaussianTwist]
LengthDistribution = Union[ExponentialLength, FixedLength, UniformLength]


# -- model and realizations ----------------------------------------------------


@dataclass(frozen=True)
class FiberModel:
    twist: TwistDistribution
    length: LengthDistribution
    seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must fit in an unsigned 64-bit integer")

    @property
    def mean_length(self) -> float:
        return self.length.mean

    def generator(self, stream: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=[int(self.seed), int(stream)]))


@dataclass(frozen=True)
class SegmentRealization:
    lengths: np.ndarray
    thetas: np.ndarray
    boundaries: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=float)
        thetas = np.asarray(self.thetas, dtype=float)
        if lengths.shape != thetas.shape or lengths.ndim != 1:
            raise ValueError("lengths and thetas must be 1-d arrays of equal size")
        if np.any(lengths <= 0):
            raise DomainError("all segment lengths must be positive")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "boundaries", np.cumsum(lengths))

    def __len__(self):
        return len(self.lengths)

    @property
    def total_length(self) -> float:
        return float(self.boundaries[-1]) if len(self) else 0.0

    def count_at(self, z: float) -> int:
        """N(z): the smallest N with l_1 + ... + l_N > z."""
        return int(np.searchsorted(self.boundaries, z, side="right")) + 1


def _draw_chunks(model: FiberModel, gen: np.random.Generator):
    # lengths and twists are drawn in fixed-size blocks so that count-stopped
    # and length-stopped realizations of one stream share their prefix
    while True:
        yield model.length.sample(gen, _CHUNK), model.twist.sample(gen, _CHUNK)


def _draw_count(model: FiberModel, stream: int, n: int):
    ls, ts = [], []
    got = 0
    for l, t in _draw_chunks(model, model.generator(stream)):
        if got >= n:
            break
        ls.append(l)
        ts.append(t)
        got += _CHUNK
    if not ls:
        return np.empty(0), np.empty(0)
    return np.concatenate(ls)[:n], np.concatenate(ts)[:n]


def sample_realization(
    model: FiberModel,
    n_segments: Optional[int] = None,
    total_length: Optional[float] = None,
    stream: int = 0,
) -> SegmentRealization:
    """Draw one realization, stopped either after ``n_segments`` sections or
    after the N(z) sections that cover ``[0, total_length]``."""
    if (n_segments is None) == (total_length is None):
        raise ValueError("give exactly one of n_segments, total_length")
    if n_segments is not None:
        if n_segments < 1:
            raise DomainError("n_segments must be >= 1")
        return SegmentRealization(*_draw_count(model, stream, n_segments))
    if not total_length > 0:
        raise DomainError("total_length must be positive")
    ls, ts = [], []
    covered = 0.0
    for l, t in _draw_chunks(model, model.generator(stream)):
        ls.append(l)
        ts.append(t)
        covered += float(np.sum(l))
        if covered > total_length:
            break
    lengths, thetas = np.concatenate(ls), np.concatenate(ts)
    n = int(np.searchsorted(np.cumsum(lengths), total_length, side="right")) + 1
    return SegmentRealization(lengths[:n], thetas[:n])


def sample_segments(model: FiberModel, n_segments: int, streams) -> tuple[np.ndarray, np.ndarray]:
    """``(lengths, thetas)`` arrays of shape ``(len(streams), n_segments)``;
    row ``i`` equals ``sample_realization(model, n_segments, stream=streams[i])``."""
    streams = list(streams)
    lengths = np.empty((len(streams), n_segments))
    thetas = np.empty((len(streams), n_segments))
    for i, s in enumerate(streams):
        lengths[i], thetas[i] = _draw_count(model, s, n_segments)
    return lengths, thetas


# -- averages -----------------------------------------------------------------

Integrand = Callable[[np.ndarray, float], np.ndarray]


def _length_average(length: LengthDistribution, f: Integrand, theta: float, tol: float):
    atoms = length.atoms()
    if atoms is not None:
        xs, ps = atoms
        vals = np.asarray(f(xs, theta))
        return np.tensordot(ps, vals, axes=(0, 0))
    lo, hi = length.support()

    def g(x):
        vals = np.asarray(f(x, theta))
        w = length.pdf(x)
        return vals * w.reshape(w.shape + (1,) * (vals.ndim - 1))

    panels = 8 if length.kind == "exponential" else 1
    return integrate(g, lo, hi, tol=tol, initial_panels=panels)


def expect(model: FiberModel, f: Integrand, tol: float = EXPECT_TOL):
    """Mean of ``f(l, theta)`` over independent ``l`` and ``theta``.

    ``f`` must accept an array of lengths and a scalar twist and return an
    array whose leading axis runs over the lengths (trailing axes allowed, so
    matrix-valued averages work).  Two-point twists and fixed lengths are
    summed exactly; continuous parts use adaptive Gauss-Legendre to absolute
    tolerance ``tol``.  Raises ``QuadratureError`` if refinement stalls.
    """
    twist = model.twist
    atoms = twist.atoms()
    if atoms is not None:
        xs, ps = atoms
        total = 0.0
        for x, p in zip(xs, ps):
            total = total + p * _length_average(model.length, f, float(x), tol)
        return total

    def outer(thetas):
        inner = np.stack([_length_average(model.length, f, float(t), tol) for t in thetas])
        w = twist.pdf(thetas)
        return inner * w.reshape(w.shape + (1,) * (inner.ndim - 1))

    lo, hi = twist.support()
    # symmetric supports are split at zero so the node sets mirror each other
    if lo < 0.0 < hi:
        return integrate(outer, lo, 0.0, tol=tol / 2) + integrate(outer, 0.0, hi, tol=tol / 2)
    return integrate(outer, lo, hi, tol=tol)


def theta_moment(model: FiberModel, k: int) -> float:
    if k < 0:
        raise DomainError("moment order must be non-negative")
    return float(expect(model, lambda l, t: np.full_like(l, t**k)))


def length_char_fn(model: FiberModel, lam: complex) -> complex:
    """Laplace transform <exp(-lambda l)> of the section-length law."""
    lam = complex(lam)
    if not np.isfinite(lam):
        raise DomainError("lambda must be finite")
    closed = getattr(model.length, "char_fn", None)
    if closed is not None:
        return complex(closed(lam))
    if lam.real < 0:
        raise DomainError("numerical Laplace integral needs Re(lambda) >= 0")
    lo, hi = model.length.support()
    g = lambda x: np.exp(-lam * x) * model.length.pdf(x)
    return complex(integrate(g, lo, hi, tol=EXPECT_TOL))
