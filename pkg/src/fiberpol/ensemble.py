"""Monte-Carlo ensembles over fiber realizations.

Samples are grouped in fixed blocks of consecutive stream indices.  Each
block is simulated independently (optionally on a thread pool) and the
block accumulators are merged in block order, so every estimate depends
only on ``(model.seed, samples, block_size)`` and never on the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Iterable, Sequence

import numpy as np

from .process import FiberModel, sample_realization, sample_segments
from .propagation import CoherenceMatrix, SpectralDensity
from .su2 import RENORM_INTERVAL, SIGMA, as_matrices, segment_coefficients, su2_multiply

__all__ = [
    "Accumulator",
    "CoherenceCurve",
    "HaarMoment",
    "HaarMomentReport",
    "IndependenceReport",
    "haar_moment",
    "all_moments",
    "run_blocks",
    "mc_coherence_curve",
    "mc_coherence_continuous",
    "mc_mean_coherence",
    "mc_mean_u",
    "mc_mean_p2",
    "haar_moment_test",
    "independence_test",
    "classical_h_mc",
    "BLOCK_SIZE",
]

BLOCK_SIZE = 1024


@dataclass
class Accumulator:
    """Mergeable count / mean / sum of squared deviations (Chan et al.)."""

    count: int = 0
    mean: np.ndarray | float = 0.0
    m2: np.ndarray | float = 0.0

    @classmethod
    def from_samples(cls, x) -> "Accumulator":
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        if n == 0:
            return cls()
        mu = x.mean(axis=0)
        return cls(n, mu, ((x - mu) ** 2).sum(axis=0))

    def merge(self, other: "Accumulator") -> "Accumulator":
        if other.count == 0:
            return Accumulator(self.count, self.mean, self.m2)
        if self.count == 0:
            return Accumulator(other.count, other.mean, other.m2)
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / n)
        return Accumulator(n, mean, m2)

    __add__ = merge

    def push(self, x) -> "Accumulator":
        return self.merge(Accumulator.from_samples(x))

    @property
    def variance(self):
        return self.m2 / (self.count - 1)

    @property
    def stderr(self):
        return np.sqrt(self.variance / self.count)


def run_blocks(
    samples: int,
    worker: Callable[[range], Accumulator],
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
) -> Accumulator:
    """Apply ``worker`` to consecutive stream-index blocks and merge in order."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    blocks = [range(s, min(s + block_size, samples)) for s in range(0, samples, block_size)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(worker, blocks))
    else:
        parts = [worker(b) for b in blocks]
    total = Accumulator()
    for p in parts:
        total = total.merge(p)
    return total


def _walk_products(lengths, thetas, betas, checkpoints, visit):
    """Multiply sections one at a time for every (sample, beta) pair and call
    ``visit(index, a, b)`` whenever the section count hits a checkpoint."""
    betas = np.asarray(betas, dtype=float)[None, :]
    s = lengths.shape[0]
    a = np.ones((s, betas.shape[1]), dtype=complex)
    b = np.zeros_like(a)
    order = sorted(range(len(checkpoints)), key=lambda i: checkpoints[i])
    pos = 0
    while pos < len(order) and checkpoints[order[pos]] == 0:
        visit(order[pos], a, b)
        pos += 1
    for k in range(lengths.shape[1]):
        if pos == len(order):
            break
        m0, m1, m3 = segment_coefficients(betas, lengths[:, k, None], thetas[:, k, None])
        a, b = su2_multiply(m0 + 1j * m1, m3 + 0j, a, b)
        if (k + 1) % RENORM_INTERVAL == 0:
            scale = 1.0 / np.sqrt(np.abs(a) ** 2 + np.abs(b) ** 2)
            a, b = a * scale, b * scale
        while pos < len(order) and checkpoints[order[pos]] == k + 1:
            visit(order[pos], a, b)
            pos += 1


def _checked_ns(ns) -> list[int]:
    ns = [int(n) for n in np.atleast_1d(ns)]
    if any(n < 0 for n in ns):
        raise ValueError("section counts must be non-negative")
    return ns


# -- coherence -----------------------------------------------------------------


@dataclass(frozen=True)
class CoherenceCurve:
    """Mean coherence ``[j11, j22, Re j12, Im j12]`` per checkpoint."""

    points: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    samples: int

    def matrix(self, i: int) -> CoherenceMatrix:
        j11, j22, re, im = self.mean[i]
        return CoherenceMatrix(float(j11), float(j22), complex(re, im))


def _coherence_entries(e):
    return np.stack(
        [np.abs(e[..., 0]) ** 2, np.abs(e[..., 1]) ** 2, (e[..., 0] * np.conj(e[..., 1])).real,
         (e[..., 0] * np.conj(e[..., 1])).imag],
        axis=-1,
    )


def _field(a, b, e0):
    return np.stack([a * e0[0] + b * e0[1], -np.conj(b) * e0[0] + np.conj(a) * e0[1]], axis=-1)


def mc_coherence_curve(
    model: FiberModel,
    beta: float,
    ns: Sequence[int],
    samples: int,
    e0=(1.0, 0.0),
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
) -> CoherenceCurve:
    """Ensemble mean of the monochromatic coherence matrix after each N in
    ``ns`` sections, all checkpoints taken along the same realizations."""
    ns = _checked_ns(ns)
    e0 = np.asarray(e0, dtype=complex)
    n_max = max(ns)

    def worker(block):
        lengths, thetas = sample_segments(model, n_max, block)
        out = np.empty((len(block), len(ns), 4))

        def visit(i, a, b):
            out[:, i] = _coherence_entries(_field(a[:, 0], b[:, 0], e0))

        _walk_products(lengths, thetas, [beta], ns, visit)
        return Accumulator.from_samples(out)

    acc = run_blocks(samples, worker, threads, block_size)
    return CoherenceCurve(np.array(ns), acc.mean, acc.stderr, samples)


def mc_mean_coherence(model: FiberModel, beta: float, n: int, samples: int, threads: int = 1):
    """``(mean CoherenceMatrix, stderr of [j11, j22, Re j12, Im j12])`` after
    ``n`` sections from the input field ``(1, 0)``."""
    if samples < 2:
        raise ValueError("need at least two samples for an error bar")
    curve = mc_coherence_curve(model, beta, [n], samples, threads=threads)
    return curve.matrix(0), curve.stderr[0]


def mc_coherence_continuous(
    model: FiberModel,
    beta: float,
    zs: Sequence[float],
    samples: int,
    e0=(1.0, 0.0),
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
) -> CoherenceCurve:
    """Like :func:`mc_coherence_curve` but at fiber positions ``zs``; the
    section containing each ``z`` is cut there."""
    zs = np.asarray(zs, dtype=float)
    if np.any(zs < 0):
        raise ValueError("positions must be non-negative")
    e0 = np.asarray(e0, dtype=complex)
    z_max = float(zs.max())

    def worker(block):
        reals = [sample_realization(model, total_length=max(z_max, 1e-300), stream=s) for s in block]
        width = max(len(r) for r in reals)
        # zero-length padding sections act as the identity
        lengths = np.zeros((len(block), width))
        thetas = np.zeros((len(block), width))
        counts = np.empty((len(block), len(zs)), dtype=int)
        rests = np.empty((len(block), len(zs)))
        for row, r in enumerate(reals):
            lengths[row, : len(r)] = r.lengths
            thetas[row, : len(r)] = r.thetas
            counts[row] = np.searchsorted(r.boundaries, zs, side="right") + 1
            starts = np.concatenate([[0.0], r.boundaries])
            rests[row] = zs - starts[counts[row] - 1]
        out = np.empty((len(block), len(zs), 4))
        a = np.ones(len(block), dtype=complex)
        b = np.zeros_like(a)
        for k in range(int(counts.max())):
            rows, cols = np.nonzero(counts == k + 1)
            if rows.size:
                m0, m1, m3 = segment_coefficients(beta, rests[rows, cols], thetas[rows, k])
                pa, pb = su2_multiply(m0 + 1j * m1, m3 + 0j, a[rows], b[rows])
                out[rows, cols] = _coherence_entries(_field(pa, pb, e0))
            m0, m1, m3 = segment_coefficients(beta, lengths[:, k], thetas[:, k])
            a, b = su2_multiply(m0 + 1j * m1, m3 + 0j, a, b)
            if (k + 1) % RENORM_INTERVAL == 0:
                scale = 1.0 / np.sqrt(np.abs(a) ** 2 + np.abs(b) ** 2)
                a, b = a * scale, b * scale
        return Accumulator.from_samples(out)

    acc = run_blocks(samples, worker, threads, block_size)
    return CoherenceCurve(zs.copy(), acc.mean, acc.stderr, samples)


def mc_mean_u(model: FiberModel, beta: float, n: int, samples: int, threads: int = 1):
    """Ensemble mean of the full Jones matrix ``U_N`` and its entrywise error
    (real and imaginary parts stacked on the last axis)."""

    def worker(block):
        lengths, thetas = sample_segments(model, max(n, 1), block)
        out = np.empty((len(block), 2, 2, 2))

        def visit(_, a, b):
            m = as_matrices(a[:, 0], b[:, 0])
            out[..., 0], out[..., 1] = m.real, m.imag

        _walk_products(lengths, thetas, [beta], [n], visit)
        return Accumulator.from_samples(out)

    acc = run_blocks(samples, worker, threads)
    return acc.mean[..., 0] + 1j * acc.mean[..., 1], acc.stderr


# -- polarization degree -------------------------------------------------------


def mc_mean_p2(
    model: FiberModel,
    spec: SpectralDensity,
    ns: Sequence[int],
    samples: int,
    e0=None,
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
):
    """Ensemble mean of the squared polarization degree after each N in
    ``ns``; returns ``(mean, stderr)`` arrays."""
    ns = _checked_ns(ns)
    fields = spec.initial_fields(e0)
    w = spec.weights

    def worker(block):
        lengths, thetas = sample_segments(model, max(max(ns), 1), block)
        out = np.empty((len(block), len(ns)))

        def visit(i, a, b):
            ex = a * fields[:, 0] + b * fields[:, 1]
            ey = -np.conj(b) * fields[:, 0] + np.conj(a) * fields[:, 1]
            j11 = np.abs(ex) ** 2 @ w
            j22 = np.abs(ey) ** 2 @ w
            j12 = (ex * np.conj(ey)) @ w
            tr = j11 + j22
            det = j11 * j22 - np.abs(j12) ** 2
            out[:, i] = np.clip(1.0 - 4.0 * det / (tr * tr), 0.0, 1.0)

        _walk_products(lengths, thetas, spec.grid, ns, visit)
        return Accumulator.from_samples(out)

    acc = run_blocks(samples, worker, threads, block_size)
    return acc.mean, acc.stderr


# -- Haar statistics -----------------------------------------------------------


def haar_moment(k: Sequence[int]) -> float:
    """Moment ``<a^k1 conj(a)^k2 b^k3 conj(b)^k4>`` under the Haar measure."""
    k1, k2, k3, k4 = k
    if k1 != k2 or k3 != k4:
        return 0.0
    return math.factorial(k1) * math.factorial(k3) / math.factorial(k1 + k3 + 1)


def all_moments(max_degree: int = 4) -> list[tuple[int, int, int, int]]:
    return [k for k in product(range(max_degree + 1), repeat=4) if sum(k) <= max_degree]


@dataclass(frozen=True)
class HaarMoment:
    k: tuple[int, int, int, int]
    empirical: complex
    predicted: float
    stderr_re: float
    stderr_im: float

    @property
    def zscore(self) -> float:
        """Largest deviation of the real or imaginary part in standard errors
        (0 when a part is exact and matches, inf when exact and off)."""
        z = 0.0
        for diff, se in (
            (self.empirical.real - self.predicted, self.stderr_re),
            (self.empirical.imag, self.stderr_im),
        ):
            if se > 0:
                z = max(z, abs(diff) / se)
            elif abs(diff) > 1e-12:
                z = math.inf
        return z


@dataclass(frozen=True)
class HaarMomentReport:
    n: int
    samples: int
    rows: list[HaarMoment] = field(default_factory=list)

    def max_zscore(self) -> float:
        return max(r.zscore for r in self.rows)

    def passed(self, sigmas: float = 4.0) -> bool:
        return all(r.zscore <= sigmas for r in self.rows)


def haar_moment_test(
    model: FiberModel,
    beta: float,
    n: int,
    samples: int,
    moments: Iterable[Sequence[int]] | None = None,
    threads: int = 1,
) -> HaarMomentReport:
    """Compare empirical moments of the entries ``(a, b)`` of ``U_N`` with the
    Haar values.  ``n`` should make ``eta1^N`` negligible."""
    moments = [tuple(int(x) for x in k) for k in (moments or all_moments(4))]
    if any(len(k) != 4 or min(k) < 0 for k in moments):
        raise ValueError("moments are 4-tuples of non-negative integers")
    powers = np.array(moments)

    def worker(block):
        lengths, thetas = sample_segments(model, max(n, 1), block)
        out = np.empty((len(block), len(moments), 2))

        def visit(_, a, b):
            a, b = a[:, 0, None], b[:, 0, None]
            val = (
                a ** powers[:, 0] * np.conj(a) ** powers[:, 1]
                * b ** powers[:, 2] * np.conj(b) ** powers[:, 3]
            )
            out[..., 0], out[..., 1] = val.real, val.imag

        _walk_products(lengths, thetas, [beta], [n], visit)
        return Accumulator.from_samples(out)

    acc = run_blocks(samples, worker, threads)
    rows = [
        HaarMoment(
            k,
            complex(acc.mean[i, 0], acc.mean[i, 1]),
            haar_moment(k),
            float(acc.stderr[i, 0]),
            float(acc.stderr[i, 1]),
        )
        for i, k in enumerate(moments)
    ]
    return HaarMomentReport(n, samples, rows)


@dataclass(frozen=True)
class IndependenceReport:
    """``<U_N(b1) sigma_k U_N(b2)^dagger>`` for the four basis matrices."""

    beta1: float
    beta2: float
    n: int
    mean: np.ndarray  # (4, 2, 2) complex
    stderr_re: np.ndarray
    stderr_im: np.ndarray

    @property
    def statistic(self) -> float:
        return float(np.max(np.abs(self.mean)))

    def zscores(self, target=None) -> np.ndarray:
        """Per-entry max(|re|, |im|) deviation from ``target`` in std errors."""
        target = np.zeros_like(self.mean) if target is None else np.asarray(target)
        diff = self.mean - target
        z = np.zeros(self.mean.shape)
        for d, se in ((diff.real, self.stderr_re), (diff.imag, self.stderr_im)):
            with np.errstate(divide="ignore", invalid="ignore"):
                part = np.where(se > 0, np.abs(d) / np.where(se > 0, se, 1.0),
                                np.where(np.abs(d) > 1e-12, np.inf, 0.0))
            z = np.maximum(z, part)
        return z


def independence_test(
    model: FiberModel, beta1: float, beta2: float, n: int, samples: int, threads: int = 1
) -> IndependenceReport:
    def worker(block):
        lengths, thetas = sample_segments(model, max(n, 1), block)
        out = np.empty((len(block), 4, 2, 2, 2))

        def visit(_, a, b):
            u1 = as_matrices(a[:, 0], b[:, 0])
            u2 = as_matrices(a[:, 1], b[:, 1])
            val = np.einsum("sab,kbc,sdc->skad", u1, SIGMA, u2.conj())
            out[..., 0], out[..., 1] = val.real, val.imag

        _walk_products(lengths, thetas, [beta1, beta2], [n], visit)
        return Accumulator.from_samples(out)

    acc = run_blocks(samples, worker, threads)
    mean = acc.mean[..., 0] + 1j * acc.mean[..., 1]
    return IndependenceReport(beta1, beta2, n, mean, acc.stderr[..., 0], acc.stderr[..., 1])


# -- classical coupling parameter ---------------------------------------------


def _coupling_integral(r, beta, z):
    ends = np.minimum(r.boundaries, z)
    starts = np.concatenate([[0.0], r.boundaries[:-1]])
    if beta == 0:
        return complex(np.sum(r.thetas * (ends - starts)))
    # exp(i beta s) integrated over each section, written through the midpoint
    mid = 0.5 * (starts + ends)
    half = 0.5 * (ends - starts)
    seg = np.exp(1j * beta * mid) * 2.0 * np.sin(beta * half) / beta
    return complex(np.sum(r.thetas * seg))


def classical_h_mc(model: FiberModel, beta: float, z: float, samples: int, threads: int = 1):
    """Estimate ``(1/z) <|int_0^z theta(s) exp(i beta s) ds|^2>``; returns
    ``(estimate, stderr)``.  Each section is integrated exactly."""
    if not z > 0:
        raise ValueError("z must be positive")

    def worker(block):
        vals = []
        for s in block:
            r = sample_realization(model, total_length=z, stream=s)
            vals.append(abs(_coupling_integral(r, beta, z)) ** 2 / z)
        return Accumulator.from_samples(np.array(vals))

    acc = run_blocks(samples, worker, threads)
    return float(acc.mean), float(acc.stderr)
