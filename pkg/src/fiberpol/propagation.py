"""Field and coherence evolution along a sampled fiber."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .process import SegmentRealization
from .su2 import (
    RENORM_INTERVAL,
    DomainError,
    FieldVector,
    segment_coefficients,
    su2_multiply,
)

__all__ = [
    "CoherenceMatrix",
    "SpectralDensity",
    "jones_product",
    "propagate_discrete",
    "propagate_continuous",
    "coherence_mono",
    "coherence_poly",
    "polarization_degree",
    "DET_CLAMP",
]

# negative determinants down to -DET_CLAMP are rounding and clamp to zero
DET_CLAMP = 1e-12


@dataclass(frozen=True)
class CoherenceMatrix:
    """Hermitian ``[[j11, j12], [conj(j12), j22]]``."""

    j11: float
    j22: float
    j12: complex

    def __post_init__(self):
        if self.j11 < -DET_CLAMP or self.j22 < -DET_CLAMP:
            raise DomainError("coherence matrix diagonal must be non-negative")
        if self.det < -DET_CLAMP * max(1.0, self.trace**2):
            raise DomainError(f"coherence matrix is not positive semidefinite (det = {self.det:.3g})")

    @classmethod
    def from_matrix(cls, m) -> "CoherenceMatrix":
        m = np.asarray(m, dtype=complex)
        return cls(float(m[0, 0].real), float(m[1, 1].real), complex(m[0, 1]))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.j11, self.j12], [self.j12.conjugate(), self.j22]], dtype=complex)

    @property
    def trace(self) -> float:
        return self.j11 + self.j22

    @property
    def det(self) -> float:
        return self.j11 * self.j22 - abs(self.j12) ** 2


@dataclass(frozen=True)
class SpectralDensity:
    """Spectrum sampled on an ascending beta grid.

    ``values`` are normalized so the trapezoid rule on the grid integrates
    them to 1 and are exposed as ``density``.  A one-point grid is a single
    spectral line of unit power.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.atleast_1d(np.asarray(self.grid, dtype=float))
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if grid.shape != values.shape or grid.ndim != 1 or grid.size == 0:
            raise ValueError("grid and values must be non-empty 1-d arrays of equal length")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("spectral grid must be strictly ascending")
        if np.any(values < 0):
            raise ValueError("spectral density must be non-negative")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def raw_weights(self) -> np.ndarray:
        if self.grid.size == 1:
            return np.ones(1)
        d = np.diff(self.grid)
        w = np.zeros_like(self.grid)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
        return w

    @property
    def total(self) -> float:
        return float(np.sum(self.raw_weights * self.values))

    @property
    def density(self) -> np.ndarray:
        return self.values / self.total

    @property
    def weights(self) -> np.ndarray:
        return self.raw_weights

    @classmethod
    def flat(cls, low: float, high: float, points: int) -> "SpectralDensity":
        return cls(np.linspace(low, high, points), np.ones(points))

    @classmethod
    def line(cls, beta: float) -> "SpectralDensity":
        return cls(np.array([beta]), np.array([1.0]))

    @classmethod
    def from_csv(cls, path) -> "SpectralDensity":
        """Read two columns ``beta, B``; ``#`` comments and a header row are skipped."""
        rows = []
        with open(Path(path), newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError):
                    if rows:
                        raise ValueError(f"{path}:{lineno}: expected 'beta,B', got {row!r}") from None
        if not rows:
            raise ValueError(f"{path}: no spectral samples")
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1])

    def initial_fields(self, e0=None) -> np.ndarray:
        """Input field per grid point, ``(sqrt(density), 0)`` unless ``e0``
        (an array of shape ``(points, 2)``) is given.  Either way the fields
        are scaled so that ``|E0(beta)|^2`` equals the normalized density."""
        dens = self.density
        if e0 is None:
            out = np.zeros((self.grid.size, 2), dtype=complex)
            out[:, 0] = np.sqrt(dens)
            return out
        e0 = np.asarray(e0, dtype=complex).reshape(self.grid.size, 2)
        norms = np.sqrt(np.sum(np.abs(e0) ** 2, axis=1))
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(norms > 0, np.sqrt(dens) / norms, 0.0)
        return e0 * scale[:, None]


def jones_product(r: SegmentRealization, beta, n: int | None = None):
    """First row ``(a, b)`` of ``U_n(beta) = M_n ... M_1``.

    ``beta`` may be an array; the result then broadcasts over it.
    """
    n = len(r) if n is None else n
    beta = np.asarray(beta, dtype=float)
    a = np.ones(beta.shape, dtype=complex)
    b = np.zeros(beta.shape, dtype=complex)
    for k in range(n):
        m0, m1, m3 = segment_coefficients(beta, r.lengths[k], r.thetas[k])
        a, b = su2_multiply(m0 + 1j * m1, m3 + 0j, a, b)
        if (k + 1) % RENORM_INTERVAL == 0:
            s = 1.0 / np.sqrt(np.abs(a) ** 2 + np.abs(b) ** 2)
            a, b = a * s, b * s
    return a, b


def _apply_rows(a, b, e):
    e = np.asarray(e, dtype=complex)
    return np.stack([a * e[..., 0] + b * e[..., 1], -np.conj(b) * e[..., 0] + np.conj(a) * e[..., 1]], axis=-1)


def propagate_discrete(e0: FieldVector, r: SegmentRealization, beta: float) -> FieldVector:
    """Field after all sections of ``r``."""
    if len(r) == 0:
        raise DomainError("realization has no sections")
    a, b = jones_product(r, beta)
    return FieldVector.from_array(_apply_rows(a, b, e0.array))


def _continuous_matrix(r: SegmentRealization, z: float, beta: float):
    if not 0.0 <= z <= r.total_length:
        raise DomainError(f"z = {z} outside [0, {r.total_length}]")
    k = min(r.count_at(z), len(r))  # z at the far end uses the last section
    full = k - 1
    a, b = jones_product(r, beta, full)
    start = float(r.boundaries[full - 1]) if full else 0.0
    rest = z - start
    if rest > 0:
        m0, m1, m3 = segment_coefficients(beta, rest, r.thetas[full])
        a, b = su2_multiply(complex(m0 + 1j * m1), complex(m3), a, b)
    return a, b


def propagate_continuous(e0: FieldVector, r: SegmentRealization, z: float, beta: float) -> FieldVector:
    """Field at an interior point ``z``; the section containing ``z`` is cut
    at ``z``."""
    a, b = _continuous_matrix(r, z, beta)
    return FieldVector.from_array(_apply_rows(a, b, e0.array))


def propagate_between(e1: FieldVector, r: SegmentRealization, z1: float, z2: float, beta: float) -> FieldVector:
    """Carry a field known at ``z1`` on to ``z2 >= z1`` through the same fiber."""
    if not 0.0 <= z1 <= z2 <= r.total_length:
        raise DomainError("need 0 <= z1 <= z2 <= total length")
    e = e1.array
    z = z1
    while z < z2:
        k = min(r.count_at(z), len(r)) - 1
        end = min(float(r.boundaries[k]), z2)
        m0, m1, m3 = segment_coefficients(beta, end - z, r.thetas[k])
        e = _apply_rows(complex(m0 + 1j * m1), complex(m3), e)
        z = end
    return FieldVector.from_array(e)


def coherence_mono(e: FieldVector) -> CoherenceMatrix:
    return CoherenceMatrix(abs(e.ex) ** 2, abs(e.ey) ** 2, e.ex * e.ey.conjugate())


def coherence_poly(spec: SpectralDensity, r: SegmentRealization, n: int, e0=None) -> CoherenceMatrix:
    """Coherence matrix after ``n`` sections, integrated over the spectrum."""
    if n < 0 or n > len(r):
        raise DomainError(f"N must lie in [0, {len(r)}]")
    fields = spec.initial_fields(e0)
    a, b = jones_product(r, spec.grid, n)
    out = _apply_rows(a, b, fields)
    j = np.einsum("k,ka,kb->ab", spec.weights, out, out.conj())
    return CoherenceMatrix.from_matrix(j)


def polarization_degree(j: CoherenceMatrix) -> float:
    """``sqrt(1 - 4 det J / tr^2 J)``, clamped into [0, 1]."""
    tr = j.trace
    if not tr > 0:
        raise DomainError("polarization degree needs a positive trace")
    rad = 1.0 - 4.0 * j.det / (tr * tr)
    if rad < -DET_CLAMP:
        raise DomainError(f"negative radicand {rad:.3g}: J is not positive semidefinite")
    return min(1.0, math.sqrt(max(rad, 0.0)))
