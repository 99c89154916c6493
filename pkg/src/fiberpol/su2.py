"""Exact 2x2 / SU(2) algebra for twisted-fiber Jones calculus.

A fiber section of length ``l`` whose anisotropy axes rotate at rate ``theta``
has the Jones matrix ``exp(l X)`` with generator

    X = [[ i beta/2,  theta   ],
         [ -theta,   -i beta/2 ]]

Every SU(2) element is stored by its first row ``(a, b)``; the full matrix is
``[[a, b], [-conj(b), conj(a)]]``.  Segment matrices have the real
coefficients ``m0, m1, m3`` with ``a = m0 + i m1`` and ``b = m3``.

Pauli labelling
---------------
The Hermitian basis follows the fiber-optics convention used throughout this
package, which is *not* the physics one::

    sigma0 = [[1, 0], [0, 1]]     sigma1 = [[1, 0], [0, -1]]
    sigma2 = [[0, 1], [1, 0]]     sigma3 = [[0, i], [-i, 0]]

``s_j = sigma_j / sqrt(2)`` is orthonormal under ``(A, B) = tr(A B)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SIGMA",
    "PAULI",
    "DomainError",
    "FieldVector",
    "JonesMatrix",
    "SegmentParams",
    "segment_coefficients",
    "segment_coefficients_dbeta",
    "segment_matrix",
    "segment_matrix_dbeta",
    "compose",
    "apply",
    "su2_multiply",
    "conjugation_rep",
    "RENORM_INTERVAL",
]

SIGMA = np.array(
    [
        [[1, 0], [0, 1]],
        [[1, 0], [0, -1]],
        [[0, 1], [1, 0]],
        [[0, 1j], [-1j, 0]],
    ],
    dtype=complex,
)
PAULI = SIGMA / math.sqrt(2.0)

# long products are rescaled onto the unit sphere this often
RENORM_INTERVAL = 64
_DRIFT_TOL = 1e-14
_SERIES_S = 1e-6
_SERIES_T = 1e-2


class DomainError(ValueError):
    """Input outside the domain of a model operation."""


# -- scalar kernels -----------------------------------------------------------


def _sinc(x):
    """sin(x)/x, series near zero."""
    x = np.asarray(x, dtype=float)
    x2 = x * x
    small = np.abs(x) < _SERIES_S
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(small, 1.0, np.sin(x) / np.where(small, 1.0, x))
    return np.where(small, 1.0 - x2 / 6.0 + x2 * x2 / 120.0, out)


def _dsinc_over_x(x):
    """(d/dx sinc(x)) / x = (x cos x - sin x) / x**3, series near zero."""
    x = np.asarray(x, dtype=float)
    x2 = x * x
    small = np.abs(x) < _SERIES_T
    xs = np.where(small, 1.0, x)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (xs * np.cos(xs) - np.sin(xs)) / xs**3
    series = -1.0 / 3.0 + x2 / 30.0 - x2 * x2 / 840.0 + x2**3 / 45360.0
    return np.where(small, series, out)


def _check_finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise DomainError("segment parameters must be finite")


def segment_coefficients(beta, l, theta):
    """Return ``(m0, m1, m3)`` of the section matrix; broadcasts over arrays.

    m0 = cos(l bt/2), m1 = (beta/bt) sin(l bt/2), m3 = (2 theta/bt) sin(l bt/2)
    with bt = sqrt(beta**2 + 4 theta**2).  Written through sinc so that
    bt -> 0 is regular.
    """
    beta, l, theta = np.broadcast_arrays(
        np.asarray(beta, float), np.asarray(l, float), np.asarray(theta, float)
    )
    _check_finite(beta, l, theta)
    x = 0.5 * l * np.sqrt(beta * beta + 4.0 * theta * theta)
    s = _sinc(x)
    return np.cos(x), 0.5 * l * beta * s, l * theta * s


def segment_coefficients_dbeta(beta, l, theta):
    """Return ``(dm0, dm1, dm3)``, the beta-derivatives of the coefficients."""
    beta, l, theta = np.broadcast_arrays(
        np.asarray(beta, float), np.asarray(l, float), np.asarray(theta, float)
    )
    _check_finite(beta, l, theta)
    x = 0.5 * l * np.sqrt(beta * beta + 4.0 * theta * theta)
    s = _sinc(x)
    t = _dsinc_over_x(x)
    l2 = l * l
    dm0 = -0.25 * beta * l2 * s
    dm1 = 0.5 * l * s + 0.125 * beta * beta * l2 * l * t
    dm3 = 0.25 * theta * beta * l2 * l * t
    return dm0, dm1, dm3


# -- value types ---------------------------------------------------------------


@dataclass(frozen=True)
class SegmentParams:
    beta: float
    l: float
    theta: float

    def __post_init__(self):
        _check_finite(self.beta, self.l, self.theta)
        if self.l <= 0:
            raise DomainError(f"segment length must be positive, got {self.l}")

    @property
    def beta_theta(self) -> float:
        return math.hypot(self.beta, 2.0 * self.theta)


@dataclass(frozen=True)
class FieldVector:
    """Complex amplitudes of the two polarization components."""

    ex: complex
    ey: complex

    @classmethod
    def from_array(cls, v) -> "FieldVector":
        v = np.asarray(v, dtype=complex)
        return cls(complex(v[0]), complex(v[1]))

    @property
    def array(self) -> np.ndarray:
        return np.array([self.ex, self.ey], dtype=complex)

    @property
    def norm2(self) -> float:
        return abs(self.ex) ** 2 + abs(self.ey) ** 2

    @property
    def norm(self) -> float:
        return math.sqrt(self.norm2)


@dataclass(frozen=True)
class JonesMatrix:
    """SU(2) element ``[[a, b], [-conj(b), conj(a)]]``."""

    a: complex
    b: complex

    def __post_init__(self):
        drift = abs(abs(self.a) ** 2 + abs(self.b) ** 2 - 1.0)
        if not drift <= 1e-10:
            raise DomainError(f"|a|^2 + |b|^2 deviates from 1 by {drift:.3g}")

    @classmethod
    def identity(cls) -> "JonesMatrix":
        return cls(1.0 + 0j, 0j)

    @classmethod
    def from_matrix(cls, m) -> "JonesMatrix":
        m = np.asarray(m, dtype=complex)
        return cls(complex(m[0, 0]), complex(m[0, 1]))

    @property
    def matrix(self) -> np.ndarray:
        a, b = self.a, self.b
        return np.array([[a, b], [-b.conjugate(), a.conjugate()]], dtype=complex)

    @property
    def det(self) -> float:
        return abs(self.a) ** 2 + abs(self.b) ** 2

    def adjoint(self) -> "JonesMatrix":
        return JonesMatrix(self.a.conjugate(), -self.b)

    def __matmul__(self, other: "JonesMatrix") -> "JonesMatrix":
        return compose(self, other)


def segment_matrix(p: SegmentParams) -> JonesMatrix:
    m0, m1, m3 = segment_coefficients(p.beta, p.l, p.theta)
    return JonesMatrix(complex(m0, m1), complex(m3))


def segment_matrix_dbeta(p: SegmentParams) -> np.ndarray:
    """Analytic d/dbeta of the section Jones matrix (a plain 2x2 array)."""
    d0, d1, d3 = (float(v) for v in segment_coefficients_dbeta(p.beta, p.l, p.theta))
    return np.array([[d0 + 1j * d1, d3], [-d3, d0 - 1j * d1]], dtype=complex)


def su2_multiply(a2, b2, a1, b1):
    """First row of the product ``M2 @ M1``; broadcasts over arrays."""
    return a2 * a1 - b2 * np.conj(b1), a2 * b1 + b2 * np.conj(a1)


def compose(m2: JonesMatrix, m1: JonesMatrix) -> JonesMatrix:
    """``m2 @ m1`` (m1 acts first)."""
    a, b = su2_multiply(m2.a, m2.b, m1.a, m1.b)
    n2 = abs(a) ** 2 + abs(b) ** 2
    if abs(n2 - 1.0) > _DRIFT_TOL:
        s = 1.0 / math.sqrt(n2)
        a, b = a * s, b * s
    return JonesMatrix(complex(a), complex(b))


def apply(m: JonesMatrix, v: FieldVector) -> FieldVector:
    return FieldVector(
        m.a * v.ex + m.b * v.ey,
        -m.b.conjugate() * v.ex + m.a.conjugate() * v.ey,
    )


def as_matrices(a, b) -> np.ndarray:
    """Stack first rows ``(a, b)`` into full ``(..., 2, 2)`` SU(2) matrices."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    out = np.empty(np.broadcast(a, b).shape + (2, 2), dtype=complex)
    out[..., 0, 0] = a
    out[..., 0, 1] = b
    out[..., 1, 0] = -np.conj(b)
    out[..., 1, 1] = np.conj(a)
    return out


def conjugation_rep(m) -> np.ndarray:
    """Real matrix of ``A -> M A M^dagger`` in the orthonormal basis ``s_j``.

    ``m`` is a ``(..., 2, 2)`` complex array; entry ``[k, i]`` of the result is
    ``tr(M s_i M^dagger s_k)``.
    """
    m = np.asarray(m, dtype=complex)
    r = np.einsum("...ab,ibc,...dc,kda->...ki", m, PAULI, m.conj(), PAULI)
    return r.real
