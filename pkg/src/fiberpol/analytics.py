"""Closed-form and quadrature predictions for the random-twist fiber.

All averages go through :func:`fiberpol.process.expect`.  Conventions:

* ``eta1`` is the per-section decay factor of the diagonal coherence
  imbalance, ``1 - 2 <m3^2>``.
* ``mean_operator_16`` is the average of ``R(M_b1) (x) R(M_b2)`` acting on
  Hermitian tensors ``J(b1) (x) J(b2)``, written in the product basis
  ``s_i (x) s_j`` with flat index ``4 i + j``.
* ``f_beta`` is the curvature ``d^2/d delta^2`` of ``-ln eta1(b + delta/2,
  b - delta/2)`` at ``delta = 0``, i.e. the exponent of the decorrelation
  ``eta1^N ~ exp(-N f delta^2 / 2)`` between nearby frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .process import FiberModel, expect
from .propagation import CoherenceMatrix, SpectralDensity
from .su2 import (
    DomainError,
    as_matrices,
    conjugation_rep,
    segment_coefficients,
    segment_coefficients_dbeta,
)

__all__ = [
    "HypothesisError",
    "DegenerateModelError",
    "MeanSegmentOperator",
    "MeanOperator16",
    "AsymptoticReport",
    "h_new",
    "h_classical",
    "eta1",
    "diag_prediction",
    "mean_segment_operator",
    "conjugation_operator",
    "mean_operator_16",
    "eta1_pair",
    "f_beta",
    "f_beta_numeric",
    "p2_asymptotic",
    "p2_exact",
    "EPS0",
    "EPS1",
    "DELTA",
    "TRACE_TENSOR",
]


class HypothesisError(ValueError):
    """A model violates the hypothesis a prediction is derived under."""


class DegenerateModelError(ValueError):
    """The model makes a closed-form prediction singular."""


def _unit(i, j):
    v = np.zeros(16)
    v[4 * i + j] = 1.0
    return v


EPS0 = _unit(0, 0)
EPS1 = _unit(1, 1) + _unit(2, 2) + _unit(3, 3)
TRACE_TENSOR = EPS0 + EPS1  # (A (x) B, T) = tr(A B)
DELTA = 0.5 * (EPS0 - EPS1)  # (A (x) A, DELTA) = det A
# orthonormal basis of the antisymmetric part of H3 (x) H3
_PHI = np.array(
    [
        (_unit(1, 2) - _unit(2, 1)) / math.sqrt(2.0),
        (_unit(2, 3) - _unit(3, 2)) / math.sqrt(2.0),
        (_unit(3, 1) - _unit(1, 3)) / math.sqrt(2.0),
    ]
)


def hermitian_to_vector(a) -> np.ndarray:
    """Coordinates of a Hermitian matrix in the orthonormal basis ``s_j``."""
    from .su2 import PAULI

    return np.einsum("jab,ba->j", PAULI, np.asarray(a, dtype=complex)).real


def tensor_vector(a, b) -> np.ndarray:
    return np.kron(hermitian_to_vector(a), hermitian_to_vector(b))


def _require_symmetric(model: FiberModel, what: str):
    if model.twist.has_regular_twist:
        raise HypothesisError(f"{what} assumes a twist law symmetric about zero")


# -- section coefficient averages ----------------------------------------------


def _m3_squared(beta):
    def f(l, t):
        return segment_coefficients(beta, l, t)[2] ** 2

    return f


def eta1(model: FiberModel, beta: float) -> float:
    """``1 - 2 <m3^2>``; may be <= 0 for strong coupling."""
    _require_symmetric(model, "eta1")
    return 1.0 - 2.0 * float(expect(model, _m3_squared(beta)))


def h_new(model: FiberModel, beta: float) -> float:
    """Mode-coupling rate per unit length, ``-ln(eta1) / (2 <l>)``."""
    e = eta1(model, beta)
    if e <= 0.0:
        raise HypothesisError(
            f"2<m3^2> = {1.0 - e:.6g} >= 1: the imbalance oscillates and has no h-parameter"
        )
    return -math.log(e) / (2.0 * model.mean_length)


def h_classical(model: FiberModel, beta: float) -> float:
    """``4 <theta^2> <sin^2(l beta / 2)> / (beta^2 <l>)``."""
    if beta == 0:
        raise DomainError("the classical h-parameter is undefined at beta = 0")
    th2 = float(expect(model, lambda l, t: np.full_like(l, t * t)))
    s2 = float(expect(model, lambda l, t: np.sin(0.5 * l * beta) ** 2))
    return 4.0 * th2 * s2 / (beta * beta * model.mean_length)


def diag_prediction(j0: CoherenceMatrix, eta: float, n: int) -> tuple[float, float]:
    """Mean diagonal of the coherence matrix after ``n`` sections."""
    tr = j0.trace
    if not tr > 0:
        raise DomainError("initial coherence matrix must have positive trace")
    decay = (j0.j11 - j0.j22) * eta**n
    return 0.5 * (tr + decay), 0.5 * (tr - decay)


# -- mean operators ------------------------------------------------------------


def _section_matrices(beta, l, t):
    m0, m1, m3 = segment_coefficients(beta, l, t)
    return as_matrices(m0 + 1j * m1, m3)


def _section_matrices_dbeta(beta, l, t):
    d0, d1, d3 = segment_coefficients_dbeta(beta, l, t)
    d = np.empty(np.shape(d0) + (2, 2), dtype=complex)
    d[..., 0, 0] = d0 + 1j * d1
    d[..., 0, 1] = d3
    d[..., 1, 0] = -d3
    d[..., 1, 1] = d0 - 1j * d1
    return d


@dataclass(frozen=True)
class MeanSegmentOperator:
    s: np.ndarray
    projector: np.ndarray
    spectral_radius: float
    gap_radius: float

    def power(self, n: int) -> np.ndarray:
        return np.linalg.matrix_power(self.s, n)


def _common_kernel_projector(model: FiberModel, beta: float) -> np.ndarray:
    # X = (i beta/2) sigma1 + theta [[0,1],[-1,0]] has a common null vector
    # only if beta = 0 and the twist vanishes identically
    atoms = model.twist.atoms()
    if beta == 0 and atoms is not None and np.all(atoms[0] == 0):
        return np.eye(2, dtype=complex)
    return np.zeros((2, 2), dtype=complex)


def mean_segment_operator(model: FiberModel, beta: float) -> MeanSegmentOperator:
    """``S = <M_beta(l, theta)>``, so that ``<U_N> = S^N``."""
    s = expect(model, lambda l, t: _section_matrices(beta, l, t))
    p0 = _common_kernel_projector(model, beta)
    rho = float(np.max(np.abs(np.linalg.eigvals(s))))
    rest = s @ (np.eye(2) - p0)
    gap = float(np.max(np.abs(np.linalg.eigvals(rest))))
    return MeanSegmentOperator(s, p0, rho, gap)


def conjugation_operator(model: FiberModel, beta: float) -> np.ndarray:
    """Real 4x4 average of ``A -> M A M^dagger`` in the basis ``s_j``."""
    return expect(model, lambda l, t: conjugation_rep(_section_matrices(beta, l, t)))


@dataclass(frozen=True)
class MeanOperator16:
    matrix: np.ndarray
    beta1: float
    beta2: float

    def apply(self, vec, n: int = 1) -> np.ndarray:
        out = np.asarray(vec, dtype=float)
        for _ in range(n):
            out = self.matrix @ out
        return out

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)

    def operator_norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def tracked_eigenvalue(self, reference=None) -> complex:
        """Eigenvalue whose eigenvector overlaps ``reference`` the most
        (default ``EPS1 / sqrt(3)``), avoiding ordering swaps near crossings."""
        ref = EPS1 / math.sqrt(3.0) if reference is None else np.asarray(reference)
        w, v = np.linalg.eig(self.matrix)
        overlap = np.abs(v.conj().T @ ref) / np.linalg.norm(v, axis=0)
        return complex(w[int(np.argmax(overlap))])


def _pair_rep(beta1, beta2, l, t):
    a = conjugation_rep(_section_matrices(beta1, l, t))
    b = conjugation_rep(_section_matrices(beta2, l, t))
    return np.einsum("nij,nkl->nikjl", a, b).reshape(len(l), 16, 16)


def mean_operator_16(model: FiberModel, beta1: float, beta2: float) -> MeanOperator16:
    m = expect(model, lambda l, t: _pair_rep(beta1, beta2, l, t))
    return MeanOperator16(np.asarray(m), beta1, beta2)


def eta1_pair(model: FiberModel, beta1: float, beta2: float) -> float:
    """Eigenvalue continued from ``eta1(b, b) = 1`` along the ``EPS1`` branch."""
    return mean_operator_16(model, beta1, beta2).tracked_eigenvalue().real


# -- curvature f(beta) ---------------------------------------------------------


def _f_terms(beta):
    def f(l, t):
        m0, m1, m3 = segment_coefficients(beta, l, t)
        d0, d1, d3 = segment_coefficients_dbeta(beta, l, t)
        return np.stack([d0 * d0 + d1 * d1 + d3 * d3, d1 * m0 - m1 * d0, m3 * m3], axis=-1)

    return f


def _f_symmetric(model: FiberModel, beta: float) -> float:
    grad2, d10, m33 = expect(model, _f_terms(beta))
    if m33 <= 0.0:
        raise DegenerateModelError("<m3^2> = 0: frequencies never decorrelate")
    return 8.0 / 3.0 * (grad2 + d10 * d10 / m33)


def _rep_dbeta(m, dm):
    """d/dbeta of conjugation_rep(M) given M and dM/dbeta."""
    from .su2 import PAULI

    r = np.einsum("...ab,ibc,...dc,kda->...ki", dm, PAULI, m.conj(), PAULI)
    return 2.0 * r.real


def _f_general(model: FiberModel, beta: float) -> float:
    # second-order perturbation of the EPS1 eigenvalue of
    # L(b + d/2, b - d/2); the first-order shift vanishes and the
    # first-order eigenvector correction lives in the 3-dim antisymmetric block
    def f(l, t):
        m = _section_matrices(beta, l, t)
        dm = _section_matrices_dbeta(beta, l, t)
        r = conjugation_rep(m)
        dr = _rep_dbeta(m, dm)
        n = len(l)
        rr = np.einsum("nij,nkl->nikjl", r, r).reshape(n, 16, 16)
        d1 = 0.5 * (
            np.einsum("nij,nkl->nikjl", dr, r) - np.einsum("nij,nkl->nikjl", r, dr)
        ).reshape(n, 16, 16)
        dd = np.einsum("nij,nkl->nikjl", dr, dr).reshape(n, 16, 16)
        return np.stack([rr, d1, dd], axis=1)

    ops = expect(model, f)
    lmat, dl = ops[0], ops[1]
    e = EPS1 / math.sqrt(3.0)
    # R(x) (x) R(x) fixes EPS1 for every x, so (R''(x)R + R(x)R'') EPS1 =
    # -2 (R'(x)R') EPS1 and the second derivative in delta reduces to -<R'(x)R'>
    e_l2_e = -float(e @ ops[2] @ e)
    rhs = _PHI @ (dl @ e)
    smat = _PHI @ (np.eye(16) - lmat) @ _PHI.T
    v = np.linalg.solve(smat, rhs)
    second = 2.0 * float((e @ dl @ _PHI.T) @ v)
    eta2 = e_l2_e + second
    return -eta2


def f_beta(model: FiberModel, beta: float, general: bool = False) -> float:
    """Curvature of the frequency decorrelation exponent at ``beta``.

    The default path is the closed form for a symmetric twist law,
    ``8/3 (sum_k <(dm_k/dbeta)^2> + d10^2 / <m3^2>)`` with
    ``d10 = <dm1/dbeta m0 - m1 dm0/dbeta>``.  ``general=True`` solves the
    first-order eigenvector equation numerically and also covers twist laws
    with a nonzero mean.
    """
    if general:
        return _f_general(model, beta)
    _require_symmetric(model, "the closed-form f(beta)")
    return _f_symmetric(model, beta)


def f_beta_numeric(model: FiberModel, beta: float, step: float = 1e-3) -> float:
    """Independent estimate of ``f_beta`` from eigenvalues of the 16x16 mean
    operator: central second difference of ``-ln eta1`` in
    ``delta = beta1 - beta2`` with two Richardson levels."""

    def g(d):
        return -math.log(eta1_pair(model, beta + 0.5 * d, beta - 0.5 * d))

    g0 = g(0.0)

    def second(h):
        return (g(h) - 2.0 * g0 + g(-h)) / (h * h)

    d1, d2, d4 = second(step), second(0.5 * step), second(0.25 * step)
    r1, r2 = (4.0 * d2 - d1) / 3.0, (4.0 * d4 - d2) / 3.0
    return (16.0 * r2 - r1) / 15.0


# -- polarization degree asymptotics ------------------------------------------


@dataclass(frozen=True)
class AsymptoticReport:
    n: int
    grid: np.ndarray
    f: np.ndarray
    integral: float
    leading: float
    note: str = "leading term only; error O(N^-3/2) plus exponentially small transients"

    def at(self, n: int) -> float:
        """Leading term rescaled to another section count."""
        return self.leading * math.sqrt(self.n / n)


def p2_asymptotic(model: FiberModel, spec: SpectralDensity, n: int, prefactor: float = 1.0) -> AsymptoticReport:
    """Leading large-N term ``c sqrt(2 pi / N) int Bn^2 / sqrt(f) dbeta``.

    ``Bn`` is the spectral density normalized to unit integral on the
    spectrum's trapezoid grid.  The default ``prefactor`` 1 is the value
    that follows from the tracked-eigenvalue expansion and agrees with
    :func:`p2_exact`; other coefficients can be passed for comparison.
    """
    if n < 1:
        raise DomainError("N must be >= 1")
    if len(spec.grid) < 2:
        raise DomainError("the asymptotic law needs a spectrum with a continuous grid")
    fs = np.array([f_beta(model, float(b)) for b in spec.grid])
    bad = spec.grid[fs <= 0]
    if bad.size:
        raise DegenerateModelError(f"f(beta) <= 0 at beta = {bad[0]:.6g}")
    density = spec.density
    integral = float(np.sum(spec.weights * density * density / np.sqrt(fs)))
    lead = prefactor * math.sqrt(2.0 * math.pi / n) * integral
    return AsymptoticReport(n, spec.grid.copy(), fs, integral, lead)


def p2_exact(model: FiberModel, spec: SpectralDensity, ns, e0=None) -> np.ndarray:
    """Ensemble mean of p^2 after each N in ``ns``, from the 16x16 mean
    operators of every frequency pair (no sampling).

    ``<p^2_N> = 1 - 4 <det J_N>`` with ``<det J_N> = sum_ij w_i w_j
    (L(b_i, b_j)^N F_0(b_i, b_j), DELTA)``.
    """
    ns = np.atleast_1d(np.asarray(ns, dtype=int))
    grid, w = spec.grid, spec.weights
    fields = spec.initial_fields(e0)
    dets = np.zeros(len(ns))
    k = len(grid)
    for i in range(k):
        for j in range(i, k):
            op = mean_operator_16(model, float(grid[i]), float(grid[j])).matrix
            ei, ej = fields[i], fields[j]
            f0 = tensor_vector(np.outer(ei, ei.conj()), np.outer(ej, ej.conj()))
            mult = 1.0 if i == j else 2.0
            vec = f0
            done = 0
            for idx in np.argsort(ns):
                vec = np.linalg.matrix_power(op, int(ns[idx]) - done) @ vec
                done = int(ns[idx])
                dets[idx] += mult * w[i] * w[j] * float(vec @ DELTA)
    total = float(np.sum(w * np.einsum("ka,ka->k", fields, fields.conj()).real))
    return 1.0 - 4.0 * dets / total**2
