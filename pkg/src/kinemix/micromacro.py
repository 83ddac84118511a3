"""Fluid/kinetic split of a perturbation and the finite-dimensional identities around it.

Fluid coordinates are the components of a field along the orthonormal
invariant basis: rho_i (species mass), q^k (momentum), e (energy).  The
derived quantity ell = (sum n m)^{-1/2} (sum sqrt(n_i) rho_i + 2 sqrt(sum n)/sqrt(6) e)
drives the momentum flux.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from kinemix.mixture import MacroBasis, MixtureParams, VelocityGrid, build_basis


@dataclass(frozen=True)
class FluidState:
    """Fluid coordinates, optionally batched: rho (..., I), q (..., 3), e (...), ell (...)."""

    rho: np.ndarray
    q: np.ndarray
    e: np.ndarray
    ell: np.ndarray

    @classmethod
    def build(cls, rho, q, e, params: MixtureParams) -> "FluidState":
        rho = np.asarray(rho, dtype=float)
        q = np.asarray(q, dtype=float)
        e = np.asarray(e, dtype=float)
        if rho.shape[-1] != params.I or q.shape[-1] != 3:
            raise ValueError("rho must end in I entries and q in 3")
        return cls(rho, q, e, ell_of(rho, e, params))

    @classmethod
    def from_coords(cls, c, params: MixtureParams) -> "FluidState":
        c = np.asarray(c, dtype=float)
        I = params.I
        if c.shape[-1] != I + 4:
            raise ValueError(f"expected {I + 4} coordinates, got {c.shape[-1]}")
        return cls.build(c[..., :I], c[..., I:I + 3], c[..., I + 3], params)

    @property
    def coords(self) -> np.ndarray:
        return np.concatenate([self.rho, self.q, np.asarray(self.e)[..., None]], axis=-1)

    def squared_norm(self) -> np.ndarray:
        return np.sum(self.coords ** 2, axis=-1)


def ell_of(rho, e, params: MixtureParams):
    rho = np.asarray(rho, dtype=float)
    return (rho @ np.sqrt(params.n) + 2 * math.sqrt(params.total_n) / math.sqrt(6) * np.asarray(e)) \
        / math.sqrt(params.total_nm)


@dataclass(frozen=True)
class DecompositionResult:
    f0: np.ndarray
    f1: np.ndarray
    fluid: FluidState


class Projector:
    """Orthogonal projection onto the invariant span of a basis.

    On a finite grid the basis is orthonormal only to quadrature accuracy,
    so the projector uses the Gram inverse; fluid coordinates stay the plain
    inner products with the basis vectors.
    """

    def __init__(self, basis: MacroBasis):
        self.basis = basis
        self.gram = basis.gram()
        self._ginv = np.linalg.inv(self.gram)

    def coords(self, f) -> np.ndarray:
        return self.basis.coords(f)

    def P0(self, f) -> np.ndarray:
        return self.basis.combine(self.coords(f) @ self._ginv)

    def P1(self, f) -> np.ndarray:
        return np.asarray(f) - self.P0(f)


def project_P0(f, basis: MacroBasis, projector: Projector | None = None) -> DecompositionResult:
    """Split f = f0 + f1 with f0 in the invariant span and f1 orthogonal to it."""
    f = np.asarray(f, dtype=float)
    if f.shape[-2:] != basis.chi.shape[1:]:
        raise ValueError(f"field shape {f.shape} does not match basis {basis.chi.shape[1:]}")
    proj = projector or Projector(basis)
    c = proj.coords(f)
    f0 = basis.combine(c @ proj._ginv)
    return DecompositionResult(f0, f - f0, FluidState.from_coords(c, basis.params))


def reconstruct(fluid: FluidState, basis: MacroBasis) -> np.ndarray:
    """sum_i rho_i chi^i + sum_k q^k chi^{I+k} + e chi^{I+4}."""
    return basis.combine(fluid.coords)


# ------------------------------------------------------------ closed forms


def _rho_e_combo(grad: FluidState, params: MixtureParams):
    return grad.rho + 2 * np.sqrt(params.n) / math.sqrt(6 * params.total_n) * np.asarray(grad.e)[..., None]


def norm_v1_f0_sq(grad: FluidState, params: MixtureParams):
    """||v1 d_x f0||_I^2 as a sum of squares of the gradient coordinates."""
    n, m = params.n, params.m
    sn, snm = params.total_n, params.total_nm
    e = np.asarray(grad.e)
    q = grad.q
    t1 = np.sum(_rho_e_combo(grad, params) ** 2 / m, axis=-1)
    t2 = 5 / 3 / sn * np.sum(n / m) * e ** 2
    t3 = sn / snm * (3 * q[..., 0] ** 2 + q[..., 1] ** 2 + q[..., 2] ** 2)
    return t1 + t2 + t3


def norm_P0_v1_f0_sq(grad: FluidState, params: MixtureParams):
    """||P0(v1 d_x f0)||_I^2 = (d_x ell)^2 + (5/3)(sum n / sum nm)(d_x q^1)^2."""
    return grad.ell ** 2 + 5 / 3 * params.total_n / params.total_nm * grad.q[..., 0] ** 2


def flux_matrix(params: MixtureParams) -> np.ndarray:
    """A with P0(v1 d_x f0) = sum_k (A d_x c)_k chi^k for fluid coordinates c.

    A_kl = <chi^k, v1 chi^l>_I.  Its only nonzero entries couple q^1 to the
    rho_i and e; it is symmetric.
    """
    I = params.I
    A = np.zeros((I + 4, I + 4))
    snm = params.total_nm
    A[:I, I] = np.sqrt(params.n) / math.sqrt(snm)
    A[I + 3, I] = math.sqrt(6 * params.total_n / snm) / 3
    A[I, :] = A[:, I]
    return A


def sound_speed(params: MixtureParams) -> float:
    """Nonzero eigenvalue magnitude of the flux matrix: sqrt(5 sum n / (3 sum nm))."""
    return math.sqrt(5 * params.total_n / (3 * params.total_nm))


def theta0(params: MixtureParams) -> float:
    n, m = params.n, params.m
    val = n.sum() / (3 * np.sum(n * m) + 6 * np.sum(n ** 1.5) + 4 * n.sum())
    return float(min(1.0, val))


def lemma44_pointwise(grad: FluidState, theta: float, params: MixtureParams):
    """Both sides of the theta-split lower bound for ||P1(v1 d_x f0)||_I^2."""
    th0 = theta0(params)
    if not 0 < theta < th0:
        raise ValueError(f"theta must lie in (0, {th0}), got {theta}")
    lhs = norm_v1_f0_sq(grad, params) - norm_P0_v1_f0_sq(grad, params)
    n, m = params.n, params.m
    sn, snm = params.total_n, params.total_nm
    q = grad.q
    e = np.asarray(grad.e)
    rhs = (theta * np.sum(_rho_e_combo(grad, params) ** 2 / m, axis=-1)
           + 5 / 3 / sn * np.sum(n / m) * e ** 2
           + sn / snm * (4 / 3 * q[..., 0] ** 2 + q[..., 1] ** 2 + q[..., 2] ** 2)
           - theta * grad.ell ** 2)
    return lhs, rhs


def G_matrix(theta: float, params: MixtureParams) -> np.ndarray:
    """Symmetric matrix of the quadratic form G in coordinates (rho, q, e)."""
    I = params.I
    n, m = params.n, params.m
    sn, snm = params.total_n, params.total_nm
    c = 2 * np.sqrt(n) / math.sqrt(6 * sn)
    # theta sum_i (1/m_i)(rho_i + c_i e)^2 = theta * u^T diag(1/m) u with u = rho + c e
    T = np.zeros((I, I + 4))
    T[:, :I] = np.eye(I)
    T[:, I + 3] = c
    Gm = theta * T.T @ np.diag(1 / m) @ T
    Gm[I + 3, I + 3] += 5 / 3 / sn * np.sum(n / m)
    for k in range(3):
        Gm[I + k, I + k] += sn / snm
    return Gm


def quadratic_form_G(s: FluidState, theta: float, params: MixtureParams):
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    c = s.coords
    return np.einsum("...k,kl,...l->...", c, G_matrix(theta, params), c)


def min_eig_G(theta: float, params: MixtureParams) -> float:
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    return float(np.linalg.eigvalsh(G_matrix(theta, params))[0])


# --------------------------------------------------------- norm constants


def _generalized_max(A: np.ndarray, B: np.ndarray) -> float:
    return float(sla.eigh(A, B, eigvals_only=True)[-1])


def C_chi(basis: MacroBasis) -> float:
    """Smallest C with ||P0(v1 f)||_I^2 <= C ||f||_I^2 for all f.

    ||P0(v1 f)||^2 = c^T Gram^{-1} c with c_k = <v1 chi^k, f>, so C is the top
    eigenvalue of the Gram matrix of {v1 chi^k} relative to the basis Gram.
    """
    w = basis.grid.w
    C = basis.chi.reshape(basis.K, -1)
    V = (basis.chi * basis.grid.v1[None, None, :]).reshape(basis.K, -1)
    return _generalized_max(V @ V.T * w, C @ C.T * w)


def C_ker(basis: MacroBasis) -> float:
    """Smallest C with ||v1 g|| <= C||g|| and ||(1+|v|)^{1/2} g|| <= C||g|| on the span."""
    w = basis.grid.w
    C = basis.chi.reshape(basis.K, -1)
    B = C @ C.T * w
    v1 = np.tile(basis.grid.v1, basis.chi.shape[1])
    sp = np.tile(1 + basis.grid.speed, basis.chi.shape[1])
    A1 = (C * v1 ** 2) @ C.T * w
    A2 = (C * sp) @ C.T * w
    return math.sqrt(max(_generalized_max(A1, B), _generalized_max(A2, B)))


def ell_direction(params: MixtureParams, basis: MacroBasis) -> np.ndarray:
    """The field phi with ell = <phi, f> for any f."""
    I = params.I
    coef = np.zeros(I + 4)
    coef[:I] = np.sqrt(params.n)
    coef[I + 3] = 2 * math.sqrt(params.total_n) / math.sqrt(6)
    return basis.combine(coef / math.sqrt(params.total_nm))


def K_chi(params: MixtureParams, basis: MacroBasis, projector: Projector | None = None) -> float:
    """Squared norm of g -> <v1 g, phi> restricted to g orthogonal to the span.

    This is the bracket that the kinetic part contributes to the ell law;
    its norm squared is ||P1(v1 phi)||_I^2.
    """
    proj = projector or Projector(basis)
    phi = ell_direction(params, basis)
    r = proj.P1(basis.grid.v1[None, :] * phi)
    return float(np.sum(r * r) * basis.grid.w)


def default_basis(params: MixtureParams, grid: VelocityGrid | None = None) -> MacroBasis:
    return build_basis(params, grid or VelocityGrid.default(params))
