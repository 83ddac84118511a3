"""Hard-sphere collisions on a discrete velocity grid.

The gain term is built from exact on-grid collisions.  For a species pair
(i, j) with integer mass weights (mu_i, mu_j), node pairs (a, b) are
grouped by the integer keys (mu_i J_a + mu_j J_b, mu_i |J_a|^2 + mu_j |J_b|^2),
i.e. by total momentum and energy.  Every member of a class is a valid
post-collision pair for every other member and all members share |v_a - v_b|.
Each pair scatters uniformly over its class with total rate
2 pi beta_ij |v_a - v_b| h^3, which is the isotropic hard-sphere rate
integrated over the sphere.  Consequences used throughout the package:

* mass, momentum and energy are conserved to rounding;
* products of Maxwellians are constant on classes, so Q(nM, nM) = 0 and
  the kernel of the linearized operator is exactly the invariant span;
* the loss term equals the quadrature collision frequency node by node;
* entropy production is a sum of terms (x - x')(log x - log x') >= 0.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from kinemix import _kernels
from kinemix.mixture import (
    MacroBasis,
    MixtureParams,
    VelocityGrid,
    equilibrium_root,
    maxwellian,
)

log = logging.getLogger(__name__)

TENSOR_CACHE_VERSION = 1


@dataclass(frozen=True)
class AngularQuadrature:
    """Directions on the unit sphere with weights summing to 4 pi."""

    directions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if d.ndim != 2 or d.shape[1] != 3 or w.shape != (d.shape[0],):
            raise ValueError("directions must be (k, 3) with k weights")
        if np.any(np.abs(np.linalg.norm(d, axis=1) - 1) > 1e-12):
            raise ValueError("directions must be unit vectors")
        if np.any(w <= 0) or abs(w.sum() - 4 * np.pi) > 1e-12:
            raise ValueError("weights must be positive and sum to 4 pi")
        # symmetric under omega -> -omega with equal weights
        for k in range(d.shape[0]):
            hit = np.flatnonzero(np.all(np.abs(d + d[k]) < 1e-12, axis=1))
            if hit.size != 1 or abs(w[hit[0]] - w[k]) > 1e-14:
                raise ValueError("direction set is not symmetric under negation")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "weights", w)

    @classmethod
    def lebedev26(cls) -> "AngularQuadrature":
        """The 26-point Lebedev rule, exact for spherical polynomials of degree 7."""
        dirs, wts = [], []
        for k in range(3):
            for sgn in (1.0, -1.0):
                e = np.zeros(3)
                e[k] = sgn
                dirs.append(e)
                wts.append(1 / 21)
        r = 1 / math.sqrt(2)
        for k in range(3):
            for s1 in (1.0, -1.0):
                for s2 in (1.0, -1.0):
                    e = np.full(3, 0.0)
                    e[(k + 1) % 3] = s1 * r
                    e[(k + 2) % 3] = s2 * r
                    dirs.append(e)
                    wts.append(4 / 105)
        c = 1 / math.sqrt(3)
        for s1 in (1.0, -1.0):
            for s2 in (1.0, -1.0):
                for s3 in (1.0, -1.0):
                    dirs.append(np.array([s1, s2, s3]) * c)
                    wts.append(9 / 280)
        return cls(np.array(dirs), 4 * np.pi * np.array(wts))

    def abs_projection_integral(self, u: np.ndarray) -> np.ndarray:
        """Quadrature of |u . omega| over the sphere (exact value 2 pi |u|)."""
        return np.abs(np.asarray(u) @ self.directions.T) @ self.weights


def post_collision_velocities(v, v_star, omega, m_i: float, m_j: float):
    """Outgoing velocities for a binary collision with scattering direction omega."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(omega) - 1.0) > 1e-12:
        raise ValueError("omega must be a unit vector")
    M = m_i + m_j
    g = v - v_star
    tg = g - 2 * np.dot(omega, g) * omega
    center = (m_i * v + m_j * v_star) / M
    return center + (m_j / M) * tg, center - (m_i / M) * tg


# ---------------------------------------------------------------- tensor


@dataclass(frozen=True)
class PairBlock:
    """Collision classes for one species pair; see the module docstring."""

    i: int
    j: int
    a: np.ndarray
    b: np.ndarray
    offs: np.ndarray
    gmag: np.ndarray
    gam: np.ndarray

    @property
    def same(self) -> bool:
        return self.i == self.j

    @property
    def sizes(self) -> np.ndarray:
        """Ordered class sizes (mirrored pairs counted for same-species blocks)."""
        d = np.diff(self.offs)
        return 2 * d if self.same else d


def pair_classes(J: np.ndarray, mu_i: int, mu_j: int, same: bool):
    """Group node pairs into classes of equal momentum and energy keys.

    Returns (a, b, offs) with int32 node indices sorted by class.  Every
    class is kept, including singletons whose gain equals their loss, since
    the loss term is evaluated separately over all pairs.
    """
    N = J.shape[0]
    if same:
        a, b = np.triu_indices(N, k=1)
    else:
        a = np.repeat(np.arange(N), N)
        b = np.tile(np.arange(N), N)
    a = a.astype(np.int32)
    b = b.astype(np.int32)
    J2 = np.sum(J * J, axis=1)
    span = int(np.abs(J).max()) * (mu_i + mu_j)
    base = 2 * span + 1
    key = np.zeros(a.size, dtype=np.int64)
    for k in range(3):
        key *= base
        key += mu_i * J[a, k] + mu_j * J[b, k] + span
    key *= int(J2.max()) * (mu_i + mu_j) + 1
    key += mu_i * J2[a] + mu_j * J2[b]
    order = np.argsort(key, kind="stable")
    ks = key[order]
    del key
    starts = np.flatnonzero(np.r_[True, ks[1:] != ks[:-1]])
    del ks
    offs = np.r_[starts, order.size].astype(np.int64)
    return a[order], b[order], offs


def _geometry_key(grid: VelocityGrid, mu_i: int, mu_j: int, same: bool) -> str:
    blob = json.dumps(
        {"v": TENSOR_CACHE_VERSION, "n": grid.n, "R": repr(float(grid.R)),
         "mu": [int(mu_i), int(mu_j)], "same": bool(same)},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


def _load_or_build_classes(grid, mu_i, mu_j, same, cache_dir):
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"classes-{_geometry_key(grid, mu_i, mu_j, same)}.npz"
        if path.exists():
            with np.load(path) as z:
                if int(z["version"]) == TENSOR_CACHE_VERSION:
                    return z["a"], z["b"], z["offs"]
            log.warning("ignoring stale tensor cache %s", path)
    a, b, offs = pair_classes(grid.J, int(mu_i), int(mu_j), same)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, version=TENSOR_CACHE_VERSION, a=a, b=b, offs=offs)
        os.replace(tmp, path)
    return a, b, offs


@dataclass(frozen=True)
class CollisionTensor:
    """All pair blocks for a mixture on a grid, plus the equilibrium weight."""

    params: MixtureParams
    grid: VelocityGrid = field(repr=False)
    blocks: tuple = field(repr=False)
    root: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, params: MixtureParams, grid: VelocityGrid, cache_dir=None) -> "CollisionTensor":
        mu = params.mass_weights()
        if mu is None:
            raise ValueError(
                f"masses {params.m.tolist()} are not small-integer commensurate; "
                "exact on-grid collisions need rational mass ratios"
            )
        V = grid.nodes
        blocks = []
        for i in range(params.I):
            for j in range(i, params.I):
                same = i == j
                a, b, offs = _load_or_build_classes(grid, mu[i], mu[j], same, cache_dir)
                first = offs[:-1]
                gmag = np.linalg.norm(V[a[first]] - V[b[first]], axis=1)
                nord = np.diff(offs) * (2 if same else 1)
                gam = 2 * np.pi * params.beta[i, j] * grid.w * gmag / nord
                blocks.append(PairBlock(i, j, a, b, offs, gmag, gam))
        return cls(params, grid, tuple(blocks), equilibrium_root(params, grid))

    @property
    def I(self) -> int:
        return self.params.I

    @property
    def Nv(self) -> int:
        return self.grid.Nv

    def class_sizes(self) -> dict:
        return {(b.i, b.j): b.sizes for b in self.blocks}

    @cached_property
    def relative_speed(self) -> np.ndarray:
        """|v_a - v_b| for all node pairs (Nv x Nv)."""
        V = self.grid.nodes
        sq = np.sum(V * V, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (V @ V.T)
        np.maximum(d2, 0.0, out=d2)
        return np.sqrt(d2, out=d2)

    def loss(self, Fc: np.ndarray, Gc: np.ndarray) -> np.ndarray:
        """F_i(a) sum_j 2 pi beta_ij h^3 sum_b |v_a - v_b| G_j(b) on column layout (I, Nv, B)."""
        D = self.relative_speed
        DG = np.stack([D @ Gc[j] for j in range(self.I)])
        c = 2 * np.pi * self.grid.w * self.params.beta
        return Fc * np.einsum("ij,jab->iab", c, DG)


def _as_batch(F, I, Nv):
    F = np.asarray(F, dtype=float)
    if F.shape[-2:] != (I, Nv):
        raise ValueError(f"field must end with shape ({I}, {Nv}), got {F.shape}")
    lead = F.shape[:-2]
    cols = np.ascontiguousarray(F.reshape(-1, I, Nv).transpose(1, 2, 0))
    return cols, lead


def _from_cols(out, lead):
    I, Nv, B = out.shape
    return out.transpose(2, 0, 1).reshape(lead + (I, Nv))


def worker_count() -> int:
    """Worker threads for column-parallel kernels: CPU count, capped by KINEMIX_THREADS."""
    n = os.cpu_count() or 1
    raw = os.environ.get("KINEMIX_THREADS")
    return max(1, min(n, int(raw))) if raw else n


def _gain_cols(Fc, Gc, tensor, symmetric):
    out = np.zeros_like(Fc)
    for blk in tensor.blocks:
        i, j = blk.i, blk.j
        if blk.same and symmetric:
            _kernels.gain_same_sym(out[i], Fc[i], blk.a, blk.b, blk.offs, blk.gam)
        elif blk.same:
            _kernels.gain_same(out[i], Fc[i], Gc[i], blk.a, blk.b, blk.offs, blk.gam)
        elif symmetric:
            _kernels.gain_cross_sym(out[i], out[j], Fc[i], Fc[j], blk.a, blk.b, blk.offs, blk.gam)
        else:
            _kernels.gain_cross(out[i], out[j], Fc[i], Gc[j], Fc[j], Gc[i],
                                blk.a, blk.b, blk.offs, blk.gam)
    return out


def _q_cols(Fc, Gc, tensor, symmetric):
    """Gain over collision classes minus the loss product, on column layout (I, Nv, B).

    Columns are independent, so with KINEMIX_THREADS > 1 contiguous column
    chunks go to a thread pool (the kernels release the GIL).
    """
    Gx = Fc if symmetric else Gc
    B = Fc.shape[2]
    nw = min(worker_count(), B)
    if nw <= 1:
        gain = _gain_cols(Fc, Gx, tensor, symmetric)
    else:
        from concurrent.futures import ThreadPoolExecutor

        edges = np.linspace(0, B, nw + 1).astype(int)
        chunks = [(np.ascontiguousarray(Fc[:, :, lo:hi]), np.ascontiguousarray(Gx[:, :, lo:hi]))
                  for lo, hi in zip(edges[:-1], edges[1:])]
        with ThreadPoolExecutor(nw) as pool:
            parts = list(pool.map(lambda fg: _gain_cols(fg[0], fg[1], tensor, symmetric), chunks))
        gain = np.concatenate(parts, axis=2)
    gain -= tensor.loss(Fc, Gx)
    return gain


def collision_invariants(params: MixtureParams, grid: VelocityGrid) -> np.ndarray:
    """Unweighted invariants e_i, m v_k, m |v|^2 as an (I+4, I, Nv) array."""
    I, Nv = params.I, grid.Nv
    psi = np.zeros((I + 4, I, Nv))
    m = params.m[:, None]
    for i in range(I):
        psi[i, i] = 1.0
    for k in range(3):
        psi[I + k] = m * grid.nodes[None, :, k]
    psi[I + 3] = m * np.sum(grid.nodes ** 2, axis=1)[None, :]
    return psi


def conservative_correction(Q: np.ndarray, tensor: CollisionTensor) -> np.ndarray:
    """Remove any residual invariant moments from Q by a Maxwellian-weighted correction.

    Finds lambda with <Q - sum_k lambda_k nM psi_k, psi_l> = 0 for all l.
    For the on-grid model the correction is at rounding level; it is kept so
    the guarantee does not rest on that property alone.
    """
    psi = collision_invariants(tensor.params, tensor.grid)
    nM = tensor.root ** 2
    K = psi.shape[0]
    P = psi.reshape(K, -1)
    W = (psi * nM[None]).reshape(K, -1)
    A = W @ P.T
    Qf = Q.reshape(-1, P.shape[1])
    rhs = Qf @ P.T
    lam = np.linalg.solve(A, rhs.T).T
    return (Qf - lam @ W).reshape(Q.shape)


def apply_Q(F, G, tensor: CollisionTensor, correct: bool = True) -> np.ndarray:
    """Q_i(F, G) = sum_j Q_ij(F_i, G_j); F, G of shape (..., I, Nv)."""
    I, Nv = tensor.I, tensor.Nv
    Fc, lead = _as_batch(F, I, Nv)
    Gc, lead_g = _as_batch(G, I, Nv)
    if lead != lead_g:
        raise ValueError("F and G batch shapes differ")
    out = _from_cols(_q_cols(Fc, Gc, tensor, symmetric=False), lead)
    return conservative_correction(out, tensor) if correct else out


def apply_N(f, tensor: CollisionTensor, active=None, correct: bool = True) -> np.ndarray:
    """(nM)^{-1/2} Q((nM)^{1/2} f, (nM)^{1/2} f) for f of shape (..., I, Nv).

    ``active`` optionally selects batch columns (flattened) to evaluate;
    the others are returned as zero.
    """
    I, Nv = tensor.I, tensor.Nv
    s = tensor.root
    f = np.asarray(f, dtype=float)
    Fc, lead = _as_batch(f * s, I, Nv)
    if active is not None:
        idx = np.flatnonzero(np.asarray(active))
        full = np.zeros_like(Fc)
        if idx.size:
            full[:, :, idx] = _q_cols(np.ascontiguousarray(Fc[:, :, idx]), None, tensor, symmetric=True)
        Qc = full
    else:
        Qc = _q_cols(Fc, None, tensor, symmetric=True)
    Q = _from_cols(Qc, lead)
    if correct:
        Q = conservative_correction(Q, tensor)
    return Q / s


def apply_bilinear(f, g, tensor: CollisionTensor) -> np.ndarray:
    """(nM)^{-1/2} Q((nM)^{1/2} f, (nM)^{1/2} g) (not symmetrized)."""
    s = tensor.root
    return apply_Q(np.asarray(f) * s, np.asarray(g) * s, tensor) / s


# ------------------------------------------------------------- frequency


@dataclass(frozen=True)
class FrequencyField:
    """Collision frequency on the grid with fitted linear-growth bounds."""

    values: np.ndarray
    nu0: float
    nubar0: float
    speed: np.ndarray = field(repr=False)

    def check_bounds(self) -> bool:
        lo = self.nu0 * (1 + self.speed)
        hi = self.nubar0 * (1 + self.speed)
        return bool(np.all(self.values >= lo * (1 - 1e-14)) and np.all(self.values <= hi * (1 + 1e-14)))


def frequency_at(params: MixtureParams, grid: VelocityGrid, points, angular: AngularQuadrature | None = None):
    """nu_i at arbitrary velocities, shape (I, len(points)); v_* integral by grid quadrature.

    The angular integral of |g . omega| is 2 pi |g| in closed form; passing
    an AngularQuadrature replaces it with that rule (for comparison only).
    """
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    M = maxwellian(params, grid)
    out = np.zeros((params.I, pts.shape[0]))
    nodes = np.ascontiguousarray(grid.nodes)
    for i in range(params.I):
        for j in range(params.I):
            wts = params.n[j] * params.beta[i, j] * grid.w * M[j]
            if angular is None:
                _kernels.frequency(out[i], nodes, pts, np.ascontiguousarray(wts), 2 * np.pi)
            else:
                for t in range(pts.shape[0]):
                    out[i, t] += wts @ angular.abs_projection_integral(pts[t] - nodes)
    return out


def collision_frequency(params: MixtureParams, grid: VelocityGrid, angular=None) -> FrequencyField:
    vals = frequency_at(params, grid, grid.nodes, angular)
    speed = grid.speed
    ratio = vals / (1 + speed)[None, :]
    return FrequencyField(vals, float(ratio.min()), float(ratio.max()), speed)


# ------------------------------------------------------------ linearized


@dataclass
class LinearizedOperator:
    """Dense matrix of the linearized operator in plain (species, node) coordinates.

    The inner product is the plain dot product times the uniform weight h^3,
    so a matrix symmetric in the usual sense is self-adjoint for <.,.>_I.
    """

    L: np.ndarray
    nu: np.ndarray
    params: MixtureParams
    grid: VelocityGrid = field(repr=False)
    freq: FrequencyField = field(repr=False)
    split_residual: float = 0.0
    _ker: np.ndarray | None = field(default=None, repr=False)
    _resolvent: tuple | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.L.shape[0]

    @property
    def K(self) -> np.ndarray:
        """The non-multiplicative part L + diag(nu) (materialized on demand)."""
        Km = self.L.copy()
        Km[np.diag_indices_from(Km)] += self.nu
        return Km

    def apply(self, f) -> np.ndarray:
        f = np.asarray(f)
        lead = f.shape[:-2]
        flat = f.reshape(-1, self.size)
        return (flat @ self.L).reshape(lead + f.shape[-2:])

    def apply_K(self, f) -> np.ndarray:
        f = np.asarray(f)
        flat = f.reshape(-1, self.size)
        return (flat @ self.L + flat * self.nu).reshape(f.shape)

    def set_kernel(self, basis: MacroBasis) -> None:
        self._ker, _ = np.linalg.qr(basis.matrix)
        self._resolvent = None

    def kernel_projector_apply(self, h) -> np.ndarray:
        Q = self._ker
        flat = np.asarray(h).reshape(-1, self.size)
        return ((flat @ Q) @ Q.T).reshape(np.shape(h))

    def inverse_on_complement(self, h) -> np.ndarray:
        """Solve L u = h for h orthogonal to the kernel, with u orthogonal to it too."""
        if self._ker is None:
            raise RuntimeError("call set_kernel first")
        if self._resolvent is None:
            Q = self._ker
            A = self.L - Q @ Q.T
            self._resolvent = sla.lu_factor(A, overwrite_a=True, check_finite=False)
        flat = np.asarray(h).reshape(-1, self.size).T
        u = sla.lu_solve(self._resolvent, flat, check_finite=False)
        return u.T.reshape(np.shape(h))

    def operator_norm_K(self, tol: float = 1e-8) -> float:
        """Largest |eigenvalue| of K by Lanczos on the matrix-free product."""
        from scipy.sparse.linalg import LinearOperator, eigsh

        op = LinearOperator((self.size, self.size), matvec=lambda x: self.L @ x + self.nu * x,
                            dtype=float)
        val = eigsh(op, k=1, which="LM", tol=tol, return_eigenvectors=False, v0=np.ones(self.size))
        return float(abs(val[0]))


def build_linearized(params: MixtureParams, grid: VelocityGrid, tensor: CollisionTensor,
                     freq: FrequencyField | None = None) -> LinearizedOperator:
    """Assemble L f = (nM)^{-1/2} [Q(nM, (nM)^{1/2} f) + Q((nM)^{1/2} f, nM)]."""
    if tensor.params is not params and tensor.params.as_dict() != params.as_dict():
        raise ValueError("tensor was built for different parameters")
    I, Nv = params.I, grid.Nv
    s = tensor.root
    try:
        L = np.zeros((I * Nv, I * Nv))
    except MemoryError as exc:
        raise MemoryError(f"dense operator of size {I * Nv} does not fit in memory") from exc
    for blk in tensor.blocks:
        first = blk.offs[:-1]
        sig = s[blk.i][blk.a[first]] * s[blk.j][blk.b[first]]
        w = blk.gam * sig ** 2
        _kernels.assemble(L, blk.a, blk.b, blk.offs, w, blk.i * Nv, blk.j * Nv, blk.same)
    S = s.reshape(-1)
    L /= S[:, None]
    L /= S[None, :]
    if freq is None:
        freq = collision_frequency(params, grid)
    nu = freq.values.reshape(-1)
    op = LinearizedOperator(L, nu, params, grid, freq)
    # split check: K (nM)^{1/2} chi = nu (nM)^{1/2} chi on the invariant span
    from kinemix.mixture import build_basis

    C = build_basis(params, grid).matrix
    KC = L @ C + nu[:, None] * C
    op.split_residual = float(np.abs(KC - nu[:, None] * C).max() / np.abs(nu[:, None] * C).max())
    return op


@dataclass(frozen=True)
class SpectralGap:
    sigma: float
    nu0: float
    gap_threshold: float
    kernel_dim: int
    kernel_residual: float


def estimate_spectral_gap(L: LinearizedOperator, basis: MacroBasis, details: bool = False):
    """Smallest value of <-L h, h> / ||nu^{1/2} h||^2 over h orthogonal to the kernel.

    Solved as an eigenproblem for nu^{-1/2}(-L)nu^{-1/2} deflated against the
    nu^{-1/2}-image of the invariant span; the span is shifted far up the
    spectrum so the smallest eigenvalue is the constrained minimum.
    """
    C = basis.matrix
    Lc = L.L @ C
    kres = float(np.abs(Lc).max() / (np.abs(L.L).max() * np.abs(C).max()))
    if kres > 1e-8:
        raise ValueError(f"invariant span is not annihilated (relative residual {kres:.2e})")
    r = L.nu ** -0.5
    Qn, _ = np.linalg.qr(C * r[:, None])
    A = L.L * (-r)[:, None]
    A *= r[None, :]
    B = A @ Qn
    Cm = Qn.T @ B
    shift = 10.0 * float(np.abs(np.diag(A)).max() + 1.0)
    X = B - 0.5 * Qn @ Cm - 0.5 * shift * Qn
    step = 1024
    for r0 in range(0, A.shape[0], step):
        sl = slice(r0, r0 + step)
        A[sl] -= Qn[sl] @ X.T + X[sl] @ Qn.T
    sigma = float(sla.eigvalsh(A, subset_by_index=[0, 0], overwrite_a=True, check_finite=False)[0])
    del A
    nu0 = L.freq.nu0
    if sigma <= 1e-10:
        raise ValueError(
            f"kernel dimension exceeds {basis.K}: deflated gap {sigma:.3e}; the grid is too coarse"
        )
    info = SpectralGap(sigma, nu0, sigma * nu0 / 100.0, basis.K, kres)
    return info if details else sigma


def kernel_eigenpairs(L: LinearizedOperator, k: int):
    """Top k eigenpairs of L (eigenvalues closest to zero from below)."""
    N = L.size
    return sla.eigh(L.L, subset_by_index=[N - k, N - 1], check_finite=False)


# --------------------------------------------------------------- entropy


def entropy_production(G, tensor: CollisionTensor, pairwise: bool = False) -> np.ndarray:
    """D(G) = <Q(G, G), log G>_I in symmetrized form, for G of shape (..., I, Nv).

    D = -h^3 sum_classes c gam_C sum_{p<p'} (x_p - x_p')(y_p - y_p') with
    x_p = G_i(a) G_j(b) and y_p = log x_p.  ``pairwise`` evaluates the double
    sum term by term (quadratic in class size); the default uses the
    algebraically equal n*sum(xy) - sum(x)sum(y).
    """
    G = np.asarray(G, dtype=float)
    if np.any(~(G > 0)):
        raise ValueError("entropy production needs a strictly positive field")
    I, Nv = tensor.I, tensor.Nv
    Gc, lead = _as_batch(G, I, Nv)
    lg = np.log(Gc)
    B = Gc.shape[2]
    total = np.zeros(B)
    # pair products take (pairs x columns) memory; bound a chunk to about 256 MB
    npairs = max(blk.a.size for blk in tensor.blocks)
    step = max(1, int(2 ** 25 // npairs))
    for lo in range(0, B, step):
        sl = slice(lo, lo + step)
        for blk in tensor.blocks:
            x = Gc[blk.i][blk.a, sl] * Gc[blk.j][blk.b, sl]
            y = lg[blk.i][blk.a, sl] + lg[blk.j][blk.b, sl]
            total[sl] += _kernels.entropy_sums(x, y, blk.offs, blk.gam, 2.0 if blk.same else 1.0, pairwise)
    D = -total * tensor.grid.w
    return D.reshape(lead) if lead else float(D[0])


# ------------------------------------------------------------- nonlinear


def nonlinear_bound_ratio(f, g, tensor: CollisionTensor) -> np.ndarray:
    """||(1+|v|)^{-1/2} N(f, g)||_I / (||(1+|v|)^{1/2} f||_I ||(1+|v|)^{1/2} g||_I)."""
    from kinemix.mixture import weighted_norm

    grid = tensor.grid
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    den = weighted_norm(f, 0.5, grid) * weighted_norm(g, 0.5, grid)
    if np.any(den == 0):
        raise ValueError("f and g must be nonzero")
    num = weighted_norm(apply_bilinear(f, g, tensor), -0.5, grid)
    return num / den
