"""Static property suites: no time stepping, only the operators and identities.

Each suite returns a list of Check records.  Expensive objects (collision
tensor, linearized operator, spectral gap) are built once per Context and
shared between suites.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from kinemix.collision import (
    AngularQuadrature,
    CollisionTensor,
    apply_Q,
    build_linearized,
    collision_frequency,
    entropy_production,
    estimate_spectral_gap,
    kernel_eigenpairs,
    nonlinear_bound_ratio,
)
from kinemix.micromacro import (
    FluidState,
    Projector,
    flux_matrix,
    lemma44_pointwise,
    norm_P0_v1_f0_sq,
    norm_v1_f0_sq,
    reconstruct,
    theta0,
)
from kinemix.mixture import (
    MixtureParams,
    VelocityGrid,
    build_basis,
    equilibrium_root,
    inner_product_I,
    maxwellian,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    value: float
    tolerance: float
    passed: bool
    ref: str = ""
    detail: str = ""


# ------------------------------------------------------------ random inputs


def random_mixture(rng: np.random.Generator, I: int, commensurate: bool = False,
                   m_range=(0.5, 4.0)) -> MixtureParams:
    """Random masses, densities and a symmetric positive beta."""
    if commensurate:
        m = rng.integers(1, 4, size=I).astype(float)
    else:
        m = rng.uniform(*m_range, size=I)
    n = rng.uniform(0.2, 2.0, size=I)
    b = rng.uniform(0.5, 1.5, size=(I, I))
    return MixtureParams(m, n, 0.5 * (b + b.T))


def random_positive_fields(rng, params: MixtureParams, grid: VelocityGrid, count: int,
                           rough: bool = False) -> np.ndarray:
    """Positive distributions (count, I, Nv) around nM.

    Smooth fields are nM times a random quadratic polynomial in v kept
    above 0.2; rough fields multiply nM by independent nodal factors.
    """
    nM = params.n[:, None] * maxwellian(params, grid)
    v = grid.nodes
    out = np.empty((count,) + nM.shape)
    for c in range(count):
        if rough:
            out[c] = nM * rng.uniform(0.3, 1.7, size=nM.shape)
            continue
        for i in range(params.I):
            a0 = rng.uniform(0.5, 1.5)
            a1 = rng.normal(scale=0.3, size=3)
            A2 = rng.normal(scale=0.05, size=(3, 3))
            poly = a0 + v @ a1 + np.einsum("nk,kl,nl->n", v, A2, v)
            out[c, i] = nM[i] * np.maximum(poly, 0.2)
    return out


def random_gradients(rng, params: MixtureParams, count: int) -> FluidState:
    c = rng.normal(size=(count, params.I + 4))
    return FluidState.from_coords(c, params)


def shifted_maxwellian(params: MixtureParams, grid: VelocityGrid, u, T: float) -> np.ndarray:
    """n_i (m_i / 2 pi T)^{3/2} exp(-m_i |v - u|^2 / 2T)."""
    d2 = np.sum((grid.nodes - np.asarray(u)) ** 2, axis=1)
    m = params.m[:, None]
    return params.n[:, None] * (m / (2 * np.pi * T)) ** 1.5 * np.exp(-m * d2[None] / (2 * T))


# ----------------------------------------------------------------- context


@dataclass
class Context:
    params: MixtureParams
    grid: VelocityGrid
    seed: int = 0
    samples: int = 20
    cache_dir: str | None = None
    angular: str = "exact"
    refine_from: int | None = None
    timings: dict = field(default_factory=dict)

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    def _timed(self, key, fn):
        t = time.perf_counter()
        out = fn()
        self.timings[key] = time.perf_counter() - t
        return out

    @cached_property
    def tensor(self) -> CollisionTensor:
        return self._timed("tensor", lambda: CollisionTensor.build(self.params, self.grid, self.cache_dir))

    @cached_property
    def basis(self):
        return build_basis(self.params, self.grid)

    @cached_property
    def linear(self):
        ang = AngularQuadrature.lebedev26() if self.angular == "lebedev26" else None

        def mk():
            L = build_linearized(self.params, self.grid, self.tensor,
                                 collision_frequency(self.params, self.grid, ang))
            L.set_kernel(self.basis)
            return L

        return self._timed("linearized", mk)

    @cached_property
    def gap(self):
        return self._timed("gap", lambda: estimate_spectral_gap(self.linear, self.basis, details=True))


# ------------------------------------------------------------------ suites


def suite_basis(ctx: Context) -> list:
    """Gram matrix of the invariant basis on the default grid for random mixtures."""
    rng = ctx.rng(1)
    worst = 0.0
    for k in range(ctx.samples):
        params = random_mixture(rng, 1 + k % 4)
        basis = build_basis(params, VelocityGrid.default(params))
        worst = max(worst, float(np.abs(basis.gram() - np.eye(basis.K)).max()))
    return [Check("basis", "gram_deviation", worst, 1e-6, worst < 1e-6, "orthonormal-basis")]


def _moment_ratio(Q, chi, grid):
    """max_k |<Q, chi^k>| / ||Q|| with chi^k the unweighted-by-root basis (Q carries nM)."""
    mom = np.abs(np.tensordot(Q, chi, axes=([-2, -1], [1, 2])) * grid.w)
    nrm = np.sqrt(np.sum(Q * Q, axis=(-2, -1)) * grid.w)
    return mom.max(axis=-1) / nrm


def suite_collision(ctx: Context) -> list:
    """Invariant moments of Q(G, G) for random positive G; Q(nM, nM) = 0."""
    params, grid = ctx.params, ctx.grid
    rng = ctx.rng(2)
    n = ctx.samples
    G = np.concatenate([random_positive_fields(rng, params, grid, n - n // 2),
                        random_positive_fields(rng, params, grid, n // 2, rough=True)])
    root = equilibrium_root(params, grid)
    # moments against the collision invariants: <Q, chi> where (nM)^{1/2} chi is the basis
    chi = ctx.basis.chi / root[None]
    worst = 0.0
    for chunk in np.array_split(G, max(1, len(G) // 16)):
        Q = apply_Q(chunk, chunk, ctx.tensor)
        worst = max(worst, float(_moment_ratio(Q, chi, grid).max()))
    nM = root ** 2
    Q0 = apply_Q(nM, nM, ctx.tensor)
    eq = float(np.abs(Q0).max() / np.abs(nM).max())
    return [
        Check("collision", "invariant_moments", worst, 1e-5, worst < 1e-5, "collision-invariance"),
        Check("collision", "equilibrium_residual", eq, 1e-12, eq < 1e-12, "collision-invariance"),
    ]


def suite_entropy(ctx: Context) -> list:
    params, grid = ctx.params, ctx.grid
    rng = ctx.rng(3)
    n = ctx.samples
    G = np.concatenate([random_positive_fields(rng, params, grid, n - n // 2),
                        random_positive_fields(rng, params, grid, n // 2, rough=True)])
    D = entropy_production(G, ctx.tensor)
    nM = equilibrium_root(params, grid) ** 2
    D0 = abs(entropy_production(nM, ctx.tensor))
    worst_shift = 0.0
    for _ in range(max(4, ctx.samples // 5)):
        u = rng.normal(size=3)
        u *= rng.uniform(0, 0.2) / np.linalg.norm(u)
        T = 1 + rng.uniform(-0.1, 0.1)
        worst_shift = max(worst_shift, abs(entropy_production(shifted_maxwellian(params, grid, u, T), ctx.tensor)))
    dmax = float(np.max(D))
    return [
        Check("entropy", "max_production", dmax, 1e-8, dmax <= 1e-8, "h-theorem"),
        Check("entropy", "equilibrium", D0, 1e-8, D0 < 1e-8, "h-theorem"),
        Check("entropy", "shifted_maxwellian", worst_shift, 1e-6, worst_shift < 1e-6, "h-theorem"),
    ]


def principal_angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return sla.subspace_angles(A, B)


def suite_operator(ctx: Context) -> list:
    """Symmetry, kernel dimension and direction, spectral gap and its grid stability."""
    L = ctx.linear
    K = ctx.basis.K
    asym = float(np.abs(L.L - L.L.T).max() / np.abs(L.L).max())
    gap = ctx.gap
    w, V = ctx._timed("kernel", lambda: kernel_eigenpairs(L, K + 1))
    small = np.abs(w) < gap.gap_threshold
    n_small = int(small.sum())
    ang = float(principal_angles(V[:, small], ctx.basis.matrix).max()) if n_small else math.pi / 2
    checks = [
        Check("operator", "symmetry", asym, 1e-5, asym < 1e-5, "self-adjoint"),
        Check("operator", "kernel_dimension", n_small, K, n_small == K, "kernel",
              f"threshold {gap.gap_threshold:.3e}, next eigenvalue {w[0]:.4g}"),
        Check("operator", "kernel_angle", ang, 1e-4, ang < 1e-4, "kernel"),
        Check("operator", "spectral_gap", gap.sigma, 0.0, gap.sigma > 0, "spectral-gap"),
        Check("operator", "split_residual", L.split_residual, 1e-10, L.split_residual < 1e-10, "nu-split"),
    ]
    coarse_n = ctx.refine_from or max(4, ctx.grid.n - 4)
    if coarse_n != ctx.grid.n:
        coarse = Context(ctx.params, VelocityGrid(coarse_n, ctx.grid.R), ctx.seed, ctx.samples, ctx.cache_dir)
        s_c = coarse.gap.sigma
        rel = abs(s_c - gap.sigma) / gap.sigma
        checks.append(Check("operator", "gap_refinement", rel, 0.1, rel < 0.1, "spectral-gap",
                            f"sigma {s_c:.5f} at {coarse_n}^3, {gap.sigma:.5f} at {ctx.grid.n}^3"))
    return checks


def suite_identities(ctx: Context, mixtures: int = 10, states: int = 1000) -> list:
    """Closed forms of the fluid-gradient norms against quadrature on random mixtures."""
    rng = ctx.rng(4)
    worst = {"v1_f0": 0.0, "P0_v1_f0": 0.0, "flux_matrix": 0.0}
    for k in range(mixtures):
        params = random_mixture(rng, 1 + k % 4)
        grid = VelocityGrid.default(params)
        basis = build_basis(params, grid)
        proj = Projector(basis)
        grad = random_gradients(rng, params, states)
        closed_a = norm_v1_f0_sq(grad, params)
        closed_b = norm_P0_v1_f0_sq(grad, params)
        # quadrature: norms of v1 * sum_k c_k chi^k via Gram matrices of {v1 chi^k}
        C = basis.chi.reshape(basis.K, -1)
        V = (basis.chi * grid.v1).reshape(basis.K, -1)
        Gv = V @ V.T * grid.w
        c = grad.coords
        quad_a = np.einsum("sk,kl,sl->s", c, Gv, c)
        Mc = V @ C.T * grid.w  # <v1 chi^l, chi^k>
        coords_P0 = c @ Mc.T
        quad_b = np.einsum("sk,kl,sl->s", coords_P0, np.linalg.inv(basis.gram()), coords_P0)
        worst["v1_f0"] = max(worst["v1_f0"], float(np.max(np.abs(quad_a - closed_a) / closed_a)))
        worst["P0_v1_f0"] = max(worst["P0_v1_f0"],
                                float(np.max(np.abs(quad_b - closed_b) / np.maximum(closed_b, 1e-300))))
        A = flux_matrix(params)
        worst["flux_matrix"] = max(worst["flux_matrix"], float(np.abs(Mc - A).max() / np.abs(A).max()))
        # one full-field spot check through the projector
        f0 = reconstruct(FluidState.from_coords(c[:2], params), basis)
        g = grid.v1 * f0
        direct = inner_product_I(proj.P0(g), proj.P0(g), grid)
        rel = float(np.max(np.abs(direct - closed_b[:2]) / closed_b[:2]))
        worst["P0_v1_f0"] = max(worst["P0_v1_f0"], rel)
    return [Check("identities", k, v, 1e-6, v < 1e-6, "closed-form-norms") for k, v in worst.items()]


def suite_lemma44(ctx: Context, states: int = 10000) -> list:
    rng = ctx.rng(5)
    params = ctx.params
    th0 = theta0(params)
    grad = random_gradients(rng, params, states)
    worst = -np.inf
    for th in (th0 / 4, th0 / 2):
        lhs, rhs = lemma44_pointwise(grad, th, params)
        worst = max(worst, float(np.max(rhs - lhs)))
    one = MixtureParams([1.0], [1.0], 1.0)
    th_one = theta0(one)
    ok = th_one == 1.0 / 13.0
    return [
        Check("lemma44", "pointwise_violation", worst, 1e-10, worst <= 1e-10, "theta-lemma"),
        Check("lemma44", "theta0_single_species", th_one, 0.0, ok, "theta-lemma", "expected 1/13"),
    ]


def suite_constants(ctx: Context) -> list:
    """Frequency bounds, resolvent bound, nonlinear bound and the reported constants."""
    from kinemix.diagnostics import estimate_C_V
    from kinemix.micromacro import C_chi, C_ker, K_chi, min_eig_G
    from kinemix.transport import Operators

    L = ctx.linear
    freq = L.freq
    gap = ctx.gap
    rng = ctx.rng(6)
    checks = [Check("constants", "frequency_bounds", freq.nu0, 0.0, freq.check_bounds() and freq.nu0 > 0,
                    "collision-frequency", f"nu0={freq.nu0:.5g}, nubar0={freq.nubar0:.5g}")]
    # resolvent bound on random smooth h orthogonal to the kernel
    root = equilibrium_root(ctx.params, ctx.grid)
    h = (random_positive_fields(rng, ctx.params, ctx.grid, 4) - root ** 2) / root
    h = h - L.kernel_projector_apply(h)
    u = L.inverse_on_complement(h)
    grid = ctx.grid
    ratio = float(np.max(np.sqrt(inner_product_I(u, u, grid) / inner_product_I(h, h, grid))
                         * gap.sigma * gap.nu0))
    checks.append(Check("constants", "resolvent_bound", ratio, 1.0, ratio <= 1.0 + 1e-8, "resolvent"))
    f = h[:2]
    nb = float(np.max(nonlinear_bound_ratio(f, f[::-1], ctx.tensor)))
    checks.append(Check("constants", "nonlinear_ratio", nb, float("inf"), bool(np.isfinite(nb)), "nonlinear-bound"))
    ops = Operators(ctx.params, ctx.grid, ctx.basis, Projector(ctx.basis), ctx.tensor, L)
    cv = estimate_C_V(ops)
    lam2 = gap.sigma * gap.nu0 / cv ** 2
    th0 = theta0(ctx.params)
    th = min(th0, 1 / (8 * lam2)) / 2
    values = {
        "sigma": gap.sigma,
        "nu0": freq.nu0,
        "nubar0": freq.nubar0,
        "C_chi": C_chi(ctx.basis),
        "C_ker": C_ker(ctx.basis),
        "K_chi": K_chi(ctx.params, ctx.basis),
        "C_V": cv,
        "lambda2": lam2,
        "theta0": th0,
        "theta_used": th,
        "C_G": min_eig_G(th, ctx.params),
    }
    for k, v in values.items():
        checks.append(Check("constants", k, float(v), 0.0, bool(np.isfinite(v) and v > 0), "constants"))
    return checks


SUITE_FUNCS = {
    "basis": suite_basis,
    "collision": suite_collision,
    "entropy": suite_entropy,
    "operator": suite_operator,
    "identities": suite_identities,
    "lemma44": suite_lemma44,
    "constants": suite_constants,
}


def run_suites(ctx: Context, names) -> dict:
    out = {}
    for name in names:
        t = time.perf_counter()
        out[name] = SUITE_FUNCS[name](ctx)
        log.info("suite %s done in %.1fs", name, time.perf_counter() - t)
    return out
