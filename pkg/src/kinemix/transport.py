"""1D-in-x transport of the perturbation with IMEX time stepping.

State arrays have shape (Nx, I, Nv).  Transport is first-order upwind per
velocity node; the collision part is either the whole linearized operator
(implicit, one LU factorization reused at every node and step) or only the
collision frequency (implicit) with K explicit.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from kinemix.collision import (
    CollisionTensor,
    LinearizedOperator,
    apply_N,
    build_linearized,
    collision_frequency,
)
from kinemix.micromacro import Projector
from kinemix.mixture import MacroBasis, MixtureParams, VelocityGrid, build_basis

BOUNDARIES = ("periodic", "outflow")
MODES = ("direct", "micromacro")
COLLISION_TREATMENTS = ("full-implicit", "nu-implicit")


class SimulationAborted(RuntimeError):
    """Raised on NaN or blow-up; carries the last finite state for dumping."""

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


class ProjectionDrift(RuntimeError):
    pass


@dataclass(frozen=True)
class SpatialGrid:
    """Cell centres x_k = x_lo + (k + 1/2) dx on [x_lo, x_hi]."""

    x_lo: float = -20.0
    x_hi: float = 20.0
    N: int = 128
    boundary: str = "outflow"

    def __post_init__(self):
        if not self.x_hi > self.x_lo:
            raise ValueError("x_hi must exceed x_lo")
        if self.N < 8:
            raise ValueError("need at least 8 spatial nodes")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.N

    @property
    def x(self) -> np.ndarray:
        return self.x_lo + (np.arange(self.N) + 0.5) * self.dx

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"


@dataclass(frozen=True)
class SchemeConfig:
    dt: float | None = None
    cfl: float = 0.9
    mode: str = "direct"
    collision: str = "full-implicit"
    nonlinear: bool = True
    order: int = 1
    node_floor: float = 1e-6
    tol_drift: float = 1e-8
    blowup: float = 1e6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.collision not in COLLISION_TREATMENTS:
            raise ValueError(f"collision must be one of {COLLISION_TREATMENTS}")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.order == 2 and self.collision != "full-implicit":
            raise ValueError("the second-order scheme needs the full-implicit treatment")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")

    def max_dt(self, sgrid: SpatialGrid, vgrid: VelocityGrid) -> float:
        return self.cfl * sgrid.dx / float(np.abs(vgrid.v1).max())

    def resolve_dt(self, sgrid: SpatialGrid, vgrid: VelocityGrid) -> float:
        lim = self.max_dt(sgrid, vgrid)
        if self.dt is None:
            return lim
        if self.dt > lim * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} violates the CFL limit {lim:.6g}")
        return float(self.dt)


@dataclass
class SimState:
    t: float
    f: np.ndarray
    f0: np.ndarray | None = None
    f1: np.ndarray | None = None
    step: int = 0
    config_hash: str = ""

    def copy(self) -> "SimState":
        return SimState(self.t, self.f.copy(),
                        None if self.f0 is None else self.f0.copy(),
                        None if self.f1 is None else self.f1.copy(),
                        self.step, self.config_hash)

    def node(self, k: int) -> np.ndarray:
        return self.f[k]

    def save(self, path) -> None:
        arrays = {"t": self.t, "f": self.f, "step": self.step, "config_hash": self.config_hash,
                  "kind": "kinemix-state", "version": 1}
        if self.f0 is not None:
            arrays.update(f0=self.f0, f1=self.f1)
        np.savez(Path(path), **arrays)

    @classmethod
    def load(cls, path) -> "SimState":
        with np.load(Path(path)) as z:
            if str(z["kind"]) != "kinemix-state":
                raise ValueError(f"{path} is not a state checkpoint")
            f0 = z["f0"] if "f0" in z else None
            f1 = z["f1"] if "f1" in z else None
            return cls(float(z["t"]), z["f"], f0, f1, int(z["step"]), str(z["config_hash"]))


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Operators:
    """Everything a step needs that does not depend on the state."""

    params: MixtureParams
    vgrid: VelocityGrid
    basis: MacroBasis
    projector: Projector
    tensor: CollisionTensor | None
    linear: LinearizedOperator
    _factors: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, params: MixtureParams, vgrid: VelocityGrid, cache_dir=None, angular=None) -> "Operators":
        basis = build_basis(params, vgrid)
        tensor = CollisionTensor.build(params, vgrid, cache_dir=cache_dir)
        freq = collision_frequency(params, vgrid, angular)
        linear = build_linearized(params, vgrid, tensor, freq)
        linear.set_kernel(basis)
        return cls(params, vgrid, basis, Projector(basis), tensor, linear)

    @property
    def nu(self) -> np.ndarray:
        return self.linear.nu

    def implicit_factor(self, c: float):
        """LU factors of (Id - c L), cached by c."""
        key = round(c, 15)
        if key not in self._factors:
            A = self.linear.L * (-c)
            A[np.diag_indices_from(A)] += 1.0
            self._factors[key] = sla.lu_factor(A, overwrite_a=True, check_finite=False)
        return self._factors[key]

    def solve_implicit(self, c: float, rhs: np.ndarray) -> np.ndarray:
        Nx = rhs.shape[0]
        B = rhs.reshape(Nx, -1).T
        X = sla.lu_solve(self.implicit_factor(c), B, check_finite=False)
        return np.ascontiguousarray(X.T).reshape(rhs.shape)

    def apply_L(self, f: np.ndarray) -> np.ndarray:
        return self.linear.apply(f)

    def nonlinear(self, f: np.ndarray, floor: float) -> np.ndarray:
        if self.tensor is None:
            raise RuntimeError("nonlinear term requested but no collision tensor was built")
        amp = np.abs(f).reshape(f.shape[0], -1).max(axis=1)
        top = amp.max()
        if top == 0:
            return np.zeros_like(f)
        active = amp > floor * top
        return apply_N(f, self.tensor, active=active)


def transport_term(f: np.ndarray, v1: np.ndarray, sgrid: SpatialGrid) -> np.ndarray:
    """Upwind approximation of v1 d_x f on (Nx, I, Nv) arrays."""
    if sgrid.periodic:
        left = np.roll(f, 1, axis=0)
        right = np.roll(f, -1, axis=0)
    else:
        left = np.concatenate([f[:1], f[:-1]], axis=0)
        right = np.concatenate([f[1:], f[-1:]], axis=0)
    pos = v1 > 0
    out = np.where(pos, f - left, right - f)
    out *= v1 / sgrid.dx
    return out


def _check(state: SimState, cfg: SchemeConfig, prev: SimState) -> SimState:
    if not np.all(np.isfinite(state.f)):
        raise SimulationAborted(f"non-finite values at t={state.t:.6g}", prev)
    if np.abs(state.f).max() > cfg.blowup:
        raise SimulationAborted(f"perturbation exceeded {cfg.blowup:g} at t={state.t:.6g}", prev)
    return state


def _explicit_part(f, ops, sgrid, cfg):
    rhs = -transport_term(f, ops.vgrid.v1, sgrid)
    if cfg.nonlinear:
        rhs += ops.nonlinear(f, cfg.node_floor)
    return rhs


def step_direct(state: SimState, ops: Operators, sgrid: SpatialGrid, cfg: SchemeConfig,
                dt: float | None = None) -> SimState:
    """One IMEX step of d_t f + v1 d_x f - L f = N(f)."""
    dt = dt if dt is not None else cfg.resolve_dt(sgrid, ops.vgrid)
    if dt > cfg.max_dt(sgrid, ops.vgrid) * (1 + 1e-12):
        raise ValueError("CFL violated")
    f = state.f
    if cfg.order == 2:
        fn = _ssp2(f, ops, sgrid, cfg, dt)
    elif cfg.collision == "full-implicit":
        fn = ops.solve_implicit(dt, f + dt * _explicit_part(f, ops, sgrid, cfg))
    else:
        rhs = f + dt * (_explicit_part(f, ops, sgrid, cfg) + ops.linear.apply_K(f))
        fn = rhs / (1.0 + dt * ops.nu.reshape(f.shape[1:]))
    new = SimState(state.t + dt, fn, None, None, state.step + 1, state.config_hash)
    return _check(new, cfg, state)


def _ssp2(f, ops, sgrid, cfg, dt):
    """IMEX-SSP2(2,2,2): implicit stages with gamma = 1 - 1/sqrt(2), stiffly accurate."""
    g = 1.0 - 1.0 / math.sqrt(2.0)
    Y1 = ops.solve_implicit(g * dt, f)
    E1 = _explicit_part(Y1, ops, sgrid, cfg)
    LY1 = ops.apply_L(Y1)
    Y2 = ops.solve_implicit(g * dt, f + dt * E1 + (1 - 2 * g) * dt * LY1)
    E2 = _explicit_part(Y2, ops, sgrid, cfg)
    LY2 = ops.apply_L(Y2)
    return f + 0.5 * dt * (E1 + E2 + LY1 + LY2)


def split_state(state: SimState, ops: Operators) -> SimState:
    """Attach (f0, f1) storage to a state."""
    f0 = ops.projector.P0(state.f)
    return SimState(state.t, state.f, f0, state.f - f0, state.step, state.config_hash)


def step_micromacro(state: SimState, ops: Operators, sgrid: SpatialGrid, cfg: SchemeConfig,
                    dt: float | None = None) -> SimState:
    """Advance the fluid part and the kinetic part as a coupled pair."""
    if state.f0 is None or state.f1 is None:
        raise ValueError("split storage missing; call split_state first")
    dt = dt if dt is not None else cfg.resolve_dt(sgrid, ops.vgrid)
    if dt > cfg.max_dt(sgrid, ops.vgrid) * (1 + 1e-12):
        raise ValueError("CFL violated")
    proj = ops.projector
    f0, f1 = state.f0, state.f1
    f = f0 + f1
    T = transport_term(f, ops.vgrid.v1, sgrid)
    P0T = proj.P0(T)
    f0n = f0 - dt * P0T
    rhs1 = f1 - dt * (T - P0T)
    if cfg.nonlinear:
        rhs1 += dt * ops.nonlinear(f, cfg.node_floor)
    if cfg.collision == "full-implicit":
        f1n = ops.solve_implicit(dt, rhs1)
    else:
        f1n = (rhs1 + dt * ops.linear.apply_K(f1)) / (1.0 + dt * ops.nu.reshape(f.shape[1:]))
    drift = proj.coords(f1n)
    drift_max = float(np.abs(drift).max()) if drift.size else 0.0
    if drift_max > cfg.tol_drift and cfg.collision == "full-implicit":
        raise ProjectionDrift(f"kinetic part left the orthogonal complement by {drift_max:.3e}")
    # the drifted component belongs to the fluid part
    moved = proj.P0(f1n)
    f0n = f0n + moved
    f1n = f1n - moved
    new = SimState(state.t + dt, f0n + f1n, f0n, f1n, state.step + 1, state.config_hash)
    new.drift = drift_max
    return _check(new, cfg, state)


# ------------------------------------------------------------ initial data


@dataclass(frozen=True)
class ProfileSpec:
    """Initial perturbation: amplitude * phi(x) * (fluid combination + kinetic mode).

    shape: 'gaussian' (nonzero mean), 'odd-bump' (x e^{-x^2/2w^2}, zero mean),
    'sine' (one period of the domain) or 'cosine-offset' (1 + cos, periodic, nonzero mean).
    fluid: weights on basis labels, e.g. {'rho1': 1.0, 'e': 0.5}.
    kinetic: weights on kinetic modes 'heat' (P1 of v1 |v|^2 (nM)^{1/2}) and
    'shear' (P1 of v1 v2 (nM)^{1/2}), each normalized to unit norm.
    zero_mean: remove the x-integral of the fluid part with a compact bump.
    """

    amplitude: float = 1e-3
    shape: str = "gaussian"
    width: float = 2.0
    center: float = 0.0
    fluid: dict = field(default_factory=lambda: {"rho1": 1.0})
    kinetic: dict = field(default_factory=dict)
    zero_mean: bool = False

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if self.shape not in ("gaussian", "odd-bump", "sine", "cosine-offset"):
            raise ValueError(f"unknown profile shape {self.shape!r}")


def profile_shape(spec: ProfileSpec, sgrid: SpatialGrid) -> np.ndarray:
    x = sgrid.x
    z = (x - spec.center) / spec.width
    if spec.shape == "gaussian":
        return np.exp(-0.5 * z * z)
    if spec.shape == "odd-bump":
        return z * np.exp(-0.5 * z * z)
    L = sgrid.x_hi - sgrid.x_lo
    if spec.shape == "sine":
        return np.sin(2 * np.pi * (x - sgrid.x_lo) / L)
    return 1.0 + np.cos(2 * np.pi * (x - sgrid.x_lo) / L)


def mollifier(sgrid: SpatialGrid) -> np.ndarray:
    """psi(x) proportional to exp(-1/(1-(x/w)^2)) on |x - mid| < w, unit discrete integral."""
    w = (sgrid.x_hi - sgrid.x_lo) / 8
    mid = 0.5 * (sgrid.x_lo + sgrid.x_hi)
    r = (sgrid.x - mid) / w
    psi = np.zeros_like(r)
    inside = np.abs(r) < 1
    psi[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return psi / (psi.sum() * sgrid.dx)


def kinetic_mode(name: str, ops_basis: MacroBasis, projector: Projector) -> np.ndarray:
    grid = ops_basis.grid
    params = ops_basis.params
    from kinemix.mixture import equilibrium_root

    root = equilibrium_root(params, grid)
    v = grid.nodes
    if name == "heat":
        g = v[:, 0] * np.sum(v * v, axis=1) * root
    elif name == "shear":
        g = v[:, 0] * v[:, 1] * root
    else:
        raise ValueError(f"unknown kinetic mode {name!r}")
    g = projector.P1(g)
    return g / math.sqrt(np.sum(g * g) * grid.w)


def make_initial(spec: ProfileSpec, params: MixtureParams, vgrid: VelocityGrid, basis: MacroBasis,
                 sgrid: SpatialGrid, projector: Projector | None = None) -> SimState:
    proj = projector or Projector(basis)
    phi = profile_shape(spec, sgrid)
    coef = np.zeros(basis.K)
    for name, wgt in spec.fluid.items():
        if name not in basis.labels:
            raise ValueError(f"unknown fluid component {name!r}; use one of {basis.labels}")
        coef[basis.labels.index(name)] = wgt
    c = spec.amplitude * phi[:, None] * coef[None, :]
    if spec.zero_mean:
        total = c.sum(axis=0) * sgrid.dx
        if np.any(total != 0):
            c = c - mollifier(sgrid)[:, None] * total[None, :]
    f = basis.combine(c)
    for name, wgt in spec.kinetic.items():
        f = f + spec.amplitude * wgt * phi[:, None, None] * kinetic_mode(name, basis, proj)[None]
    return SimState(0.0, np.ascontiguousarray(f))


def fluid_totals(state: SimState, basis: MacroBasis, sgrid: SpatialGrid) -> np.ndarray:
    """x-integrals of the fluid coordinates, shape (I+4,)."""
    return basis.coords(state.f).sum(axis=0) * sgrid.dx


def run(state: SimState, ops: Operators, sgrid: SpatialGrid, cfg: SchemeConfig, t_final: float,
        every: int = 1):
    """Yield the initial state and then every ``every``-th state up to t_final."""
    dt = cfg.resolve_dt(sgrid, ops.vgrid)
    nsteps = max(1, int(math.ceil(t_final / dt - 1e-9)))
    dt = t_final / nsteps
    if cfg.mode == "micromacro" and state.f0 is None:
        state = split_state(state, ops)
    step = step_micromacro if cfg.mode == "micromacro" else step_direct
    yield state
    for k in range(nsteps):
        state = step(state, ops, sgrid, cfg, dt)
        if (k + 1) % every == 0 or k + 1 == nsteps:
            yield state
