"""Post-processing of simulation histories.

Conservation-law residuals, the fluid antiderivative W0 (with the
compact-bump correction for nonzero totals), the terms of the lower-order
energy functional, the integrated theta lemma and the smallness monitor.
Everything streams over time levels: a caller feeds states one by one and
at most three levels are kept.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from kinemix.collision import estimate_spectral_gap
from kinemix.micromacro import (
    C_chi,
    C_ker,
    K_chi,
    Projector,
    ell_direction,
    ell_of,
    flux_matrix,
    min_eig_G,
    theta0,
)
from kinemix.mixture import MacroBasis, MixtureParams, weighted_norm
from kinemix.transport import Operators, SimState, SpatialGrid, mollifier, transport_term


def ddx(a: np.ndarray, sgrid: SpatialGrid) -> np.ndarray:
    """Second-order x-derivative along axis 0: centred inside, one-sided at outflow ends."""
    if sgrid.periodic:
        return (np.roll(a, -1, axis=0) - np.roll(a, 1, axis=0)) / (2 * sgrid.dx)
    return np.gradient(a, sgrid.dx, axis=0, edge_order=2)


def sq_norm_x(f: np.ndarray, sgrid: SpatialGrid, grid, s: float = 0.0) -> float:
    """sum_x ||(1+|v|)^s f(x)||_I^2 dx."""
    return float(np.sum(weighted_norm(f, s, grid) ** 2) * sgrid.dx)


# -------------------------------------------------------- conservation laws

LAWS = ("mass", "momentum1", "momentum_transverse", "energy", "ell")


def _brackets(f1: np.ndarray, basis: MacroBasis, sgrid: SpatialGrid) -> np.ndarray:
    """<v1 d_x f1, basis k>_I per node; equal to the bracket of P0(v1 d_x f1)."""
    v1 = basis.grid.v1
    return basis.coords(v1 * ddx(f1, sgrid))


def law_residuals(c_prev, c_next, dt2, c_mid, f1_mid, params: MixtureParams, basis: MacroBasis,
                  sgrid: SpatialGrid) -> dict:
    """Pointwise residuals of the fluid laws at one time level (arrays over x)."""
    I = params.I
    A = flux_matrix(params)
    dtc = (c_next - c_prev) / dt2
    flux = ddx(c_mid, sgrid) @ A.T
    br = _brackets(f1_mid, basis, sgrid)
    r = dtc + flux + br
    n, snm = params.n, params.total_nm
    ell_r = (r[:, :I] @ np.sqrt(n) + 2 * math.sqrt(params.total_n) / math.sqrt(6) * r[:, I + 3]) \
        / math.sqrt(snm)
    return {
        "mass": r[:, :I],
        "momentum1": r[:, I],
        "momentum_transverse": r[:, I + 1:I + 3],
        "energy": r[:, I + 3],
        "ell": ell_r,
    }


def ell_law_residual(c_prev, c_next, dt2, c_mid, f1_mid, params, basis, sgrid):
    """Direct residual of the ell law: d_t ell + (5/3)(sum n/sum nm) d_x q1 + <v1 d_x f1, phi>."""
    I = params.I
    l_prev = ell_of(c_prev[:, :I], c_prev[:, I + 3], params)
    l_next = ell_of(c_next[:, :I], c_next[:, I + 3], params)
    phi = ell_direction(params, basis)
    br = np.sum(basis.grid.v1 * ddx(f1_mid, sgrid) * phi, axis=(-2, -1)) * basis.grid.w
    coef = 5 / 3 * params.total_n / params.total_nm
    return (l_next - l_prev) / dt2 + coef * ddx(c_mid[:, I], sgrid) + br


def conservation_residuals(history, params: MixtureParams, basis: MacroBasis, sgrid: SpatialGrid,
                           projector: Projector | None = None) -> dict:
    """Max-norm residual of every fluid law at each interior time level.

    Time derivatives are centred differences over the neighbouring levels,
    so the history needs at least three states.  Returns a dict with 't'
    and one array per law.
    """
    proj = projector or Projector(basis)
    out = {k: [] for k in ("t",) + LAWS}
    window = []
    for st in history:
        window.append((st.t, st.f, basis.coords(st.f)))
        if len(window) < 3:
            continue
        (t0, _, c0), (t1, f1_, c1), (t2, _, c2) = window
        res = law_residuals(c0, c2, t2 - t0, c1, proj.P1(f1_), params, basis, sgrid)
        out["t"].append(t1)
        for k in LAWS:
            out[k].append(float(np.abs(res[k]).max()))
        window.pop(0)
    if not out["t"]:
        raise ValueError("conservation residuals need at least three time levels")
    return {k: np.asarray(v) for k, v in out.items()}


def flux_coefficients_quadrature(basis: MacroBasis) -> np.ndarray:
    """<v1 chi^l, chi^k>_I by direct quadrature; compare with flux_matrix."""
    C = basis.chi.reshape(basis.K, -1)
    V = (basis.chi * basis.grid.v1).reshape(basis.K, -1)
    return C @ V.T * basis.grid.w


# -------------------------------------------------------------- antiderivative


@dataclass
class AntiderivativeState:
    """Coordinates of W0 (rho_i, q^k, e antiderivatives, then ell) at each node.

    ``corrected`` is W0 - Psi * F_in when nonzero totals were supplied,
    otherwise identical to ``W``.
    """

    W: np.ndarray
    corrected: np.ndarray
    Psi: np.ndarray | None = None
    F_in: np.ndarray | None = None

    @property
    def active(self) -> bool:
        return self.F_in is not None

    def far_field(self) -> np.ndarray:
        return self.W[-1]

    def corrected_far_field(self) -> np.ndarray:
        return self.corrected[-1]


def cumulative(a: np.ndarray, dx: float) -> np.ndarray:
    """Trapezoid integral from the left edge to each cell centre, plus the right edge.

    Returns N+1 rows: the values at the N centres and, last, at x_hi, where
    it equals the plain cell sum.
    """
    cs = np.cumsum(a, axis=0) * dx
    inner = cs - 0.5 * a * dx
    return np.concatenate([inner, cs[-1:]], axis=0)


def antiderivative_W0(coords: np.ndarray, params: MixtureParams, sgrid: SpatialGrid,
                      totals0: np.ndarray | None = None) -> AntiderivativeState:
    """W0 from fluid coordinates of shape (Nx, I+4); the last row is the value at x_hi.

    With ``totals0`` (the x-integrals at t = 0, conserved in time) the
    correction subtracts Psi(x) * totals0 where Psi is the running integral
    of the fixed mollifier.
    """
    I = params.I
    ell = ell_of(coords[:, :I], coords[:, I + 3], params)
    fields = np.concatenate([coords, ell[:, None]], axis=1)
    W = cumulative(fields, sgrid.dx)
    if totals0 is None or not np.any(totals0 != 0):
        return AntiderivativeState(W, W)
    t = np.asarray(totals0, dtype=float)
    tl = ell_of(t[:I], t[I + 3], params)
    F_in = np.concatenate([t, [tl]])
    Psi = cumulative(mollifier(sgrid), sgrid.dx)
    return AntiderivativeState(W, W - Psi[:, None] * F_in[None, :], Psi, F_in)


# ----------------------------------------------------------------- constants


@dataclass(frozen=True)
class Constants:
    nu0: float
    nubar0: float
    sigma: float
    C_chi: float
    C_ker: float
    K_chi: float
    C_V: float
    lambda2: float
    theta0: float
    theta_used: float
    C_G: float

    @property
    def C2(self) -> float:
        return self.C_chi + self.K_chi

    def as_dict(self) -> dict:
        d = asdict(self)
        d["C2"] = self.C2
        return d


def estimate_C_V(ops: Operators) -> float:
    """Smallest C with ||y|| <= C ||Lbar^{-1} y|| for y in P1(v1 * invariant span)."""
    basis, proj = ops.basis, ops.projector
    Y = proj.P1(basis.chi * basis.grid.v1)
    Ym = Y.reshape(basis.K, -1).T
    U, s, _ = np.linalg.svd(Ym, full_matrices=False)
    U = U[:, s > 1e-8 * s.max()]
    Z = ops.linear.inverse_on_complement(U.T.reshape((-1,) + Y.shape[1:])).reshape(U.shape[1], -1).T
    import scipy.linalg as sla

    return math.sqrt(float(sla.eigh(U.T @ U, Z.T @ Z, eigvals_only=True)[-1]))


def estimate_constants(ops: Operators, sigma: float | None = None) -> Constants:
    """Numerical estimates of every constant the diagnostics report."""
    basis = ops.basis
    params = ops.params
    if sigma is None:
        sigma = estimate_spectral_gap(ops.linear, basis)
    freq = ops.linear.freq
    cv = estimate_C_V(ops)
    lam2 = sigma * freq.nu0 / cv ** 2
    th0 = theta0(params)
    th = min(th0, 1.0 / (8.0 * lam2)) / 2.0
    return Constants(freq.nu0, freq.nubar0, sigma, C_chi(basis), C_ker(basis),
                     K_chi(params, basis, ops.projector), cv, lam2, th0, th, min_eig_G(th, params))


# ------------------------------------------------------------- energy report

SUP_TERMS = ("W0", "f0", "f", "dx_f", "dt_f")
INT_TERMS = ("int_f0", "int_dx_f0", "int_f1_nu", "int_dx_f1_nu", "int_dt_f1_nu")


@dataclass
class EnergyReport:
    """Time series of every term plus the unit-weight initial aggregate."""

    t: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    I0: float = 0.0
    constants: dict = field(default_factory=dict)

    def series(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def max_ratio(self) -> dict:
        if self.I0 == 0:
            return {k: 0.0 for k in SUP_TERMS + INT_TERMS}
        return {k: float(self.series(k).max() / self.I0) for k in SUP_TERMS + INT_TERMS}


class EnergyMonitor:
    """Streaming evaluation of the energy functional terms.

    ``update(state)`` returns the rows completed by that state.  d_t f at a
    level uses the backward difference; at t = 0 it is the right-hand side
    of the equation evaluated on the initial state.  Time integrals use the
    trapezoid rule over recorded levels.
    """

    def __init__(self, ops: Operators, sgrid: SpatialGrid, totals0: np.ndarray | None = None,
                 nonlinear: bool = True):
        self.ops = ops
        self.sgrid = sgrid
        self.totals0 = totals0
        self.nonlinear = nonlinear
        self.report = EnergyReport()
        self._prev = None
        self._acc = dict.fromkeys(INT_TERMS, 0.0)
        self._last_int = None

    def _dt_initial(self, f):
        ops = self.ops
        r = -transport_term(f, ops.vgrid.v1, self.sgrid) + ops.apply_L(f)
        if self.nonlinear and np.any(f):
            r += ops.nonlinear(f, 0.0)
        return r

    def _terms(self, st: SimState, dtf: np.ndarray) -> dict:
        ops, sg, grid = self.ops, self.sgrid, self.ops.vgrid
        proj = ops.projector
        c = ops.basis.coords(st.f)
        W = antiderivative_W0(c, ops.params, sg, self.totals0).corrected[:-1, :-1]
        f0 = proj.P0(st.f)
        f1 = st.f - f0
        dxf = ddx(st.f, sg)
        dxf0 = proj.P0(dxf)
        return {
            "W0": float(np.sum(W ** 2) * sg.dx),
            "f0": sq_norm_x(f0, sg, grid),
            "f": sq_norm_x(st.f, sg, grid),
            "dx_f": sq_norm_x(dxf, sg, grid),
            "dt_f": sq_norm_x(dtf, sg, grid),
            "_f0": sq_norm_x(f0, sg, grid),
            "_dx_f0": sq_norm_x(dxf0, sg, grid),
            "_f1_nu": sq_norm_x(f1, sg, grid, 0.5),
            "_dx_f1_nu": sq_norm_x(dxf - dxf0, sg, grid, 0.5),
            "_dt_f1_nu": sq_norm_x(proj.P1(dtf), sg, grid, 0.5),
            "f1": sq_norm_x(f1, sg, grid),
        }

    def update(self, st: SimState) -> list:
        if self._prev is None:
            dtf = self._dt_initial(st.f)
        else:
            dtf = (st.f - self._prev.f) / (st.t - self._prev.t)
        inst = self._terms(st, dtf)
        if self._last_int is not None:
            tprev, prev = self._last_int
            h = st.t - tprev
            for k in INT_TERMS:
                key = "_" + k[4:]
                self._acc[k] += 0.5 * h * (prev[key] + inst[key])
        self._last_int = (st.t, inst)
        row = {"t": st.t, **{k: inst[k] for k in SUP_TERMS}, **self._acc, "f1": inst["f1"]}
        rep = self.report
        if self._prev is None:
            rep.I0 = sum(inst[k] for k in SUP_TERMS)
        lhs = sum(row[k] for k in SUP_TERMS + INT_TERMS)
        row["lhs"] = lhs
        row["ratio"] = lhs / rep.I0 if rep.I0 > 0 else 0.0
        rep.t.append(st.t)
        rep.rows.append(row)
        self._prev = st
        return [row]


def energy_report(history, ops: Operators, sgrid: SpatialGrid, constants: Constants | None = None,
                  totals0=None, nonlinear: bool = True) -> EnergyReport:
    mon = EnergyMonitor(ops, sgrid, totals0, nonlinear)
    for st in history:
        mon.update(st)
    if constants is not None:
        mon.report.constants = constants.as_dict()
    return mon.report


# ------------------------------------------------------- integrated lemma


@dataclass
class Lemma44Report:
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    theta: float

    def holds(self, tol_rel: float = 1e-3) -> bool:
        scale = max(float(np.abs(self.lhs).max()), 1e-300)
        return bool(np.all(self.lhs >= self.rhs - tol_rel * scale))


class Lemma44Monitor:
    """Running time integrals for the integrated theta lemma.

    lhs(T) = int int ||P1(v1 d_x f0)||^2
    rhs(T) = C_G int int ||d_x f0||^2 - theta C2 int int ||d_x f1||^2
             + 2 theta [int q1 d_x ell dx]_0^T
    """

    def __init__(self, theta: float, ops: Operators, sgrid: SpatialGrid, C2: float):
        th0 = theta0(ops.params)
        if not 0 < theta < th0:
            raise ValueError(f"theta must lie in (0, {th0}), got {theta}")
        self.theta, self.ops, self.sgrid, self.C2 = theta, ops, sgrid, C2
        self.CG = min_eig_G(theta, ops.params)
        self._last = None
        self._I = np.zeros(3)
        self._b0 = None
        self.t, self.lhs, self.rhs = [], [], []

    def _inst(self, st: SimState):
        ops, sg = self.ops, self.sgrid
        proj, grid, I = ops.projector, ops.vgrid, ops.params.I
        dxf = ddx(st.f, sg)
        dxf0 = proj.P0(dxf)
        a = sq_norm_x(proj.P1(grid.v1 * dxf0), sg, grid)
        b = sq_norm_x(dxf0, sg, grid)
        c = sq_norm_x(dxf - dxf0, sg, grid)
        co = ops.basis.coords(st.f)
        ell = ell_of(co[:, :I], co[:, I + 3], ops.params)
        bd = float(np.sum(co[:, I] * ddx(ell, sg)) * sg.dx)
        return np.array([a, b, c]), bd

    def update(self, st: SimState):
        vals, bd = self._inst(st)
        if self._last is None:
            self._b0 = bd
        else:
            t0, v0 = self._last
            self._I += 0.5 * (st.t - t0) * (v0 + vals)
        self._last = (st.t, vals)
        th = self.theta
        rhs = self.CG * self._I[1] - th * self.C2 * self._I[2] + 2 * th * (bd - self._b0)
        self.t.append(st.t)
        self.lhs.append(self._I[0])
        self.rhs.append(rhs)

    def report(self) -> Lemma44Report:
        return Lemma44Report(np.array(self.t), np.array(self.lhs), np.array(self.rhs), self.theta)


def lemma44_integrated(history, theta: float, ops: Operators, sgrid: SpatialGrid,
                       C2: float) -> Lemma44Report:
    mon = Lemma44Monitor(theta, ops, sgrid, C2)
    for st in history:
        mon.update(st)
    return mon.report()


# ------------------------------------------------------------ smallness


@dataclass
class SmallnessMonitor:
    """Running sups of the pointwise smallness combinations.

    sup0: ||W0|| + ||f0|| + ||(1+|v|)^{1/2} f1|| over (t, x).
    sup2: the same plus ||d_x f||, ||d_xx f|| and ||d_t f|| (derivatives up to order two).
    """

    epsilon: float | None = None
    sup0: float = 0.0
    sup2: float = 0.0
    violated_at: float | None = None
    history: list = field(default_factory=list)


def smallness_monitor_update(mon: SmallnessMonitor, state: SimState, ops: Operators,
                             sgrid: SpatialGrid, W: np.ndarray, dtf: np.ndarray | None = None
                             ) -> SmallnessMonitor:
    """W holds the W0 coordinates per node (the fluid basis is orthonormal)."""
    proj, grid = ops.projector, ops.vgrid
    f0 = proj.P0(state.f)
    f1 = state.f - f0
    wn = np.sqrt(np.sum(W[:, : ops.basis.K] ** 2, axis=1))
    base = wn + weighted_norm(f0, 0.0, grid) + weighted_norm(f1, 0.5, grid)
    dx = ddx(state.f, sgrid)
    extra = weighted_norm(dx, 0.0, grid) + weighted_norm(ddx(dx, sgrid), 0.0, grid)
    if dtf is not None:
        extra = extra + weighted_norm(dtf, 0.0, grid)
    s0 = float(base.max())
    s2 = float((base + extra).max())
    mon.sup0 = max(mon.sup0, s0)
    mon.sup2 = max(mon.sup2, s2)
    mon.history.append((state.t, mon.sup0, mon.sup2))
    if mon.epsilon is not None and mon.violated_at is None and mon.sup0 > mon.epsilon:
        mon.violated_at = state.t
    return mon
