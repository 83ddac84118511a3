"""Species parameters, Maxwellians, the velocity inner product and the invariant basis.

Units are fixed by kT = 1 and zero bulk velocity.  A species field is an
array of shape ``(I, Nv)``; leading batch axes are allowed wherever the
docstring says ``(..., I, Nv)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

SUPPORTED_WEIGHT_EXPONENTS = (-0.5, 0.0, 0.5, 1.0)


@dataclass(frozen=True)
class MixtureParams:
    """Masses ``m``, equilibrium densities ``n`` and hard-sphere coefficients ``beta``."""

    m: np.ndarray
    n: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.m, dtype=float))
        n = np.atleast_1d(np.asarray(self.n, dtype=float))
        I = m.size
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim == 0:
            beta = np.full((I, I), float(beta))
        if m.ndim != 1 or n.shape != m.shape:
            raise ValueError(f"m and n must be 1-d of equal length, got {m.shape} and {n.shape}")
        if beta.shape != (I, I):
            raise ValueError(f"beta must be {I}x{I}, got {beta.shape}")
        if not (np.all(m > 0) and np.all(n > 0) and np.all(beta > 0)):
            raise ValueError("masses, densities and beta must be strictly positive")
        if not np.all(np.isfinite(beta)) or not np.allclose(beta, beta.T, rtol=0, atol=0):
            raise ValueError("beta must be symmetric")
        for name, val in (("m", m), ("n", n), ("beta", beta)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def I(self) -> int:
        return self.m.size

    @property
    def total_n(self) -> float:
        return float(self.n.sum())

    @property
    def total_nm(self) -> float:
        return float((self.n * self.m).sum())

    def mass_weights(self, max_weight: int = 64) -> np.ndarray | None:
        """Smallest integers proportional to the masses, or None if they are incommensurate."""
        ratios = [Fraction(float(mi / self.m[0])).limit_denominator(max_weight) for mi in self.m]
        if any(abs(float(r) * self.m[0] - mi) > 1e-12 * mi for r, mi in zip(ratios, self.m)):
            return None
        den = math.lcm(*(r.denominator for r in ratios))
        mu = np.array([int(r * den) for r in ratios], dtype=np.int64)
        mu //= math.gcd(*mu.tolist())
        if mu.max() > max_weight:
            return None
        return mu

    def as_dict(self) -> dict:
        return {"m": self.m.tolist(), "n": self.n.tolist(), "beta": self.beta.tolist()}


def default_extent(params: MixtureParams) -> float:
    """Cutoff radius 4*sqrt(2)*max(m^-1/2) + 2: the lightest species is resolved to ~6 std devs."""
    return 4.0 * float(np.max(params.m ** -0.5)) * math.sqrt(2.0) + 2.0


def default_resolution(params: MixtureParams, extent: float, floor: int = 24) -> int:
    """Nodes per axis so that h*sqrt(max m) <= 0.9, never below ``floor``.

    The midpoint rule on a Gaussian of variance 1/m has aliasing error of
    order exp(-2 pi^2 / (m h^2)); 0.9 keeps fourth moments near 1e-8.
    """
    need = 2 * math.ceil(extent * math.sqrt(float(params.m.max())) / 0.9)
    return max(floor, need)


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform midpoint grid on [-R, R]^3 with ``n`` nodes per axis.

    Node coordinates are ``h * J / 2`` for odd integers J in [-(n-1), n-1],
    so the node set is closed under negation and every weight equals h^3.
    The integer labels ``J`` are what the collision model uses to find
    exact on-grid collisions.
    """

    n: int
    R: float
    J: np.ndarray = field(init=False, repr=False)
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ValueError(f"nodes per axis must be even and >= 2, got {self.n}")
        if not self.R > 0:
            raise ValueError("extent must be positive")
        ax = np.arange(-(self.n - 1), self.n, 2, dtype=np.int64)
        J = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
        nodes = J * (self.h / 2)
        J.setflags(write=False)
        nodes.setflags(write=False)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def default(cls, params: MixtureParams) -> "VelocityGrid":
        R = default_extent(params)
        return cls(default_resolution(params, R), R)

    @property
    def h(self) -> float:
        return 2.0 * self.R / self.n

    @property
    def w(self) -> float:
        """The common quadrature weight h^3."""
        return self.h ** 3

    @property
    def Nv(self) -> int:
        return self.n ** 3

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.Nv, self.w)

    @property
    def speed(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    @property
    def v1(self) -> np.ndarray:
        return self.nodes[:, 0]

    def mirror_index(self) -> np.ndarray:
        """Index of -v for every node."""
        return np.arange(self.Nv)[::-1]

    def save(self, path) -> None:
        np.savez(Path(path), kind="kinemix-velocity-grid", version=1, n=self.n, R=self.R)

    @classmethod
    def load(cls, path) -> "VelocityGrid":
        with np.load(Path(path)) as z:
            if str(z["kind"]) != "kinemix-velocity-grid":
                raise ValueError(f"{path} is not a velocity grid file")
            return cls(int(z["n"]), float(z["R"]))


def maxwellian(params: MixtureParams, grid: VelocityGrid) -> np.ndarray:
    """M_i(v) = (m_i / 2 pi)^{3/2} exp(-m_i |v|^2 / 2), shape (I, Nv)."""
    v2 = np.sum(grid.nodes ** 2, axis=1)
    m = params.m[:, None]
    return (m / (2 * np.pi)) ** 1.5 * np.exp(-m * v2[None, :] / 2)


def equilibrium_root(params: MixtureParams, grid: VelocityGrid) -> np.ndarray:
    """(n_i M_i)^{1/2}, the weight that maps perturbations to distributions."""
    return np.sqrt(params.n[:, None] * maxwellian(params, grid))


def inner_product_I(f: np.ndarray, g: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Sum over species and nodes of w f g; batch axes in front are kept."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape or f.shape[-1] != grid.Nv:
        raise ValueError(f"shape mismatch: {f.shape} vs {g.shape} on a grid with {grid.Nv} nodes")
    return np.sum(f * g, axis=(-2, -1)) * grid.w


def weighted_norm(f: np.ndarray, s: float, grid: VelocityGrid) -> np.ndarray:
    """||(1+|v|)^s f||_I for s in {-1/2, 0, 1/2, 1}."""
    if float(s) not in SUPPORTED_WEIGHT_EXPONENTS:
        raise ValueError(f"unsupported exponent {s}; use one of {SUPPORTED_WEIGHT_EXPONENTS}")
    f = np.asarray(f)
    if f.shape[-1] != grid.Nv:
        raise ValueError(f"field has {f.shape[-1]} nodes, grid has {grid.Nv}")
    wt = (1.0 + grid.speed) ** (2 * s)
    return np.sqrt(np.sum(f * f * wt, axis=(-2, -1)) * grid.w)


@dataclass(frozen=True)
class MacroBasis:
    """The I+4 vectors (nM)^{1/2} chi^k: species masses, momenta x/y/z, energy."""

    chi: np.ndarray
    labels: tuple
    grid: VelocityGrid = field(repr=False)
    params: MixtureParams = field(repr=False)

    @property
    def K(self) -> int:
        return self.chi.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """Basis as columns of an (I*Nv, I+4) matrix."""
        return self.chi.reshape(self.K, -1).T

    def gram(self) -> np.ndarray:
        C = self.chi.reshape(self.K, -1)
        return C @ C.T * self.grid.w

    def coords(self, f: np.ndarray) -> np.ndarray:
        """<chi^k, f>_I for each k; f may carry batch axes in front."""
        f = np.asarray(f)
        return np.tensordot(f, self.chi, axes=([-2, -1], [1, 2])) * self.grid.w

    def combine(self, c: np.ndarray) -> np.ndarray:
        """Sum_k c_k chi^k."""
        return np.tensordot(np.asarray(c), self.chi, axes=([-1], [0]))


def basis_labels(I: int) -> tuple:
    return tuple([f"rho{i + 1}" for i in range(I)] + ["q1", "q2", "q3", "e"])


def build_basis(params: MixtureParams, grid: VelocityGrid) -> MacroBasis:
    if np.any(params.n <= 0):
        raise ValueError("densities must be positive")
    I, Nv = params.I, grid.Nv
    root = equilibrium_root(params, grid)
    v = grid.nodes
    v2 = np.sum(v ** 2, axis=1)
    m = params.m[:, None]
    chi = np.zeros((I + 4, I, Nv))
    for i in range(I):
        chi[i, i] = root[i] / math.sqrt(params.n[i])
    for k in range(3):
        chi[I + k] = m * v[None, :, k] * root / math.sqrt(params.total_nm)
    chi[I + 3] = (m * v2[None, :] - 3.0) * root / math.sqrt(6.0 * params.total_n)
    chi.setflags(write=False)
    return MacroBasis(chi, basis_labels(I), grid, params)
