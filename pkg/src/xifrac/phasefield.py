"""Model physics for AT1 anti-plane fracture with an adaptive length scale.

The three-field energy couples the out-of-plane displacement ``u``, the
phase field ``v`` (1 intact, 0 broken) and the regularization length
``xi``, which is either one global scalar or a per-cell field.  ``xi``
carries penalty parameters ``zeta`` (lower bound) and ``alpha`` (upper
bound); closed-form optimality conditions are evaluated here together
with the two coupled weak-form systems, calibration helpers,
irreversibility bookkeeping and energy accounting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import fem
from .fem import GAUSS2, ScalarField, SparseSystem
from .mesh import Mesh

log = logging.getLogger(__name__)

#: AT1 dissipation normalization so diffuse surface energy matches G_c.
AT1_NORMALIZATION = 8.0 / 3.0


@dataclass(frozen=True)
class MaterialParams:
    mu: float = 80.8
    g_c: float = 2.7
    c_v: float = AT1_NORMALIZATION
    eta: float = 1e-10

    def __post_init__(self):
        if self.mu <= 0 or self.g_c <= 0 or self.c_v <= 0:
            raise ValueError("mu, g_c and c_v must be positive")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")


@dataclass(frozen=True)
class RegularizationParams:
    """Length-scale bounds, penalties and the update mode.

    ``mode`` is one of ``fixed`` (xi_fixed held constant), ``global``
    (one optimal scalar per update) or ``field`` (per-cell values).
    """

    zeta: float = 9.36
    alpha: float = 493.75
    mode: str = "fixed"
    xi_fixed: float = 0.13687
    xi_min: float = 0.011
    xi_max: float = 0.15
    xi_refine: float = 0.03

    def __post_init__(self):
        if self.mode not in ("fixed", "global", "field"):
            raise ValueError(f"unknown regularization mode {self.mode!r}")
        if self.zeta < 0 or self.alpha <= 0:
            raise ValueError("zeta must be >= 0 and alpha > 0")
        if not 0 < self.xi_min < self.xi_max:
            raise ValueError("need 0 < xi_min < xi_max")

    def clamp(self, xi):
        return np.clip(xi, self.xi_min, self.xi_max)


@dataclass
class RegularizationState:
    """Current xi: one scalar (fixed/global) or one value per cell (field)."""

    mode: str
    value: float | np.ndarray

    def at_cells(self, mesh: Mesh) -> np.ndarray:
        if np.ndim(self.value) == 0:
            return np.full(mesh.n_cells, float(self.value))
        value = np.asarray(self.value, dtype=float)
        if value.shape != (mesh.n_cells,):
            raise ValueError(
                f"xi field has {value.shape[0]} entries for a mesh with "
                f"{mesh.n_cells} cells")
        return value

    def stats(self, mesh: Mesh):
        cells = self.at_cells(mesh)
        return float(cells.min()), float(cells.max()), float(cells.mean())


@dataclass
class CrackMask:
    """Nodes where v is pinned to zero; grows monotonically."""

    nodes: set[int] = field(default_factory=set)

    def __len__(self):
        return len(self.nodes)

    def union(self, other) -> "CrackMask":
        extra = other.nodes if isinstance(other, CrackMask) else set(other)
        return CrackMask(self.nodes | extra)

    def as_array(self) -> np.ndarray:
        return np.array(sorted(self.nodes), dtype=int)


@dataclass
class EnergyRecord:
    t: float
    strain: float
    surface: float
    penalty: float
    total: float
    xi_min: float
    xi_max: float
    xi_mean: float
    cells: int
    stag_iters: int = 0
    converged: bool = True

    def __post_init__(self):
        parts = self.strain + self.surface + self.penalty
        scale = max(abs(self.total), 1.0)
        if abs(self.total - parts) > 1e-10 * scale:
            raise ValueError("energy components do not sum to the total")


def degradation(v, eta: float):
    """Stiffness multiplier ``(1 - eta) v^2 + eta``."""
    return (1.0 - eta) * np.asarray(v) ** 2 + eta


def assemble_displacement(mesh: Mesh, v: ScalarField, mat: MaterialParams,
                          bc: dict[int, float]) -> SparseSystem:
    """Degraded shear system for u with Dirichlet data ``bc``."""
    weight = mat.mu * degradation(fem.field_at_qp(v), mat.eta)
    sys = fem.assemble_weighted_laplace(mesh, weight)
    return fem.apply_dirichlet(sys, bc)


def _xi_at_qp(mesh, xi: RegularizationState, nq: int):
    return np.repeat(xi.at_cells(mesh)[:, None], nq, axis=1)


def assemble_phase(mesh: Mesh, u: ScalarField, xi: RegularizationState,
                   mat: MaterialParams,
                   bc: dict[int, float] | None = None) -> SparseSystem:
    """Phase-field system: reaction from the strain energy, xi diffusion.

    Matrix = mass weighted by ``mu (1-eta) |grad u|^2`` plus stiffness
    weighted by ``2 G_c xi / c_v``; load density ``G_c / (c_v xi)``.
    """
    xi_qp = _xi_at_qp(mesh, xi, len(GAUSS2.weights))
    if np.any(xi_qp <= 0.0):
        raise ValueError("xi must be strictly positive")
    grad_u = fem.grad_at_qp(u)
    drive = mat.mu * (1.0 - mat.eta) * np.sum(grad_u ** 2, axis=2)
    reaction = fem.assemble_weighted_mass(mesh, drive)
    diffusion = fem.assemble_weighted_laplace(
        mesh, 2.0 * mat.g_c * xi_qp / mat.c_v)
    rhs = fem.assemble_load(mesh, mat.g_c / (mat.c_v * xi_qp))
    sys = fem.combine(reaction, diffusion, rhs)
    if bc:
        sys = fem.apply_dirichlet(sys, bc)
    return sys


def xi_global(mesh: Mesh, v: ScalarField, mat: MaterialParams,
              reg: RegularizationParams) -> float:
    """Globally optimal xi from the stationarity of the three-field energy."""
    ratio = mat.g_c / mat.c_v
    v_qp = fem.field_at_qp(v)
    grad_v = fem.grad_at_qp(v)
    numer = ratio * fem.integrate(mesh, 1.0 - v_qp + reg.zeta)
    denom = (ratio * fem.integrate(mesh, np.sum(grad_v ** 2, axis=2))
             + reg.alpha * fem.integrate(mesh, 1.0))
    return float(reg.clamp(np.sqrt(numer / denom)))


def xi_pointwise(v, grad_sq, mat: MaterialParams,
                 reg: RegularizationParams):
    """Pointwise optimal xi from local values of v and |grad v|^2, clamped."""
    ratio = mat.g_c / mat.c_v
    numer = ratio * (1.0 - np.asarray(v) + reg.zeta)
    denom = ratio * np.asarray(grad_sq) + reg.alpha
    return reg.clamp(np.sqrt(np.maximum(numer, 0.0) / denom))


def xi_field(mesh: Mesh, v: ScalarField, mat: MaterialParams,
             reg: RegularizationParams) -> np.ndarray:
    """Per-cell xi: mean of the pointwise formula over the quadrature points."""
    v_qp = fem.field_at_qp(v)
    grad_sq = np.sum(fem.grad_at_qp(v) ** 2, axis=2)
    return xi_pointwise(v_qp, grad_sq, mat, reg).mean(axis=1)


def calibrate_alpha(h: float, g_c: float, c_v: float = AT1_NORMALIZATION
                    ) -> float:
    """Upper-bound penalty from the xi = 2h crack-zone ansatz."""
    if h <= 0:
        raise ValueError("h must be positive")
    return 3.0 * g_c / (96.0 * c_v * h * h)


def calibrate_zeta(h: float, c_v: float, alpha: float, g_c: float) -> float:
    """Lower-bound penalty from the xi = 10h far-field ansatz."""
    if min(h, c_v, alpha, g_c) <= 0:
        raise ValueError("all calibration inputs must be positive")
    return 100.0 * h * h * c_v * alpha / g_c


def enforce_irreversibility(v_new: ScalarField, v_prev: ScalarField,
                            mask: CrackMask, xi_cr: float
                            ) -> tuple[ScalarField, CrackMask]:
    """Clamp v to [0,1], forbid healing, and pin sub-threshold nodes.

    Nodes dropping below ``xi_cr`` are set to zero and join the mask
    permanently; the mask only grows.
    """
    if v_new.mesh is not v_prev.mesh:
        raise ValueError("fields live on different meshes")
    v = np.clip(v_new.values, 0.0, 1.0)
    v = np.minimum(v, v_prev.values)
    pinned = set(np.flatnonzero(v < xi_cr).tolist())
    new_mask = mask.union(pinned)
    if new_mask.nodes:
        v[new_mask.as_array()] = 0.0
    return ScalarField(v_new.mesh, v), new_mask


def crack_set(v: ScalarField, xi_cr: float) -> CrackMask:
    """Nodes with ``v <= xi_cr``."""
    return CrackMask(set(np.flatnonzero(v.values <= xi_cr).tolist()))


def energies(mesh: Mesh, u: ScalarField, v: ScalarField,
             xi: RegularizationState, mat: MaterialParams,
             reg: RegularizationParams, *, t: float = 0.0,
             stag_iters: int = 0, converged: bool = True) -> EnergyRecord:
    """Strain / surface / penalty split of the three-field energy.

    The ``zeta/xi`` and ``alpha xi`` bound penalties are logged separately
    from the surface term so the surface energy starts near zero for an
    intact body.
    """
    nq = len(GAUSS2.weights)
    xi_qp = _xi_at_qp(mesh, xi, nq)
    v_qp = fem.field_at_qp(v)
    grad_u_sq = np.sum(fem.grad_at_qp(u) ** 2, axis=2)
    grad_v_sq = np.sum(fem.grad_at_qp(v) ** 2, axis=2)
    ratio = mat.g_c / mat.c_v

    strain = 0.5 * mat.mu * fem.integrate(
        mesh, degradation(v_qp, mat.eta) * grad_u_sq)
    surface = ratio * fem.integrate(
        mesh, (1.0 - v_qp) / xi_qp + xi_qp * grad_v_sq)
    penalty = fem.integrate(mesh, ratio * reg.zeta / xi_qp + reg.alpha * xi_qp)
    xmin, xmax, xmean = xi.stats(mesh)
    return EnergyRecord(t=t, strain=strain, surface=surface, penalty=penalty,
                        total=strain + surface + penalty, xi_min=xmin,
                        xi_max=xmax, xi_mean=xmean, cells=mesh.n_cells,
                        stag_iters=stag_iters, converged=converged)


def initial_crack(mesh: Mesh, y_tip: float = 0.5
                  ) -> tuple[ScalarField, CrackMask]:
    """Seed v = 0 on the edge crack ``x = 0.5, y in [y_tip, 1]``.

    A node is seeded when it lies within half its local cell size of the
    segment.  ``y_tip = 1`` gives an intact body.
    """
    if not 0.0 <= y_tip <= 1.0:
        raise ValueError("y_tip must lie inside the closed unit interval")
    v = np.ones(mesh.n_vertices)
    if y_tip >= 1.0:
        return ScalarField(mesh, v), CrackMask()

    local_h = np.full(mesh.n_vertices, np.inf)
    for c in range(mesh.n_cells):
        ids = mesh.cell_vertices[c]
        local_h[ids] = np.minimum(local_h[ids], mesh.cell_h[c])
    x = mesh.vertex_coords[:, 0]
    y = mesh.vertex_coords[:, 1]
    on_seed = (np.abs(x - 0.5) <= 0.5 * local_h + 1e-15) & \
              (y >= y_tip - 0.5 * local_h - 1e-15)
    v[on_seed] = 0.0
    return ScalarField(mesh, v), CrackMask(set(np.flatnonzero(on_seed).tolist()))


def transfer_regularization(state: RegularizationState, mesh: Mesh,
                            v: ScalarField, mat: MaterialParams,
                            reg: RegularizationParams) -> RegularizationState:
    """Recompute xi on a new mesh (field mode); scalars pass through."""
    if state.mode == "field":
        return RegularizationState("field", xi_field(mesh, v, mat, reg))
    return replace(state)
