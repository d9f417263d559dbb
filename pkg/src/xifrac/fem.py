"""Bilinear (Q1) finite elements on quadtree meshes.

Assembly is vectorized over cells: every cell is an axis-aligned square,
so the reference-to-physical map is a pure scaling and shape data can be
tabulated once per quadrature rule.  Hanging-node constraints are
condensed through the prolongation matrix ``T`` (master-side
accumulation), never by post-hoc row edits.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh

log = logging.getLogger(__name__)


class LinearSolveError(RuntimeError):
    """Linear solver failed to meet the residual contract."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor-product Gauss rule on the reference square [0,1]^2."""

    points: np.ndarray   # (nq, 2)
    weights: np.ndarray  # (nq,), summing to 1

    @classmethod
    def gauss(cls, n: int) -> "QuadratureRule":
        x, w = np.polynomial.legendre.leggauss(n)
        x = 0.5 * (x + 1.0)
        w = 0.5 * w
        pts = np.array([(a, b) for a in x for b in x])
        wts = np.array([wa * wb for wa in w for wb in w])
        return cls(pts, wts)


GAUSS2 = QuadratureRule.gauss(2)


def shape_eval(s: float, t: float):
    """Values and reference gradients of the 4 bilinear basis functions.

    Node order matches cell connectivity: (0,0), (1,0), (1,1), (0,1).
    """
    values = np.array([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])
    grads = np.array([
        [-(1 - t), -(1 - s)],
        [1 - t, -s],
        [t, s],
        [-t, 1 - s],
    ])
    return values, grads


_tab_cache: dict[int, tuple] = {}


def _tabulate(rule: QuadratureRule):
    cached = _tab_cache.get(id(rule))
    if cached is not None:
        return cached
    vals = np.empty((len(rule.weights), 4))
    grads = np.empty((len(rule.weights), 4, 2))
    for q, (s, t) in enumerate(rule.points):
        vals[q], grads[q] = shape_eval(s, t)
    # Partition of unity / gradient consistency at the tabulated points.
    assert np.all(np.abs(vals.sum(axis=1) - 1.0) <= 1e-14)
    assert np.all(np.abs(grads.sum(axis=1)) <= 1e-14)
    _tab_cache[id(rule)] = (vals, grads)
    return vals, grads


@dataclass
class ScalarField:
    """Nodal coefficients of a piecewise-bilinear function on a mesh."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_vertices,):
            raise ValueError(
                f"field length {self.values.shape} does not match mesh "
                f"{self.mesh.id} with {self.mesh.n_vertices} vertices")

    @property
    def mesh_id(self) -> int:
        return self.mesh.id

    def copy(self) -> "ScalarField":
        return ScalarField(self.mesh, self.values.copy())


def constant_field(mesh: Mesh, value: float) -> ScalarField:
    return ScalarField(mesh, np.full(mesh.n_vertices, float(value)))


@dataclass
class SparseSystem:
    """Symmetric sparse system with constraints condensed.

    ``dirichlet`` records prescribed nodal values once
    :func:`apply_dirichlet` has run.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    mesh: Mesh
    dirichlet: dict[int, float] = field(default_factory=dict)


def quadrature_points(mesh: Mesh, rule: QuadratureRule = GAUSS2) -> np.ndarray:
    """Physical quadrature point coordinates, shape (n_cells, nq, 2)."""
    return (mesh.cell_origin[:, None, :]
            + mesh.cell_h[:, None, None] * rule.points[None, :, :])


def field_at_qp(field: ScalarField, rule: QuadratureRule = GAUSS2) -> np.ndarray:
    """Field values at quadrature points, shape (n_cells, nq)."""
    vals, _ = _tabulate(rule)
    nodal = field.values[field.mesh.cell_vertices]  # (nc, 4)
    return nodal @ vals.T


def grad_at_qp(field: ScalarField, rule: QuadratureRule = GAUSS2) -> np.ndarray:
    """Field gradients at quadrature points, shape (n_cells, nq, 2)."""
    _, grads = _tabulate(rule)
    nodal = field.values[field.mesh.cell_vertices]
    g = np.einsum("ca,qad->cqd", nodal, grads)
    return g / field.mesh.cell_h[:, None, None]


def _coefficient(mesh, w, rule):
    """Normalize a coefficient to an array of shape (n_cells, nq)."""
    nq = len(rule.weights)
    if callable(w):
        xy = quadrature_points(mesh, rule)
        out = np.asarray(w(xy[..., 0], xy[..., 1]), dtype=float)
        return np.broadcast_to(out, (mesh.n_cells, nq))
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        return np.full((mesh.n_cells, nq), float(w))
    if w.shape == (mesh.n_cells,):
        return np.repeat(w[:, None], nq, axis=1)
    if w.shape == (mesh.n_cells, nq):
        return w
    raise ValueError(f"coefficient shape {w.shape} not understood")


def _scatter(mesh, local):
    """Accumulate (n_cells, 4, 4) local matrices into a global CSR matrix."""
    conn = mesh.cell_vertices
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    a = sp.coo_matrix((local.ravel(), (rows, cols)),
                      shape=(mesh.n_vertices, mesh.n_vertices))
    return a.tocsr()


def _condense(mesh, matrix, rhs):
    """Fold hanging rows/columns onto masters; hanging dofs become identity."""
    cons = mesh.constraints
    if len(cons) == 0:
        return matrix, rhs
    T = cons.matrix()
    matrix = (T.T @ matrix @ T).tocsr()
    rhs = T.T @ rhs
    hang = cons.hanging
    ident = sp.coo_matrix((np.ones(len(hang)), (hang, hang)),
                          shape=matrix.shape)
    matrix = (matrix + ident).tocsr()
    rhs[hang] = 0.0
    return matrix, rhs


def assemble_weighted_laplace(mesh: Mesh, weight,
                              rule: QuadratureRule = GAUSS2) -> SparseSystem:
    """System with entries ``sum_K int_K w grad(z_i).grad(z_j)``.

    The weight must be strictly positive at every quadrature point.
    """
    w = _coefficient(mesh, weight, rule)
    if np.any(w <= 0.0):
        raise ValueError("weighted Laplace requires a strictly positive weight")
    _, grads = _tabulate(rule)
    # Physical gradient scaling 1/h^2 cancels the area factor h^2 in 2D.
    gg = np.einsum("qad,qbd->qab", grads, grads)
    local = np.einsum("q,cq,qab->cab", rule.weights, w, gg)
    matrix, rhs = _condense(mesh, _scatter(mesh, local),
                            np.zeros(mesh.n_vertices))
    return SparseSystem(matrix, rhs, mesh)


def assemble_weighted_mass(mesh: Mesh, weight,
                           rule: QuadratureRule = GAUSS2) -> SparseSystem:
    """System with entries ``sum_K int_K w z_i z_j`` (w >= 0 allowed)."""
    w = _coefficient(mesh, weight, rule)
    vals, _ = _tabulate(rule)
    nn = np.einsum("qa,qb->qab", vals, vals)
    area = mesh.cell_h ** 2
    local = np.einsum("q,cq,c,qab->cab", rule.weights, w, area, nn)
    matrix, rhs = _condense(mesh, _scatter(mesh, local),
                            np.zeros(mesh.n_vertices))
    return SparseSystem(matrix, rhs, mesh)


def assemble_load(mesh: Mesh, density,
                  rule: QuadratureRule = GAUSS2) -> np.ndarray:
    """Right-hand side ``b_i = sum_K int_K rho z_i`` with constraints folded."""
    rho = _coefficient(mesh, density, rule)
    vals, _ = _tabulate(rule)
    area = mesh.cell_h ** 2
    local = np.einsum("q,cq,c,qa->ca", rule.weights, rho, area, vals)
    b = np.zeros(mesh.n_vertices)
    np.add.at(b, mesh.cell_vertices.ravel(), local.ravel())
    cons = mesh.constraints
    if len(cons):
        b = cons.matrix().T @ b
        b[cons.hanging] = 0.0
    return b


def combine(a: SparseSystem, b: SparseSystem, rhs: np.ndarray | None = None
            ) -> SparseSystem:
    """Sum two systems assembled on the same mesh (hanging identity kept once)."""
    if a.mesh is not b.mesh:
        raise ValueError("systems live on different meshes")
    matrix = (a.matrix + b.matrix).tocsr()
    hang = a.mesh.constraints.hanging
    if hang:
        ident = sp.coo_matrix((np.ones(len(hang)), (hang, hang)),
                              shape=matrix.shape)
        matrix = (matrix - ident).tocsr()
    combined_rhs = a.rhs + b.rhs if rhs is None else np.array(rhs, dtype=float)
    return SparseSystem(matrix, combined_rhs, a.mesh)


def apply_dirichlet(sys: SparseSystem, bc: dict[int, float]) -> SparseSystem:
    """Symmetric elimination of prescribed nodal values.

    Known columns are moved to the right-hand side, constrained rows and
    columns are replaced by unit diagonals, and the solution reproduces
    the prescribed values exactly.
    """
    for node, value in bc.items():
        if node in sys.dirichlet and sys.dirichlet[node] != value:
            raise ValueError(
                f"node {node} prescribed twice with conflicting values "
                f"{sys.dirichlet[node]} and {value}")
    nodes = np.array(sorted(bc), dtype=int)
    if nodes.size == 0:
        return sys
    n = sys.matrix.shape[0]
    x0 = np.zeros(n)
    x0[nodes] = [bc[i] for i in nodes]
    rhs = sys.rhs - sys.matrix @ x0

    keep = np.ones(n)
    keep[nodes] = 0.0
    P = sp.diags(keep)
    fix = sp.coo_matrix((np.ones(nodes.size), (nodes, nodes)), shape=(n, n))
    matrix = (P @ sys.matrix @ P + fix).tocsr()
    rhs[nodes] = x0[nodes]
    return SparseSystem(matrix, rhs, sys.mesh, {**sys.dirichlet, **bc})


def _pcg(A, b, tol, max_iter):
    """Conjugate gradients with a Jacobi preconditioner."""
    n = b.shape[0]
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        raise LinearSolveError("nonpositive diagonal in SPD solve", np.inf)
    minv = 1.0 / diag
    x = np.zeros(n)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0.0, 0
    z = minv * r
    p = z.copy()
    rz = r @ z
    for k in range(1, max_iter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r)
        if res <= tol * bnorm:
            return x, res / bnorm, k
        z = minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, np.linalg.norm(r) / bnorm, max_iter


def solve_spd(sys: SparseSystem, tol: float = 1e-10, max_iter: int = 20000,
              method: str = "pcg") -> np.ndarray:
    """Solve the condensed SPD system to ``||Ax-b|| <= tol ||b||``.

    ``method`` is ``"pcg"`` (Jacobi-preconditioned CG) or ``"direct"``
    (sparse LU); both are checked against the residual contract.
    """
    A, b = sys.matrix, sys.rhs
    if method == "direct":
        x = spla.splu(A.tocsc()).solve(b)
        bnorm = np.linalg.norm(b)
        rel = np.linalg.norm(A @ x - b) / bnorm if bnorm > 0 else 0.0
        if not np.isfinite(rel) or rel > max(tol, 1e-8):
            raise LinearSolveError(
                f"direct solve residual {rel:.3e} exceeds tolerance", rel)
        return x
    if method != "pcg":
        raise ValueError(f"unknown solver method {method!r}")
    x, rel, iters = _pcg(A, b, tol, max_iter)
    if rel > tol:
        raise LinearSolveError(
            f"PCG stopped after {iters} iterations with relative residual "
            f"{rel:.3e} > {tol:.1e}", rel)
    return x


def solve_field(sys: SparseSystem, tol: float = 1e-10,
                max_iter: int = 20000, method: str = "pcg") -> ScalarField:
    """Solve and return a ScalarField with hanging values filled in."""
    x = solve_spd(sys, tol=tol, max_iter=max_iter, method=method)
    cons = sys.mesh.constraints
    if len(cons):
        x = cons.matrix() @ x
    return ScalarField(sys.mesh, x)


def integrate(mesh: Mesh, integrand, rule: QuadratureRule = GAUSS2) -> float:
    """Quadrature of a per-point integrand over the whole mesh."""
    f = _coefficient(mesh, integrand, rule)
    area = mesh.cell_h ** 2
    return float(np.einsum("q,cq,c->", rule.weights, f, area))


def l2_relative_error(a, b) -> float:
    """``||a - b|| / ||a||`` over nodal coefficients.

    Falls back to the absolute norm (with a log note) when ``||a|| = 0``.
    """
    av = a.values if isinstance(a, ScalarField) else np.asarray(a, dtype=float)
    bv = b.values if isinstance(b, ScalarField) else np.asarray(b, dtype=float)
    diff = np.linalg.norm(av - bv)
    denom = np.linalg.norm(av)
    if denom == 0.0:
        log.debug("l2_relative_error: zero reference norm, returning absolute")
        return diff
    return diff / denom
