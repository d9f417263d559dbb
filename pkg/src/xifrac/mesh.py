"""Quadtree meshes of the unit square with hanging-node constraints.

The mesh is a 2:1-balanced quadtree over ``(0,1)^2``.  Every active cell
is a square of size ``h = 2**-level`` addressed by ``(level, i, j)`` where
``(i*h, j*h)`` is its lower-left corner.  Vertices are stored with exact
dyadic integer coordinates (units of ``2**-_MAXLEVEL``) so that geometric
coincidence checks are exact.

Meshes are immutable: :func:`refine` and :func:`coarsen` return new
``Mesh`` objects.  Fields carry the id of the mesh they live on and are
moved between meshes with :func:`transfer_field`.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

# Integer coordinate resolution.  Levels up to _MAXLEVEL are representable.
_MAXLEVEL = 20
_SCALE = 1 << _MAXLEVEL

_mesh_ids = itertools.count()

# Boundary tags (counterclockwise from the bottom edge).
BOTTOM, RIGHT, TOP, LEFT = 1, 2, 3, 4


def _children(key):
    l, i, j = key
    return (
        (l + 1, 2 * i, 2 * j),
        (l + 1, 2 * i + 1, 2 * j),
        (l + 1, 2 * i, 2 * j + 1),
        (l + 1, 2 * i + 1, 2 * j + 1),
    )


def _parent(key):
    l, i, j = key
    return (l - 1, i >> 1, j >> 1)


def _find_active_at_or_above(active, l, i, j):
    """Active cell equal to or containing ``(l, i, j)``, or None."""
    while l >= 0:
        if (l, i, j) in active:
            return (l, i, j)
        l, i, j = l - 1, i >> 1, j >> 1
    return None


def _edge_children(key, direction):
    """The two children of ``key`` adjacent to the edge facing ``direction``.

    ``direction`` is the outward direction of the *querying* neighbor, so
    the children returned lie on the opposite side of ``key``.
    """
    l, i, j = key
    di, dj = direction
    if di == 1:  # query looks right, key's left edge
        return ((l + 1, 2 * i, 2 * j), (l + 1, 2 * i, 2 * j + 1))
    if di == -1:
        return ((l + 1, 2 * i + 1, 2 * j), (l + 1, 2 * i + 1, 2 * j + 1))
    if dj == 1:  # query looks up, key's bottom edge
        return ((l + 1, 2 * i, 2 * j), (l + 1, 2 * i + 1, 2 * j))
    return ((l + 1, 2 * i, 2 * j + 1), (l + 1, 2 * i + 1, 2 * j + 1))


def _max_level_across_edge(active, key, direction):
    """Max level of active cells adjacent to ``key`` across one edge.

    Returns -1 for a boundary edge.
    """
    l, i, j = key
    di, dj = direction
    ni, nj = i + di, j + dj
    n = 1 << l
    if not (0 <= ni < n and 0 <= nj < n):
        return -1
    found = _find_active_at_or_above(active, l, ni, nj)
    if found is not None:
        return found[0]

    # Neighbor region is subdivided; descend along the shared edge.
    best = -1
    stack = [(l, ni, nj)]
    while stack:
        cand = stack.pop()
        if cand in active:
            best = max(best, cand[0])
        else:
            stack.extend(_edge_children(cand, direction))
    return best


def _balance(active, seeds):
    """Restore 2:1 edge balance by splitting too-coarse neighbors in place."""
    queue = deque(seeds)
    while queue:
        key = queue.popleft()
        if key not in active:
            continue
        l, i, j = key
        n = 1 << l
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ni, nj = i + di, j + dj
            if not (0 <= ni < n and 0 <= nj < n):
                continue
            found = _find_active_at_or_above(active, l, ni, nj)
            if found is not None and found[0] <= l - 2:
                active.remove(found)
                for ch in _children(found):
                    active.add(ch)
                    queue.append(ch)


@dataclass(frozen=True)
class ConstraintSet:
    """Hanging-vertex interpolation constraints.

    Each hanging vertex takes the value ``0.5 * (masters[0] + masters[1])``,
    the exact bilinear trace on the coarse edge.
    """

    masters: dict[int, tuple[int, int]]
    n_vertices: int
    _matrix_cache: list = field(default_factory=list, repr=False, compare=False)

    def __len__(self):
        return len(self.masters)

    @property
    def hanging(self):
        return sorted(self.masters)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Return a copy with hanging entries replaced by master averages."""
        out = np.array(values, dtype=float)
        for h, (a, b) in self.masters.items():
            out[h] = 0.5 * (out[a] + out[b])
        return out

    def matrix(self) -> sp.csr_matrix:
        """Prolongation ``T``: identity on regular rows, (1/2, 1/2) on hanging."""
        if self._matrix_cache:
            return self._matrix_cache[0]
        n = self.n_vertices
        rows, cols, data = [], [], []
        for v in range(n):
            if v in self.masters:
                a, b = self.masters[v]
                rows += [v, v]
                cols += [a, b]
                data += [0.5, 0.5]
            else:
                rows.append(v)
                cols.append(v)
                data.append(1.0)
        T = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        self._matrix_cache.append(T)
        return T


class Mesh:
    """Immutable 2:1-balanced quadtree mesh of the unit square."""

    def __init__(self, active, level_min: int, level_max: int):
        keys = sorted(active)
        if not keys:
            raise ValueError("mesh needs at least one active cell")
        if level_min > level_max:
            raise ValueError("level_min must not exceed level_max")
        self.id = next(_mesh_ids)
        self.level_min = level_min
        self.level_max = level_max
        self.cell_keys: list[tuple[int, int, int]] = keys
        self._key_set = frozenset(keys)

        levels = np.array([k[0] for k in keys], dtype=int)
        if levels.min() < level_min or levels.max() > level_max:
            raise ValueError("cell level outside [level_min, level_max]")
        self.cell_levels = levels
        self.cell_h = 2.0 ** (-levels.astype(float))

        # Vertex table keyed by exact integer coordinates.
        vidx: dict[tuple[int, int], int] = {}
        conn = np.empty((len(keys), 4), dtype=int)
        for c, (l, i, j) in enumerate(keys):
            u = 1 << (_MAXLEVEL - l)
            corners = (
                (i * u, j * u),
                ((i + 1) * u, j * u),
                ((i + 1) * u, (j + 1) * u),
                (i * u, (j + 1) * u),
            )
            for a, pt in enumerate(corners):
                if pt not in vidx:
                    vidx[pt] = len(vidx)
                conn[c, a] = vidx[pt]
        self._vertex_index = vidx
        self._key_to_id = {k: c for c, k in enumerate(keys)}
        self.cell_vertices = conn
        self.n_cells = len(keys)
        self.n_vertices = len(vidx)

        coords = np.empty((self.n_vertices, 2))
        for (ix, iy), v in vidx.items():
            coords[v, 0] = ix / _SCALE
            coords[v, 1] = iy / _SCALE
        self.vertex_coords = coords
        self.cell_origin = coords[conn[:, 0]]

        self._constraints = self._find_hanging()
        self._boundary = self._tag_boundary()

    # -- construction helpers -------------------------------------------

    def _find_hanging(self) -> ConstraintSet:
        masters: dict[int, tuple[int, int]] = {}
        active = self._key_set
        vidx = self._vertex_index
        for l, i, j in self.cell_keys:
            u = 1 << (_MAXLEVEL - l)
            w = 2 * u  # coarse-cell edge length in integer units
            # (coarse neighbor key, hanging vertex, coarse edge endpoints)
            probes = []
            if i > 0:
                jc = j >> 1
                mid = (i * u, j * u + u) if j % 2 == 0 else (i * u, j * u)
                probes.append(((l - 1, (i - 1) >> 1, jc), mid,
                               (i * u, jc * w), (i * u, jc * w + w)))
            if i < (1 << l) - 1:
                jc = j >> 1
                x = (i + 1) * u
                mid = (x, j * u + u) if j % 2 == 0 else (x, j * u)
                probes.append(((l - 1, (i + 1) >> 1, jc), mid,
                               (x, jc * w), (x, jc * w + w)))
            if j > 0:
                ic = i >> 1
                mid = (i * u + u, j * u) if i % 2 == 0 else (i * u, j * u)
                probes.append(((l - 1, ic, (j - 1) >> 1), mid,
                               (ic * w, j * u), (ic * w + w, j * u)))
            if j < (1 << l) - 1:
                ic = i >> 1
                y = (j + 1) * u
                mid = (i * u + u, y) if i % 2 == 0 else (i * u, y)
                probes.append(((l - 1, ic, (j + 1) >> 1), mid,
                               (ic * w, y), (ic * w + w, y)))
            for coarse, mid, e0, e1 in probes:
                if coarse in active:
                    masters[vidx[mid]] = (vidx[e0], vidx[e1])
        return ConstraintSet(masters, self.n_vertices)

    def _tag_boundary(self) -> dict[int, np.ndarray]:
        x = self.vertex_coords[:, 0]
        y = self.vertex_coords[:, 1]
        return {
            BOTTOM: np.flatnonzero(y == 0.0),
            RIGHT: np.flatnonzero(x == 1.0),
            TOP: np.flatnonzero(y == 1.0),
            LEFT: np.flatnonzero(x == 0.0),
        }

    # -- queries ----------------------------------------------------------

    @property
    def constraints(self) -> ConstraintSet:
        return self._constraints

    def boundary_vertices(self, tag: int) -> np.ndarray:
        return self._boundary[tag]

    def cell_id(self, key) -> int:
        return self._key_to_id[key]

    def contains_cell(self, key) -> bool:
        return key in self._key_set

    def locate(self, x: float, y: float) -> int:
        """Active cell id containing the point (boundary points included)."""
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise ValueError(f"point ({x}, {y}) outside the unit square")
        for l in range(self.level_max, self.level_min - 1, -1):
            n = 1 << l
            i = min(int(x * n), n - 1)
            j = min(int(y * n), n - 1)
            if (l, i, j) in self._key_set:
                return self._key_to_id[(l, i, j)]
        raise RuntimeError("active cells do not tile the domain")

    def eval_field(self, values: np.ndarray, x: float, y: float) -> float:
        """Evaluate the piecewise-bilinear interpolant of nodal values."""
        c = self.locate(x, y)
        h = self.cell_h[c]
        ox, oy = self.cell_origin[c]
        s, t = (x - ox) / h, (y - oy) / h
        corner = values[self.cell_vertices[c]]
        return float(
            corner[0] * (1 - s) * (1 - t)
            + corner[1] * s * (1 - t)
            + corner[2] * s * t
            + corner[3] * (1 - s) * t
        )


def build_uniform(level: int, *, level_min: int | None = None,
                  level_max: int | None = None) -> Mesh:
    """Uniform mesh with ``4**level`` cells of size ``2**-level``.

    ``level_max`` defaults to ``level + 4``, mirroring the benchmark's cap
    of four local refinements from the starting mesh.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    if level_min is None:
        level_min = level
    if level_max is None:
        level_max = level + 4
    n = 1 << level
    active = {(level, i, j) for i in range(n) for j in range(n)}
    return Mesh(active, level_min, level_max)


def refine(mesh: Mesh, flags) -> Mesh:
    """Split flagged cells into four children and rebalance.

    Flags at ``level_max`` are skipped with a log message.  Duplicate flags
    are idempotent.
    """
    active = set(mesh.cell_keys)
    seeds = []
    for cid in sorted(set(flags)):
        key = mesh.cell_keys[cid]
        if key[0] >= mesh.level_max:
            log.info("refine: cell %s already at level_max=%d, skipping",
                     key, mesh.level_max)
            continue
        active.remove(key)
        ch = _children(key)
        active.update(ch)
        seeds.extend(ch)
    _balance(active, seeds)
    return Mesh(active, mesh.level_min, mesh.level_max)


def coarsen(mesh: Mesh, flags) -> Mesh:
    """Merge flagged sibling quadruples back into their parents.

    A merge happens only when all four siblings are flagged, the parent
    level stays >= ``level_min`` and 2:1 balance survives.  Anything else
    is silently skipped.
    """
    flagged = {mesh.cell_keys[c] for c in set(flags)}
    groups: dict[tuple, set] = {}
    for key in flagged:
        if key[0] - 1 < mesh.level_min:
            continue
        groups.setdefault(_parent(key), set()).add(key)

    active = set(mesh.cell_keys)
    merged = []
    for parent, sibs in sorted(groups.items()):
        kids = set(_children(parent))
        if sibs == kids and kids <= active:
            active -= kids
            active.add(parent)
            merged.append(parent)

    # Undo merges that would violate 2:1 balance against the merged set.
    changed = True
    while changed:
        changed = False
        for parent in list(merged):
            worst = max(
                _max_level_across_edge(active, parent, d)
                for d in ((1, 0), (-1, 0), (0, 1), (0, -1))
            )
            if worst > parent[0] + 1:
                active.remove(parent)
                active.update(_children(parent))
                merged.remove(parent)
                changed = True
    return Mesh(active, mesh.level_min, mesh.level_max)


def hanging_constraints(mesh: Mesh) -> ConstraintSet:
    """Hanging-vertex -> (masters, 1/2 weights) map for ``mesh``."""
    return mesh.constraints


def boundary_nodes(mesh: Mesh, tag: int, predicate=None) -> np.ndarray:
    """Vertex ids on one boundary, optionally filtered by ``predicate(x, y)``."""
    ids = mesh.boundary_vertices(tag)
    if predicate is None:
        return ids
    coords = mesh.vertex_coords[ids]
    keep = [predicate(x, y) for x, y in coords]
    return ids[np.array(keep, dtype=bool)]


# Gauss points/weights on [0,1], exact through cubic integrands per axis.
_G2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def _project_parent(child_fields) -> np.ndarray:
    """Local L2 projection of four child bilinears onto the parent bilinear.

    ``child_fields`` maps child position ``(a, b)`` in {0,1}^2 to its four
    corner values.  Returns the parent's corner coefficients.
    """
    # Unit-square Q1 mass matrix (scaled by parent area).
    m = np.array([[4, 2, 1, 2], [2, 4, 2, 1], [1, 2, 4, 2], [2, 1, 2, 4]]) / 36.0
    rhs = np.zeros(4)
    for (a, b), cvals in child_fields.items():
        for gs in _G2:
            for gt in _G2:
                nc = np.array([(1 - gs) * (1 - gt), gs * (1 - gt),
                               gs * gt, (1 - gs) * gt])
                f = float(nc @ cvals)
                sp_, tp = (a + gs) / 2.0, (b + gt) / 2.0
                np_ = np.array([(1 - sp_) * (1 - tp), sp_ * (1 - tp),
                                sp_ * tp, (1 - sp_) * tp])
                rhs += 0.25 * 0.25 * f * np_  # child area = parent area / 4
    return np.linalg.solve(m, rhs)


def transfer_field(old: Mesh, new: Mesh, values: np.ndarray) -> np.ndarray:
    """Move nodal values from ``old`` to ``new`` after one refine/coarsen pass.

    Refined cells get the exact bilinear embedding; coarsened parents get
    the cell-local L2 projection of their four children.  Hanging-node
    constraints are re-applied on the result.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (old.n_vertices,):
        raise ValueError(
            f"field has {values.shape[0]} entries, mesh {old.id} has "
            f"{old.n_vertices} vertices")

    out = np.full(new.n_vertices, np.nan)
    proj_sum = np.zeros(new.n_vertices)
    proj_cnt = np.zeros(new.n_vertices, dtype=int)
    old_vidx = old._vertex_index
    new_vidx = new._vertex_index

    for c, key in enumerate(new.cell_keys):
        nvs = new.cell_vertices[c]
        if old.contains_cell(key):
            for a, v in enumerate(nvs):
                pt = _int_corner(key, a)
                out[v] = values[old_vidx[pt]]
            continue

        anc = _find_active_at_or_above(old._key_set, *key)
        if anc is not None:
            # Refinement: evaluate the ancestor's bilinear at the new corners.
            al, ai, aj = anc
            ah = 2.0 ** (-al)
            ovals = values[[old_vidx[_int_corner(anc, a)] for a in range(4)]]
            for a, v in enumerate(nvs):
                px, py = _int_corner(key, a)
                s = (px / _SCALE - ai * ah) / ah
                t = (py / _SCALE - aj * ah) / ah
                out[v] = (ovals[0] * (1 - s) * (1 - t) + ovals[1] * s * (1 - t)
                          + ovals[2] * s * t + ovals[3] * (1 - s) * t)
            continue

        # Coarsening: the four children must be active in the old mesh.
        kids = {}
        for ck in _children(key):
            if not old.contains_cell(ck):
                raise ValueError(
                    f"cell {key} of mesh {new.id} has no counterpart in "
                    f"mesh {old.id}: not a one-pass refine/coarsen result")
            kids[(ck[1] % 2, ck[2] % 2)] = values[
                [old_vidx[_int_corner(ck, a)] for a in range(4)]]
        coeff = _project_parent(kids)
        proj_sum[nvs] += coeff
        proj_cnt[nvs] += 1

    mask = proj_cnt > 0
    out[mask] = proj_sum[mask] / proj_cnt[mask]
    if np.isnan(out).any():
        raise RuntimeError("transfer left unset vertices")  # pragma: no cover
    return new.constraints.apply(out)


def _int_corner(key, a):
    l, i, j = key
    u = 1 << (_MAXLEVEL - l)
    if a == 0:
        return (i * u, j * u)
    if a == 1:
        return ((i + 1) * u, j * u)
    if a == 2:
        return ((i + 1) * u, (j + 1) * u)
    return (i * u, (j + 1) * u)
