"""On-disk outputs: legacy VTK snapshots, CSV histories, line profiles.

All files are written atomically (temp file + rename) so an interrupted
run never leaves truncated output behind.  Numbers are printed with
round-trip-safe precision to keep golden comparisons stable.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .mesh import Mesh

_FLOAT = "%.15g"


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_vtk(mesh: Mesh, point_data: dict, cell_data: dict, path,
              title: str = "xifrac fields") -> None:
    """Legacy ASCII VTK unstructured grid with quad cells.

    Hanging nodes are exported as-is; viewers tolerate the nonconforming
    quads.
    """
    lines = ["# vtk DataFile Version 2.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    for x, y in mesh.vertex_coords:
        lines.append(f"{_FLOAT % x} {_FLOAT % y} 0")
    lines.append(f"CELLS {mesh.n_cells} {5 * mesh.n_cells}")
    for quad in mesh.cell_vertices:
        lines.append("4 " + " ".join(str(v) for v in quad))
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines.extend(["9"] * mesh.n_cells)

    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in point_data.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_FLOAT % v for v in np.asarray(values, dtype=float))
    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_cells}")
        for name, values in cell_data.items():
            values = np.asarray(values)
            if np.issubdtype(values.dtype, np.integer):
                lines.append(f"SCALARS {name} int 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(str(int(v)) for v in values)
            else:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(_FLOAT % v for v in values.astype(float))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_vtk(path):
    """Parse a file produced by :func:`write_vtk`.

    Returns ``(mesh, point_data, cell_data)``; the mesh is reconstructed
    from the quad geometry.
    """
    lines = Path(path).read_text().splitlines()
    idx = next(i for i, l in enumerate(lines) if l.startswith("POINTS"))
    n_pts = int(lines[idx].split()[1])
    pts = np.array([[float(t) for t in lines[idx + 1 + k].split()[:2]]
                    for k in range(n_pts)])
    idx = next(i for i, l in enumerate(lines) if l.startswith("CELLS"))
    n_cells = int(lines[idx].split()[1])
    quads = np.array([[int(t) for t in lines[idx + 1 + k].split()[1:5]]
                      for k in range(n_cells)])

    keys = set()
    for quad in quads:
        x0, y0 = pts[quad[0]]
        h = pts[quad[1]][0] - x0
        level = round(-np.log2(h))
        keys.add((level, round(x0 / h), round(y0 / h)))
    levels = [k[0] for k in keys]
    mesh = Mesh(keys, min(levels), max(levels))

    point_data, cell_data = {}, {}
    target, count = None, 0
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("POINT_DATA"):
            target, count = point_data, n_pts
        elif line.startswith("CELL_DATA"):
            target, count = cell_data, n_cells
        elif line.startswith("SCALARS") and target is not None:
            name = line.split()[1]
            start = i + 2  # skip LOOKUP_TABLE line
            target[name] = np.array([float(lines[start + k])
                                     for k in range(count)])
            i = start + count
            continue
        i += 1

    # Reorder nodal/cell arrays to the reconstructed mesh numbering.
    perm = np.empty(mesh.n_vertices, dtype=int)
    for old_id, (x, y) in enumerate(pts):
        hit = np.flatnonzero((np.abs(mesh.vertex_coords[:, 0] - x) < 1e-14)
                             & (np.abs(mesh.vertex_coords[:, 1] - y) < 1e-14))
        perm[hit[0]] = old_id
    point_data = {k: v[perm] for k, v in point_data.items()}

    cperm = np.empty(mesh.n_cells, dtype=int)
    centers_old = pts[quads].mean(axis=1)
    for new_id in range(mesh.n_cells):
        cx = mesh.cell_origin[new_id] + 0.5 * mesh.cell_h[new_id]
        hit = np.flatnonzero(np.all(np.abs(centers_old - cx) < 1e-14, axis=1))
        cperm[new_id] = hit[0]
    cell_data = {k: v[cperm] for k, v in cell_data.items()}
    return mesh, point_data, cell_data


def write_energy_csv(history, path) -> None:
    if not history:
        _atomic_write(path, "t,E_strain,E_surface,E_penalty,E_total,stag_iters\n")
        return
    lines = ["t,E_strain,E_surface,E_penalty,E_total,stag_iters"]
    for rec in history:
        lines.append(",".join([_FLOAT % rec.t, _FLOAT % rec.strain,
                               _FLOAT % rec.surface, _FLOAT % rec.penalty,
                               _FLOAT % rec.total, str(rec.stag_iters)]))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_xi_history(history, path) -> None:
    lines = ["t,xi_min,xi_max,xi_mean,cells"]
    for rec in history:
        lines.append(",".join([_FLOAT % rec.t, _FLOAT % rec.xi_min,
                               _FLOAT % rec.xi_max, _FLOAT % rec.xi_mean,
                               str(rec.cells)]))
    _atomic_write(path, "\n".join(lines) + "\n")


def line_profile(mesh: Mesh, values, y: float, samples: int) -> np.ndarray:
    """Sample a nodal field along a horizontal line; rows are (x, value)."""
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"profile ordinate y={y} lies outside the domain")
    if samples < 2:
        raise ValueError("need at least two samples")
    xs = np.linspace(0.0, 1.0, samples)
    values = np.asarray(values, dtype=float)
    return np.array([[x, mesh.eval_field(values, x, y)] for x in xs])


def write_profile_csv(columns: dict[str, np.ndarray], xs: np.ndarray, path
                      ) -> None:
    lines = ["x," + ",".join(columns)]
    for k, x in enumerate(xs):
        lines.append(",".join([_FLOAT % x]
                              + [_FLOAT % col[k] for col in columns.values()]))
    _atomic_write(path, "\n".join(lines) + "\n")


class RunWriter:
    """Single writer owning one run directory."""

    PROFILE_LINES = (0.1, 0.2, 0.3, 0.4)

    def __init__(self, out_dir, config):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self._write_manifest()

    def _write_manifest(self):
        from . import __version__
        from .config import serialize_config
        text = (f"# xifrac {__version__} run manifest; parseable as a "
                f"config file\n" + serialize_config(self.config))
        _atomic_write(self.dir / "run_manifest.cfg", text)

    def snapshot(self, state):
        n = state.step
        write_vtk(state.mesh,
                  {"u": state.u.values, "v": state.v.values},
                  {"xi": state.xi.at_cells(state.mesh),
                   "level": state.mesh.cell_levels},
                  self.dir / f"fields_{n:04d}.vtk",
                  title=f"step {n} t={state.t:g}")
        xs = np.linspace(0.0, 1.0, 201)
        cols = {}
        for y in self.PROFILE_LINES:
            prof = line_profile(state.mesh, state.v.values, y, 201)
            cols[f"v_y{y:g}"] = prof[:, 1]
        write_profile_csv(cols, xs, self.dir / f"profiles_{n:04d}.csv")

    def finalize(self, state):
        write_energy_csv(state.history, self.dir / "energies.csv")
        write_xi_history(state.history, self.dir / "xi_history.csv")
        if state.step > 0:
            self.snapshot(state)
