"""Load stepping, staggered u/v iteration and xi-driven mesh adaptivity.

One load step solves the displacement system with the phase field frozen,
then the phase-field system with the fresh displacement, enforces
irreversibility and refreshes xi, until both relative nodal L2 changes
drop below the staggered tolerance.  After convergence an optional AMR
pass refines cells whose xi falls below the refinement threshold and
coarsens fully intact regions, transferring all fields to the new mesh.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import fem, mesh as meshmod, phasefield as pf
from .fem import ScalarField
from .mesh import Mesh

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeshParams:
    level_start: int = 7
    level_max: int = 7
    crack_y_tip: float = 0.5

    def __post_init__(self):
        if self.level_start < 1 or self.level_start > self.level_max:
            raise ValueError("need 1 <= level_start <= level_max")


@dataclass(frozen=True)
class LoadingParams:
    c: float = 1.0
    dt: float = 0.01
    n_max: int = 120

    def __post_init__(self):
        if self.dt <= 0 or self.c < 0 or self.n_max < 0:
            raise ValueError("need dt > 0, c >= 0 and n_max >= 0")


@dataclass(frozen=True)
class SolverParams:
    staggered_tol: float = 1e-4
    staggered_max_iter: int = 500
    linear_tol: float = 1e-10
    linear_max_iter: int = 20000
    method: str = "direct"
    xi_each_iteration: bool = True
    crack_tol: float = 0.01  # Xi_CR pinning threshold

    def __post_init__(self):
        if self.staggered_tol <= 0:
            raise ValueError("staggered_tol must be positive")
        if self.method not in ("direct", "pcg"):
            raise ValueError(f"unknown solver method {self.method!r}")


@dataclass(frozen=True)
class AmrParams:
    enabled: bool = False
    fixed_point: bool = False


@dataclass(frozen=True)
class OutputParams:
    cadence: int = 10


@dataclass(frozen=True)
class SimConfig:
    material: pf.MaterialParams = pf.MaterialParams()
    regularization: pf.RegularizationParams = pf.RegularizationParams()
    mesh: MeshParams = MeshParams()
    loading: LoadingParams = LoadingParams()
    solver: SolverParams = SolverParams()
    amr: AmrParams = AmrParams()
    output: OutputParams = OutputParams()


@dataclass
class SimState:
    mesh: Mesh
    u: ScalarField
    v: ScalarField
    v_prev: ScalarField
    mask: pf.CrackMask
    xi: pf.RegularizationState
    t: float = 0.0
    step: int = 0
    history: list[pf.EnergyRecord] = dc_field(default_factory=list)


def boundary_displacement(mesh: Mesh, t: float, c: float) -> dict[int, float]:
    """Opposing Dirichlet data on the top boundary halves.

    Left half gets ``-c t``, right half ``+c t``; the crack-mouth node at
    ``x = 0.5`` is left free.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    bc: dict[int, float] = {}
    top = mesh.boundary_vertices(meshmod.TOP)
    x = mesh.vertex_coords[top, 0]
    for node, xi_ in zip(top, x):
        if xi_ < 0.5:
            bc[int(node)] = -c * t
        elif xi_ > 0.5:
            bc[int(node)] = c * t
    return bc


def initialize(config: SimConfig) -> SimState:
    mp = config.mesh
    grid = meshmod.build_uniform(mp.level_start, level_min=mp.level_start,
                                 level_max=mp.level_max)
    v0, mask = pf.initial_crack(grid, mp.crack_y_tip)
    u0 = fem.constant_field(grid, 0.0)
    xi = _initial_xi(grid, v0, config)
    return SimState(mesh=grid, u=u0, v=v0, v_prev=v0.copy(), mask=mask, xi=xi)


def _initial_xi(grid, v, config) -> pf.RegularizationState:
    reg, mat = config.regularization, config.material
    if reg.mode == "fixed":
        return pf.RegularizationState("fixed", reg.clamp(reg.xi_fixed))
    if reg.mode == "global":
        return pf.RegularizationState("global", pf.xi_global(grid, v, mat, reg))
    return pf.RegularizationState("field", pf.xi_field(grid, v, mat, reg))


def update_xi(state: SimState, config: SimConfig) -> pf.RegularizationState:
    """Refresh xi from the current phase field, per mode."""
    reg, mat = config.regularization, config.material
    if state.xi.mode == "fixed":
        return state.xi
    if state.xi.mode == "global":
        return pf.RegularizationState(
            "global", pf.xi_global(state.mesh, state.v, mat, reg))
    return pf.RegularizationState(
        "field", pf.xi_field(state.mesh, state.v, mat, reg))


# Cap on active-set sweeps inside one phase-field solve.
_MAX_ACTIVE_SET = 30


def _solve_phase_bounded(state: SimState, mat, solve) -> fem.ScalarField:
    """Phase-field solve respecting the upper bound ``v <= min(v_prev, 1)``.

    A plain solve-then-clip treatment leaves crack-face nodes frozen at
    transient values: the unconstrained solution overshoots the bound next
    to pinned nodes, so clipping can never relax the profile.  Pinning the
    violating nodes at their bound and re-solving (a primal active set)
    recovers the true constrained minimizer in a few sweeps.
    """
    upper = np.minimum(state.v_prev.values, 1.0)
    active = {int(n): 0.0 for n in state.mask.nodes}
    v = None
    for sweep in range(_MAX_ACTIVE_SET):
        sys_v = pf.assemble_phase(state.mesh, state.u, state.xi, mat, active)
        v = solve(sys_v)
        violating = np.flatnonzero(v.values > upper + 1e-12)
        grew = False
        for n in violating:
            n = int(n)
            if n not in active:
                active[n] = float(upper[n])
                grew = True
        if not grew:
            return v
    log.warning("phase-field active set still growing after %d sweeps",
                _MAX_ACTIVE_SET)
    return v


def staggered_step(state: SimState, config: SimConfig) -> tuple[int, bool]:
    """Alternate u and v solves at the current load until both settle.

    Mutates ``state`` in place and returns (iterations, converged).
    Non-convergence keeps the last iterate and is reported, not fatal.
    """
    mat, reg, sol = config.material, config.regularization, config.solver
    bc = boundary_displacement(state.mesh, state.t, config.loading.c)
    solve = lambda sys: fem.solve_field(
        sys, tol=sol.linear_tol, max_iter=sol.linear_max_iter,
        method=sol.method)

    converged = False
    iters = 0
    for iters in range(1, sol.staggered_max_iter + 1):
        u_old, v_old = state.u, state.v

        sys_u = pf.assemble_displacement(state.mesh, state.v, mat, bc)
        state.u = solve(sys_u)

        v_raw = _solve_phase_bounded(state, mat, solve)
        state.v, state.mask = pf.enforce_irreversibility(
            v_raw, state.v_prev, state.mask, sol.crack_tol)

        if sol.xi_each_iteration:
            state.xi = update_xi(state, config)

        err_u = fem.l2_relative_error(state.u, u_old)
        err_v = fem.l2_relative_error(state.v, v_old)
        if err_u < sol.staggered_tol and err_v < sol.staggered_tol:
            converged = True
            break

    if not sol.xi_each_iteration:
        state.xi = update_xi(state, config)
    if not converged:
        log.warning("step %d: staggered loop hit %d iterations without "
                    "converging (err_u=%.2e, err_v=%.2e)",
                    state.step, iters, err_u, err_v)
    return iters, converged


def _refine_flags_on(mesh, v_values, config: SimConfig) -> list[int]:
    reg, mat = config.regularization, config.material
    xi_cells = pf.xi_field(mesh, ScalarField(mesh, v_values), mat, reg)
    flags = np.flatnonzero((xi_cells < reg.xi_refine)
                           & (mesh.cell_levels < config.mesh.level_max))
    return flags.tolist()


def _coarsen_flags_on(mesh, v_values, config: SimConfig) -> list[int]:
    # Only fully intact cells away from the refinement zone may merge back.
    reg, mat = config.regularization, config.material
    xi_cells = pf.xi_field(mesh, ScalarField(mesh, v_values), mat, reg)
    v_cellmin = np.asarray(v_values)[mesh.cell_vertices].min(axis=1)
    flags = np.flatnonzero((v_cellmin >= 1.0 - 1e-6)
                           & (xi_cells >= reg.xi_refine)
                           & (mesh.cell_levels > mesh.level_min))
    return flags.tolist()


def _refine_flags(state: SimState, config: SimConfig) -> list[int]:
    return _refine_flags_on(state.mesh, state.v.values, config)


def _coarsen_flags(state: SimState, config: SimConfig) -> list[int]:
    return _coarsen_flags_on(state.mesh, state.v.values, config)


def amr_pass(state: SimState, config: SimConfig) -> bool:
    """One refine-to-fixed-point + coarsen sweep; True if the mesh changed.

    Refinement iterates until no cell is flagged: 2:1 balancing can split
    unflagged cells whose children then fall below the threshold, so a
    single refine call may expose new flags one level down.  The loop is
    bounded by the level range.
    """
    old = state.mesh
    mid = old
    fields = (state.u.values, state.v.values, state.v_prev.values)
    for _ in range(old.level_max - old.level_min + 1):
        rflags = _refine_flags_on(mid, fields[1], config)
        if not rflags:
            break
        nxt = meshmod.refine(mid, rflags)
        if nxt.cell_keys == mid.cell_keys:
            break
        fields = tuple(meshmod.transfer_field(mid, nxt, f) for f in fields)
        mid = nxt

    new = mid
    cflags = _coarsen_flags_on(mid, fields[1], config)
    if cflags:
        new = meshmod.coarsen(mid, cflags)
        if new is not mid and new.cell_keys != mid.cell_keys:
            fields = tuple(meshmod.transfer_field(mid, new, f)
                           for f in fields)
        else:
            new = mid

    if new is old or new.cell_keys == old.cell_keys:
        return False

    u_vals, v_vals, vprev_vals = fields
    state.mesh = new
    state.u = ScalarField(new, u_vals)
    v = ScalarField(new, np.clip(v_vals, 0.0, 1.0))
    # Pinned nodes carry v = 0 exactly and transfers preserve that, so the
    # mask is re-derived from exact zeros (a tolerance here would re-pin
    # interpolated near-zero nodes and sharpen the transferred profile).
    state.mask = pf.crack_set(v, 0.0)
    state.v = v
    state.v_prev = ScalarField(new, np.clip(vprev_vals, 0.0, 1.0))
    state.xi = pf.transfer_regularization(
        state.xi, new, v, config.material, config.regularization)
    return True


def crack_reached_bottom(state: SimState) -> bool:
    bottom = set(state.mesh.boundary_vertices(meshmod.BOTTOM).tolist())
    return bool(bottom & state.mask.nodes)


def run(config: SimConfig, out_dir=None, snapshot_hook=None
        ) -> tuple[list[pf.EnergyRecord], SimState]:
    """Execute the quasi-static load loop.

    Stops early when the crack mask reaches the bottom boundary.  When
    ``out_dir`` is given, field snapshots, energy and xi histories, and a
    reproduction manifest are written there (see :mod:`xifrac.output`).
    """
    from . import output as out  # local import to keep the core IO-free

    state = initialize(config)
    writer = out.RunWriter(out_dir, config) if out_dir is not None else None
    mat, reg = config.material, config.regularization

    for n in range(1, config.loading.n_max + 1):
        state.step = n
        state.t = n * config.loading.dt
        iters, converged = staggered_step(state, config)

        passes = 0
        if config.amr.enabled:
            max_passes = (config.mesh.level_max - config.mesh.level_start
                          if config.amr.fixed_point else 1)
            for passes in range(1, max(max_passes, 1) + 1):
                if not amr_pass(state, config):
                    passes -= 1
                    break

        # The converged phase field becomes the irreversibility bound for
        # the next load step.
        state.v_prev = state.v.copy()

        rec = pf.energies(state.mesh, state.u, state.v, state.xi, mat, reg,
                          t=state.t, stag_iters=iters, converged=converged)
        state.history.append(rec)
        log.info("step %3d t=%.3f iters=%d cells=%d E=(%.4g, %.4g, %.4g) "
                 "xi=[%.4g, %.4g] amr_passes=%d",
                 n, state.t, iters, state.mesh.n_cells, rec.strain,
                 rec.surface, rec.total, rec.xi_min, rec.xi_max, passes)

        if writer is not None and (n % config.output.cadence == 0
                                   or n == config.loading.n_max):
            writer.snapshot(state)
        if snapshot_hook is not None:
            snapshot_hook(state)
        if crack_reached_bottom(state):
            log.info("crack reached the bottom boundary at step %d, stopping", n)
            break

    if writer is not None:
        writer.finalize(state)
    return state.history, state
