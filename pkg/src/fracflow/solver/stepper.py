"""Time stepping: remesh, move, solve, audit."""
from __future__ import annotations

import time as _time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..mesh.motion import MeshMotionError, invalid_cells
from ..mesh.quality import QualityThresholds
from ..mesh.remesh import CellState, remesh
from ..mesh.topology import MovingMesh
from .assembly import Assembler, FlowParams
from .discretization import element_aperture, step_geometry
from .newton import NewtonError, newton_solve

MAX_DEPTH = 5


class StepFailure(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass
class SystemState:
    mesh: MovingMesh
    S: np.ndarray
    P: np.ndarray
    S_gamma: np.ndarray
    P_gamma: np.ndarray
    t: float
    cell_outflow: np.ndarray | None = None  # (nc, 3) integrated outflow per local facet
    tangential: np.ndarray | None = None  # tangential velocity per interface element

    def unknowns(self):
        x = np.empty(2 * (len(self.S) + len(self.S_gamma)))
        nb = len(self.S)
        x[0:2 * nb:2] = self.S
        x[1:2 * nb:2] = self.P
        x[2 * nb::2] = self.S_gamma
        x[2 * nb + 1::2] = self.P_gamma
        return x

    def set_unknowns(self, x):
        nb = len(self.S)
        self.S = x[0:2 * nb:2].copy()
        self.P = x[1:2 * nb:2].copy()
        self.S_gamma = x[2 * nb::2].copy()
        self.P_gamma = x[2 * nb + 1::2].copy()


@dataclass
class StepReport:
    step: int
    t: float
    dt: float
    newton_iterations: int
    residual: float
    substeps: int
    mass_before: float
    mass_after: float
    injected: float
    outflow: float
    mass_error: float
    dgcl: float
    remesh_rounds: int
    remesh_ops: int
    projection_error: float
    floored_distances: int
    wall_time: float

    def as_dict(self):
        return asdict(self)


@dataclass
class Simulation:
    """Everything a run needs besides the evolving :class:`SystemState`."""

    params: FlowParams
    spec: object
    bcs: tuple = ()
    thresholds: QualityThresholds = field(default_factory=QualityThresholds)
    remesh_enabled: bool = True

    @property
    def schedule(self):
        return self.spec.schedule

    def geometry(self, mesh, Xa, Xb, ta, tb, facets=None):
        return step_geometry(mesh, Xa, Xb, ta, tb, K_bulk=self.params.K_bulk, schedule=self.schedule,
                             full=self.params.full, box=self.spec.box, bcs=self.bcs, facets=facets)

    def mass(self, mesh, S, S_gamma, X, t):
        """Bulk and interface wetting volume at positions ``X`` and time ``t``."""
        A = mesh.areas(X)
        phi = self.params.porosity
        phi_c = np.where(mesh.cell_material == 1, phi[1], phi[0]) if self.params.full else phi[0]
        bulk = float(np.sum(phi_c * S * A))
        iface = 0.0
        if len(S_gamma):
            ifc = mesh.interface
            d = element_aperture(self.schedule, X[ifc[:, 0]], X[ifc[:, 1]], t)
            L = np.linalg.norm(X[ifc[:, 1]] - X[ifc[:, 0]], axis=1)
            iface = float(np.sum(phi[1] * S_gamma * d * L))
        return bulk, iface


def _project(nb):
    def proj(x):
        x = x.copy()
        x[0:2 * nb:2] = np.clip(x[0:2 * nb:2], 0.0, 1.0)
        x[2 * nb::2] = np.maximum(x[2 * nb::2], 0.0)
        return x
    return proj


def _solve_interval(sim, mesh, facets, X0, X1, t0, t1, ta, tb, x, depth, stats):
    """Implicit step over [ta, tb] inside the linear motion X0 (t0) -> X1 (t1)."""
    lam_a = (ta - t0) / (t1 - t0)
    lam_b = (tb - t0) / (t1 - t0)
    Xa = X0 + lam_a * (X1 - X0)
    Xb = X0 + lam_b * (X1 - X0)
    geo = sim.geometry(mesh, Xa, Xb, ta, tb, facets)
    nb = geo.n_cells
    S_old = x[0:2 * nb:2]
    Sg_old = x[2 * nb::2]
    p_scale = max(1.0, float(np.max(np.abs(x[1::2]))) if len(x) else 1.0)
    asm = Assembler(geo, sim.params, S_old, Sg_old, p_scale)
    try:
        res = newton_solve(asm.residual, x, project=_project(nb))
    except NewtonError:
        res = None
    if res is None or not res.converged:
        if depth >= MAX_DEPTH:
            raise StepFailure(f"Newton failed on [{ta:.6g}, {tb:.6g}] after {MAX_DEPTH} halvings")
        tm = 0.5 * (ta + tb)
        x = _solve_interval(sim, mesh, facets, X0, X1, t0, t1, ta, tm, x, depth + 1, stats)
        return _solve_interval(sim, mesh, facets, X0, X1, t0, t1, tm, tb, x, depth + 1, stats)
    dt = tb - ta
    stats["iterations"] += res.iterations
    stats["residual"] = max(stats["residual"], res.residual)
    stats["substeps"] += 1
    stats["injected"] += dt * asm.injected_wetting()
    stats["outflow"] += dt * asm.boundary_wetting_outflow(res.x)
    stats["dgcl"] = max(stats["dgcl"], geo.dgcl_residual())
    stats["floored"] = max(stats["floored"], geo.floored)
    stats["last"] = (asm, res.x)
    return res.x


def cell_outflows(asm: Assembler, x):
    """Integrated total-velocity outflow per (cell, local facet)."""
    geo = asm.geo
    fac = geo.facets
    vf_plus = np.zeros(len(geo.length))
    vf_minus = np.zeros(len(geo.length))
    out = asm.outputs(x, "bulk")
    if out is not None:
        vf_plus[geo.interior] = out[1]
        vf_minus[geo.interior] = -out[1]
    out = asm.outputs(x, "boundary")
    if out is not None:
        vf_plus[geo.boundary] = out[1]
    out = asm.outputs(x, "coupling")
    if out is not None:
        vf_plus[geo.iface_facet] = out[2]
        vf_minus[geo.iface_facet] = out[3]
    cf = fac.cell_facets
    return np.where(fac.cell_sign > 0, vf_plus[cf], vf_minus[cf])


def tangential_velocity(asm: Assembler, x):
    geo = asm.geo
    ni = geo.n_iface
    if not ni:
        return np.zeros(0)
    out = asm.outputs(x, "junction")
    acc = np.zeros(ni)
    cnt = np.zeros(ni)
    if out is not None:
        v = out[1] / geo.junc_d.clip(1e-12)
        np.add.at(acc, geo.junc_a, v)
        np.add.at(acc, geo.junc_b, v)
        np.add.at(cnt, geo.junc_a, 1)
        np.add.at(cnt, geo.junc_b, 1)
    return np.where(cnt > 0, acc / np.maximum(cnt, 1), 0.0)


def advance(state: SystemState, sim: Simulation, t_new: float, step: int = 0):
    """One step ``state.t -> t_new``; returns ``(new_state, StepReport)``."""
    wall = _time.perf_counter()
    mesh = state.mesh
    cs = CellState(state.S, state.P, state.S_gamma, state.P_gamma)
    rounds = ops = 0
    proj_err = 0.0
    moving = sim.schedule is not None
    if moving and sim.remesh_enabled:
        rr = remesh(mesh, cs, sim.spec, t_new, sim.thresholds, sim.params.porosity, sim.params.porosity[1])
        mesh, cs, targets = rr.mesh, rr.state, rr.targets
        rounds, ops = rr.rounds, len(rr.log)
        for c in rr.log:
            ref = max(abs(c.old_mass), 1e-300)
            if c.old_mass != 0.0:
                proj_err = max(proj_err, abs(c.new_mass - c.old_mass) / ref)
    elif moving:
        from ..mesh.motion import mesh_targets
        targets = mesh_targets(mesh, sim.spec, t_new)
    else:
        targets = mesh.points.copy()
    bad = invalid_cells(mesh, targets)
    if len(bad):
        raise MeshMotionError(f"{len(bad)} cells degenerate during the step", bad)
    t0 = state.t
    X0 = mesh.points
    mb = sum(sim.mass(mesh, cs.S, cs.S_gamma, X0, t0))
    x = SystemState(mesh, cs.S, cs.P, cs.S_gamma, cs.P_gamma, t0).unknowns()
    facets = mesh.validate()
    stats = dict(iterations=0, residual=0.0, substeps=0, injected=0.0, outflow=0.0, dgcl=0.0, floored=0,
                 last=None)
    x = _solve_interval(sim, mesh, facets, X0, targets, t0, t_new, t0, t_new, x, 0, stats)
    new_mesh = mesh.copy()
    new_mesh.points = targets.copy()
    new_mesh.time = t_new
    new = SystemState(new_mesh, cs.S, cs.P, cs.S_gamma, cs.P_gamma, t_new)
    new.set_unknowns(x)
    asm, xl = stats["last"]
    new.cell_outflow = cell_outflows(asm, xl)
    new.tangential = tangential_velocity(asm, xl)
    ma = sum(sim.mass(new_mesh, new.S, new.S_gamma, targets, t_new))
    expected = mb + stats["injected"] - stats["outflow"]
    ref = max(abs(ma), abs(mb), stats["injected"], 1e-300)
    report = StepReport(step=step, t=t_new, dt=t_new - t0, newton_iterations=stats["iterations"],
                        residual=stats["residual"], substeps=stats["substeps"], mass_before=mb,
                        mass_after=ma, injected=stats["injected"], outflow=stats["outflow"],
                        mass_error=abs(ma - expected) / ref, dgcl=stats["dgcl"], remesh_rounds=rounds,
                        remesh_ops=ops, projection_error=proj_err, floored_distances=stats["floored"],
                        wall_time=_time.perf_counter() - wall)
    return new, report


def cell_velocity(state: SystemState):
    """Piecewise constant velocity reconstructed from the facet fluxes."""
    mesh = state.mesh
    if state.cell_outflow is None:
        return np.zeros((mesh.n_cells, 2))
    X = mesh.points[mesh.triangles]
    cen = X.mean(axis=1)
    mids = 0.5 * (X + X[:, [1, 2, 0]])
    A = mesh.areas()
    return np.einsum("ck,ckj->cj", state.cell_outflow, mids - cen[:, None, :]) / A[:, None]


def run(state: SystemState, sim: Simulation, t_end: float, dt: float, callback=None):
    """Fixed steps of size ``dt`` until ``t_end``; returns (state, reports)."""
    reports = []
    n = int(round((t_end - state.t) / dt))
    for k in range(n):
        t_new = state.t + dt if k < n - 1 else t_end
        state, rep = advance(state, sim, t_new, step=k + 1)
        reports.append(rep)
        if callback is not None:
            callback(state, rep)
    return state, reports
