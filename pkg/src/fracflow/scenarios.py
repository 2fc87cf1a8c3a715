"""Test cases: a fracture on the diagonal of the unit square that grows
(cases 1, 2) or squeezes (case 3), plus a Buckley-Leverett column.

Scenario files are INI documents; every key is optional and defaults to
the built-in case selected by ``[case] id``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace

import numpy as np

from . import physics
from .fracture import FractureSchedule, ScheduleDomainError
from .mesh.build import build_full, build_plain, build_reduced
from .mesh.sampling import sample_line, segment_average
from .solver.assembly import FlowParams
from .solver.discretization import BoundaryCondition, element_aperture
from .solver.stepper import Simulation, SystemState, cell_velocity

__all__ = ["FractureSchedule", "ScheduleDomainError", "CaseConfig", "ScenarioError", "build_case",
           "aperture_at", "compare_reduced_full", "buckley_leverett_config", "load_scenario", "make_run"]

MODES = ("reduced", "full")


class ScenarioError(ValueError):
    pass


@dataclass
class CaseConfig:
    case: int | str
    mode: str
    h: float = 1.0 / 64
    T: float = 1.0
    dt: float = 0.01
    schedule: FractureSchedule | None = None
    phases: physics.PhaseParams = field(default_factory=physics.PhaseParams)
    law: physics.RelPermLaw = field(default_factory=physics.RelPermLaw)
    K_bulk: float = 1e-8
    porosity: float = 1.0
    porosity_fracture: float = 1.0
    gravity: tuple = (0.0, -9.81)
    S_init: float = 0.0
    q_w: float = 0.0
    q_nw: float = 0.0
    bcs: tuple = ()
    box: tuple = (0.0, 1.0, 0.0, 1.0)
    refine: int = 4

    def __post_init__(self):
        if self.mode not in MODES:
            raise ScenarioError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.h <= 0 or self.dt <= 0 or self.T < 0:
            raise ScenarioError("h and dt must be positive and T non-negative")

    def flow_params(self):
        g = np.asarray(self.gravity, dtype=float)
        bulk = physics.Material(self.phases, physics.MediumParams(self.porosity, self.K_bulk * np.eye(2), g),
                                self.law)
        # the fracture permeability depends on the aperture and is evaluated per facet/cell
        frac = physics.Material(self.phases, physics.MediumParams(self.porosity_fracture, np.eye(2), g), self.law)
        return FlowParams(bulk, frac, g, self.q_w, self.q_nw, full=self.mode == "full",
                          pin_pressure=not self.bcs)


def _case_defaults(case):
    if case == 1:
        return dict(schedule=FractureSchedule(v_prolong=0.25, d0=0.1), gravity=(0.0, 0.0), S_init=1.0)
    top = (BoundaryCondition("top", P=0.0, S=0.0),)
    if case == 2:
        return dict(schedule=FractureSchedule(v_prolong=0.25, d0=0.01), S_init=0.0, q_w=10.0, q_nw=10.0, bcs=top)
    if case == 3:
        return dict(schedule=FractureSchedule(v_prolong=0.0, d0=0.01, v_squeeze=0.005), S_init=0.0,
                    q_w=10.0, q_nw=10.0, bcs=top)
    raise ScenarioError(f"unknown case id {case!r}; expected 1, 2 or 3")


def case_config(case, mode="reduced", h=1.0 / 64, **overrides):
    kw = _case_defaults(int(case) if str(case).isdigit() else case)
    kw.update(overrides)
    return CaseConfig(case=int(case), mode=mode, h=h, **kw)


def buckley_leverett_config(h=1.0 / 32, T=0.5, dt=None, width=None, dP=1.0):
    """Horizontal column: wetting phase pushed in from the left by a
    pressure drop ``dP``, gravity off, static mesh."""
    width = width if width is not None else 4 * h
    return CaseConfig(case="bl", mode="reduced", h=h, T=T, dt=dt if dt is not None else T / 50,
                      schedule=None, K_bulk=1.0, gravity=(0.0, 0.0), S_init=0.0,
                      bcs=(BoundaryCondition("left", P=dP, S=1.0), BoundaryCondition("right", P=0.0, S=0.0)),
                      box=(0.0, 1.0, 0.0, width))


def _initial_pressure(cfg, mesh):
    """Hydrostatic guess for the initial Newton iterate."""
    g = np.asarray(cfg.gravity, dtype=float)
    if not cfg.bcs or not np.any(g):
        return np.zeros(mesh.n_cells)
    top = cfg.box[3]
    rho = cfg.phases.rho_w if cfg.S_init >= 0.5 else cfg.phases.rho_nw
    cen = mesh.points[mesh.triangles].mean(axis=1)
    return rho * (cen @ g - np.array([0.0, top]) @ g)


def make_run(cfg: CaseConfig):
    """Mesh, initial state and :class:`Simulation` for a configuration."""
    if cfg.schedule is None:
        mesh, spec = build_plain(cfg.box, cfg.h)
    elif cfg.mode == "reduced":
        mesh, spec = build_reduced(cfg.schedule, cfg.h)
    else:
        mesh, spec = build_full(cfg.schedule, cfg.h, refine=cfg.refine, t_end=cfg.T)
    nb, ni = mesh.n_cells, len(mesh.interface)
    P = _initial_pressure(cfg, mesh)
    Pg = np.zeros(ni)
    if ni:
        mid = mesh.points[mesh.interface].mean(axis=1)
        Pg = _initial_pressure_at(cfg, mid)
    state = SystemState(mesh, np.full(nb, cfg.S_init), P, np.full(ni, cfg.S_init), Pg, 0.0)
    sim = Simulation(cfg.flow_params(), spec, tuple(cfg.bcs))
    return state, sim


def _initial_pressure_at(cfg, X):
    g = np.asarray(cfg.gravity, dtype=float)
    if not cfg.bcs or not np.any(g):
        return np.zeros(len(X))
    rho = cfg.phases.rho_w if cfg.S_init >= 0.5 else cfg.phases.rho_nw
    return rho * (X @ g - np.array([0.0, cfg.box[3]]) @ g)


def build_case(case, mode="reduced", resolution=64, **overrides):
    """``(mesh, state, config)`` for one of the built-in cases; ``resolution``
    is the number of bulk cells per unit length."""
    cfg = case_config(case, mode, 1.0 / resolution, **overrides)
    state, sim = make_run(cfg)
    return state.mesh, state, cfg


def aperture_at(schedule: FractureSchedule, point, t):
    """Aperture at a point of the fracture segment (domain error elsewhere)."""
    return schedule.aperture_at(point, t)


# ---------------------------------------------------------------- comparison
@dataclass
class Comparison:
    arclength: np.ndarray
    points: np.ndarray
    S_reduced: np.ndarray
    S_full: np.ndarray
    on_fracture: np.ndarray
    valid: np.ndarray
    l1_diff: float
    l1_full: float
    tip_distance: np.ndarray

    @property
    def relative(self):
        return self.l1_diff / self.l1_full if self.l1_full > 0 else float(self.l1_diff > 0)

    def rows(self):
        for i in range(len(self.arclength)):
            yield (self.arclength[i], self.points[i, 0], self.points[i, 1], self.S_reduced[i], self.S_full[i],
                   int(self.on_fracture[i]), int(self.valid[i]))


def reduced_line_values(state: SystemState, schedule, a, b, n):
    mesh = state.mesh
    d = element_aperture(schedule, mesh.points[mesh.interface[:, 0]], mesh.points[mesh.interface[:, 1]],
                         state.t) if len(mesh.interface) else None
    smp = sample_line(mesh, state.S, state.P, a, b, n, state.S_gamma, state.P_gamma, d)
    on = np.isfinite(smp.S_gamma)
    return smp, np.where(on, smp.S_gamma, smp.S), on


def full_line_values(state: SystemState, schedule, a, b, n):
    mesh = state.mesh
    smp = sample_line(mesh, state.S, state.P, a, b, n)
    xi, eta = schedule.to_local(smp.points)
    R = schedule.half_length(state.t)
    on = (np.abs(xi) <= R) & (np.abs(eta) < 1e-9)
    vals = smp.S.copy()
    valid = np.ones(n, dtype=bool)
    if np.any(on):
        d = schedule.aperture_r(np.abs(xi[on]), state.t)
        inside = lambda x: schedule.inside(x, state.t) | (np.abs(schedule.boundary_distance(x, state.t)) < 1e-9)
        avg = segment_average(mesh, state.S, state.P, smp.points[on], d, schedule.normal,
                              inside=inside, velocity=cell_velocity(state), tangent=schedule.direction)
        vals[on] = avg.S
        valid[on] = avg.valid
    return smp, vals, on, valid


def compare_reduced_full(reduced: SystemState, full: SystemState, schedule, line=None, n=513, tol=1e-12):
    """Paired saturation samples along ``line`` and their L1 discrepancy.

    The default line is the fracture centre line at the common time.
    """
    if abs(reduced.t - full.t) > tol:
        raise ScenarioError(f"time mismatch: reduced at {reduced.t}, full at {full.t}")
    if line is None:
        line = (schedule.tip(-1.0, full.t), schedule.tip(1.0, full.t))
    a, b = (np.asarray(p, dtype=float) for p in line)
    smp, s_red, on_red = reduced_line_values(reduced, schedule, a, b, n)
    _, s_full, on_full, valid = full_line_values(full, schedule, a, b, n)
    ok = valid & np.isfinite(s_red) & np.isfinite(s_full)
    ds = smp.arclength[1] - smp.arclength[0] if n > 1 else 0.0
    w = np.full(n, ds)
    w[[0, -1]] *= 0.5
    diff = float(np.sum(w[ok] * np.abs(s_red[ok] - s_full[ok])))
    l1 = float(np.sum(w[ok] * np.abs(s_full[ok])))
    xi, _ = schedule.to_local(smp.points)
    tip_d = np.abs(schedule.half_length(full.t) - np.abs(xi))
    return Comparison(smp.arclength, smp.points, s_red, s_full, on_red | on_full, ok, diff, l1, tip_d)


# ---------------------------------------------------------------- scenario files
_FLOAT_KEYS = {
    "run": ("T", "dt", "h"),
    "fracture": ("R0", "v_prolong", "d0", "v_squeeze"),
    "material": ("rho_w", "rho_nw", "mu_w", "mu_nw", "K_bulk", "porosity", "porosity_fracture"),
    "sources": ("q_w", "q_nw"),
    "initial": ("S",),
}


def load_scenario(path_or_text, mode=None):
    """Parse a scenario file into a :class:`CaseConfig`.

    Sections: ``[case] id``, ``[run] T dt h mode``, ``[fracture] R0
    v_prolong d0 v_squeeze``, ``[material] rho_w rho_nw mu_w mu_nw K_bulk
    porosity porosity_fracture law``, ``[gravity] x y``, ``[sources] q_w
    q_nw``, ``[initial] S`` and ``[boundary.<side>] P S``.
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        if "\n" in str(path_or_text) or "[" in str(path_or_text):
            cp.read_string(str(path_or_text))
        else:
            with open(path_or_text) as fh:
                cp.read_file(fh)
    except (configparser.Error, OSError) as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc

    def num(sec, key):
        raw = cp.get(sec, key)
        try:
            return float(raw)
        except ValueError:
            raise ScenarioError(f"[{sec}] {key}: expected a number, got {raw!r}") from None

    known = {"case", "run", "fracture", "material", "gravity", "sources", "initial"}
    for sec in cp.sections():
        if sec not in known and not sec.startswith("boundary."):
            raise ScenarioError(f"unknown section [{sec}]")
    case = cp.get("case", "id", fallback="2")
    if case not in ("1", "2", "3"):
        raise ScenarioError(f"[case] id: expected 1, 2 or 3, got {case!r}")
    run_mode = mode or cp.get("run", "mode", fallback="reduced")
    kw = {}
    allowed = {sec: set(keys) for sec, keys in _FLOAT_KEYS.items()}
    allowed["material"].add("law")
    allowed["run"].add("mode")
    allowed.update(case={"id"}, gravity={"x", "y"})
    for sec in cp.sections():
        ok = allowed.get(sec, {"P", "S"})
        for key in cp[sec]:
            if key not in ok:
                raise ScenarioError(f"[{sec}] unknown key {key!r}")
    base = case_config(case, run_mode if run_mode in MODES else "reduced")
    if run_mode not in MODES:
        raise ScenarioError(f"[run] mode: expected one of {MODES}, got {run_mode!r}")
    if cp.has_section("run"):
        for key in ("T", "dt", "h"):
            if cp.has_option("run", key):
                kw[key] = num("run", key)
    if cp.has_section("fracture"):
        fk = {k: num("fracture", k) for k in cp["fracture"]}
        kw["schedule"] = replace(base.schedule, **fk)
    if cp.has_section("material"):
        m = cp["material"]
        ph = {k: num("material", k) for k in ("rho_w", "rho_nw", "mu_w", "mu_nw") if k in m}
        try:
            if ph:
                kw["phases"] = replace(base.phases, **ph)
            if "law" in m:
                kw["law"] = physics.RelPermLaw(m["law"])
        except ValueError as exc:
            raise ScenarioError(f"[material] {exc}") from None
        for k in ("K_bulk", "porosity", "porosity_fracture"):
            if k in m:
                kw[k] = num("material", k)
    if cp.has_section("gravity"):
        kw["gravity"] = (num("gravity", "x") if cp.has_option("gravity", "x") else 0.0,
                         num("gravity", "y") if cp.has_option("gravity", "y") else 0.0)
    if cp.has_section("sources"):
        for k in cp["sources"]:
            kw[k] = num("sources", k)
    if cp.has_option("initial", "S"):
        kw["S_init"] = num("initial", "S")
    bcs = []
    for sec in cp.sections():
        if sec.startswith("boundary."):
            side = sec.split(".", 1)[1]
            if side not in ("left", "right", "top", "bottom"):
                raise ScenarioError(f"[{sec}]: unknown side {side!r}")
            bcs.append(BoundaryCondition(side, num(sec, "P") if cp.has_option(sec, "P") else 0.0,
                                         num(sec, "S") if cp.has_option(sec, "S") else 0.0))
    if bcs:
        kw["bcs"] = tuple(bcs)
    try:
        cfg = replace(base, **kw)
        if "h" in kw:
            cfg.h = kw["h"]
        cfg.__post_init__()
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from None
    return cfg
