import numpy as np
import pytest
import scipy.sparse as sp

from fracflow.mesh.geometry import circumcenter
from fracflow.scenarios import case_config, make_run
from fracflow.solver import newton
from fracflow.solver.assembly import Assembler
from fracflow.solver.discretization import BoundaryCondition, step_geometry
from fracflow.solver.stepper import SystemState, advance, run

import oracles

SIDES = ("left", "right", "bottom", "top")


def _params(K=1.0, gravity=(0.0, 0.0)):
    cfg = case_config(1, K_bulk=K, gravity=gravity)
    p = cfg.flow_params()
    p.pin_pressure = False
    return p


def _static(mesh, p, bcs, dt=0.01):
    X = mesh.points
    geo = step_geometry(mesh, X, X, 0.0, dt, K_bulk=p.K_bulk, box=(0.0, 1.0, 0.0, 1.0), bcs=bcs)
    T = mesh.triangles
    C = circumcenter(X[T[:, 0]], X[T[:, 1]], X[T[:, 2]])
    return geo, C


def linear_pressure_divergence(seed, h=1 / 16, a=(0.7, -1.3)):
    """Max per-cell integrated divergence for a sampled linear pressure."""
    a = np.asarray(a)
    mesh = oracles.delaunay_square(h, seed)
    p = _params()
    bcs = [BoundaryCondition(s, P=lambda x: x @ a, S=0.0) for s in SIDES]
    geo, C = _static(mesh, p, bcs)
    asm = Assembler(geo, p, np.zeros(mesh.n_cells), np.zeros(0))
    x = np.zeros(2 * mesh.n_cells)
    x[1::2] = C @ a
    r = asm.residual(x)
    return geo.floored, float(np.max(np.abs(r[1::2] * geo.A1 / asm.dt)))


def hydrostatic_divergence(seed, S=0.3, h=1 / 16, K=1e-8):
    """Max per-cell integrated divergence at the discrete hydrostatic state,
    and the same quantity with the pressure switched off (the gravity drive)."""
    from fracflow import physics
    mesh = oracles.delaunay_square(h, seed)
    g = np.array([0.0, -9.81])
    p = _params(K=K, gravity=tuple(g))
    G = float(physics.gravity_fraction(np.array([S]), p.bulk)[0])
    bcs = [BoundaryCondition(s, P=lambda x: G * (x @ g), S=S) for s in SIDES]
    geo, C = _static(mesh, p, bcs)
    asm = Assembler(geo, p, np.full(mesh.n_cells, S), np.zeros(0))
    x = np.zeros(2 * mesh.n_cells)
    x[0::2] = S
    x[1::2] = G * (C @ g)
    div = np.abs(asm.residual(x)[1::2] * geo.A1 / asm.dt)
    x[1::2] = 0.0
    drive = np.abs(asm.residual(x)[1::2] * geo.A1 / asm.dt)
    return geo.floored, float(div.max()), float(drive.max())


@pytest.mark.parametrize("seed", [2, 4, 5])
def test_tpfa_linear_exactness(seed):
    floored, div = linear_pressure_divergence(seed)
    assert floored == 0
    assert div <= 1e-12


def test_hydrostatic_state_has_no_flux():
    floored, div, drive = hydrostatic_divergence(2)
    assert floored == 0
    assert div <= 1e-12
    # unit permeability: only round-off of the O(1e3) pressures remains
    _, div, drive = hydrostatic_divergence(2, K=1.0)
    assert div <= 1e-12 * drive


def test_jacobian_matches_global_difference():
    cfg = case_config(2, h=1 / 8)
    state, sim = make_run(cfg)
    rng = np.random.default_rng(0)
    mesh = state.mesh
    X = mesh.points
    geo = sim.geometry(mesh, X, X, 0.0, 0.01)
    nb, ni = mesh.n_cells, len(mesh.interface)
    S_old = rng.uniform(0.1, 0.9, nb)
    asm = Assembler(geo, sim.params, S_old, rng.uniform(0.1, 0.9, ni), p_scale=1e3)
    x = np.empty(2 * (nb + ni))
    x[0::2] = rng.uniform(0.2, 0.8, nb + ni)
    x[1::2] = rng.normal(0, 1e3, nb + ni)
    r, J = asm.residual(x, jacobian=True)
    scale = np.where(np.arange(len(x)) % 2 == 0, 1.0, 1e3)
    Jfd = oracles.fd_jacobian(asm.residual, x, eps=1e-6, scale=scale)
    Jd = J.toarray()
    err = np.abs(Jd - Jfd) * scale[None, :]
    ref = np.abs(Jfd).max(axis=1, keepdims=True) * scale.max() + 1e-30
    assert np.max(err / ref) < 1e-4


def test_newton_linear_single_iteration():
    A = sp.csr_matrix(np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]]))
    b = np.array([1.0, 2.0, 3.0])

    def res(x, jacobian=False):
        r = A @ x - b
        return (r, A) if jacobian else r

    out = newton.newton_solve(res, np.zeros(3))
    assert out.converged and out.iterations == 1
    assert np.allclose(A @ out.x, b, atol=1e-12)


def test_newton_reports_failure():
    def res(x, jacobian=False):
        r = np.array([x[0] ** 2 + 1.0])
        return (r, sp.csr_matrix([[2 * x[0] + 1e-3]])) if jacobian else r

    out = newton.newton_solve(res, np.array([0.3]))
    assert not out.converged


def test_newton_singular():
    def res(x, jacobian=False):
        r = np.array([1.0, 1.0])
        return (r, sp.csr_matrix((2, 2))) if jacobian else r

    with pytest.raises(newton.NewtonError):
        newton.newton_solve(res, np.zeros(2))


def test_unknown_layout_roundtrip():
    st = SystemState(None, np.array([0.1, 0.2]), np.array([1.0, 2.0]), np.array([0.5]), np.array([3.0]), 0.0)
    x = st.unknowns()
    assert np.array_equal(x, [0.1, 1.0, 0.2, 2.0, 0.5, 3.0])
    st.set_unknowns(x * 2)
    assert np.array_equal(st.P_gamma, [6.0])


def test_fluxes_cancel_between_control_volumes():
    # closed box, no sources: every kernel output leaves one volume and enters another
    cfg = case_config(1, h=1 / 8, S_init=0.4, gravity=(0.3, -9.81))
    state, sim = make_run(cfg)
    mesh = state.mesh
    X0 = mesh.points
    from fracflow.mesh.motion import mesh_targets
    X1 = mesh_targets(mesh, sim.spec, 0.01)
    geo = sim.geometry(mesh, X0, X1, 0.0, 0.01)
    rng = np.random.default_rng(1)
    nb, ni = mesh.n_cells, len(mesh.interface)
    asm = Assembler(geo, sim.params, np.full(nb, 0.4), np.full(ni, 0.4))
    x = np.empty(2 * (nb + ni))
    x[0::2] = rng.uniform(0, 1, nb + ni)
    x[1::2] = rng.normal(0, 1, nb + ni)
    sim.params.pin_pressure = False
    r = asm.residual(x) - asm.accumulation(x)
    vol = np.concatenate([geo.A1, geo.d1 * geo.L1])
    for off in (0, 1):
        tot = np.sum(vol * r[off::2])
        size = np.sum(np.abs(vol * r[off::2]))
        assert abs(tot) <= 1e-13 * size


def test_constant_state_preserved_under_motion():
    cfg = case_config(1, h=1 / 16)
    state, sim = make_run(cfg)
    state, reps = run(state, sim, 0.05, 0.01)
    assert np.max(np.abs(state.S - 1.0)) <= 1e-8
    assert max(r.mass_error for r in reps) <= 1e-9
    assert max(r.dgcl for r in reps) <= 1e-13
    assert np.max(np.abs(state.P)) <= 1e-8


def test_case2_steps_conserve_mass():
    cfg = case_config(2, h=1 / 16)
    state, sim = make_run(cfg)
    for k in (1, 2):
        state, rep = advance(state, sim, 0.01 * k, step=k)
        assert rep.mass_error <= 1e-9
        assert rep.injected > 0
        assert 0.0 <= state.S.min() and state.S.max() <= 1.0
    assert np.any(state.S_gamma > 0)


def test_step_halving_recovers(monkeypatch):
    cfg = case_config(2, h=1 / 16)
    state, sim = make_run(cfg)
    calls = {"n": 0}
    real = newton.newton_solve

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] == 1:
            raise newton.NewtonError("forced")
        return real(*a, **k)

    import fracflow.solver.stepper as stepper
    monkeypatch.setattr(stepper, "newton_solve", flaky)
    state, rep = advance(state, sim, 0.01, step=1)
    assert rep.substeps == 2
    assert rep.mass_error <= 1e-9


def test_step_failure_after_max_halvings(monkeypatch):
    cfg = case_config(2, h=1 / 16)
    state, sim = make_run(cfg)
    import fracflow.solver.stepper as stepper

    def never(*a, **k):
        raise newton.NewtonError("forced")

    monkeypatch.setattr(stepper, "newton_solve", never)
    with pytest.raises(stepper.StepFailure):
        advance(state, sim, 0.01, step=1)
