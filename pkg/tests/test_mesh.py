import numpy as np
import pytest

from fracflow.mesh.build import build_full, build_plain, build_reduced, label_cells
from fracflow.mesh.geometry import GeometryError
from fracflow.mesh.motion import MeshMotionError, invalid_cells, mesh_targets, move_vertices
from fracflow.mesh.quality import QualityThresholds, quality_indicator
from fracflow.mesh.remesh import CellState, remesh
from fracflow.mesh.topology import (DOMAIN_BOUNDARY, FRACTURE, INTERFACE_FACET, INTERIOR, MovingMesh,
                                    build_facets)
from fracflow.scenarios import FractureSchedule

import helpers
import oracles

C1 = FractureSchedule(v_prolong=0.25, d0=0.1)
C2 = FractureSchedule(v_prolong=0.25, d0=0.01)
C3 = FractureSchedule(v_prolong=0.0, d0=0.01, v_squeeze=0.005)


def _cover(mesh):
    return float(mesh.areas().sum())


def test_plain_mesh_covers_box():
    m, spec = build_plain((0.0, 2.0, 0.0, 0.5), 1 / 8)
    assert _cover(m) == pytest.approx(1.0, rel=1e-12)
    assert spec.schedule is None
    fac = m.validate()
    assert np.all(fac.kind != INTERFACE_FACET)


def test_facet_orientation():
    m, _ = build_plain(h=1 / 8)
    fac = build_facets(m)
    X = m.points
    cen = X[m.triangles].mean(1)
    a, b = X[fac.verts[:, 0]], X[fac.verts[:, 1]]
    e = b - a
    # plus on the left of a->b, minus on the right
    left = e[:, 0] * (cen[fac.plus, 1] - a[:, 1]) - e[:, 1] * (cen[fac.plus, 0] - a[:, 0])
    assert np.all(left > 0)
    inner = fac.minus >= 0
    right = e[inner, 0] * (cen[fac.minus[inner], 1] - a[inner, 1]) - e[inner, 1] * (cen[fac.minus[inner], 0] - a[inner, 0])
    assert np.all(right < 0)
    assert np.all((fac.kind == DOMAIN_BOUNDARY) == (fac.minus < 0))
    # every cell sees its three facets
    assert np.all(fac.plus[fac.cell_facets[fac.cell_sign > 0]] == np.nonzero(fac.cell_sign > 0)[0])


def test_reduced_mesh_carries_interface():
    m, spec = build_reduced(C2, 1 / 32)
    fac = m.validate()
    assert _cover(m) == pytest.approx(1.0, rel=1e-12)
    assert len(m.interface) > 0
    assert np.all(fac.interface_facet >= 0)
    assert np.all(fac.kind[fac.interface_facet] == INTERFACE_FACET)
    X = m.points[m.interface]
    xi, eta = C2.to_local(X.reshape(-1, 2))
    assert np.max(np.abs(eta)) < 1e-12
    assert np.sum(m.interface_lengths()) == pytest.approx(2 * C2.half_length(0.0), rel=1e-12)
    # chain is ordered and consecutive
    assert np.all(m.interface[1:, 0] == m.interface[:-1, 1])


def test_full_mesh_geometry_consistency():
    m, spec = build_full(C1, 1 / 16)
    m.validate()
    assert _cover(m) == pytest.approx(1.0, rel=1e-12)
    v = np.unique(m.fracture_edges)
    assert np.max(np.abs(C1.boundary_distance(m.points[v], 0.0))) <= 1e-10
    frac = m.cell_material == FRACTURE
    assert frac.any() and (~frac).any()
    # fracture cells sit inside the resolved region
    cen = m.points[m.triangles].mean(1)
    assert np.all(C1.inside(cen[frac], 0.0))


def test_full_mesh_moves_with_the_boundary():
    m, spec = build_full(C1, 1 / 16)
    X = mesh_targets(m, spec, 0.05)
    v = np.unique(m.fracture_edges)
    assert np.max(np.abs(C1.boundary_distance(X[v], 0.05))) <= 1e-10
    assert len(invalid_cells(m, X)) == 0


def test_label_cells_agrees_with_builder():
    m, _ = build_full(C2, 1 / 16)
    assert np.array_equal(label_cells(m, C2, 0.0), m.cell_material)


def test_motion_tips_follow_schedule():
    m, spec = build_reduced(C1, 1 / 32)
    X = mesh_targets(m, spec, 0.1)
    ends = X[[m.interface[0, 0], m.interface[-1, 1]]]
    xi, _ = C1.to_local(ends)
    assert np.sort(np.abs(xi)) == pytest.approx([C1.half_length(0.1)] * 2, rel=1e-12)


def test_move_vertices_rejects_inversion():
    m = MovingMesh(np.array([[0.0, 0], [1, 0], [0, 1]]), np.array([[0, 1, 2]]), np.zeros(3), np.zeros((3, 2)))
    vel = np.array([[0.0, 0], [0, 0], [0, -2.0]])
    with pytest.raises(MeshMotionError):
        move_vertices(m, vel, 0.0, 1.0)


def test_validate_rejects_inverted():
    m = MovingMesh(np.array([[0.0, 0], [1, 0], [0, 1]]), np.array([[0, 2, 1]]), np.zeros(3), np.zeros((3, 2)))
    with pytest.raises(GeometryError):
        m.validate()


def test_quality_flags_stretched_cells():
    m, spec = build_reduced(C1, 1 / 16)
    rep = quality_indicator(m, spec, mesh_targets(m, spec, 0.3), QualityThresholds())
    assert rep.flagged


def test_remesh_conserves_through_many_steps():
    m, spec = build_reduced(C1, 1 / 16)
    rng = np.random.default_rng(0)
    st = CellState(rng.uniform(0, 1, m.n_cells), np.zeros(m.n_cells), rng.uniform(0, 1, len(m.interface)),
                   np.zeros(len(m.interface)))
    for k in range(1, 21):
        t = 0.05 * k
        mass0 = float(np.sum(st.S * m.areas()))
        rr = remesh(m, st, spec, t)
        m, st = rr.mesh, rr.state
        assert float(np.sum(st.S * m.areas())) == pytest.approx(mass0, rel=1e-12)
        assert len(invalid_cells(m, rr.targets)) == 0
        m = m.copy()
        m.points = rr.targets
        m.time = t
        m.validate()
    xi, _ = C1.to_local(m.points[[m.interface[0, 0], m.interface[-1, 1]]])
    assert np.sort(np.abs(xi)) == pytest.approx([0.5, 0.5], rel=1e-12)


def test_random_events_conserve_mass():
    ev = helpers.random_remesh_events(40, seed=7)
    assert len(ev) == 40
    assert {e[0] for e in ev} == {"bisect", "remove"}
    assert max(e[1] for e in ev) <= 1e-12
    assert max(e[2] for e in ev) <= 1e-12


def test_remesh_untouched_when_not_flagged():
    m, spec = build_plain(h=1 / 8)
    st = CellState(np.ones(m.n_cells), np.zeros(m.n_cells))
    first = remesh(m, st, spec, 0.1)
    rr = remesh(first.mesh, first.state, spec, 0.1)
    assert not rr.changed and rr.mesh is first.mesh


def test_oracle_tri_area_consistent():
    m, _ = build_plain(h=1 / 4)
    A = np.array([oracles.tri_area(m.points[t]) for t in m.triangles])
    assert np.allclose(A, m.areas(), rtol=1e-14)
