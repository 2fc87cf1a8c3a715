"""Per-step geometric quantities of the moving-mesh finite volume scheme.

A :class:`StepGeometry` is built for a fixed connectivity and a pair of
vertex configurations ``Xa`` (time ``ta``) and ``Xb`` (time ``tb``); all
fluxes of the implicit step are evaluated on ``Xb`` while the swept areas
integrate the linear motion in between.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mesh.geometry import GeometryError, circumcenter, rot_cw, signed_area, swept_area
from ..mesh.topology import DOMAIN_BOUNDARY, FRACTURE, INTERFACE_FACET, INTERIOR, MovingMesh, build_facets

# one-sided distances below this fraction of the facet length are floored
DELTA_FLOOR = 0.05
# paired distances (interior facets) only when nearly cocircular
PAIR_FLOOR = 1e-3


@dataclass
class BoundaryCondition:
    """Dirichlet data on one side of the box; sides without a condition are no-flow."""

    side: str  # left | right | bottom | top
    P: object = 0.0  # number or callable of facet midpoints
    S: float = 0.0

    def pressure(self, x):
        return np.asarray(self.P(x), dtype=float) if callable(self.P) else np.full(len(x), float(self.P))


def facet_on_side(mid, box, side, tol=1e-9):
    x0, x1, y0, y1 = box
    col, val = {"left": (0, x0), "right": (0, x1), "bottom": (1, y0), "top": (1, y1)}[side]
    return np.abs(mid[:, col] - val) <= tol


def element_aperture(schedule, Xa, Xb, t):
    """Aperture at the midpoints of the segments ``Xa -> Xb``."""
    if schedule is None:
        return np.ones(len(Xa))
    xi, _ = schedule.to_local(0.5 * (Xa + Xb))
    return schedule.aperture_r(np.abs(xi), t)


@dataclass
class StepGeometry:
    mesh: MovingMesh
    facets: object
    ta: float
    tb: float
    A0: np.ndarray
    A1: np.ndarray
    centers: np.ndarray
    cell_K: np.ndarray  # (nc, 2, 2)
    # facets
    length: np.ndarray
    normal: np.ndarray  # unit, plus -> minus
    mid: np.ndarray
    swept: np.ndarray
    delta_plus: np.ndarray
    delta_minus: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    dirichlet: np.ndarray  # bool per boundary facet
    bc_P: np.ndarray
    bc_S: np.ndarray
    floored: int
    # interface elements
    iface_facet: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    L0: np.ndarray
    L1: np.ndarray
    tangent: np.ndarray
    # junctions between consecutive interface elements
    junc_a: np.ndarray
    junc_b: np.ndarray
    junc_d: np.ndarray
    junc_ta: np.ndarray  # midpoint(a) -> vertex
    junc_tb: np.ndarray  # midpoint(b) -> vertex
    junc_shift: np.ndarray  # vertex displacement along the tangent

    @property
    def n_cells(self):
        return len(self.A1)

    @property
    def n_iface(self):
        return len(self.d1)

    def dgcl_residual(self):
        """Max relative mismatch between summed swept areas and area change."""
        fac = self.facets
        dA = np.zeros(self.n_cells)
        np.add.at(dA, fac.plus, self.swept)
        inner = fac.minus >= 0
        np.add.at(dA, fac.minus[inner], -self.swept[inner])
        return float(np.max(np.abs(dA - (self.A1 - self.A0)) / self.A1)) if self.n_cells else 0.0


def cell_permeability(mesh, X, t, K_bulk, schedule, full):
    nc = mesh.n_cells
    K = np.broadcast_to(np.asarray(K_bulk, dtype=float), (nc, 2, 2)).copy()
    if full and schedule is not None:
        frac = mesh.cell_material == FRACTURE
        if np.any(frac):
            cen = X[mesh.triangles[frac]].mean(axis=1)
            r = np.linalg.norm(cen - schedule.center, axis=1)
            kf = schedule.aperture_r(r, t) ** 2 / 12.0
            K[frac] = kf[:, None, None] * np.eye(2)
    return K


def step_geometry(mesh: MovingMesh, Xa, Xb, ta, tb, *, K_bulk, schedule=None, full=False,
                  box=(0.0, 1.0, 0.0, 1.0), bcs=(), facets=None) -> StepGeometry:
    fac = facets if facets is not None else build_facets(mesh)
    tri = mesh.triangles
    A0 = signed_area(Xa[tri[:, 0]], Xa[tri[:, 1]], Xa[tri[:, 2]])
    A1 = signed_area(Xb[tri[:, 0]], Xb[tri[:, 1]], Xb[tri[:, 2]])
    if np.any(A1 <= 0) or np.any(A0 <= 0):
        raise GeometryError("non-positive cell area in step geometry")
    C = circumcenter(Xb[tri[:, 0]], Xb[tri[:, 1]], Xb[tri[:, 2]])
    a, b = fac.verts[:, 0], fac.verts[:, 1]
    e = Xb[b] - Xb[a]
    L = np.linalg.norm(e, axis=1)
    n = rot_cw(e) / L[:, None]
    mid = 0.5 * (Xb[a] + Xb[b])
    V = swept_area(Xa[a], Xa[b], Xb[a] - Xa[a], Xb[b] - Xa[b])

    dp = np.einsum("ij,ij->i", mid - C[fac.plus], n)
    inner = fac.minus >= 0
    dm = np.zeros(len(L))
    dm[inner] = np.einsum("ij,ij->i", C[fac.minus[inner]] - mid[inner], n[inner])
    interior = np.nonzero(fac.kind == INTERIOR)[0]
    # one-sided distances must stay positive where they are not paired
    floor = DELTA_FLOOR * L
    single = fac.kind != INTERIOR
    low_p = single & (dp < floor)
    low_m = (fac.kind == INTERFACE_FACET) & (dm < floor)
    dp = np.where(low_p, floor, dp)
    dm = np.where(low_m, floor, dm)
    # constrained non-Delaunay facets (resolved fracture boundary) may cross
    pfloor = PAIR_FLOOR * L
    pair = (fac.kind == INTERIOR) & (dp + dm < pfloor)
    if np.any(pair):
        dp = np.where(pair, np.maximum(dp, 0.5 * pfloor), dp)
        dm = np.where(pair, np.maximum(dm, 0.5 * pfloor), dm)
    if not np.all(np.isfinite(dp)) or not np.all(np.isfinite(dm)):
        raise GeometryError("non-finite circumcentre distances")

    boundary = np.nonzero(fac.kind == DOMAIN_BOUNDARY)[0]
    dirichlet = np.zeros(len(boundary), dtype=bool)
    bc_P = np.zeros(len(boundary))
    bc_S = np.zeros(len(boundary))
    for bc in bcs:
        on = facet_on_side(mid[boundary], box, bc.side)
        dirichlet |= on
        bc_P[on] = bc.pressure(mid[boundary][on])
        bc_S[on] = bc.S

    K = cell_permeability(mesh, Xb, tb, K_bulk, schedule, full)

    # interface grid
    ifc = mesh.interface
    ni = len(ifc)
    if ni:
        d0 = element_aperture(schedule, Xa[ifc[:, 0]], Xa[ifc[:, 1]], ta)
        d1 = element_aperture(schedule, Xb[ifc[:, 0]], Xb[ifc[:, 1]], tb)
        L0 = np.linalg.norm(Xa[ifc[:, 1]] - Xa[ifc[:, 0]], axis=1)
        L1 = np.linalg.norm(Xb[ifc[:, 1]] - Xb[ifc[:, 0]], axis=1)
        tan = (Xb[ifc[:, 1]] - Xb[ifc[:, 0]]) / L1[:, None]
        start = {int(s): k for k, s in enumerate(ifc[:, 0])}
        ja = np.array([k for k in range(ni) if int(ifc[k, 1]) in start], dtype=np.int64)
        jb = np.array([start[int(ifc[k, 1])] for k in ja], dtype=np.int64)
        vtx = ifc[ja, 1]
        mid_el = 0.5 * (Xb[ifc[:, 0]] + Xb[ifc[:, 1]])
        junc_ta = Xb[vtx] - mid_el[ja]
        junc_tb = Xb[vtx] - mid_el[jb]
        if schedule is not None:
            xi, _ = schedule.to_local(Xb[vtx])
            jd = schedule.aperture_r(np.abs(xi), tb)
        else:
            jd = np.ones(len(ja))
        t_avg = tan[ja] + tan[jb]
        t_avg /= np.linalg.norm(t_avg, axis=1)[:, None]
        shift = np.einsum("ij,ij->i", Xb[vtx] - Xa[vtx], t_avg)
    else:
        d0 = d1 = L0 = L1 = np.zeros(0)
        tan = np.zeros((0, 2))
        ja = jb = np.zeros(0, dtype=np.int64)
        jd = shift = np.zeros(0)
        junc_ta = junc_tb = np.zeros((0, 2))
    return StepGeometry(
        mesh=mesh, facets=fac, ta=ta, tb=tb, A0=A0, A1=A1, centers=C, cell_K=K,
        length=L, normal=n, mid=mid, swept=V, delta_plus=dp, delta_minus=dm,
        interior=interior, boundary=boundary, dirichlet=dirichlet, bc_P=bc_P, bc_S=bc_S,
        floored=int(low_p.sum() + low_m.sum() + pair.sum()),
        iface_facet=fac.interface_facet, d0=d0, d1=d1, L0=L0, L1=L1, tangent=tan,
        junc_a=ja, junc_b=jb, junc_d=jd, junc_ta=junc_ta, junc_tb=junc_tb, junc_shift=shift,
    )
