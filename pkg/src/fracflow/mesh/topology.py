"""Moving triangulation with a conforming 1D interface grid.

The mesh stores vertices, CCW triangles and two sets of constrained
edges: ``interface`` (the reduced fracture, oriented along the fracture)
and ``fracture_edges`` (the resolved fracture boundary in full-dimensional
runs).  Facet adjacency is derived on demand by :func:`build_facets`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import GeometryError, signed_area

# vertex kinds
FREE = 0
BOUNDARY = 1
INTERFACE = 2
TIP = 3
FSIDE = 4
FCAP = 5
FCENTER = 6
FTIP = 7

# facet kinds
INTERIOR = 0
INTERFACE_FACET = 1
DOMAIN_BOUNDARY = 2

BULK = 0
FRACTURE = 1


@dataclass
class MovingMesh:
    points: np.ndarray
    triangles: np.ndarray
    vertex_kind: np.ndarray
    vertex_param: np.ndarray
    interface: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    fracture_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    cell_material: np.ndarray | None = None
    time: float = 0.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.vertex_kind = np.asarray(self.vertex_kind, dtype=np.int8)
        self.vertex_param = np.asarray(self.vertex_param, dtype=float).reshape(-1, 2)
        self.interface = np.asarray(self.interface, dtype=np.int64).reshape(-1, 2)
        self.fracture_edges = np.asarray(self.fracture_edges, dtype=np.int64).reshape(-1, 2)
        if self.cell_material is None:
            self.cell_material = np.zeros(len(self.triangles), dtype=np.int8)
        self.cell_material = np.asarray(self.cell_material, dtype=np.int8)

    @property
    def n_cells(self):
        return len(self.triangles)

    @property
    def n_vertices(self):
        return len(self.points)

    def copy(self):
        return replace(
            self,
            points=self.points.copy(),
            triangles=self.triangles.copy(),
            vertex_kind=self.vertex_kind.copy(),
            vertex_param=self.vertex_param.copy(),
            interface=self.interface.copy(),
            fracture_edges=self.fracture_edges.copy(),
            cell_material=self.cell_material.copy(),
        )

    def cell_points(self, points=None):
        P = self.points if points is None else points
        return P[self.triangles]

    def areas(self, points=None):
        T = self.cell_points(points)
        return signed_area(T[:, 0], T[:, 1], T[:, 2])

    def constrained_keys(self):
        keys = set()
        nv = self.n_vertices
        for arr in (self.interface, self.fracture_edges):
            if len(arr):
                lo = np.minimum(arr[:, 0], arr[:, 1])
                hi = np.maximum(arr[:, 0], arr[:, 1])
                keys.update((lo * nv + hi).tolist())
        return keys

    def interface_lengths(self, points=None):
        P = self.points if points is None else points
        if not len(self.interface):
            return np.zeros(0)
        return np.linalg.norm(P[self.interface[:, 1]] - P[self.interface[:, 0]], axis=1)

    def validate(self):
        """Check positivity and conformity; raise GeometryError otherwise."""
        A = self.areas()
        if np.any(A <= 0):
            raise GeometryError(f"non-positive cell areas in cells {np.nonzero(A <= 0)[0][:10]}")
        fac = build_facets(self)
        if len(self.interface) and np.any(fac.interface_facet < 0):
            raise GeometryError("interface element without matching bulk facet")
        return fac


@dataclass
class Facets:
    """Facet adjacency of a :class:`MovingMesh`.

    ``verts[f] = (a, b)`` is directed so that ``plus[f]`` lies on its left
    and the right-hand normal points from ``plus`` into ``minus``
    (``minus = -1`` on the domain boundary).
    """

    verts: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    kind: np.ndarray
    interface_facet: np.ndarray  # facet index per interface element
    cell_facets: np.ndarray  # (nt, 3) facet ids, local edge k = (v[k], v[k+1])
    cell_sign: np.ndarray  # (nt, 3) +1 if the cell is the plus side


def build_facets(mesh: MovingMesh) -> Facets:
    tri = mesh.triangles
    nt = len(tri)
    nv = mesh.n_vertices
    a = tri.reshape(-1)
    b = tri[:, [1, 2, 0]].reshape(-1)
    owner = np.repeat(np.arange(nt), 3)
    local = np.tile(np.arange(3), nt)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    key = lo.astype(np.int64) * nv + hi
    order = np.argsort(key, kind="stable")
    skey = key[order]
    first = np.ones(len(skey), dtype=bool)
    first[1:] = skey[1:] != skey[:-1]
    fid_sorted = np.cumsum(first) - 1
    nf = int(fid_sorted[-1]) + 1 if len(skey) else 0
    fid = np.empty_like(fid_sorted)
    fid[order] = fid_sorted
    counts = np.bincount(fid, minlength=nf)
    if np.any(counts > 2):
        raise GeometryError("non-manifold edge in triangulation")
    ukey = skey[first]

    # canonical direction: low -> high, except interface edges follow the interface
    dir_a = ukey // nv
    dir_b = ukey % nv
    kind = np.where(counts == 1, DOMAIN_BOUNDARY, INTERIOR).astype(np.int8)
    interface_facet = np.full(len(mesh.interface), -1, dtype=np.int64)
    if len(mesh.interface):
        ia, ib = mesh.interface[:, 0], mesh.interface[:, 1]
        ikey = np.minimum(ia, ib).astype(np.int64) * nv + np.maximum(ia, ib)
        pos = np.searchsorted(ukey, ikey)
        pos = np.clip(pos, 0, max(nf - 1, 0))
        ok = (nf > 0) & (ukey[pos] == ikey)
        interface_facet[ok] = pos[ok]
        f_ok = pos[ok]
        dir_a[f_ok] = ia[ok]
        dir_b[f_ok] = ib[ok]
        kind[f_ok] = INTERFACE_FACET

    plus = np.full(nf, -1, dtype=np.int64)
    minus = np.full(nf, -1, dtype=np.int64)
    forward = a == dir_a[fid]
    plus[fid[forward]] = owner[forward]
    minus[fid[~forward]] = owner[~forward]
    # boundary facets whose only cell sits on the right: flip direction
    bnd_flip = (counts == 1) & (plus < 0)
    if np.any(bnd_flip):
        dir_a[bnd_flip], dir_b[bnd_flip] = dir_b[bnd_flip].copy(), dir_a[bnd_flip].copy()
        plus[bnd_flip] = minus[bnd_flip]
        minus[bnd_flip] = -1
    cell_facets = fid.reshape(nt, 3)
    cell_sign = np.where(plus[cell_facets] == np.arange(nt)[:, None], 1, -1).astype(np.int8)
    return Facets(
        verts=np.stack([dir_a, dir_b], axis=1),
        plus=plus,
        minus=minus,
        kind=kind,
        interface_facet=interface_facet,
        cell_facets=cell_facets,
        cell_sign=cell_sign,
    )
