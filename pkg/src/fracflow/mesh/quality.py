"""Mesh quality indicator evaluated at the end-of-step vertex positions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import incircle, min_area_over_step, radius_ratio
from .topology import (BOUNDARY, DOMAIN_BOUNDARY, FCAP, FREE, FSIDE, FTIP, INTERFACE, INTERFACE_FACET,
                       TIP, MovingMesh, build_facets)


@dataclass
class QualityThresholds:
    min_radius_ratio: float = 0.25
    max_edge_ratio: float = 4.0
    short: float = 0.5
    long: float = 1.6


@dataclass
class QualityReport:
    score: np.ndarray
    bad_cells: np.ndarray
    invalid_cells: np.ndarray
    short_edges: np.ndarray
    long_edges: np.ndarray
    flip_edges: np.ndarray
    encroached: np.ndarray
    facets: object = field(repr=False, default=None)

    @property
    def flagged(self):
        return bool(len(self.invalid_cells) or len(self.short_edges) or len(self.long_edges)
                    or len(self.flip_edges) or len(self.encroached) or len(self.bad_cells))


# edges between these kinds carry fixed geometry and are never resized
_FIXED = {FCAP, FTIP, TIP}


def quality_indicator(mesh: MovingMesh, spec, targets=None, thresholds=None, facets=None):
    """Per-cell radius-ratio score and edge flags at ``targets``.

    ``short_edges``/``long_edges`` hold facet ids to coarsen/bisect;
    constrained facets are only ever bisected (or coarsened through the
    chain-aware removal of one of their vertices).
    """
    th = thresholds or QualityThresholds()
    fac = facets if facets is not None else build_facets(mesh)
    X = mesh.points if targets is None else targets
    T = X[mesh.triangles]
    score = radius_ratio(T[:, 0], T[:, 1], T[:, 2])
    L = np.linalg.norm(T[:, [1, 2, 0]] - T, axis=2)
    ratio = L.max(1) / np.maximum(L.min(1), 1e-300)
    bad = np.nonzero((score < th.min_radius_ratio) | (ratio > th.max_edge_ratio))[0]

    D = (X - mesh.points)[mesh.triangles]
    amin = min_area_over_step(mesh.points[mesh.triangles], D)
    invalid = np.nonzero(amin <= 1e-10 * np.abs(mesh.areas()))[0]

    a, b = fac.verts[:, 0], fac.verts[:, 1]
    length = np.linalg.norm(X[b] - X[a], axis=1)
    size = spec.size(0.5 * (X[a] + X[b])) if spec is not None else np.full(len(a), np.median(length))
    ka, kb = mesh.vertex_kind[a], mesh.vertex_kind[b]
    fixed = np.isin(ka, list(_FIXED)) & np.isin(kb, list(_FIXED))
    short = np.nonzero((length < th.short * size) & ~fixed)[0]
    long_ = np.nonzero((length > th.long * size) & ~fixed)[0]

    # Delaunay test on unconstrained interior facets
    constrained = mesh.constrained_keys()
    nv = mesh.n_vertices
    key = np.minimum(a, b) * nv + np.maximum(a, b)
    is_con = np.fromiter((k in constrained for k in key.tolist()), bool, len(key)) if constrained else np.zeros(len(key), bool)
    interior = (fac.minus >= 0) & ~is_con & (fac.kind != INTERFACE_FACET)
    flips = np.zeros(0, dtype=np.int64)
    if np.any(interior):
        f = np.nonzero(interior)[0]
        tp = mesh.triangles[fac.plus[f]]
        tm = mesh.triangles[fac.minus[f]]
        opp_p = _opposite(tp, a[f], b[f])
        opp_m = _opposite(tm, a[f], b[f])
        # plus triangle is CCW (a, b, opp_p); test opp_m against it
        val = incircle(X[a[f]], X[b[f]], X[opp_p], X[opp_m])
        scale = np.maximum(length[f], 1e-300) ** 4
        flips = f[val > 1e-12 * scale]

    # constrained facets whose neighbouring circumcentre crosses to the far side
    enc = _encroached(mesh, fac, X, is_con)
    return QualityReport(score, bad, invalid, short, long_, flips, enc, fac)


def _opposite(tri, a, b):
    m = (tri != a[:, None]) & (tri != b[:, None])
    return tri[np.arange(len(tri)), np.argmax(m, axis=1)]


def _encroached(mesh, fac, X, is_con):
    con = np.nonzero(is_con | (fac.kind == DOMAIN_BOUNDARY))[0]
    if not len(con):
        return con
    a, b = fac.verts[con, 0], fac.verts[con, 1]
    out = np.zeros(len(con), dtype=bool)
    for side in (fac.plus, fac.minus):
        cells = side[con]
        ok = cells >= 0
        tri = mesh.triangles[cells[ok]]
        opp = _opposite(tri, a[ok], b[ok])
        pa, pb, po = X[a[ok]], X[b[ok]], X[opp]
        # angle at the opposite vertex >= 90 degrees puts the circumcentre across the facet
        dot = np.einsum("ij,ij->i", pa - po, pb - po)
        l2 = np.einsum("ij,ij->i", pb - pa, pb - pa)
        out[np.nonzero(ok)[0]] |= dot <= 1e-3 * l2
    return con[out]
