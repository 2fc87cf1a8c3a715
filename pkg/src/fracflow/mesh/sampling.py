"""Point location and line sampling of cell-wise constant fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import signed_area
from .topology import MovingMesh


def locate(mesh: MovingMesh, points, tol=1e-12, k=16):
    """Cell index containing each point (-1 if outside).

    Points on shared edges or vertices go to the lowest cell index.
    """
    Q = np.atleast_2d(np.asarray(points, dtype=float))
    T = mesh.points[mesh.triangles]
    cen = T.mean(axis=1)
    k = min(k, mesh.n_cells)
    _, cand = cKDTree(cen).query(Q, k=k)
    cand = cand.reshape(len(Q), -1)
    out = np.full(len(Q), -1, dtype=np.int64)
    inside = _contains(T[cand], Q[:, None, :], tol)
    best = np.where(inside, cand, np.iinfo(np.int64).max).min(axis=1)
    found = best < np.iinfo(np.int64).max
    out[found] = best[found]
    # fallback: exhaustive search for points whose cell was not among the candidates
    for i in np.nonzero(~found)[0]:
        hit = np.nonzero(_contains(T, Q[i][None, :], tol))[0]
        if len(hit):
            out[i] = hit.min()
    return out


def _contains(T, q, tol):
    a, b, c = T[..., 0, :], T[..., 1, :], T[..., 2, :]
    area = signed_area(a, b, c)
    s1 = signed_area(a, b, q) / area
    s2 = signed_area(b, c, q) / area
    s3 = signed_area(c, a, q) / area
    return (s1 >= -tol) & (s2 >= -tol) & (s3 >= -tol)


def locate_interface(mesh: MovingMesh, points, tol=1e-9):
    """Interface element containing each point (-1 if none), lowest index on ties."""
    Q = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.full(len(Q), -1, dtype=np.int64)
    if not len(mesh.interface):
        return out
    A = mesh.points[mesh.interface[:, 0]]
    B = mesh.points[mesh.interface[:, 1]]
    e = B - A
    L2 = np.einsum("ij,ij->i", e, e)
    for i, q in enumerate(Q):
        s = np.einsum("ij,ij->i", q - A, e) / L2
        foot = A + s[:, None] * e
        dist = np.linalg.norm(q - foot, axis=1)
        ok = (s >= -tol) & (s <= 1 + tol) & (dist <= tol * np.sqrt(L2))
        hit = np.nonzero(ok)[0]
        if len(hit):
            out[i] = hit.min()
    return out


@dataclass
class LineSamples:
    arclength: np.ndarray
    points: np.ndarray
    S: np.ndarray
    P: np.ndarray
    S_gamma: np.ndarray  # NaN off the interface
    P_gamma: np.ndarray
    aperture: np.ndarray


def sample_line(mesh: MovingMesh, S, P, a, b, n, S_gamma=None, P_gamma=None, aperture=None):
    """``n`` equidistant samples on the segment ``a -> b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = np.linspace(0.0, 1.0, n)
    X = a + s[:, None] * (b - a)
    cells = locate(mesh, X)
    ok = cells >= 0
    Sv = np.full(n, np.nan)
    Pv = np.full(n, np.nan)
    Sv[ok] = np.asarray(S)[cells[ok]]
    Pv[ok] = np.asarray(P)[cells[ok]]
    sg = np.full(n, np.nan)
    pg = np.full(n, np.nan)
    dg = np.full(n, np.nan)
    if S_gamma is not None and len(mesh.interface):
        el = locate_interface(mesh, X)
        hit = el >= 0
        sg[hit] = np.asarray(S_gamma)[el[hit]]
        if P_gamma is not None:
            pg[hit] = np.asarray(P_gamma)[el[hit]]
        if aperture is not None:
            dg[hit] = np.asarray(aperture)[el[hit]]
    return LineSamples(s * np.linalg.norm(b - a), X, Sv, Pv, sg, pg, dg)


@dataclass
class SegmentAverage:
    S: np.ndarray
    P: np.ndarray
    v_tangential: np.ndarray
    valid: np.ndarray


def segment_average(mesh: MovingMesh, S, P, points, d, normal, inside=None, velocity=None, tangent=None,
                    n_quad=32):
    """Averages over the segments ``x + eta n``, ``|eta| <= d/2``, of a
    full-dimensional solution (midpoint rule with ``n_quad`` points).

    ``inside(x)`` flags quadrature points that must belong to the fracture
    region; a segment with any point outside is marked invalid.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    d = np.broadcast_to(np.asarray(d, dtype=float), (len(X),))
    nrm = np.asarray(normal, dtype=float)
    eta = (np.arange(n_quad) + 0.5) / n_quad - 0.5
    Q = X[:, None, :] + (d[:, None] * eta[None, :])[..., None] * nrm
    flat = Q.reshape(-1, 2)
    cells = locate(mesh, flat).reshape(len(X), n_quad)
    valid = np.all(cells >= 0, axis=1)
    if inside is not None:
        valid &= np.all(np.asarray(inside(flat)).reshape(len(X), n_quad), axis=1)
    c = np.where(cells >= 0, cells, 0)
    Sa = np.asarray(S)[c].mean(axis=1)
    Pa = np.asarray(P)[c].mean(axis=1)
    if velocity is not None and tangent is not None:
        vt = (np.asarray(velocity)[c] @ np.asarray(tangent)).mean(axis=1)
    else:
        vt = np.full(len(X), np.nan)
    return SegmentAverage(Sa, Pa, vt, valid)
