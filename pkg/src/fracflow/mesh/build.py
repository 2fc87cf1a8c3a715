"""Initial mesh construction.

Three layouts are provided:

* ``plain``: a rectangle covered by an equilateral lattice (no fracture);
* ``reduced``: the unit square with a lattice aligned to the fracture so
  that one lattice row carries the interface edges;
* ``full``: the unit square with the fracture resolved as a subdomain,
  refined around it with rows that follow the fracture boundary.

Points are triangulated with :class:`scipy.spatial.Delaunay`; constrained
edges are produced by placing points so that they are Delaunay edges and
are verified afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .geometry import GeometryError, signed_area
from .topology import (BOUNDARY, BULK, FCAP, FCENTER, FRACTURE, FREE, FSIDE, FTIP, INTERFACE,
                       TIP, MovingMesh)

_S3 = np.sqrt(3.0) / 2.0


@dataclass
class MeshSpec:
    """Sizing and motion parameters that travel with a mesh."""

    mode: str
    h: float
    hf: float
    schedule: object = None
    xi_max: float = 0.0
    blend_radius: float = 0.0
    band: float = 0.0
    box: tuple = (0.0, 1.0, 0.0, 1.0)

    def size(self, x):
        """Target edge length at points ``x``."""
        x = np.atleast_2d(x)
        if self.mode != "full":
            return np.full(len(x), self.h)
        xi, eta = self.schedule.to_local(x)
        dx = np.maximum(np.abs(xi) - self.xi_max, 0.0)
        dist = np.hypot(dx, eta)
        return np.clip(self.hf + 0.35 * (dist - self.band), self.hf, self.h)


def _boundary_points(box, h):
    x0, x1, y0, y1 = box
    nx = max(1, int(round((x1 - x0) / h)))
    ny = max(1, int(round((y1 - y0) / h)))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    pts = [np.stack([xs, np.full_like(xs, y0)], 1),
           np.stack([np.full_like(ys[1:], x1), ys[1:]], 1),
           np.stack([xs[::-1][1:], np.full(nx, y1)], 1),
           np.stack([np.full(ny - 1, x0), ys[::-1][1:-1]], 1)]
    return np.concatenate(pts)


def _box_distance(x, box):
    x0, x1, y0, y1 = box
    return np.minimum.reduce([x[:, 0] - x0, x1 - x[:, 0], x[:, 1] - y0, y1 - x[:, 1]])


def _lattice(origin, e, m, h, extent):
    """Equilateral lattice with rows parallel to ``e``; row 0 passes through ``origin``."""
    nr = int(np.ceil(extent / (h * _S3))) + 2
    nc = int(np.ceil(extent / h)) + 2
    j = np.arange(-nr, nr + 1)
    i = np.arange(-nc, nc + 1)
    J, I = np.meshgrid(j, i, indexing="ij")
    xi = (I + 0.5 * (J % 2)) * h
    eta = J * h * _S3
    pts = origin + xi.reshape(-1, 1) * e + eta.reshape(-1, 1) * m
    return pts, xi.reshape(-1), J.reshape(-1)


def _triangulate(points):
    tri = Delaunay(points, qhull_options="Qbb Qc Qz Q12").simplices.astype(np.int64)
    P = points[tri]
    A = signed_area(P[:, 0], P[:, 1], P[:, 2])
    flip = A < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    A = np.abs(A)
    keep = A > 1e-14 * np.max(A)
    return tri[keep]


def _edge_keys(tri, nv):
    a = tri.reshape(-1)
    b = tri[:, [1, 2, 0]].reshape(-1)
    return set((np.minimum(a, b) * nv + np.maximum(a, b)).tolist())


def _check_constrained(tri, nv, edges, what):
    keys = _edge_keys(tri, nv)
    missing = [tuple(e) for e in edges if min(e) * nv + max(e) not in keys]
    if missing:
        raise GeometryError(f"{len(missing)} {what} edges missing from the triangulation, e.g. {missing[:3]}")


def build_plain(box=(0.0, 1.0, 0.0, 1.0), h=1.0 / 16):
    """Lattice triangulation of an axis-aligned rectangle."""
    x0, x1, y0, y1 = box
    origin = np.array([0.5 * (x0 + x1), 0.5 * (y0 + y1)])
    extent = 0.75 * max(x1 - x0, y1 - y0) + h
    lat, _, _ = _lattice(origin, np.array([1.0, 0.0]), np.array([0.0, 1.0]), h, extent)
    lat = lat[_box_distance(lat, box) >= 0.55 * h]
    bnd = _boundary_points(box, h)
    pts = np.concatenate([bnd, lat])
    kind = np.concatenate([np.full(len(bnd), BOUNDARY), np.full(len(lat), FREE)])
    tri = _triangulate(pts)
    mesh = MovingMesh(pts, tri, kind, np.zeros((len(pts), 2)))
    spec = MeshSpec("plain", h, h, None, box=tuple(box), blend_radius=3 * h)
    return mesh, spec


def build_reduced(schedule, h=1.0 / 64, t0=0.0, blend=3.0):
    """Unit square with the fracture segment as a chain of interface edges."""
    box = (0.0, 1.0, 0.0, 1.0)
    e, m, c = schedule.direction, schedule.normal, schedule.center
    R = schedule.half_length(t0)
    lat, xi, J = _lattice(c, e, m, h, 0.75 + h)
    inside = _box_distance(lat, box) >= 0.55 * h
    row0 = J == 0
    near_tip = row0 & (np.abs(np.abs(xi) - R) < 0.3 * h)
    keep = inside & ~near_tip
    lat, xi, J = lat[keep], xi[keep], J[keep]
    row0 = J == 0
    on_iface = row0 & (np.abs(xi) < R)
    bnd = _boundary_points(box, h)
    tips = np.stack([schedule.tip(-1.0, t0), schedule.tip(1.0, t0)])
    pts = np.concatenate([bnd, lat, tips])
    nb, nl = len(bnd), len(lat)
    kind = np.full(len(pts), FREE, dtype=np.int8)
    kind[:nb] = BOUNDARY
    param = np.zeros((len(pts), 2))
    kind[nb:nb + nl][on_iface] = INTERFACE
    param[nb:nb + nl, 1] = np.where(on_iface, xi, 0.0)
    kind[-2:] = TIP
    param[-2:, 0] = [-1.0, 1.0]
    # interface chain ordered along +e
    ids = np.concatenate([[len(pts) - 2], nb + np.nonzero(on_iface)[0], [len(pts) - 1]])
    order_xi = np.concatenate([[-R], xi[on_iface], [R]])
    ids = ids[np.argsort(order_xi, kind="stable")]
    iface = np.stack([ids[:-1], ids[1:]], axis=1)
    tri = _triangulate(pts)
    _check_constrained(tri, len(pts), iface, "interface")
    mesh = MovingMesh(pts, tri, kind, param, interface=iface, time=t0)
    spec = MeshSpec("reduced", h, h, schedule, xi_max=schedule.half_length(1.0),
                    blend_radius=blend * h, box=box)
    return mesh, spec


def _capsule_points(schedule, xi_max, delta, s, offset):
    L = 4.0 * xi_max + 2.0 * np.pi * delta
    n = max(8, int(round(L / s)))
    u = (np.arange(n) + offset) * (L / n)
    xi = np.empty(n)
    eta = np.empty(n)
    a = 2.0 * xi_max
    arc = np.pi * delta
    seg = np.searchsorted([a, a + arc, 2 * a + arc], u, side="right")
    k = seg == 0
    xi[k], eta[k] = -xi_max + u[k], delta
    k = seg == 1
    ang = np.pi / 2 - (u[k] - a) / delta
    xi[k], eta[k] = xi_max + delta * np.cos(ang), delta * np.sin(ang)
    k = seg == 2
    xi[k], eta[k] = xi_max - (u[k] - a - arc), -delta
    k = seg == 3
    ang = -np.pi / 2 - (u[k] - 2 * a - arc) / delta
    xi[k], eta[k] = -xi_max + delta * np.cos(ang), delta * np.sin(ang)
    return schedule.to_global(xi, eta)


def build_full(schedule, h=1.0 / 64, refine=4, t0=0.0, t_end=1.0, blend=3.0):
    """Unit square with the fracture resolved as a subdomain bounded by
    constrained edges.  Returns the mesh (with ``cell_material``) and its spec."""
    box = (0.0, 1.0, 0.0, 1.0)
    c = schedule.center
    R = schedule.half_length(t0)
    w_tip = float(schedule.side_offset(R, t0))
    w_max = max(float(schedule.side_offset(0.0, t)) for t in np.linspace(t0, t_end, 11))
    hf = max(h / refine, min(h, w_tip / 1.5))
    xi_max = max(schedule.half_length(t0), schedule.half_length(t_end))
    n_in = max(1, int(round(w_tip / (hf * _S3))))

    pts, kind, param = [], [], []

    def add(p, k, prm):
        p = np.atleast_2d(p)
        pts.append(p)
        kind.append(np.full(len(p), k, dtype=np.int8))
        prm = np.asarray(prm, dtype=float).reshape(-1, 2) if np.size(prm) else np.zeros((len(p), 2))
        param.append(np.broadcast_to(prm, (len(p), 2)).copy())

    # rows inside the fracture band
    delta1 = w_max + hf * _S3
    reach = xi_max + delta1 - 0.6 * hf
    cap_r = float(schedule.cap_offset(0.0, t0))
    for j in range(-n_in, n_in + 1):
        frac = j / n_in
        nk = int(np.ceil(reach / hf)) + 1
        xi = (np.arange(-nk, nk + 1) + 0.5 * (abs(j) % 2)) * hf
        eta_far = frac * w_tip
        ok = np.abs(xi) + 0.0 <= xi_max + np.sqrt(max((delta1 - 0.6 * hf) ** 2 - eta_far ** 2, 0.0))
        xi = xi[ok]
        behind = np.abs(xi) < R
        eta = np.where(behind, frac * schedule.side_offset(np.where(behind, xi, 0.0), t0), eta_far)
        # clear the caps
        drop = np.zeros(len(xi), dtype=bool)
        for tau in (-1.0, 1.0):
            dist = np.hypot(xi - tau * R, eta)
            ahead = tau * xi >= R
            drop |= ahead & (dist < cap_r + 0.55 * hf)
            drop |= dist < 0.55 * hf
        xi, eta, behind = xi[~drop], eta[~drop], behind[~drop]
        p = schedule.to_global(xi, eta)
        if j == 0:
            k = np.where(behind, FCENTER, FREE)
            prm = np.stack([np.zeros_like(xi), np.where(behind, xi, 0.0)], 1)
        elif abs(j) == n_in:
            k = np.where(behind, FSIDE, FREE)
            prm = np.stack([np.where(behind, np.sign(j), 0.0), np.where(behind, xi, 0.0)], 1)
        else:
            k = np.full(len(xi), FREE)
            prm = np.zeros((len(xi), 2))
        pts.append(p)
        kind.append(k.astype(np.int8))
        param.append(prm)

    # caps
    n_cap = max(2, int(np.ceil(np.pi * cap_r / hf)))
    alphas = -np.pi / 2 + np.pi * np.arange(n_cap + 1) / n_cap
    cap_ids = {}
    for tau in (-1.0, 1.0):
        add(schedule.tip(tau, t0), FTIP, [tau, 0.0])
        base = sum(len(p) for p in pts)
        add(schedule.cap_point(np.full(len(alphas), tau), alphas, t0), FCAP,
            np.stack([np.full(len(alphas), tau), alphas], 1))
        cap_ids[tau] = base + np.arange(len(alphas))

    # graded capsule rows around the fracture
    rows = []
    delta, s, k = delta1, hf, 0
    while True:
        rows.append((delta, s))
        if s >= h and len(rows) > 3:
            break
        s_next = s if k < 2 else min(h, 1.3 * s)
        delta = delta + 0.5 * (s + s_next) * _S3
        s, k = s_next, k + 1
    for r, (delta, s) in enumerate(rows):
        p = _capsule_points(schedule, xi_max, delta, s, 0.5 * (r % 2))
        p = p[_box_distance(p, box) >= 0.55 * s]
        add(p, FREE, [])
    band_out = rows[-1][0]

    lat, _, _ = _lattice(c, schedule.direction, schedule.normal, h, 0.75 + h)
    xi, eta = schedule.to_local(lat)
    dcap = np.hypot(np.maximum(np.abs(xi) - xi_max, 0.0), eta)
    lat = lat[(dcap > band_out + 0.6 * h) & (_box_distance(lat, box) >= 0.55 * h)]
    add(lat, FREE, [])
    bnd = _boundary_points(box, h)
    add(bnd, BOUNDARY, [])

    P = np.concatenate(pts)
    K = np.concatenate(kind)
    PR = np.concatenate(param)

    # constrained boundary of the fracture region
    edges = []
    for sigma in (1.0, -1.0):
        side = np.nonzero((K == FSIDE) & (PR[:, 0] == sigma))[0]
        side = side[np.argsort(PR[side, 1])]
        left = cap_ids[-1.0][-1 if sigma > 0 else 0]
        right = cap_ids[1.0][-1 if sigma > 0 else 0]
        chain = np.concatenate([[left], side, [right]])
        edges.append(np.stack([chain[:-1], chain[1:]], 1))
    for tau in (-1.0, 1.0):
        ids = cap_ids[tau]
        edges.append(np.stack([ids[:-1], ids[1:]], 1))
    fedges = np.concatenate(edges)
    tri = _triangulate(P)
    _check_constrained(tri, len(P), fedges, "fracture boundary")
    mesh = MovingMesh(P, tri, K, PR, fracture_edges=fedges, time=t0)
    mesh.cell_material = label_cells(mesh, schedule, t0)
    spec = MeshSpec("full", h, hf, schedule, xi_max=xi_max, blend_radius=blend * h,
                    band=w_max + 3 * hf, box=box)
    return mesh, spec


def label_cells(mesh, schedule, t):
    cen = mesh.cell_points().mean(axis=1)
    return np.where(schedule.inside(cen, t), FRACTURE, BULK).astype(np.int8)
