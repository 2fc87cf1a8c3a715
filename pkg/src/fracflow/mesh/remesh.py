"""Local remeshing at the beginning of a step with conservative projection.

The mesh is edited at its current positions ``t_n`` while validity and
quality are judged at the end-of-step targets, so the following linear
motion never inverts a cell.  Three local operations are used:

* edge flips of unconstrained non-Delaunay edges,
* vertex removal with ear-clipping retriangulation of the hole (a chord
  replaces the two constrained edges when the vertex sits on a chain),
* edge bisection (constrained edges included).

Every operation replaces a set of old cells by new cells covering the
same region; cell values are transferred with exact intersection areas
so that ``phi S |K|`` is preserved per connected component.  The same
holds for ``d phi S_Gamma |K_Gamma|`` on the interface.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (GeometryError, incircle, min_area_over_step, radius_ratio, signed_area,
                       triangle_intersection_area)
from .motion import exact_positions, mesh_targets
from .quality import QualityThresholds, quality_indicator
from .topology import (BOUNDARY, FCAP, FCENTER, FREE, FSIDE, FTIP, INTERFACE, TIP, MovingMesh)

_REMOVABLE = (FREE, INTERFACE, FSIDE)


@dataclass
class ConnectedComponent:
    kind: str
    dim: int
    old_cells: list
    new_cells: list
    old_volume: float
    new_volume: float
    old_mass: float
    new_mass: float


@dataclass
class CellState:
    """Cell-wise values carried through remeshing."""

    S: np.ndarray
    P: np.ndarray
    S_gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    P_gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _key(a, b):
    return (a, b) if a < b else (b, a)


class RemeshWork:
    """Mutable triangulation used while editing; see :func:`remesh`."""

    def __init__(self, mesh: MovingMesh, state: CellState, spec, t_new, porosity=(1.0, 1.0),
                 porosity_gamma=1.0, targets=None):
        self.spec = spec
        self.schedule = spec.schedule if spec is not None else None
        self.t_n = mesh.time
        self.t_new = t_new
        self.porosity = tuple(porosity)
        self.phi_g = porosity_gamma
        self.pts = mesh.points.copy()
        self.tgt = (mesh_targets(mesh, spec, t_new) if targets is None else targets).copy()
        self.kind = mesh.vertex_kind.copy()
        self.param = mesh.vertex_param.copy()
        self.tri = {}
        self.val = {}
        self.he = {}
        self.v2t = {}
        for i, (t, s, p, mat) in enumerate(zip(mesh.triangles.tolist(), state.S, state.P, mesh.cell_material)):
            self._add_tri(i, tuple(t), [float(s), float(p), int(mat)])
        self.next_id = mesh.n_cells
        self.iface = {}
        for (a, b), sg, pg in zip(mesh.interface.tolist(), state.S_gamma, state.P_gamma):
            self.iface[_key(a, b)] = [a, b, float(sg), float(pg)]
        self.fcon = {_key(a, b) for a, b in mesh.fracture_edges.tolist()}
        self.log: list[ConnectedComponent] = []
        self.changed = False

    # ---------------------------------------------------------------- basics
    def _add_tri(self, tid, t, val):
        self.tri[tid] = t
        self.val[tid] = val
        a, b, c = t
        for u, v in ((a, b), (b, c), (c, a)):
            self.he[(u, v)] = tid
        for v in t:
            self.v2t.setdefault(v, set()).add(tid)

    def _del_tri(self, tid):
        a, b, c = self.tri.pop(tid)
        self.val.pop(tid)
        for u, v in ((a, b), (b, c), (c, a)):
            del self.he[(u, v)]
        for v in (a, b, c):
            self.v2t[v].discard(tid)

    def _new_id(self):
        self.next_id += 1
        return self.next_id - 1

    def _add_vertex(self, p, tgt, kind, param):
        self.pts = np.vstack([self.pts, p])
        self.tgt = np.vstack([self.tgt, tgt])
        self.kind = np.append(self.kind, np.int8(kind))
        self.param = np.vstack([self.param, param])
        return len(self.pts) - 1

    def constrained(self, a, b):
        k = _key(a, b)
        return k in self.iface or k in self.fcon

    def has_edge(self, a, b):
        return (a, b) in self.he or (b, a) in self.he

    def is_boundary_edge(self, a, b):
        return ((a, b) in self.he) != ((b, a) in self.he)

    def _area(self, t, X=None):
        X = self.pts if X is None else X
        return float(signed_area(X[t[0]], X[t[1]], X[t[2]]))

    def _valid(self, t):
        P = self.pts[list(t)]
        D = self.tgt[list(t)] - P
        a0 = self._area(t)
        if a0 <= 0:
            return False
        return float(min_area_over_step(P[None], D[None])[0]) > 1e-10 * a0

    def _quality(self, t):
        X = self.tgt[list(t)]
        return float(radius_ratio(X[0], X[1], X[2]))

    def _aperture(self, a, b, t):
        if self.schedule is None:
            return 1.0
        xi, _ = self.schedule.to_local(0.5 * (self.pts[a] + self.pts[b]))
        return float(self.schedule.aperture_r(abs(xi), t))

    def _iface_weight(self, a, b):
        return self._aperture(a, b, self.t_n) * self.phi_g * float(np.linalg.norm(self.pts[b] - self.pts[a]))

    # ---------------------------------------------------------- projection
    def _project(self, kind, old, new_tris, material):
        """Replace cells ``old`` by triangles ``new_tris`` (vertex triples).

        ``material`` is one id or one id per new triangle.  Old and new
        sets must cover the same region; the transfer uses exact
        intersection areas, so ``sum phi S |K|`` is unchanged.
        """
        mats = np.broadcast_to(np.asarray(material, dtype=int), (len(new_tris),))
        old_geo = [self.pts[list(self.tri[t])] for t in old]
        old_val = [self.val[t] for t in old]
        phi = np.array([self.porosity[m] for m in mats])
        old_area = np.array([self._area(self.tri[t]) for t in old])
        old_mass = float(sum(self.porosity[v[2]] * v[0] * a for v, a in zip(old_val, old_area)))
        new_area = np.array([self._area(t) for t in new_tris])
        A = np.zeros((len(old), len(new_tris)))
        for i, g in enumerate(old_geo):
            for j, t in enumerate(new_tris):
                A[i, j] = triangle_intersection_area(g, self.pts[list(t)])
        col = A.sum(0)
        if np.any(col <= 0) or abs(col.sum() - old_area.sum()) > 1e-9 * old_area.sum():
            raise GeometryError(f"replaced and new cells do not cover the same region in {kind}")
        dens = np.array([self.porosity[v[2]] * v[0] for v in old_val])
        pres = np.array([v[1] for v in old_val])
        S_new = (A.T @ dens) / col / phi
        P_new = (A.T @ pres) / col
        new_mass = float(np.sum(phi * S_new * new_area))
        if new_mass > 0:
            corr = old_mass / new_mass
            if abs(corr - 1.0) > 1e-8:
                raise GeometryError(f"projection mismatch {corr - 1.0:.3e} in {kind}")
            S_new = S_new * corr
        for t in old:
            self._del_tri(t)
        ids = []
        for t, s_, p_, m_ in zip(new_tris, S_new, P_new, mats):
            tid = self._new_id()
            self._add_tri(tid, tuple(t), [float(s_), float(p_), int(m_)])
            ids.append(tid)
        self.log.append(ConnectedComponent(kind, 2, list(old), ids, float(old_area.sum()),
                                           float(new_area.sum()), old_mass,
                                           float(np.sum(phi * np.array([self.val[i][0] for i in ids]) * new_area))))
        self.changed = True
        return ids

    # ---------------------------------------------------------------- flips
    def flip_edge(self, a, b, force=False):
        if (a, b) not in self.he or (b, a) not in self.he or self.constrained(a, b):
            return False
        t1, t2 = self.he[(a, b)], self.he[(b, a)]
        c = [v for v in self.tri[t1] if v not in (a, b)][0]
        d = [v for v in self.tri[t2] if v not in (a, b)][0]
        if self.has_edge(c, d):
            return False
        n1, n2 = (a, d, c), (d, b, c)
        if not (self._valid(n1) and self._valid(n2)):
            return False
        if not force:
            X = self.tgt
            if incircle(X[a], X[b], X[c], X[d]) <= 0.0:
                return False
        if self.val[t1][2] != self.val[t2][2]:
            return False
        self._project("flip", [t1, t2], [n1, n2], self.val[t1][2])
        return True

    # --------------------------------------------------------------- removal
    def _ring(self, v):
        nxt = {}
        for tid in self.v2t[v]:
            t = self.tri[tid]
            k = t.index(v)
            nxt[t[(k + 1) % 3]] = t[(k + 2) % 3]
        if len(nxt) != len(self.v2t[v]):
            return None
        start = min(nxt)
        ring = [start]
        while True:
            n = nxt.get(ring[-1])
            if n is None:
                return None
            if n == start:
                break
            ring.append(n)
            if len(ring) > len(nxt):
                return None
        return ring if len(ring) == len(nxt) else None

    def _ear_clip(self, poly):
        poly = list(poly)
        out = []
        while len(poly) > 3:
            best, best_q = None, -1.0
            n = len(poly)
            for i in range(n):
                t = (poly[i - 1], poly[i], poly[(i + 1) % n])
                if not self._valid(t):
                    continue
                P = self.pts[list(t)]
                others = [poly[j] for j in range(n) if poly[j] not in t]
                if others and np.any(_in_triangle(P, self.pts[others])):
                    continue
                q = self._quality(t)
                if q > best_q:
                    best, best_q = i, q
            if best is None:
                return None
            n = len(poly)
            out.append((poly[best - 1], poly[best], poly[(best + 1) % n]))
            poly.pop(best)
        t = tuple(poly)
        if not self._valid(t):
            return None
        out.append(t)
        return out

    def remove_vertex(self, v):
        if v not in self.v2t or not self.v2t[v] or self.kind[v] not in _REMOVABLE:
            return False
        ring = self._ring(v)
        if ring is None:
            return False
        chain = [u for u in ring if self.constrained(u, v)]
        if self.kind[v] == FREE:
            if chain:
                return False
            polys = [ring]
        else:
            if len(chain) != 2:
                return False
            u, w = chain
            iu, iw = ring.index(u), ring.index(w)
            n = len(ring)
            p1 = [ring[(iu + k) % n] for k in range((iw - iu) % n + 1)]
            p2 = [ring[(iw + k) % n] for k in range((iu - iw) % n + 1)]
            if len(p1) < 3 or len(p2) < 3 or self.has_edge(u, w):
                return False
            polys = [p1, p2]
        plans = []
        for poly in polys:
            tris = self._ear_clip(poly)
            if tris is None:
                return False
            edges = set(zip(poly, poly[1:] + poly[:1]))
            old = [tid for tid in self.v2t[v]
                   if (lambda t: (t[(t.index(v) + 1) % 3], t[(t.index(v) + 2) % 3]))(self.tri[tid]) in edges]
            mats = {self.val[t][2] for t in old}
            if len(mats) != 1:
                return False
            plans.append((old, tris, mats.pop()))
        iface_merge = None
        if self.kind[v] != FREE:
            u, w = chain
            ku, kw = _key(u, v), _key(v, w)
            if ku in self.iface:
                iface_merge = (ku, kw)
        old_all = [t for old, _, _ in plans for t in old]
        tris_all = [t for _, tris, _ in plans for t in tris]
        mats_all = [m for _, tris, m in plans for _ in tris]
        self._project("remove", old_all, tris_all, mats_all)
        if self.kind[v] != FREE:
            u, w = chain
            if iface_merge is not None:
                self._merge_iface(v, *iface_merge)
            else:
                self.fcon.discard(_key(u, v))
                self.fcon.discard(_key(v, w))
                self.fcon.add(_key(u, w))
        return True

    def _merge_iface(self, v, k1, k2):
        e1, e2 = self.iface[k1], self.iface[k2]
        if e1[1] != v:
            e1, e2 = e2, e1
            k1, k2 = k2, k1
        a, b = e1[0], e2[1]
        w1, w2 = self._iface_weight(e1[0], e1[1]), self._iface_weight(e2[0], e2[1])
        old_mass = w1 * e1[2] + w2 * e2[2]
        wn = self._iface_weight(a, b)
        l1 = np.linalg.norm(self.pts[e1[1]] - self.pts[e1[0]])
        l2 = np.linalg.norm(self.pts[e2[1]] - self.pts[e2[0]])
        S = old_mass / wn
        P = (l1 * e1[3] + l2 * e2[3]) / (l1 + l2)
        del self.iface[k1], self.iface[k2]
        self.iface[_key(a, b)] = [a, b, S, P]
        self.log.append(ConnectedComponent("remove", 1, [k1, k2], [_key(a, b)], float(l1 + l2),
                                           float(np.linalg.norm(self.pts[b] - self.pts[a])), old_mass, wn * S))

    # ------------------------------------------------------------- bisection
    def _midpoint_kind(self, a, b, mid):
        k = _key(a, b)
        if k in self.iface:
            xi = self.schedule.to_local(mid)[0] if self.schedule is not None else 0.0
            return INTERFACE, (0.0, float(xi))
        if k in self.fcon:
            xi, eta = self.schedule.to_local(mid)
            return FSIDE, (float(np.sign(eta)), float(xi))
        if self.is_boundary_edge(a, b):
            return BOUNDARY, (0.0, 0.0)
        ka, kb = self.kind[a], self.kind[b]
        if ka in (FCENTER, FTIP) and kb in (FCENTER, FTIP) and self.schedule is not None:
            xi, eta = self.schedule.to_local(mid)
            if abs(eta) < 1e-12:
                return FCENTER, (0.0, float(xi))
        return FREE, (0.0, 0.0)

    def bisect_edge(self, a, b):
        if not self.has_edge(a, b):
            return False
        if self.kind[a] == FCAP and self.kind[b] == FCAP:
            return False
        mid = 0.5 * (self.pts[a] + self.pts[b])
        kind, param = self._midpoint_kind(a, b, mid)
        if kind == FREE or kind == BOUNDARY or kind == INTERFACE:
            tgt = mid + 0.5 * ((self.tgt[a] - self.pts[a]) + (self.tgt[b] - self.pts[b]))
        else:
            tgt = mid
        if kind in (FSIDE, FCENTER):
            tgt = exact_positions(np.array([kind], dtype=np.int8), np.array([param]), mid[None],
                                  self.schedule, self.t_new)[0]
        m = self._add_vertex(mid, tgt, kind, param)
        sides = []
        for u, w in ((a, b), (b, a)):
            tid = self.he.get((u, w))
            if tid is None:
                continue
            c = [x for x in self.tri[tid] if x not in (u, w)][0]
            sides.append((tid, [(u, m, c), (m, w, c)]))
        for _, tris in sides:
            for t in tris:
                if not self._valid(t):
                    self._drop_last_vertex()
                    return False
        for tid, tris in sides:
            self._project("bisect", [tid], tris, self.val[tid][2])
        k = _key(a, b)
        if k in self.iface:
            self._split_iface(k, m)
        elif k in self.fcon:
            self.fcon.discard(k)
            self.fcon.add(_key(a, m))
            self.fcon.add(_key(m, b))
        return True

    def _drop_last_vertex(self):
        self.pts = self.pts[:-1]
        self.tgt = self.tgt[:-1]
        self.kind = self.kind[:-1]
        self.param = self.param[:-1]

    def _split_iface(self, k, m):
        a, b, S, P = self.iface.pop(k)
        w = self._iface_weight(a, b)
        w1, w2 = self._iface_weight(a, m), self._iface_weight(m, b)
        Sc = S * w / (w1 + w2)
        self.iface[_key(a, m)] = [a, m, Sc, P]
        self.iface[_key(m, b)] = [m, b, Sc, P]
        self.log.append(ConnectedComponent("bisect", 1, [k], [_key(a, m), _key(m, b)],
                                           float(np.linalg.norm(self.pts[b] - self.pts[a])),
                                           float(np.linalg.norm(self.pts[m] - self.pts[a])
                                                 + np.linalg.norm(self.pts[b] - self.pts[m])),
                                           w * S, (w1 + w2) * Sc))

    # ------------------------------------------------------------ assemble
    def to_mesh(self):
        ids = sorted(self.tri)
        tris = np.array([self.tri[i] for i in ids], dtype=np.int64).reshape(-1, 3)
        used = np.zeros(len(self.pts), dtype=bool)
        used[tris.reshape(-1)] = True
        remap = -np.ones(len(self.pts), dtype=np.int64)
        remap[used] = np.arange(used.sum())
        vals = np.array([self.val[i] for i in ids]).reshape(-1, 3)
        # interface chain ordered from its start vertex
        nxt = {e[0]: k for k, e in self.iface.items()}
        heads = set(e[1] for e in self.iface.values())
        order = []
        starts = sorted(e[0] for e in self.iface.values() if e[0] not in heads)
        for s in starts:
            v = s
            while v in nxt:
                k = nxt[v]
                order.append(k)
                v = self.iface[k][1]
        if len(order) != len(self.iface):
            order = sorted(self.iface)
        iface = np.array([[self.iface[k][0], self.iface[k][1]] for k in order], dtype=np.int64).reshape(-1, 2)
        sg = np.array([self.iface[k][2] for k in order])
        pg = np.array([self.iface[k][3] for k in order])
        fed = np.array(sorted(self.fcon), dtype=np.int64).reshape(-1, 2)
        mesh = MovingMesh(self.pts[used], remap[tris], self.kind[used], self.param[used],
                          interface=remap[iface] if len(iface) else iface,
                          fracture_edges=remap[fed] if len(fed) else fed,
                          cell_material=vals[:, 2].astype(np.int8), time=self.t_n)
        state = CellState(vals[:, 0].copy(), vals[:, 1].copy(), sg, pg)
        return mesh, state, self.tgt[used]


def _in_triangle(T, Q, eps=1e-14):
    """Points ``Q`` inside or on the closed CCW triangle ``T``."""
    a, b, c = T
    scale = float(np.abs(signed_area(a, b, c))) + 1e-300
    s1 = signed_area(a, b, Q) / scale
    s2 = signed_area(b, c, Q) / scale
    s3 = signed_area(c, a, Q) / scale
    return (s1 >= -eps) & (s2 >= -eps) & (s3 >= -eps)


@dataclass
class RemeshResult:
    mesh: MovingMesh
    state: CellState
    targets: np.ndarray
    log: list
    rounds: int
    changed: bool


def remesh(mesh: MovingMesh, state: CellState, spec, t_new, thresholds=None, porosity=(1.0, 1.0),
           porosity_gamma=1.0, max_rounds=12):
    """Repair the mesh so that linear motion to ``t_new`` is valid and of
    acceptable quality.  Returns the input objects untouched when no flag is raised."""
    th = thresholds or QualityThresholds()
    targets = mesh_targets(mesh, spec, t_new)
    rep = quality_indicator(mesh, spec, targets, th)
    if not rep.flagged:
        return RemeshResult(mesh, state, targets, [], 0, False)
    log = []
    changed = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        stuck = set()
        enc = set(rep.encroached.tolist())
        work = RemeshWork(mesh, state, spec, t_new, porosity, porosity_gamma, targets)
        fac = rep.facets
        V = fac.verts
        # 1. flips of non-Delaunay edges
        for f in rep.flip_edges.tolist():
            work.flip_edge(int(V[f, 0]), int(V[f, 1]))
        # 2. cells that would invert during the step
        for c in rep.invalid_cells.tolist():
            _fix_invalid(work, mesh.triangles[c].tolist())
        # 3. short edges: remove a vertex
        for f in rep.short_edges.tolist():
            a, b = int(V[f, 0]), int(V[f, 1])
            if not work.has_edge(a, b):
                continue
            for v in _removal_order(work, a, b):
                if work.remove_vertex(v):
                    break
        # 4. long or encroached edges: bisect
        for f in np.unique(np.concatenate([rep.long_edges, rep.encroached])).tolist():
            a, b = int(V[f, 0]), int(V[f, 1])
            if not work.has_edge(a, b) or (a, b) in stuck:
                continue
            L = np.linalg.norm(work.tgt[b] - work.tgt[a])
            size = spec.size(0.5 * (work.tgt[a] + work.tgt[b]))[0]
            if f in enc and L < 0.9 * size:
                for tid in [work.he.get((a, b)), work.he.get((b, a))]:
                    if tid is None or tid not in work.tri:
                        continue
                    c = [x for x in work.tri[tid] if x not in (a, b)][0]
                    if work.remove_vertex(c):
                        break
                continue
            if not work.bisect_edge(a, b):
                stuck.add((a, b))
        # 5. poor cells not handled above
        for c in rep.bad_cells.tolist():
            t = tuple(mesh.triangles[c].tolist())
            if not all(work.has_edge(t[i], t[(i + 1) % 3]) for i in range(3)):
                continue
            X = work.tgt[list(t)]
            L = np.linalg.norm(X[[1, 2, 0]] - X, axis=1)
            i = int(np.argmin(L))
            for v in _removal_order(work, t[i], t[(i + 1) % 3]):
                if work.kind[v] == FREE and work.remove_vertex(v):
                    break
        log.extend(work.log)
        if not work.changed:
            break
        changed = True
        mesh, state, _ = work.to_mesh()
        targets = mesh_targets(mesh, spec, t_new)
        rep = quality_indicator(mesh, spec, targets, th)
        if not (len(rep.invalid_cells) or len(rep.short_edges) or len(rep.long_edges)
                or len(rep.flip_edges) or len(rep.encroached)):
            break
    if len(rep.invalid_cells):
        raise GeometryError(f"remeshing could not repair {len(rep.invalid_cells)} inverting cells")
    return RemeshResult(mesh, state, targets, log, rounds, changed)


def _removal_order(work, a, b):
    cand = [v for v in (a, b) if work.kind[v] in _REMOVABLE]
    # free vertices first, then the one with more room
    cand.sort(key=lambda v: (work.kind[v] != FREE, -np.linalg.norm(work.tgt[v] - work.pts[v])))
    return cand


def _fix_invalid(work, t):
    a, b, c = t
    if not all(work.has_edge(t[i], t[(i + 1) % 3]) for i in range(3)):
        return
    for u, w in ((a, b), (b, c), (c, a)):
        if work.flip_edge(u, w, force=True):
            return
    # remove the free vertex that moves the least (it is usually the one being run over)
    cand = [v for v in t if work.kind[v] in _REMOVABLE]
    cand.sort(key=lambda v: (work.kind[v] != FREE, np.linalg.norm(work.tgt[v] - work.pts[v])))
    for v in cand:
        if work.remove_vertex(v):
            return
    # try neighbours of the cell
    for u, w in ((a, b), (b, c), (c, a)):
        tid = work.he.get((w, u))
        if tid is None:
            continue
        d = [x for x in work.tri[tid] if x not in (u, w)][0]
        if work.kind[d] == FREE and work.remove_vertex(d):
            return
