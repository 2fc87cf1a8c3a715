"""Drivers shared by unit and acceptance tests."""
from __future__ import annotations

import numpy as np

from fracflow.mesh.build import build_reduced
from fracflow.mesh.remesh import CellState, RemeshWork
from fracflow.mesh.topology import FREE, INTERFACE
from fracflow.scenarios import FractureSchedule

import oracles


def _aperture(sched, x, t):
    # independent evaluation of the aperture profile
    rel = np.asarray(x) - np.array([0.5, 0.5])
    r = abs(rel @ np.array([1.0, 1.0]) / np.sqrt(2.0))
    R = sched.R0 + t * sched.v_prolong
    return (sched.d0 - t * sched.v_squeeze) * np.sqrt(max(0.0, 1.0 - (r - R) ** 2))


def _bulk_mass(work, ids, phi):
    return sum(phi[work.val[i][2]] * work.val[i][0] * oracles.tri_area(work.pts[list(work.tri[i])]) for i in ids)


def _iface_mass(work, keys, phi_g, sched):
    tot = 0.0
    for k in keys:
        a, b, S, _ = work.iface[k]
        L = np.linalg.norm(work.pts[b] - work.pts[a])
        tot += _aperture(sched, 0.5 * (work.pts[a] + work.pts[b]), work.t_n) * phi_g * L * S
    return tot


def random_remesh_events(n_events, seed, h=1.0 / 16, porosity=(0.7, 0.4), phi_g=0.4):
    """Apply ``n_events`` random bisections / vertex removals to a reduced mesh
    with random cell data; return per-event relative mass changes
    ``(kind, rel_bulk, rel_iface)`` measured with independent areas."""
    rng = np.random.default_rng(seed)
    sched = FractureSchedule(v_prolong=0.25, d0=0.01)
    mesh, spec = build_reduced(sched, h)
    state = CellState(rng.uniform(0, 1, mesh.n_cells), rng.normal(size=mesh.n_cells),
                      rng.uniform(0, 1.2, len(mesh.interface)), rng.normal(size=len(mesh.interface)))
    work = RemeshWork(mesh, state, spec, 0.0, porosity, phi_g, targets=mesh.points.copy())
    out = []
    tries = 0
    while len(out) < n_events and tries < 50 * n_events:
        tries += 1
        before_t = set(work.tri)
        before_i = set(work.iface)
        old_b = {i: _bulk_mass(work, [i], porosity) for i in before_t}
        old_i = {k: _iface_mass(work, [k], phi_g, sched) for k in before_i}
        if rng.uniform() < 0.5:
            keys = list(work.he)
            if rng.uniform() < 0.3 and work.iface:
                ks = list(work.iface)
                a, b = ks[rng.integers(len(ks))][:2]
            else:
                a, b = keys[rng.integers(len(keys))]
            kind, ok = "bisect", work.bisect_edge(int(a), int(b))
        else:
            cand = np.nonzero(np.isin(work.kind, (FREE, INTERFACE)))[0]
            v = int(cand[rng.integers(len(cand))])
            kind, ok = "remove", work.remove_vertex(v)
        if not ok:
            continue
        gone_t = before_t - set(work.tri)
        new_t = set(work.tri) - before_t
        mb0 = sum(old_b[i] for i in gone_t)
        mb1 = _bulk_mass(work, new_t, porosity)
        gone_i = before_i - set(work.iface)
        new_i = set(work.iface) - before_i
        mi0 = sum(old_i[k] for k in gone_i)
        mi1 = _iface_mass(work, new_i, phi_g, sched)
        rb = abs(mb1 - mb0) / max(abs(mb0), 1e-300)
        ri = abs(mi1 - mi0) / max(abs(mi0), 1e-300) if gone_i else 0.0
        out.append((kind, rb, ri, bool(gone_i)))
    return out
