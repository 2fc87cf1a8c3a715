"""Prescribed vertex motion.

Vertices tied to the fracture follow the schedule exactly; free vertices
near moving ones receive a smoothly decayed displacement so that cells
around the tips deform instead of inverting.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .geometry import min_area_over_step
from .topology import FCAP, FREE, FSIDE, FTIP, TIP, MovingMesh


class MeshMotionError(RuntimeError):
    def __init__(self, msg, cells):
        super().__init__(msg)
        self.cells = np.asarray(cells)


def exact_positions(kind, param, points, schedule, t):
    """Positions at time ``t`` of vertices whose location is dictated by
    the schedule; other vertices keep ``points``."""
    out = np.array(points, dtype=float, copy=True)
    if schedule is None:
        return out
    k = kind == TIP
    if np.any(k):
        out[k] = schedule.tip(param[k, 0], t)
    k = kind == FTIP
    if np.any(k):
        out[k] = schedule.tip(param[k, 0], t)
    k = kind == FSIDE
    if np.any(k):
        xi = param[k, 1]
        out[k] = schedule.to_global(xi, param[k, 0] * schedule.side_offset(xi, t))
    k = kind == FCAP
    if np.any(k):
        out[k] = schedule.cap_point(param[k, 0], param[k, 1], t)
    return out


def target_positions(kind, param, points, schedule, t_new, blend_radius):
    """Vertex positions at ``t_new`` (constrained + blended free vertices)."""
    tgt = exact_positions(kind, param, points, schedule, t_new)
    if blend_radius <= 0:
        return tgt
    disp = tgt - points
    anchors = np.nonzero(kind != FREE)[0]
    moving = anchors[np.any(disp[anchors] != 0.0, axis=1)]
    if len(moving) == 0:
        return tgt
    free = np.nonzero(kind == FREE)[0]
    mtree = cKDTree(points[moving])
    dmin, _ = mtree.query(points[free], distance_upper_bound=blend_radius)
    near = np.isfinite(dmin)
    if not np.any(near):
        return tgt
    free = free[near]
    dmin = dmin[near]
    atree = cKDTree(points[anchors])
    ftree = cKDTree(points[free])
    eps2 = (0.05 * blend_radius) ** 2
    pairs = ftree.sparse_distance_matrix(atree, blend_radius, output_type="coo_matrix")
    i, j, r = pairs.row, pairs.col, pairs.data
    w = 1.0 / (r * r + eps2)
    wsum = np.bincount(i, w, minlength=len(free))
    dx = np.bincount(i, w * disp[anchors[j], 0], minlength=len(free))
    dy = np.bincount(i, w * disp[anchors[j], 1], minlength=len(free))
    fac = (1.0 - dmin / blend_radius) / np.where(wsum > 0, wsum, 1.0)
    tgt[free, 0] = points[free, 0] + fac * dx
    tgt[free, 1] = points[free, 1] + fac * dy
    return tgt


def mesh_targets(mesh: MovingMesh, spec, t_new):
    return target_positions(mesh.vertex_kind, mesh.vertex_param, mesh.points, spec.schedule,
                            t_new, spec.blend_radius)


def vertex_velocity(mesh: MovingMesh, spec, t_new):
    dt = t_new - mesh.time
    if dt <= 0:
        return np.zeros_like(mesh.points)
    return (mesh_targets(mesh, spec, t_new) - mesh.points) / dt


def invalid_cells(mesh: MovingMesh, targets, rtol=1e-10):
    P = mesh.points[mesh.triangles]
    D = targets[mesh.triangles] - P
    amin = min_area_over_step(P, D)
    a0 = mesh.areas()
    return np.nonzero(amin <= rtol * np.abs(a0))[0]


def move_vertices(mesh: MovingMesh, velocity, t_n, t_np1):
    """Linear motion over [t_n, t_np1]; connectivity is unchanged.

    Raises :class:`MeshMotionError` if any cell degenerates during the step.
    """
    dt = t_np1 - t_n
    velocity = np.asarray(velocity, dtype=float)
    targets = mesh.points + dt * velocity
    bad = invalid_cells(mesh, targets)
    if len(bad):
        raise MeshMotionError(f"{len(bad)} cells degenerate during the step", bad)
    out = mesh.copy()
    out.points = targets
    out.time = t_np1
    return out
