"""Low-level planar geometry: circumcentres, signed areas, swept areas,
incircle tests and convex clipping.

Vectorised over leading axes where it matters for assembly.  Everything
that feeds a conservation identity is evaluated relative to a local
origin so round-off scales with the cell size, not with the domain.
"""
from __future__ import annotations

import numpy as np


class GeometryError(ValueError):
    """Degenerate or otherwise invalid geometry."""


def cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def rot_cw(v):
    """Rotate by -90 degrees: the right-hand normal of a direction."""
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def signed_area(p0, p1, p2):
    return 0.5 * cross2(p1 - p0, p2 - p0)


def circumcenter(p0, p1, p2, rtol=1e-14):
    """Circumcentre of triangles given as (..., 2) arrays.

    Raises :class:`GeometryError` for (numerically) collinear input.
    """
    p0, p1, p2 = (np.asarray(p, dtype=float) for p in (p0, p1, p2))
    a = p1 - p0
    b = p2 - p0
    den = 2.0 * cross2(a, b)
    scale = np.maximum(np.einsum("...i,...i", a, a), np.einsum("...i,...i", b, b))
    if np.any(np.abs(den) <= rtol * scale):
        raise GeometryError("degenerate triangle has no circumcentre")
    a2 = np.einsum("...i,...i", a, a)
    b2 = np.einsum("...i,...i", b, b)
    ux = (b[..., 1] * a2 - a[..., 1] * b2) / den
    uy = (a[..., 0] * b2 - b[..., 0] * a2) / den
    return p0 + np.stack([ux, uy], axis=-1)


def swept_area(a0, b0, da, db):
    """Signed area swept by the segment a->b when its end points move
    linearly by ``da`` and ``db``.

    The sign follows the right-hand normal of a->b: positive when the
    segment moves towards its right side.  Exact for linear motion
    (the integrand is bilinear in arclength and time).
    """
    e0 = b0 - a0
    e1 = e0 + (db - da)
    return 0.5 * np.einsum("...i,...i", da + db, rot_cw(0.5 * (e0 + e1)))


def area_polynomial(p, d):
    """Coefficients (c0, c1, c2) of the signed area A(tau) = c0 + c1 tau + c2 tau^2
    of triangles with vertices ``p[..., k, :]`` moving by ``d[..., k, :]`` over tau in [0, 1]."""
    a = p[..., 1, :] - p[..., 0, :]
    b = p[..., 2, :] - p[..., 0, :]
    da = d[..., 1, :] - d[..., 0, :]
    db = d[..., 2, :] - d[..., 0, :]
    c0 = 0.5 * cross2(a, b)
    c1 = 0.5 * (cross2(a, db) + cross2(da, b))
    c2 = 0.5 * cross2(da, db)
    return c0, c1, c2


def min_area_over_step(p, d):
    """Minimum signed area over tau in [0, 1] for linearly moving triangles."""
    c0, c1, c2 = area_polynomial(p, d)
    end = c0 + c1 + c2
    out = np.minimum(c0, end)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        tau = -c1 / (2.0 * c2)
        inner = (c2 > 0) & (tau > 0) & (tau < 1)
        val = c0 + c1 * tau + c2 * tau * tau
    return np.where(inner, np.minimum(out, val), out)


def incircle(a, b, c, d):
    """Positive when ``d`` lies strictly inside the circumcircle of CCW (a, b, c)."""
    ad = a - d
    bd = b - d
    cd = c - d
    ad2 = np.einsum("...i,...i", ad, ad)
    bd2 = np.einsum("...i,...i", bd, bd)
    cd2 = np.einsum("...i,...i", cd, cd)
    return (ad2 * cross2(bd, cd) - bd2 * cross2(ad, cd) + cd2 * cross2(ad, bd))


def radius_ratio(p0, p1, p2):
    """Normalised inradius/circumradius ratio 2 r / R in (0, 1]; 1 is equilateral."""
    la = np.linalg.norm(p1 - p2, axis=-1)
    lb = np.linalg.norm(p2 - p0, axis=-1)
    lc = np.linalg.norm(p0 - p1, axis=-1)
    area = np.abs(signed_area(p0, p1, p2))
    s = 0.5 * (la + lb + lc)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = area / s
        R = la * lb * lc / (4.0 * area)
        out = 2.0 * r / R
    return np.where(area > 0, out, 0.0)


def clip_convex(subject, clipper):
    """Sutherland-Hodgman clipping of a polygon by a CCW convex polygon."""
    out = list(subject)
    n = len(clipper)
    for i in range(n):
        if not out:
            break
        a = clipper[i]
        b = clipper[(i + 1) % n]
        edge = b - a
        inp = out
        out = []
        m = len(inp)
        for j in range(m):
            p = inp[j]
            q = inp[(j + 1) % m]
            sp = edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0])
            sq = edge[0] * (q[1] - a[1]) - edge[1] * (q[0] - a[0])
            if sp >= 0:
                out.append(p)
                if sq < 0:
                    out.append(p + (q - p) * (sp / (sp - sq)))
            elif sq >= 0:
                out.append(p + (q - p) * (sp / (sp - sq)))
    return out


def polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    P = np.asarray(poly)
    P = P - P[0]
    return 0.5 * float(np.sum(P[:-1, 0] * P[1:, 1] - P[1:, 0] * P[:-1, 1]))


def triangle_intersection_area(t1, t2):
    """Area of the intersection of two CCW triangles given as (3, 2) arrays."""
    origin = t1[0]
    a = np.asarray(t1, dtype=float) - origin
    b = np.asarray(t2, dtype=float) - origin
    lo = np.maximum(a.min(axis=0), b.min(axis=0))
    hi = np.minimum(a.max(axis=0), b.max(axis=0))
    if np.any(lo >= hi):
        return 0.0
    return max(polygon_area(clip_convex(list(a), list(b))), 0.0)
