"""Independent reference implementations used by the tests.

None of these share code paths with the package beyond the constitutive
functions (which are tested separately against closed forms).
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

MU_W, MU_NW = 1.0, 10.0
RHO_W, RHO_NW = 1000.0, 500.0


# ---------------------------------------------------------------- flux
def lam_w(S):
    return S * S / MU_W


def lam_nw(S):
    return (1.0 - S) ** 2 / MU_NW


def flux_value(S, v, gt):
    """f v - f lam_nw gt, quadratic law, Table-style fluid data."""
    lw, ln = lam_w(S), lam_nw(S)
    f = lw / (lw + ln)
    return f * v - f * ln * gt


def brute_godunov(Sp, Sm, v, gt, n=10**6):
    """min/max of the flux over the interval between the two states, by sampling."""
    lo, hi = min(Sp, Sm), max(Sp, Sm)
    s = np.linspace(lo, hi, n)
    vals = flux_value(s, v, gt)
    return float(vals.min() if Sp <= Sm else vals.max())


def godunov_scalar(Sp, Sm, fn, n=4001):
    """Sampled Godunov flux for an arbitrary scalar flux function."""
    lo, hi = min(Sp, Sm), max(Sp, Sm)
    vals = fn(np.linspace(lo, hi, n))
    return float(vals.min() if Sp <= Sm else vals.max())


# ---------------------------------------------------------------- coupling
def dense_coupling(Pp, Pg, Pm, Gp, Gm, Gg, Tp, Tm, Tg):
    """Solve the four local relations for (P_gamma+, P_gamma-, v+, v-).

    One-sided TPFA:   v_a = -T_a (Pi_a - P_a - G_a)
    Interface side:   v_a = -Tg ((Pg - Pi_a) + 2 (Pg - (Pi_+ + Pi_-)/2) + Gg_a),
    with Gg_+ = Gg and Gg_- = -Gg (normal reversed on the minus side).
    """
    A = np.zeros((4, 4))
    b = np.zeros(4)
    # unknowns: Pi+, Pi-, v+, v-
    A[0] = [Tp, 0.0, 1.0, 0.0]
    b[0] = Tp * (Pp + Gp)
    A[1] = [0.0, Tm, 0.0, 1.0]
    b[1] = Tm * (Pm + Gm)
    # v+ = -Tg (3 Pg - 2 Pi+ - Pi- + Gg)
    A[2] = [2.0 * Tg, Tg, -1.0, 0.0]
    b[2] = Tg * (3.0 * Pg + Gg)
    A[3] = [Tg, 2.0 * Tg, 0.0, -1.0]
    b[3] = Tg * (3.0 * Pg - Gg)
    sol = np.linalg.solve(A, b)
    return sol[2], sol[3]


# ---------------------------------------------------------------- geometry
def swept_quadrature(a0, b0, da, db, n=3):
    """Integral of det(dX/ds, dX/dt) over the unit square for the
    bilinear sweep X(s, t) = (1-s)(a0 + t da) + s(b0 + t db); the sign is
    chosen so that motion towards the right of a->b is positive."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    total = 0.0
    for si, ws in zip(x, w):
        for ti, wt in zip(x, w):
            Xs = (b0 + ti * db) - (a0 + ti * da)
            Xt = (1 - si) * da + si * db
            # Xt . rot_cw(Xs), rot_cw(x, y) = (y, -x)
            total += ws * wt * (Xt[0] * Xs[1] - Xt[1] * Xs[0])
    return total


def tri_area(p):
    p = np.asarray(p, dtype=float)
    return 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))


def circumcenter_lsq(p):
    """Circumcentre by solving |c - p_i|^2 equal for all i (2x2 system)."""
    p = np.asarray(p, dtype=float)
    A = 2.0 * (p[1:] - p[0])
    b = np.sum(p[1:] ** 2, axis=1) - np.sum(p[0] ** 2)
    return np.linalg.solve(A, b)


# ---------------------------------------------------------------- meshes
def delaunay_square(h, seed, jitter=0.15):
    """Jittered-lattice Delaunay mesh of the unit square (no cocircular
    quadruples, all boundary circumcentres inside their cells' half plane)."""
    from scipy.spatial import Delaunay

    from fracflow.mesh.topology import BOUNDARY, FREE, MovingMesh

    n = int(round(1.0 / h))
    s = np.linspace(0.0, 1.0, n + 1)
    bnd = np.concatenate([np.stack([s, np.zeros_like(s)], 1), np.stack([s, np.ones_like(s)], 1),
                          np.stack([np.zeros(n - 1), s[1:-1]], 1), np.stack([np.ones(n - 1), s[1:-1]], 1)])
    rng = np.random.default_rng(seed)
    g = np.stack(np.meshgrid(s[1:-1], s[1:-1]), -1).reshape(-1, 2)
    g = g + rng.uniform(-jitter * h, jitter * h, g.shape)
    pts = np.concatenate([bnd, g])
    tri = Delaunay(pts).simplices.astype(np.int64)
    P = pts[tri]
    a = (P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1]) - (P[:, 2, 0] - P[:, 0, 0]) * (P[:, 1, 1] - P[:, 0, 1])
    tri[a < 0] = tri[a < 0][:, [0, 2, 1]]
    kind = np.r_[np.full(len(bnd), BOUNDARY), np.full(len(g), FREE)]
    return MovingMesh(pts, tri, kind, np.zeros((len(pts), 2)))


# ---------------------------------------------------------------- Buckley-Leverett
def shock_height():
    """Welge tangent point: f(S)/S = f'(S) for v = 1, no gravity."""
    def f(S):
        return flux_value(S, 1.0, 0.0)

    def df(S, e=1e-7):
        return (f(S + e) - f(S - e)) / (2 * e)

    return brentq(lambda S: f(S) / S - df(S), 0.05, 0.99)


def buckley_leverett_1d(nx, T, nt, K=1.0, dP=1.0, record=()):
    """Implicit upwind/Godunov finite volumes on (0, 1) with Dirichlet
    S = 1, P = dP on the left and P = 0 on the right.

    The total velocity is uniform in 1D and follows from the series
    resistance of the cells.  Returns {t: S} for the requested times.
    """
    dx = 1.0 / nx
    dt = T / nt
    S = np.zeros(nx)
    out = {}

    def velocity(S):
        lam = lam_w(S) + lam_nw(S)
        # half cells at both Dirichlet ends, full spacing between centres
        R = 0.5 * dx / (lam[0] * K) + np.sum(0.5 * dx / (lam[:-1] * K) + 0.5 * dx / (lam[1:] * K)) \
            + 0.5 * dx / (lam[-1] * K)
        return dP / R

    def residual(Sn, So):
        v = velocity(Sn)
        up = np.concatenate([[1.0], Sn])  # v > 0: upwind is the left state
        F = flux_value(up, v, 0.0)
        return Sn - So + dt / dx * (F[1:] - F[:-1])

    for k in range(1, nt + 1):
        So = S.copy()
        Sn = S.copy()
        for _ in range(50):
            r = residual(Sn, So)
            if np.max(np.abs(r)) < 1e-12:
                break
            # dense FD Jacobian (the velocity couples all cells)
            J = np.empty((nx, nx))
            for j in range(nx):
                e = np.zeros(nx)
                e[j] = 1e-7 if Sn[j] < 0.5 else -1e-7
                J[:, j] = (residual(Sn + e, So) - r) / e[j]
            step = np.linalg.solve(J, -r)
            a = 1.0
            for _ in range(20):
                trial = np.clip(Sn + a * step, 0.0, 1.0)
                if np.max(np.abs(residual(trial, So))) < np.max(np.abs(r)):
                    break
                a *= 0.5
            Sn = trial
        S = Sn
        t = k * dt
        for tr in record:
            if abs(t - tr) < 0.5 * dt:
                out[tr] = S.copy()
    return out


def front_position(x, S, level):
    """Right-most crossing of ``level`` (linear interpolation)."""
    x = np.asarray(x)
    S = np.asarray(S)
    above = np.nonzero(S >= level)[0]
    if not len(above):
        return float(x[0])
    i = above[-1]
    if i + 1 >= len(S):
        return float(x[-1])
    return float(x[i] + (level - S[i]) * (x[i + 1] - x[i]) / (S[i + 1] - S[i]))


# ---------------------------------------------------------------- Jacobian
def fd_jacobian(fun, x, eps=1e-6, scale=None):
    """Central-difference Jacobian of a vector function (dense)."""
    x = np.asarray(x, dtype=float)
    f0 = fun(x)
    J = np.empty((len(f0), len(x)))
    for j in range(len(x)):
        h = eps * (1.0 if scale is None else scale[j])
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (fun(xp) - fun(xm)) / (2 * h)
    return J
