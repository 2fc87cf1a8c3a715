"""Damped Newton iteration with a sparse direct linear solver."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

ATOL = 1e-10
RTOL = 1e-8
MAX_ITER = 25
MAX_HALVINGS = 8


class NewtonError(RuntimeError):
    pass


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual: float
    initial_residual: float
    converged: bool


def _norm(r):
    return float(np.max(np.abs(r))) if len(r) else 0.0


def newton_solve(residual, x0, project=None, atol=ATOL, rtol=RTOL, max_iter=MAX_ITER,
                 max_halvings=MAX_HALVINGS):
    """Solve ``residual(x) = 0``.

    ``residual(x, jacobian=True)`` must return ``(r, J)``; ``project``
    maps an iterate back into the admissible set (e.g. clips saturations).
    """
    x = np.array(x0, dtype=float)
    if project is not None:
        x = project(x)
    r, J = residual(x, jacobian=True)
    r0 = _norm(r)
    res = r0
    it = 0
    while not (res <= atol or res <= rtol * r0):
        if it >= max_iter:
            return NewtonResult(x, it, res, r0, False)
        it += 1
        # column equilibration: saturation and pressure unknowns differ by many orders
        J = sp.csc_matrix(J)
        scale = np.asarray(abs(J).max(axis=0).todense()).ravel()
        scale = np.divide(1.0, scale, out=np.ones_like(scale), where=scale > 0)
        try:
            lu = splu(J @ sp.diags(scale), permc_spec="COLAMD")
            dx = -scale * lu.solve(r)
        except RuntimeError as exc:  # singular factor
            raise NewtonError(f"singular Jacobian: {exc}") from exc
        if not np.all(np.isfinite(dx)):
            return NewtonResult(x, it, res, r0, False)
        alpha = 1.0
        l2 = float(np.linalg.norm(r))
        for _ in range(max_halvings + 1):
            xn = x + alpha * dx
            if project is not None:
                xn = project(xn)
            rn = residual(xn)
            # accept on decrease of either norm; the max norm alone stalls on local spikes
            if np.all(np.isfinite(rn)) and (_norm(rn) < res or np.linalg.norm(rn) < l2):
                break
            alpha *= 0.5
        else:
            return NewtonResult(x, it, res, r0, False)
        x = xn
        r, J = residual(x, jacobian=True)
        res = _norm(r)
    return NewtonResult(x, it, res, r0, True)
