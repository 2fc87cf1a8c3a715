"""Prescribed fracture geometry: a straight segment on the diagonal of the
unit square that prolongates and squeezes linearly in time.

Local coordinates: ``xi`` along the fracture direction ``e`` and ``eta``
along the left normal ``m`` (so ``eta > 0`` is the upper-left side).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_SQ2 = np.sqrt(0.5)


class ScheduleDomainError(ValueError):
    pass


@dataclass(frozen=True)
class FractureSchedule:
    center: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5]))
    direction: np.ndarray = field(default_factory=lambda: np.array([_SQ2, _SQ2]))
    R0: float = 0.25
    v_prolong: float = 0.0
    d0: float = 0.01
    v_squeeze: float = 0.0

    def __post_init__(self):
        e = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", e / np.linalg.norm(e))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def normal(self):
        """Left normal of the fracture direction."""
        e = self.direction
        return np.array([-e[1], e[0]])

    def half_length(self, t):
        return self.R0 + t * self.v_prolong

    def aperture_factor(self, t):
        return self.d0 - t * self.v_squeeze

    def aperture_r(self, r, t):
        arg = 1.0 - (np.asarray(r, dtype=float) - self.half_length(t)) ** 2
        return self.aperture_factor(t) * np.sqrt(np.clip(arg, 0.0, 1.0))

    def to_local(self, x):
        x = np.asarray(x, dtype=float) - self.center
        return x @ self.direction, x @ self.normal

    def to_global(self, xi, eta):
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        return self.center + xi[..., None] * self.direction + eta[..., None] * self.normal

    def aperture_at(self, x, t, tol=1e-9):
        """Aperture at a point of the fracture segment at time ``t``."""
        xi, eta = self.to_local(x)
        if np.any(np.abs(eta) > tol) or np.any(np.abs(xi) > self.half_length(t) + tol):
            raise ScheduleDomainError("point does not lie on the fracture segment")
        return self.aperture_r(np.abs(xi), t)

    # resolved fracture boundary: |x - s| = d(x, t) / 2 with s the nearest point on the segment
    def side_offset(self, xi, t, iters=8):
        xi = np.asarray(xi, dtype=float)
        eta = 0.5 * self.aperture_r(np.abs(xi), t)
        for _ in range(iters):
            eta = 0.5 * self.aperture_r(np.hypot(xi, eta), t)
        return eta

    def cap_offset(self, alpha, t, iters=8):
        """Radius of the cap around the tip in direction ``alpha`` (from the
        outward fracture direction)."""
        R = self.half_length(t)
        alpha = np.asarray(alpha, dtype=float)
        rho = 0.5 * self.aperture_r(R, t) * np.ones_like(alpha)
        for _ in range(iters):
            r = np.hypot(R + rho * np.cos(alpha), rho * np.sin(alpha))
            rho = 0.5 * self.aperture_r(r, t)
        return rho

    def tip(self, tau, t):
        return self.to_global(tau * self.half_length(t), 0.0)

    def cap_point(self, tau, alpha, t):
        tau = np.asarray(tau, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        rho = self.cap_offset(alpha, t)
        R = self.half_length(t)
        return self.to_global(tau * (R + rho * np.cos(alpha)), rho * np.sin(alpha))

    def inside(self, x, t):
        """Membership in the resolved fracture region."""
        xi, eta = self.to_local(x)
        R = self.half_length(t)
        r = np.hypot(xi, eta)
        half = 0.5 * self.aperture_r(r, t)
        along = np.abs(xi) <= R
        tip_dist = np.hypot(np.abs(xi) - R, eta)
        return np.where(along, np.abs(eta) <= half, tip_dist <= half)

    def boundary_distance(self, x, t):
        """Signed distance-like residual of the resolved boundary (0 on it)."""
        xi, eta = self.to_local(x)
        R = self.half_length(t)
        half = 0.5 * self.aperture_r(np.hypot(xi, eta), t)
        along = np.abs(xi) <= R + 1e-14
        return np.where(along, np.abs(eta) - half, np.hypot(np.abs(xi) - R, eta) - half)
