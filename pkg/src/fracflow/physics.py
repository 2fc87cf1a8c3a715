"""Constitutive laws of the capillarity-free fractional-flow formulation.

Everything here is a pure, vectorised function of the wetting saturation
``S`` and a :class:`Material`.  The flux function used by the Godunov
fluxes is written in *integrated* form: ``v_n`` is the total volumetric
flux through a facet and ``gravity_term`` is the precomputed scalar
``|F| n^T K g (rho_nw - rho_w)`` for that facet and side.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SATURATION_TOL = 1e-12
_EDGE = 1e-9

WETTING = "w"
NONWETTING = "nw"


class SaturationDomainError(ValueError):
    """Raised when a saturation leaves [0, 1] by more than the tolerance."""


def check_saturation(S, tol=SATURATION_TOL):
    """Return ``S`` clipped to [0, 1]; raise if it is further out than ``tol``."""
    S = np.asarray(S, dtype=float)
    if np.any(S < -tol) or np.any(S > 1.0 + tol) or np.any(np.isnan(S)):
        bad = S[(S < -tol) | (S > 1.0 + tol) | np.isnan(S)]
        raise SaturationDomainError(f"saturation outside [0, 1]: {bad[:5]}")
    return np.clip(S, 0.0, 1.0)


@dataclass(frozen=True)
class RelPermLaw:
    kind: str = "quadratic"

    def __post_init__(self):
        if self.kind not in ("linear", "quadratic"):
            raise ValueError(f"unknown relative permeability law {self.kind!r}")

    def kw(self, S):
        return S if self.kind == "linear" else S * S

    def knw(self, S):
        return 1.0 - S if self.kind == "linear" else (1.0 - S) ** 2

    def dkw(self, S):
        return np.ones_like(S) if self.kind == "linear" else 2.0 * S

    def dknw(self, S):
        return -np.ones_like(S) if self.kind == "linear" else -2.0 * (1.0 - S)


@dataclass(frozen=True)
class PhaseParams:
    rho_w: float = 1000.0
    rho_nw: float = 500.0
    mu_w: float = 1.0
    mu_nw: float = 10.0

    def __post_init__(self):
        if min(self.rho_w, self.rho_nw, self.mu_w, self.mu_nw) <= 0:
            raise ValueError("densities and viscosities must be positive")


@dataclass(frozen=True)
class MediumParams:
    """Porosity, intrinsic permeability (2x2 SPD) and gravity of one medium."""

    porosity: float = 1.0
    permeability: np.ndarray = field(default_factory=lambda: 1e-8 * np.eye(2))
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, -9.81]))

    def __post_init__(self):
        K = np.asarray(self.permeability, dtype=float)
        if K.ndim == 0:
            K = float(K) * np.eye(2)
        object.__setattr__(self, "permeability", K)
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float))
        if not 0.0 < self.porosity <= 1.0:
            raise ValueError("porosity must lie in (0, 1]")
        if K.shape != (2, 2) or not np.allclose(K, K.T):
            raise ValueError("permeability must be a symmetric 2x2 tensor")
        if np.any(np.linalg.eigvalsh(K) <= 0.0):
            raise ValueError("permeability must be positive definite")


@dataclass(frozen=True)
class Material:
    phases: PhaseParams = field(default_factory=PhaseParams)
    medium: MediumParams = field(default_factory=MediumParams)
    law: RelPermLaw = field(default_factory=RelPermLaw)

    @property
    def delta_rho(self):
        return self.phases.rho_nw - self.phases.rho_w


def mobility(S, phase, material, *, checked=True):
    S = check_saturation(S) if checked else S
    law, ph = material.law, material.phases
    if phase == WETTING:
        return law.kw(S) / ph.mu_w
    if phase == NONWETTING:
        return law.knw(S) / ph.mu_nw
    raise ValueError(f"unknown phase {phase!r}")


def total_mobility(S, material, *, checked=True):
    S = check_saturation(S) if checked else S
    return mobility(S, WETTING, material, checked=False) + mobility(S, NONWETTING, material, checked=False)


def fractional_flow(S, material, *, checked=True):
    S = check_saturation(S) if checked else S
    lw = mobility(S, WETTING, material, checked=False)
    lnw = mobility(S, NONWETTING, material, checked=False)
    return lw / (lw + lnw)


def gravity_fraction(S, material, *, checked=True):
    """Mobility-weighted density ``G(S)``."""
    S = check_saturation(S) if checked else S
    lw = mobility(S, WETTING, material, checked=False)
    lnw = mobility(S, NONWETTING, material, checked=False)
    ph = material.phases
    return (lw * ph.rho_w + lnw * ph.rho_nw) / (lw + lnw)


def flux_normal(S, v_n, gravity_term, material, *, checked=True):
    """``F(S, v) . n = f v_n - f lambda_nw * gravity_term``."""
    S = check_saturation(S) if checked else S
    lw = mobility(S, WETTING, material, checked=False)
    lnw = mobility(S, NONWETTING, material, checked=False)
    f = lw / (lw + lnw)
    return f * v_n - f * lnw * gravity_term


def flux_normal_derivative(S, v_n, gravity_term, material):
    """Analytic dF/dS of :func:`flux_normal` (``S`` assumed inside [0, 1])."""
    law, ph = material.law, material.phases
    lw = law.kw(S) / ph.mu_w
    lnw = law.knw(S) / ph.mu_nw
    dlw = law.dkw(S) / ph.mu_w
    dlnw = law.dknw(S) / ph.mu_nw
    lam = lw + lnw
    dlam = dlw + dlnw
    num = lw * v_n - lw * lnw * gravity_term
    dnum = dlw * v_n - (dlw * lnw + lw * dlnw) * gravity_term
    return (dnum * lam - num * dlam) / (lam * lam)


def flux_critical_point(v_n, gravity_term, material, lo, hi, iters=60):
    """Locate the interior extremum of the flux on ``[lo, hi]`` per entry.

    The flux functions of the supported laws have at most one interior
    extremum on [0, 1], so a sign change of the derivative between the
    bracket ends identifies it; it is then refined by bisection.  Entries
    without a sign change get NaN.
    """
    v_n, gravity_term, lo, hi = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (v_n, gravity_term, lo, hi)))
    out = np.full(lo.shape, np.nan)
    # F'(0) = F'(1) = 0 for the quadratic law; probe just inside the ends
    lo = np.clip(lo, _EDGE, 1.0 - _EDGE)
    hi = np.clip(hi, _EDGE, 1.0 - _EDGE)
    da = flux_normal_derivative(lo, v_n, gravity_term, material)
    db = flux_normal_derivative(hi, v_n, gravity_term, material)
    idx = np.nonzero(da * db < 0.0)
    if idx[0].size == 0:
        return out
    a, b = lo[idx].copy(), hi[idx].copy()
    fa = da[idx]
    v, g = v_n[idx], gravity_term[idx]
    for _ in range(iters):
        m = 0.5 * (a + b)
        fm = flux_normal_derivative(m, v, g, material)
        left = fa * fm <= 0.0
        b = np.where(left, m, b)
        a = np.where(left, a, m)
        fa = np.where(left, fa, fm)
    out[idx] = 0.5 * (a + b)
    return out
