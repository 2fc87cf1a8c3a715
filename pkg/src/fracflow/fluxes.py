"""Facet-local numerical fluxes.

All functions are vectorised over facets.  Fluxes are *integrated*
quantities (already multiplied by the facet area), positive in the
direction of the facet normal, i.e. leaving the ``plus`` cell.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import physics

D_MIN = 1e-6


class FluxError(RuntimeError):
    pass


def _select(values_by_material, index):
    if index is None:
        return values_by_material[0]
    out = values_by_material[0]
    for k in range(1, len(values_by_material)):
        out = np.where(index == k, values_by_material[k], out)
    return out


@dataclass
class FluxFunction:
    """Scalar flux ``S -> F(S, v) . n`` for a batch of facets.

    ``materials`` is a tuple of :class:`physics.Material` and ``index``
    picks one per entry (``None``: all use ``materials[0]``).
    """

    v: np.ndarray
    gravity_term: np.ndarray
    materials: tuple
    index: np.ndarray | None = None

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        self.gravity_term = np.broadcast_to(np.asarray(self.gravity_term, dtype=float), self.v.shape)
        self._crit = None

    def __call__(self, S):
        S = np.clip(S, 0.0, 1.0)
        vals = [physics.flux_normal(S, self.v, self.gravity_term, m, checked=False) for m in self.materials]
        return _select(vals, self.index)

    def critical_point(self):
        """Interior extremum on [0, 1] per entry, NaN where F is monotone."""
        if self._crit is None:
            vals = [physics.flux_critical_point(self.v, self.gravity_term, m, 0.0, 1.0) for m in self.materials]
            self._crit = _select(vals, self.index)
        return self._crit

    def subset(self, mask):
        out = FluxFunction(self.v[mask], self.gravity_term[mask], self.materials,
                           None if self.index is None else self.index[mask])
        if self._crit is not None:
            out._crit = self._crit[mask]
        return out


def godunov_flux(S_plus, S_minus, flux: FluxFunction):
    """Closed-form Godunov flux for a flux with at most one interior extremum.

    min over [S+, S-] when S+ <= S-, otherwise max over [S-, S+].
    """
    Sp = np.asarray(S_plus, dtype=float)
    Sm = np.asarray(S_minus, dtype=float)
    Fp = flux(Sp)
    Fm = flux(Sm)
    lo = np.minimum(Sp, Sm)
    hi = np.maximum(Sp, Sm)
    crit = flux.critical_point()
    inside = np.isfinite(crit) & (crit > lo) & (crit < hi)
    Fc = flux(np.where(inside, crit, Sp))
    take_min = Sp <= Sm
    lo_val = np.minimum(Fp, Fm)
    hi_val = np.maximum(Fp, Fm)
    lo_val = np.where(inside, np.minimum(lo_val, Fc), lo_val)
    hi_val = np.where(inside, np.maximum(hi_val, Fc), hi_val)
    return np.where(take_min, lo_val, hi_val)


def generalized_godunov(S_plus, S_minus, flux_plus: FluxFunction, flux_minus: FluxFunction,
                        tol=1e-14, max_iter=200, return_state=False):
    """Godunov flux across a jump of the flux function.

    Finds ``S*`` with ``g+(S+, S*) = g-(S*, S-)`` by bisection; both side
    fluxes must share the same total flux ``v`` so that F(0) = 0 and
    F(1) = v on either side, which guarantees a bracket on [0, 1].
    """
    Sp = np.asarray(S_plus, dtype=float)
    Sm = np.asarray(S_minus, dtype=float)
    Sp, Sm = np.broadcast_arrays(Sp, Sm)
    flux_plus.critical_point()
    flux_minus.critical_point()

    def h(s):
        return godunov_flux(Sp, s, flux_plus) - godunov_flux(s, Sm, flux_minus)

    a = np.zeros(Sp.shape)
    b = np.ones(Sp.shape)
    ha = h(a)
    hb = h(b)
    scale = 1.0 + np.abs(flux_plus.v) + np.abs(flux_plus.gravity_term) + np.abs(flux_minus.gravity_term)
    if np.any(ha < -1e-12 * scale) or np.any(hb > 1e-12 * scale):
        bad = np.nonzero((ha < -1e-12 * scale) | (hb > 1e-12 * scale))[0]
        raise FluxError(f"no bracketing intermediate state for facets {bad[:10]}: "
                        f"h(0)={ha[bad[:3]]}, h(1)={hb[bad[:3]]}")
    for _ in range(max_iter):
        if np.all(b - a <= tol):
            break
        m = 0.5 * (a + b)
        hm = h(m)
        right = hm > 0.0
        a = np.where(right, m, a)
        b = np.where(right, b, m)
    s = 0.5 * (a + b)
    val = godunov_flux(Sp, s, flux_plus)
    if return_state:
        return val, s
    return val


def godunov_any(S_plus, S_minus, flux_plus: FluxFunction, flux_minus: FluxFunction, same=None):
    """Plain Godunov where both sides share the flux function, generalised elsewhere."""
    Sp = np.asarray(S_plus, dtype=float)
    Sm = np.asarray(S_minus, dtype=float)
    if same is None:
        same = np.isclose(flux_plus.gravity_term, flux_minus.gravity_term, rtol=1e-13, atol=0.0)
        if flux_plus.index is not None or flux_minus.index is not None:
            ip = 0 if flux_plus.index is None else flux_plus.index
            im = 0 if flux_minus.index is None else flux_minus.index
            same = same & (ip == im)
    out = godunov_flux(Sp, Sm, flux_plus)
    jump = ~same
    if np.any(jump):
        out = out.copy()
        out[jump] = generalized_godunov(Sp[jump], Sm[jump], flux_plus.subset(jump), flux_minus.subset(jump))
    return out


def geometric_flux(S_plus, S_minus, swept_rate, phi_plus, phi_minus):
    """Moving-facet flux ``-(phi S)_up * swept_rate``, outflow-positive for ``plus``.

    ``swept_rate > 0`` means the facet moves towards ``minus`` (``plus``
    grows) so the material crossing it comes from ``minus``.
    """
    swept_rate = np.asarray(swept_rate, dtype=float)
    up = np.where(swept_rate > 0.0, phi_minus * S_minus, phi_plus * S_plus)
    return -up * swept_rate


def half_transmissibility(lam, kn, area, delta):
    return lam * kn * area / delta


def compose(T_plus, T_minus):
    return T_plus * T_minus / (T_plus + T_minus)


def tpfa_flux(P_plus, P_minus, T_plus, T_minus, G_plus, G_minus):
    """Integrated normal velocity ``-T_F (P- - P+ - (G+ - G-))``.

    ``G_i = G(S_i) g . d_i`` with ``d_i`` pointing from the cell's
    circumcentre to the facet midpoint.
    """
    return -compose(T_plus, T_minus) * (P_minus - P_plus - (G_plus - G_minus))


def tpfa_flux_resistance(P_plus, P_minus, R_plus, R_minus, G_plus, G_minus):
    """Same as :func:`tpfa_flux` with half resistances ``1/T_i`` (allows a
    negative half distance as long as the sum stays positive)."""
    return -(P_minus - P_plus - (G_plus - G_minus)) / (R_plus + R_minus)


def coupling_transmissibility(lam_f, kn_f, area, d):
    d = np.maximum(d, D_MIN)
    return 2.0 / d * lam_f * kn_f * area


def coupling_gravity(Gf, n_dot_g, d):
    return -0.5 * np.maximum(d, D_MIN) * Gf * n_dot_g


def coupling_flux(P_plus, P_gamma, P_minus, G_plus, G_minus, G_gamma, T_plus, T_minus, T_gamma):
    """Bulk-to-interface velocities ``(v+, v-)`` after eliminating the
    one-sided interface pressures.  ``v+`` leaves ``K+`` along ``n``,
    ``v-`` leaves ``K-`` along ``-n``; both enter the interface."""
    Tg = T_gamma
    den = T_plus * T_minus + 3.0 * Tg * Tg + 2.0 * Tg * (T_plus + T_minus)
    Rp = T_plus * Tg / den
    Rm = T_minus * Tg / den
    v_plus = Rp * ((3.0 * Tg + 2.0 * T_minus) * (P_plus + G_plus)
                   - (3.0 * Tg + 3.0 * T_minus) * (P_gamma + G_gamma)
                   + T_minus * (P_minus + G_minus + 2.0 * G_gamma))
    v_minus = Rm * ((3.0 * Tg + 2.0 * T_plus) * (P_minus + G_minus)
                    - (3.0 * Tg + 3.0 * T_plus) * (P_gamma - G_gamma)
                    + T_plus * (P_plus + G_plus - 2.0 * G_gamma))
    return v_plus, v_minus


def interface_tangential_flux(dP_a, dP_b, T_a, T_b, Gd_a, Gd_b):
    """1D two-point flux of ``d P_Gamma`` between consecutive elements a -> b.

    ``T_i = lam^f K_tau / l_i`` with ``l_i`` the midpoint-to-vertex length
    and ``Gd_i = d_i G^f(S_i) g . t_i`` (``t_i`` midpoint-to-vertex vector).
    """
    return tpfa_flux(dP_a, dP_b, T_a, T_b, Gd_a, Gd_b)


__all__ = [
    "D_MIN", "FluxError", "FluxFunction", "godunov_flux", "generalized_godunov", "godunov_any",
    "geometric_flux", "half_transmissibility", "compose", "tpfa_flux", "tpfa_flux_resistance",
    "coupling_transmissibility", "coupling_gravity", "coupling_flux", "interface_tangential_flux",
]
