"""Residual of the implicit step and its Jacobian.

The residual is a sum of small kernels (one evaluation per facet,
interface facet or interface junction).  Each kernel maps a few local
unknowns to a few outputs; every output is scattered with fixed
coefficients into residual rows, so the flux leaving one control volume
is exactly the flux entering its neighbour.  The Jacobian is obtained by
differencing each kernel in its own inputs, which is cheap because the
stencils are tiny and the evaluation is vectorised over all facets.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .. import fluxes, physics
from ..mesh.topology import BULK, FRACTURE
from .discretization import StepGeometry


@dataclass
class FlowParams:
    """Material data and forcing shared by every step of a run."""

    bulk: physics.Material
    fracture: physics.Material
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, -9.81]))
    q_w: float = 0.0
    q_nw: float = 0.0
    full: bool = False
    pin_pressure: bool = False

    @property
    def materials(self):
        return (self.bulk, self.fracture)

    @property
    def porosity(self):
        return (self.bulk.medium.porosity, self.fracture.medium.porosity)

    @property
    def K_bulk(self):
        return self.bulk.medium.permeability


def _per_cell(fn, S, index, mats):
    if index is None:
        return fn(S, mats[0], checked=False)
    out = fn(S, mats[0], checked=False)
    if np.any(index == FRACTURE):
        other = fn(S, mats[1], checked=False)
        out = np.where(index == FRACTURE, other, out)
    return out


@dataclass
class Kernel:
    name: str
    fn: object
    cols: list
    kinds: list  # "S" | "P" per input
    rows: list  # per output: list of (row ids, coefficient)

    def inputs(self, x):
        return [x[c] for c in self.cols]


FD_S = 1e-7
# pressure steps must stay below the pressure differences that flip an
# upwind choice, which are tiny compared to |P| in permeable fractures
FD_P = 1e-10


def _fd_step(val, kind, p_scale):
    if kind == "S":
        return np.where(val > 0.5, -FD_S, FD_S)
    return FD_P * np.maximum(np.abs(val), p_scale)


class Assembler:
    """Residual and Jacobian for one step ``ta -> tb`` on a fixed connectivity."""

    def __init__(self, geo: StepGeometry, params: FlowParams, S_old, S_gamma_old, p_scale=1.0):
        self.geo = geo
        self.par = params
        self.dt = geo.tb - geo.ta
        self.nb = geo.n_cells
        self.ni = geo.n_iface
        self.n = 2 * (self.nb + self.ni)
        self.p_scale = p_scale
        self.S_old = np.asarray(S_old, dtype=float)
        self.Sg_old = np.asarray(S_gamma_old, dtype=float)
        mesh = geo.mesh
        self.mat = mesh.cell_material.astype(np.int64) if params.full else np.zeros(self.nb, dtype=np.int64)
        self.phi_cell = np.where(self.mat == FRACTURE, params.porosity[1], params.porosity[0])
        self.phi_g = params.porosity[1]
        self._sources()
        self.kernels = [k for k in (self._bulk_kernel(), self._boundary_kernel(), self._coupling_kernel(),
                                    self._junction_kernel()) if k is not None]

    # ------------------------------------------------------------ indices
    def iS(self, c):
        return 2 * np.asarray(c)

    def iP(self, c):
        return 2 * np.asarray(c) + 1

    def jS(self, e):
        return 2 * self.nb + 2 * np.asarray(e)

    def jP(self, e):
        return 2 * self.nb + 2 * np.asarray(e) + 1

    # ---------------------------------------------------------- sources
    def _sources(self):
        g, p = self.geo, self.par
        self.Qw_cell = np.zeros(self.nb)
        self.Q_cell = np.zeros(self.nb)
        self.Qw_el = np.zeros(self.ni)
        self.Q_el = np.zeros(self.ni)
        if p.full:
            frac = self.mat == FRACTURE
            self.Qw_cell[frac] = p.q_w * g.A1[frac]
            self.Q_cell[frac] = (p.q_w + p.q_nw) * g.A1[frac]
        elif self.ni:
            vol = g.d1 * g.L1
            self.Qw_el = p.q_w * vol
            self.Q_el = (p.q_w + p.q_nw) * vol

    def injected_wetting(self):
        return float(self.Qw_cell.sum() + self.Qw_el.sum())

    # ------------------------------------------------------------ helpers
    def _lam(self, S, idx):
        return _per_cell(physics.total_mobility, S, idx, self.par.materials)

    def _G(self, S, idx):
        return _per_cell(physics.gravity_fraction, S, idx, self.par.materials)

    def _kn(self, cells, n):
        K = self.geo.cell_K[cells]
        return np.einsum("fi,fij,fj->f", n, K, n)

    def _gravity_term(self, cells, n, area, idx):
        """``|F| n^T K g (rho_nw - rho_w)`` for the side ``cells``."""
        K = self.geo.cell_K[cells]
        Kg = np.einsum("fij,j->fi", K, self.par.gravity)
        drho = np.where(idx == FRACTURE, self.par.fracture.delta_rho, self.par.bulk.delta_rho)
        return area * np.einsum("fi,fi->f", n, Kg) * drho

    # ------------------------------------------------------------ kernels
    def _bulk_kernel(self):
        geo = self.geo
        f = geo.interior
        if not len(f):
            return None
        fac = geo.facets
        cp, cm = fac.plus[f], fac.minus[f]
        n, L = geo.normal[f], geo.length[f]
        ip, im = self.mat[cp], self.mat[cm]
        kp, km = self._kn(cp, n), self._kn(cm, n)
        gdp = (geo.mid[f] - geo.centers[cp]) @ self.par.gravity
        gdm = (geo.mid[f] - geo.centers[cm]) @ self.par.gravity
        gtp = self._gravity_term(cp, n, L, ip)
        gtm = self._gravity_term(cm, n, L, im)
        dp, dm = geo.delta_plus[f], geo.delta_minus[f]
        rate = geo.swept[f] / self.dt
        php, phm = self.phi_cell[cp], self.phi_cell[cm]
        same = (ip == im) & np.isclose(gtp, gtm, rtol=1e-13, atol=0.0)
        mats = self.par.materials
        full = self.par.full

        def fn(Sp, Pp, Sm, Pm):
            Rp = dp / (self._lam(Sp, ip) * kp * L)
            Rm = dm / (self._lam(Sm, im) * km * L)
            v = fluxes.tpfa_flux_resistance(Pp, Pm, Rp, Rm, self._G(Sp, ip) * gdp, self._G(Sm, im) * gdm)
            Fp = fluxes.FluxFunction(v, gtp, mats, ip if full else None)
            Fm = fluxes.FluxFunction(v, gtm, mats, im if full else None)
            g = fluxes.godunov_any(Sp, Sm, Fp, Fm, same=same)
            h = fluxes.geometric_flux(Sp, Sm, rate, php, phm)
            return [g + h, v]

        ap, am = self.dt / geo.A1[cp], self.dt / geo.A1[cm]
        return Kernel("bulk", fn, [self.iS(cp), self.iP(cp), self.iS(cm), self.iP(cm)], ["S", "P", "S", "P"],
                      [[(self.iS(cp), ap), (self.iS(cm), -am)], [(self.iP(cp), ap), (self.iP(cm), -am)]])

    def _boundary_kernel(self):
        geo = self.geo
        f = geo.boundary
        if not len(f):
            return None
        fac = geo.facets
        cp = fac.plus[f]
        n, L = geo.normal[f], geo.length[f]
        ip = self.mat[cp]
        kp = self._kn(cp, n)
        gdp = (geo.mid[f] - geo.centers[cp]) @ self.par.gravity
        gtp = self._gravity_term(cp, n, L, ip)
        dp = geo.delta_plus[f]
        rate = geo.swept[f] / self.dt
        php = self.phi_cell[cp]
        dirich = geo.dirichlet
        PD, SD = geo.bc_P, geo.bc_S
        mats = self.par.materials
        full = self.par.full
        S_out = SD

        def fn(Sp, Pp):
            Rp = dp / (self._lam(Sp, ip) * kp * L)
            v = np.where(dirich, -(PD - Pp - self._G(Sp, ip) * gdp) / Rp, 0.0)
            F = fluxes.FluxFunction(v, gtp, mats, ip if full else None)
            g = np.where(dirich, fluxes.godunov_flux(Sp, S_out, F), 0.0)
            h = fluxes.geometric_flux(Sp, np.where(dirich, S_out, Sp), rate, php, php)
            return [g + h, v]

        ap = self.dt / geo.A1[cp]
        return Kernel("boundary", fn, [self.iS(cp), self.iP(cp)], ["S", "P"],
                      [[(self.iS(cp), ap)], [(self.iP(cp), ap)]])

    def _coupling_kernel(self):
        geo = self.geo
        if not self.ni:
            return None
        fac = geo.facets
        f = geo.iface_facet
        e = np.arange(self.ni)
        cp, cm = fac.plus[f], fac.minus[f]
        n, L = geo.normal[f], geo.length[f]
        ip, im = self.mat[cp], self.mat[cm]
        kp, km = self._kn(cp, n), self._kn(cm, n)
        gdp = (geo.mid[f] - geo.centers[cp]) @ self.par.gravity
        gdm = (geo.mid[f] - geo.centers[cm]) @ self.par.gravity
        gtp = self._gravity_term(cp, n, L, ip)
        gtm = self._gravity_term(cm, -n, L, im)
        dp, dm = geo.delta_plus[f], geo.delta_minus[f]
        d = np.maximum(geo.d1, fluxes.D_MIN)
        kf = d * d / 12.0
        ng = n @ self.par.gravity
        frac_drho = self.par.fracture.delta_rho
        gt_f_plus = L * kf * ng * frac_drho
        rate = geo.swept[f] / self.dt
        php, phm = self.phi_cell[cp], self.phi_cell[cm]
        bulk_mats = self.par.materials
        frac = (self.par.fracture,)
        full = self.par.full

        def fn(Sp, Pp, Sm, Pm, Sg, Pg):
            Sgc = np.clip(Sg, 0.0, 1.0)
            Tp = self._lam(Sp, ip) * kp * L / dp
            Tm = self._lam(Sm, im) * km * L / dm
            lam_f = physics.total_mobility(Sgc, self.par.fracture, checked=False)
            Tg = fluxes.coupling_transmissibility(lam_f, kf, L, d)
            Gf = physics.gravity_fraction(Sgc, self.par.fracture, checked=False)
            Gg = fluxes.coupling_gravity(Gf, ng, d)
            vp, vm = fluxes.coupling_flux(Pp, Pg, Pm, self._G(Sp, ip) * gdp, self._G(Sm, im) * gdm, Gg,
                                          Tp, Tm, Tg)
            gp = fluxes.generalized_godunov(
                Sp, Sgc, fluxes.FluxFunction(vp, gtp, bulk_mats, ip if full else None),
                fluxes.FluxFunction(vp, gt_f_plus, frac))
            gm = fluxes.generalized_godunov(
                Sm, Sgc, fluxes.FluxFunction(vm, gtm, bulk_mats, im if full else None),
                fluxes.FluxFunction(vm, -gt_f_plus, frac))
            h = fluxes.geometric_flux(Sp, Sm, rate, php, phm)
            return [gp + h, gm - h, vp, vm]

        ap, am = self.dt / geo.A1[cp], self.dt / geo.A1[cm]
        ag = self.dt / (geo.d1 * geo.L1)
        return Kernel("coupling", fn,
                      [self.iS(cp), self.iP(cp), self.iS(cm), self.iP(cm), self.jS(e), self.jP(e)],
                      ["S", "P", "S", "P", "S", "P"],
                      [[(self.iS(cp), ap), (self.jS(e), -ag)],
                       [(self.iS(cm), am), (self.jS(e), -ag)],
                       [(self.iP(cp), ap), (self.jP(e), -ag)],
                       [(self.iP(cm), am), (self.jP(e), -ag)]])

    def _junction_kernel(self):
        geo = self.geo
        ja, jb = geo.junc_a, geo.junc_b
        if not len(ja):
            return None
        da, db = geo.d1[ja], geo.d1[jb]
        la = np.linalg.norm(geo.junc_ta, axis=1)
        lb = np.linalg.norm(geo.junc_tb, axis=1)
        g = self.par.gravity
        gta = geo.junc_ta @ g
        gtb = geo.junc_tb @ g
        dv = np.maximum(geo.junc_d, fluxes.D_MIN)
        that = geo.junc_ta / la[:, None]
        gt = dv * dv ** 2 / 12.0 * (that @ g) * self.par.fracture.delta_rho
        rate = dv * geo.junc_shift / self.dt
        fr = self.par.fracture
        phi = self.phi_g

        def fn(Sa, Pa, Sb, Pb):
            Sac, Sbc = np.clip(Sa, 0.0, 1.0), np.clip(Sb, 0.0, 1.0)
            Ta = physics.total_mobility(Sac, fr, checked=False) * da * da / 12.0 / la
            Tb = physics.total_mobility(Sbc, fr, checked=False) * db * db / 12.0 / lb
            Ga = da * physics.gravity_fraction(Sac, fr, checked=False) * gta
            Gb = db * physics.gravity_fraction(Sbc, fr, checked=False) * gtb
            v = fluxes.interface_tangential_flux(da * Pa, db * Pb, Ta, Tb, Ga, Gb)
            F = fluxes.FluxFunction(v, gt, (fr,))
            flux = fluxes.godunov_flux(Sac, Sbc, F)
            h = fluxes.geometric_flux(Sa, Sb, rate, phi, phi)
            return [flux + h, v]

        aa = self.dt / (geo.d1[ja] * geo.L1[ja])
        ab = self.dt / (geo.d1[jb] * geo.L1[jb])
        return Kernel("junction", fn, [self.jS(ja), self.jP(ja), self.jS(jb), self.jP(jb)], ["S", "P", "S", "P"],
                      [[(self.jS(ja), aa), (self.jS(jb), -ab)], [(self.jP(ja), aa), (self.jP(jb), -ab)]])

    # ------------------------------------------------------------ assembly
    def accumulation(self, x):
        geo = self.geo
        r = np.zeros(self.n)
        S = x[0:2 * self.nb:2]
        r[0:2 * self.nb:2] = self.phi_cell * (S - self.S_old * geo.A0 / geo.A1) - self.dt * self.Qw_cell / geo.A1
        r[1:2 * self.nb:2] = -self.dt * self.Q_cell / geo.A1
        if self.ni:
            Sg = x[2 * self.nb::2]
            w1 = geo.d1 * geo.L1
            r[2 * self.nb::2] = self.phi_g * (Sg - self.Sg_old * geo.d0 * geo.L0 / w1) - self.dt * self.Qw_el / w1
            r[2 * self.nb + 1::2] = -self.dt * self.Q_el / w1
        return r

    def residual(self, x, jacobian=False):
        r = self.accumulation(x)
        rows, cols, vals = [], [], []
        if jacobian:
            diag = np.concatenate([self.iS(np.arange(self.nb)), self.jS(np.arange(self.ni))])
            phis = np.concatenate([self.phi_cell, np.full(self.ni, self.phi_g)])
            rows.append(diag)
            cols.append(diag)
            vals.append(phis)
        for k in self.kernels:
            inp = k.inputs(x)
            base = k.fn(*inp)
            for out, targets in zip(base, k.rows):
                for rid, coef in targets:
                    np.add.at(r, rid, coef * out)
            if not jacobian:
                continue
            for j, (col, kind) in enumerate(zip(k.cols, k.kinds)):
                eps = _fd_step(inp[j], kind, self.p_scale)
                pert = list(inp)
                pert[j] = inp[j] + eps
                # materialise the perturbation so the step is exactly representable
                step = pert[j] - inp[j]
                outp = k.fn(*pert)
                for o, (ob, op) in enumerate(zip(base, outp)):
                    dval = (op - ob) / step
                    for rid, coef in k.rows[o]:
                        rows.append(rid)
                        cols.append(col)
                        vals.append(coef * dval)
        if self.par.pin_pressure:
            r[1] = x[1] / self.p_scale
        if not jacobian:
            return r
        R = np.concatenate(rows)
        C = np.concatenate(cols)
        Vv = np.concatenate(vals)
        if self.par.pin_pressure:
            keep = R != 1
            R, C, Vv = R[keep], C[keep], Vv[keep]
            R = np.append(R, 1)
            C = np.append(C, 1)
            Vv = np.append(Vv, 1.0 / self.p_scale)
        J = sp.csr_matrix((Vv, (R, C)), shape=(self.n, self.n))
        return r, J

    # ------------------------------------------------------------ audits
    def outputs(self, x, name):
        for k in self.kernels:
            if k.name == name:
                return k.fn(*k.inputs(x))
        return None

    def boundary_wetting_outflow(self, x):
        """Integrated wetting flux leaving through Dirichlet facets (per unit time)."""
        out = self.outputs(x, "boundary")
        if out is None:
            return 0.0
        geo = self.geo
        rate = geo.swept[geo.boundary] / self.dt
        # remove the geometric part: boundary vertices are fixed, but stay exact anyway
        Sp = x[self.iS(geo.facets.plus[geo.boundary])]
        h = fluxes.geometric_flux(Sp, np.where(geo.dirichlet, geo.bc_S, Sp), rate,
                                  self.phi_cell[geo.facets.plus[geo.boundary]],
                                  self.phi_cell[geo.facets.plus[geo.boundary]])
        return float(np.sum(np.where(geo.dirichlet, out[0] - h, 0.0)))

    def boundary_geometric(self, x):
        geo = self.geo
        if not len(geo.boundary):
            return 0.0
        cp = geo.facets.plus[geo.boundary]
        Sp = x[self.iS(cp)]
        rate = geo.swept[geo.boundary] / self.dt
        h = fluxes.geometric_flux(Sp, np.where(geo.dirichlet, geo.bc_S, Sp), rate,
                                  self.phi_cell[cp], self.phi_cell[cp])
        return float(np.sum(h))
