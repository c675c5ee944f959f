"""The three energies and their linear Hamiltonians.

E_H: harmonic model -d_x^2 - (d_y - ix/2)^2 + (x^2+y^2)/ell_V^2 plus a
quartic term.  E_tau: gauge model with coefficient x/(2 sqrt(1 + tau_x x^2))
and the bump confinement.  E_eps: two-component model with the small kinetic
scale eps^(2+2delta) tau_x, scalar potential V and coupling matrix M.

Gauge kinetic terms use the y-independence of the coefficient:
(d_y - iA(x))^2 u = d_y^2 u - 2iA d_y u - A^2 u, exact on the spectral grid.
Quadratic-form energies are cross-checkable against independent first-order
evaluators (energy_*_first_order).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import (ScalarField, SpinorField, make_grid, deriv_values,
                   laplacian_values, inner_values, l2_norm,
                   BoundaryMassWarning)
from .model import (bump_v_grid, potential_V_grid, unitary_u0_grid, omega,
                    assert_snapped)


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    potential: float
    gauge_cross: float
    interaction: float
    total: float

    def as_dict(self):
        return {"kinetic": self.kinetic, "potential": self.potential,
                "gauge_cross": self.gauge_cross,
                "interaction": self.interaction, "total": self.total}


def _breakdown(kin, pot, cross, inter):
    return EnergyBreakdown(kinetic=float(kin), potential=float(pot),
                           gauge_cross=float(cross), interaction=float(inter),
                           total=float(kin + pot + cross + inter))


# ---------------------------------------------------------------------------
# linear Hamiltonians

def apply_H_ellV(u, ell_V):
    """Harmonic-model Hamiltonian with gauge coefficient x/2."""
    g = u.grid
    A = 0.5 * g.X
    lap = (deriv_values(g, u.values, "x", 2) + deriv_values(g, u.values, "y", 2))
    out = (-lap + 2j * A * deriv_values(g, u.values, "y", 1)
           + A ** 2 * u.values
           + (g.X ** 2 + g.Y ** 2) / ell_V ** 2 * u.values)
    return ScalarField(g, out)


def gauge_coeff_tau(x, tau_x):
    """Gauge coefficient x/(2 sqrt(1 + tau_x x^2)) of the reduced model."""
    x = np.asarray(x, dtype=float)
    return x / (2.0 * np.sqrt(1.0 + tau_x * x ** 2))


def apply_H_minus_tau(u, sp):
    """Reduced one-band Hamiltonian; tau_x -> 0 recovers apply_H_ellV."""
    sp = sp.effective()
    if sp.tau_y != 1.0:
        raise ValueError("reduced model is defined for tau_y = 1")
    g = u.grid
    A = gauge_coeff_tau(g.X, sp.tau_x)
    pot = bump_v_grid(g, sp.tau_x) / (sp.ell_V ** 2 * sp.tau_x)
    lap = (deriv_values(g, u.values, "x", 2) + deriv_values(g, u.values, "y", 2))
    out = (-lap + 2j * A * deriv_values(g, u.values, "y", 1)
           + A ** 2 * u.values + pot * u.values)
    return ScalarField(g, out)


def _check_snapped(grid, sp):
    assert_snapped(grid.Ly, sp)


def apply_H_lin(psi, sp, form="multiplier"):
    """Two-component linear Hamiltonian.

    form "multiplier": -eps^(2+2delta) tau_x Laplacian + (V + M) as a
    pointwise 2x2 multiplication.  form "frame": the same operator written
    through the adiabatic frame, u0 diag(2 omega, 0) u0 plus the scalar
    remainder V - omega.  The two agree identically.
    """
    sp = sp.effective()
    if sp.tau_y != 1.0:
        raise ValueError("the solver path requires tau_y = 1")
    g = psi.grid
    _check_snapped(g, sp)
    kin_c = sp.eps_pow * sp.tau_x
    lap1 = laplacian_values(g, psi.comp1)
    lap2 = laplacian_values(g, psi.comp2)
    V = potential_V_grid(g, sp)
    om = omega(g.X, sp)
    if form == "multiplier":
        # M = omega * [[cos t, e^{i phi} sin t], [e^{-i phi} sin t, -cos t]]
        # with cos t = sqrt(tau_x) x / omega, sin t = 1/omega, phi = y/sqrt(tau_x)
        ct = np.sqrt(sp.tau_x) * g.X / om
        st = 1.0 / om
        e = np.exp(1j * g.Y / np.sqrt(sp.tau_x))
        m11, m12 = om * ct, om * st * e
        out1 = -kin_c * lap1 + (V + m11) * psi.comp1 + m12 * psi.comp2
        out2 = -kin_c * lap2 + np.conj(m12) * psi.comp1 + (V - m11) * psi.comp2
        return SpinorField(g, out1, out2)
    if form == "frame":
        u0 = unitary_u0_grid(g, sp)
        # u0 diag(2 omega, 0) u0 acting pointwise: project on the first
        # frame column, scale by 2 omega, map back
        a1 = u0[0, 0] * psi.comp1 + u0[0, 1] * psi.comp2
        two_om = 2.0 * om
        out1 = -kin_c * lap1 + u0[0, 0] * two_om * a1 + (V - om) * psi.comp1
        out2 = -kin_c * lap2 + u0[1, 0] * two_om * a1 + (V - om) * psi.comp2
        return SpinorField(g, out1, out2)
    raise ValueError("form must be 'multiplier' or 'frame'")


# ---------------------------------------------------------------------------
# energies as breakdowns

def _quartic(grid, dens):
    return float(np.sum(dens ** 2) * grid.cell_area)


def energy_H(u, ell_V, G):
    g = u.grid
    A = 0.5 * g.X
    dens = np.abs(u.values) ** 2
    lap = (deriv_values(g, u.values, "x", 2) + deriv_values(g, u.values, "y", 2))
    dyu = deriv_values(g, u.values, "y", 1)
    kin = np.real(np.sum(np.conj(u.values) * (-lap))) * g.cell_area
    cross = 2.0 * np.real(np.sum(np.conj(u.values) * 1j * A * dyu)) * g.cell_area
    pot = np.sum((A ** 2 + (g.X ** 2 + g.Y ** 2) / ell_V ** 2) * dens) * g.cell_area
    inter = 0.5 * G * _quartic(g, dens)
    return _breakdown(kin, pot, cross, inter)


def energy_tau(u, sp):
    sp = sp.effective()
    g = u.grid
    A = gauge_coeff_tau(g.X, sp.tau_x)
    dens = np.abs(u.values) ** 2
    lap = (deriv_values(g, u.values, "x", 2) + deriv_values(g, u.values, "y", 2))
    dyu = deriv_values(g, u.values, "y", 1)
    kin = np.real(np.sum(np.conj(u.values) * (-lap))) * g.cell_area
    cross = 2.0 * np.real(np.sum(np.conj(u.values) * 1j * A * dyu)) * g.cell_area
    pot = np.sum((A ** 2 + bump_v_grid(g, sp.tau_x)
                  / (sp.ell_V ** 2 * sp.tau_x)) * dens) * g.cell_area
    inter = 0.5 * sp.G * _quartic(g, dens)
    return _breakdown(kin, pot, cross, inter)


def energy_eps(psi, sp):
    """Two-component energy; the coupling-matrix expectation is reported in
    the gauge_cross slot (it carries the synthetic gauge structure)."""
    sp = sp.effective()
    g = psi.grid
    _check_snapped(g, sp)
    dens = psi.density()
    kin_c = sp.eps_pow * sp.tau_x
    kin = 0.0
    for comp in (psi.comp1, psi.comp2):
        lap = laplacian_values(g, comp)
        kin += np.real(np.sum(np.conj(comp) * (-lap))) * g.cell_area
    kin *= kin_c
    V = potential_V_grid(g, sp)
    pot = np.sum(V * dens) * g.cell_area
    om = omega(g.X, sp)
    ct = np.sqrt(sp.tau_x) * g.X / om
    st = 1.0 / om
    e = np.exp(1j * g.Y / np.sqrt(sp.tau_x))
    m_exp = (np.sum(om * ct * (np.abs(psi.comp1) ** 2 - np.abs(psi.comp2) ** 2))
             + 2.0 * np.real(np.sum(np.conj(psi.comp1) * om * st * e * psi.comp2)))
    cross = float(np.real(m_exp)) * g.cell_area
    inter = 0.5 * sp.G_eps_tau * _quartic(g, dens)
    return _breakdown(kin, pot, cross, inter)


# ---------------------------------------------------------------------------
# first-order-form cross evaluators

def energy_H_first_order(u, ell_V, G):
    g = u.grid
    A = 0.5 * g.X
    dxu = deriv_values(g, u.values, "x", 1)
    dyu = deriv_values(g, u.values, "y", 1)
    dens = np.abs(u.values) ** 2
    kin = np.sum(np.abs(dxu) ** 2 + np.abs(dyu - 1j * A * u.values) ** 2) * g.cell_area
    pot = np.sum((g.X ** 2 + g.Y ** 2) / ell_V ** 2 * dens) * g.cell_area
    return float(kin.real + pot + 0.5 * G * _quartic(g, dens))


def energy_tau_first_order(u, sp):
    sp = sp.effective()
    g = u.grid
    A = gauge_coeff_tau(g.X, sp.tau_x)
    dxu = deriv_values(g, u.values, "x", 1)
    dyu = deriv_values(g, u.values, "y", 1)
    dens = np.abs(u.values) ** 2
    kin = np.sum(np.abs(dxu) ** 2 + np.abs(dyu - 1j * A * u.values) ** 2) * g.cell_area
    pot = np.sum(bump_v_grid(g, sp.tau_x) / (sp.ell_V ** 2 * sp.tau_x) * dens) * g.cell_area
    return float(kin.real + pot + 0.5 * sp.G * _quartic(g, dens))


def energy_eps_first_order(psi, sp):
    sp = sp.effective()
    g = psi.grid
    dens = psi.density()
    kin_c = sp.eps_pow * sp.tau_x
    kin = 0.0
    for comp in (psi.comp1, psi.comp2):
        dx = deriv_values(g, comp, "x", 1)
        dy = deriv_values(g, comp, "y", 1)
        kin += np.sum(np.abs(dx) ** 2 + np.abs(dy) ** 2).real * g.cell_area
    bd = energy_eps(psi, sp)
    return float(kin_c * kin + bd.potential + bd.gauge_cross + bd.interaction)


# ---------------------------------------------------------------------------
# Euler-Lagrange machinery

def _apply_and_density(obj, sp, which):
    if which == "H":
        return apply_H_ellV(obj, sp.ell_V), np.abs(obj.values) ** 2, sp.G
    if which == "tau":
        return apply_H_minus_tau(obj, sp), np.abs(obj.values) ** 2, sp.G
    if which == "eps":
        return apply_H_lin(obj, sp), obj.density(), sp.G_eps_tau
    raise ValueError("which must be 'H', 'tau' or 'eps'")


def gradient(obj, sp, which):
    """Unconstrained gradient field Hu + G|u|^2 u (factor 1/2 of dE)."""
    Hu, dens, G = _apply_and_density(obj, sp, which)
    if isinstance(obj, SpinorField):
        return SpinorField(obj.grid, Hu.comp1 + G * dens * obj.comp1,
                           Hu.comp2 + G * dens * obj.comp2)
    return ScalarField(obj.grid, Hu.values + G * dens * obj.values)


def euler_lagrange(obj, sp, which):
    """Multiplier, residual field and residual norm at a unit-norm state.

    lambda = <u, Hu + G|u|^2 u>; residual = Hu + G|u|^2 u - lambda u, which
    is orthogonal to u by construction.
    """
    nrm = l2_norm(obj)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError("euler_lagrange expects a unit-norm state")
    grad = gradient(obj, sp, which)
    g = obj.grid
    if isinstance(obj, SpinorField):
        lam_c = (inner_values(g, obj.comp1, grad.comp1)
                 + inner_values(g, obj.comp2, grad.comp2))
        lam = float(lam_c.real)
        res = SpinorField(g, grad.comp1 - lam * obj.comp1,
                          grad.comp2 - lam * obj.comp2)
        res_norm = l2_norm(res)
    else:
        lam_c = inner_values(g, obj.values, grad.values)
        lam = float(lam_c.real)
        res = ScalarField(g, grad.values - lam * obj.values)
        res_norm = l2_norm(res)
    if abs(lam_c.imag) > 1e-10 * max(1.0, abs(lam)):
        warnings.warn("multiplier has a nonnegligible imaginary part %g"
                      % lam_c.imag)
    return lam, res, res_norm


def total_energy(obj, sp, which):
    if which == "H":
        return energy_H(obj, sp.ell_V, sp.G).total
    if which == "tau":
        return energy_tau(obj, sp).total
    if which == "eps":
        return energy_eps(obj, sp).total
    raise ValueError("which must be 'H', 'tau' or 'eps'")


# ---------------------------------------------------------------------------
# rotation frame

def to_rotation_frame(u, ell_V, G):
    """Map a harmonic-model field to the rotation frame.

    The combined phase twist e^{-ixy/4} and dilation by alpha with
    alpha^2 = 1/(ell_V sqrt(G)) turn the gauge term into a rigid rotation:
    E_tilde(v) = int |(grad - (i/4) ell_V sqrt(G) e_z x r) v|^2
                 + G int (r^2 |v|^2 + |v|^4/2),
    and E_H(u) = alpha^2 E_tilde(v).  The dilation is an exact node
    relabeling onto the box scaled by alpha.
    """
    if G <= 0:
        raise ValueError("rotation frame requires G > 0")
    g = u.grid
    alpha = (ell_V * np.sqrt(G)) ** -0.5
    w = u.values * np.exp(-0.25j * g.X * g.Y)
    gv = make_grid(alpha * g.Lx, alpha * g.Ly, g.Nx, g.Ny)
    v = ScalarField(gv, w / alpha)
    E_tilde = rotation_energy(v, ell_V, G)
    relation = E_tilde * alpha ** 2
    e_u = energy_H(u, ell_V, G).total
    if abs(relation - e_u) > 1e-5 * max(1.0, abs(e_u)):
        warnings.warn("rotation-frame energy relation violated beyond 1e-5; "
                      "field likely under-resolved", BoundaryMassWarning)
    return v, float(E_tilde)


def from_rotation_frame(v, ell_V, G):
    """Inverse of to_rotation_frame."""
    if G <= 0:
        raise ValueError("rotation frame requires G > 0")
    gv = v.grid
    alpha = (ell_V * np.sqrt(G)) ** -0.5
    g = make_grid(gv.Lx / alpha, gv.Ly / alpha, gv.Nx, gv.Ny)
    u = alpha * v.values * np.exp(0.25j * g.X * g.Y)
    return ScalarField(g, u)


def rotation_energy(v, ell_V, G):
    """E_tilde evaluated in first-order form on the rotation-frame grid."""
    g = v.grid
    c = 0.25 * ell_V * np.sqrt(G)
    Ax, Ay = -c * g.Y, c * g.X
    dxv = deriv_values(g, v.values, "x", 1)
    dyv = deriv_values(g, v.values, "y", 1)
    dens = np.abs(v.values) ** 2
    kin = np.sum(np.abs(dxv - 1j * Ax * v.values) ** 2
                 + np.abs(dyv - 1j * Ay * v.values) ** 2) * g.cell_area
    r2 = g.X ** 2 + g.Y ** 2
    return float(kin.real + G * (np.sum(r2 * dens) * g.cell_area
                                 + 0.5 * _quartic(g, dens)))


# ---------------------------------------------------------------------------
# sup-norm interpolation diagnostic

def h2_norm(u):
    """Bessel-potential H^2 norm via the multiplier (1 + |k|^2)."""
    g = u.grid
    uh = np.fft.fft2(u.values)
    val = np.sum((1.0 + g.K2) ** 2 * np.abs(uh) ** 2) * g.cell_area / (g.Nx * g.Ny)
    return float(np.sqrt(val))


def linf_interpolation_check(u):
    """Report (max|u|, ||u||^(1/2) ||u||_H2^(1/2), ratio)."""
    lhs = float(np.max(np.abs(u.values)))
    rhs = float(np.sqrt(l2_norm(u) * h2_norm(u)))
    ratio = lhs / rhs if rhs > 0 else 0.0
    return lhs, rhs, ratio
