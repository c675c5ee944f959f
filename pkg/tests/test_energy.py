"""Energy evaluators, linear Hamiltonians and the rotation frame.

Frozen Gaussian oracle: for u = e^{-r^2/2}/sqrt(pi) (unit L2 norm),
<|grad u|^2> = 1, <x^2> = 1/2, <r^2> = 1 and int |u|^4 = 1/(2 pi), so the
harmonic-model expectation at ell_V = 1 is 1 + 1/8 + 1 = 2.125 and the
G = 4 pi energy is 2.125 + (4 pi/2)/(2 pi) = 3.125.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_field, random_spinor
from gpge import ScalarField, SpinorField, make_grid, make_scaled
from gpge.energy import (apply_H_ellV, apply_H_minus_tau, apply_H_lin,
                         gauge_coeff_tau, energy_H, energy_tau, energy_eps,
                         energy_H_first_order, energy_tau_first_order,
                         energy_eps_first_order, euler_lagrange, gradient,
                         total_energy, to_rotation_frame, from_rotation_frame,
                         rotation_energy, h2_norm, linf_interpolation_check)
from gpge.grid import inner_values, deriv_values, l2_norm
from gpge.model import bump_v_grid, omega, potential_V_grid

GAUSS_EXPECTATION = 2.125
GAUSS_QUARTIC = 1.0 / (2.0 * np.pi)


def _sp_tau(grid, tau, G=0.0, ell_V=1.0):
    return make_scaled(eps=0.5, delta=1.0, tau_x=tau, Ly=grid.Ly,
                       G=G, ell_V=ell_V)


def _sp_eps(grid, eps=0.3, tau=0.25, G=2.0):
    return make_scaled(eps=eps, delta=1.0, tau_x=tau, Ly=grid.Ly,
                       G=G, ell_V=1.0)


# ---------------------------------------------------------------------------
# harmonic model

def test_gaussian_expectation(gauss):
    val = inner_values(gauss.grid, gauss.values,
                       apply_H_ellV(gauss, 1.0).values)
    assert abs(val.real - GAUSS_EXPECTATION) < 1e-8
    assert abs(val.imag) < 1e-10


def test_energy_H_gaussian_breakdown(gauss):
    bd = energy_H(gauss, 1.0, 0.0)
    assert abs(bd.total - GAUSS_EXPECTATION) < 1e-8
    assert abs(bd.kinetic - 1.0) < 1e-8
    # x^2/4 + r^2: 1/8 + 1
    assert abs(bd.potential - 1.125) < 1e-8
    # real Gaussian: the gauge cross term integrates to zero
    assert abs(bd.gauge_cross) < 1e-10
    assert bd.interaction == 0.0


def test_energy_H_gaussian_interacting(gauss):
    bd = energy_H(gauss, 1.0, 4.0 * np.pi)
    assert abs(bd.interaction - 0.5 * 4.0 * np.pi * GAUSS_QUARTIC) < 1e-8
    assert abs(bd.total - 3.125) < 1e-8


@given(seed=st.integers(0, 10 ** 6))
@settings(max_examples=20, deadline=None)
def test_energy_H_nonnegative_and_consistent(seed):
    g = make_grid(20.0, 20.0, 64, 64)
    u = random_field(g, seed)
    bd = energy_H(u, 1.3, 2.0)
    assert bd.total >= 0.0
    assert bd.interaction >= 0.0
    parts = bd.kinetic + bd.potential + bd.gauge_cross + bd.interaction
    assert abs(bd.total - parts) <= 1e-12 * max(1.0, abs(bd.total))


def test_apply_H_ellV_hermitian(grid_small):
    for seed in range(5):
        f = random_field(grid_small, seed)
        g = random_field(grid_small, seed + 100)
        lhs = inner_values(grid_small, f.values, apply_H_ellV(g, 1.0).values)
        rhs = inner_values(grid_small, apply_H_ellV(f, 1.0).values, g.values)
        assert abs(lhs - rhs) < 1e-10


def test_first_order_form_agrees_H(grid_small):
    u = random_field(grid_small, 7)
    quad = energy_H(u, 1.0, 3.0).total
    first = energy_H_first_order(u, 1.0, 3.0)
    assert abs(quad - first) < 1e-9 * max(1.0, abs(quad))


# ---------------------------------------------------------------------------
# reduced one-band model

def test_apply_H_minus_tau_recovers_harmonic(grid_small):
    u = random_field(grid_small, 3)
    ref = apply_H_ellV(u, 1.0)
    diffs = []
    for tau in (1e-1, 1e-2, 1e-3):
        sp = _sp_tau(grid_small, tau)
        out = apply_H_minus_tau(u, sp)
        diffs.append(l2_norm(ScalarField(grid_small, out.values - ref.values)))
    assert diffs[0] > diffs[1] > diffs[2]
    # the residual gauge mismatch scales roughly linearly in tau
    assert diffs[2] < 0.15 * diffs[1]


def test_apply_H_minus_tau_hermitian(grid_small):
    sp = _sp_tau(grid_small, 0.1)
    for seed in range(5):
        f = random_field(grid_small, seed)
        g = random_field(grid_small, seed + 50)
        lhs = inner_values(grid_small, f.values, apply_H_minus_tau(g, sp).values)
        rhs = inner_values(grid_small, apply_H_minus_tau(f, sp).values, g.values)
        assert abs(lhs - rhs) < 1e-10


def test_apply_H_minus_tau_quadratic_region(grid_small):
    # inside r <= 1/sqrt(tau) the confinement is exactly harmonic: applying
    # the operator to the constant field isolates gauge^2 + potential
    sp = _sp_tau(grid_small, 0.05, ell_V=2.0).effective()
    g = grid_small
    one = ScalarField(g, np.ones((g.Nx, g.Ny), dtype=complex))
    pot = apply_H_minus_tau(one, sp).values.real \
        - gauge_coeff_tau(g.X, sp.tau_x) ** 2
    mask = g.X ** 2 + g.Y ** 2 <= 0.9 / sp.tau_x
    want = (g.X ** 2 + g.Y ** 2) / sp.ell_V ** 2
    assert np.max(np.abs((pot - want)[mask])) < 1e-11


def test_apply_H_minus_tau_rejects_tau_y(grid_small):
    sp = make_scaled(eps=0.5, delta=1.0, tau_x=1.0, Ly=grid_small.Ly,
                     G=0.0, ell_V=1.0, tau_y=0.5)
    with pytest.raises(ValueError):
        apply_H_minus_tau(random_field(grid_small, 0), sp)


def test_first_order_form_agrees_tau(grid_small):
    sp = _sp_tau(grid_small, 0.1, G=2.0)
    u = random_field(grid_small, 11)
    quad = energy_tau(u, sp).total
    first = energy_tau_first_order(u, sp)
    assert abs(quad - first) < 1e-9 * max(1.0, abs(quad))


# ---------------------------------------------------------------------------
# two-component model

def test_apply_H_lin_forms_agree(grid_small):
    sp = _sp_eps(grid_small)
    psi = random_spinor(grid_small, 5)
    a = apply_H_lin(psi, sp, form="multiplier")
    b = apply_H_lin(psi, sp, form="frame")
    scale = max(np.max(np.abs(a.comp1)), np.max(np.abs(a.comp2)), 1.0)
    assert np.max(np.abs(a.comp1 - b.comp1)) < 1e-11 * scale
    assert np.max(np.abs(a.comp2 - b.comp2)) < 1e-11 * scale


def test_apply_H_lin_rejects_unknown_form(grid_small):
    with pytest.raises(ValueError):
        apply_H_lin(random_spinor(grid_small, 0), _sp_eps(grid_small),
                    form="spectral")


def test_apply_H_lin_hermitian(grid_small):
    sp = _sp_eps(grid_small)
    g = grid_small
    for seed in range(5):
        f = random_spinor(g, seed)
        h = random_spinor(g, seed + 30)
        Hh = apply_H_lin(h, sp)
        Hf = apply_H_lin(f, sp)
        lhs = (inner_values(g, f.comp1, Hh.comp1)
               + inner_values(g, f.comp2, Hh.comp2))
        rhs = (inner_values(g, Hf.comp1, h.comp1)
               + inner_values(g, Hf.comp2, h.comp2))
        assert abs(lhs - rhs) < 1e-10


def test_apply_H_lin_vanishing_eps_is_multiplication(grid_small):
    # as eps -> 0 the kinetic scale eps^(2+2delta) tau_x and the eps-dressed
    # potential terms vanish, leaving the bare multiplication (V0 + M) psi
    sp = _sp_eps(grid_small, eps=1e-8).effective()
    g = grid_small
    psi = random_spinor(g, 9)
    out = apply_H_lin(psi, sp)
    v0 = np.sqrt(1.0 + sp.tau_x * g.X ** 2)
    om = omega(g.X, sp)
    m11 = np.sqrt(sp.tau_x) * g.X
    m12 = (1.0 / om) * om * np.exp(1j * g.Y / np.sqrt(sp.tau_x))
    want1 = (v0 + m11) * psi.comp1 + m12 * psi.comp2
    want2 = np.conj(m12) * psi.comp1 + (v0 - m11) * psi.comp2
    assert np.max(np.abs(out.comp1 - want1)) < 1e-13
    assert np.max(np.abs(out.comp2 - want2)) < 1e-13


def test_energy_eps_upper_component_gaussian(gauss):
    # psi = (u, 0) at vanishing eps: only <u, (V0 + M11) u> survives
    g = gauss.grid
    sp = _sp_eps(g, eps=1e-8, G=2.0).effective()
    zero = np.zeros_like(gauss.values)
    psi = SpinorField(g, gauss.values, zero)
    dens = np.abs(gauss.values) ** 2
    want = np.sum((np.sqrt(1.0 + sp.tau_x * g.X ** 2)
                   + np.sqrt(sp.tau_x) * g.X) * dens) * g.cell_area
    assert abs(energy_eps(psi, sp).total - want) < 1e-10


def test_first_order_form_agrees_eps(grid_small):
    sp = _sp_eps(grid_small, G=3.0)
    psi = random_spinor(grid_small, 13)
    quad = energy_eps(psi, sp).total
    first = energy_eps_first_order(psi, sp)
    assert abs(quad - first) < 1e-9 * max(1.0, abs(quad))


# ---------------------------------------------------------------------------
# Euler-Lagrange machinery

def test_euler_lagrange_tangency(grid_small):
    sp = _sp_tau(grid_small, 0.1, G=2.0)
    for seed in range(5):
        u = random_field(grid_small, seed)
        lam, res, res_norm = euler_lagrange(u, sp, "tau")
        assert abs(inner_values(grid_small, u.values, res.values)) < 1e-10
        assert res_norm > 0


def test_euler_lagrange_rejects_unnormalized(grid_small, gauss):
    sp = _sp_tau(grid_small, 0.1)
    bad = ScalarField(grid_small, 2.0 * gauss.values)
    with pytest.raises(ValueError):
        euler_lagrange(bad, sp, "H")


@pytest.mark.parametrize("which", ["H", "tau", "eps"])
def test_gradient_matches_finite_differences(grid_small, which):
    sp = make_scaled(eps=0.3, delta=1.0, tau_x=0.25, Ly=grid_small.Ly,
                     G=2.0, ell_V=1.0)
    if which == "eps":
        u = random_spinor(grid_small, 21)
        direction = random_spinor(grid_small, 22)
    else:
        u = random_field(grid_small, 21)
        direction = random_field(grid_small, 22)
    grad = gradient(u, sp, which)
    h = 1e-5
    for sgn in (1.0,):
        if which == "eps":
            up = SpinorField(grid_small, u.comp1 + h * direction.comp1,
                             u.comp2 + h * direction.comp2)
            dn = SpinorField(grid_small, u.comp1 - h * direction.comp1,
                             u.comp2 - h * direction.comp2)
            pairing = 2.0 * (inner_values(grid_small, grad.comp1, direction.comp1)
                             + inner_values(grid_small, grad.comp2,
                                            direction.comp2)).real
        else:
            up = ScalarField(grid_small, u.values + h * direction.values)
            dn = ScalarField(grid_small, u.values - h * direction.values)
            pairing = 2.0 * inner_values(grid_small, grad.values,
                                         direction.values).real
        fd = (total_energy(up, sp, which) - total_energy(dn, sp, which)) / (2 * h)
        assert abs(fd - pairing) < 1e-6 * max(1.0, abs(fd))


def test_total_energy_rejects_unknown_problem(gauss):
    sp = _sp_tau(gauss.grid, 0.1)
    with pytest.raises(ValueError):
        total_energy(gauss, sp, "lll")


# ---------------------------------------------------------------------------
# rotation frame

def test_rotation_frame_unitary_and_relation(gauss):
    v, e_tilde = to_rotation_frame(gauss, 1.0, 1.0)
    assert abs(l2_norm(v) - l2_norm(gauss)) < 1e-10
    e_u = energy_H(gauss, 1.0, 1.0).total
    assert abs(e_u * 1.0 * math.sqrt(1.0) - e_tilde) < 1e-6 * abs(e_tilde)


def test_rotation_frame_roundtrip(gauss):
    v, _ = to_rotation_frame(gauss, 1.0, 4.0)
    back = from_rotation_frame(v, 1.0, 4.0)
    assert back.grid == gauss.grid
    diff = ScalarField(gauss.grid, back.values - gauss.values)
    assert l2_norm(diff) < 1e-8


def test_rotation_frame_scales_box(gauss):
    v, _ = to_rotation_frame(gauss, 1.0, 4.0)
    alpha = (1.0 * math.sqrt(4.0)) ** -0.5
    assert v.grid.Lx == pytest.approx(alpha * gauss.grid.Lx)


def test_rotation_frame_rejects_zero_G(gauss):
    with pytest.raises(ValueError):
        to_rotation_frame(gauss, 1.0, 0.0)
    with pytest.raises(ValueError):
        from_rotation_frame(gauss, 1.0, -1.0)


def test_rotation_energy_gaussian_value(gauss):
    # alpha = 1 at ell_V = G = 1, so the change of variables reduces to the
    # phase twist alone; applying it by hand gives an evaluation of the
    # energy relation independent of to_rotation_frame
    g = gauss.grid
    v = ScalarField(g, gauss.values * np.exp(-0.25j * g.X * g.Y))
    e_tilde = rotation_energy(v, 1.0, 1.0)
    want = energy_H(gauss, 1.0, 1.0).total
    assert abs(e_tilde - want) < 1e-6 * abs(want)


# ---------------------------------------------------------------------------
# sup-norm interpolation diagnostic

def test_h2_norm_matches_derivative_sum(grid_small):
    # (1 + |k|^2)^2 = 1 + 2|k|^2 + |k|^4: compare the multiplier route with
    # the norms of u, grad u and Laplacian u
    u = random_field(grid_small, 17)
    g = grid_small
    dx = deriv_values(g, u.values, "x", 1)
    dy = deriv_values(g, u.values, "y", 1)
    lap = deriv_values(g, u.values, "x", 2) + deriv_values(g, u.values, "y", 2)
    direct = math.sqrt(
        float(np.sum(np.abs(u.values) ** 2
                     + 2.0 * (np.abs(dx) ** 2 + np.abs(dy) ** 2)
                     + np.abs(lap) ** 2)) * g.cell_area)
    assert abs(h2_norm(u) - direct) < 1e-10 * max(1.0, direct)


def test_linf_interpolation_gaussian(gauss):
    lhs, rhs, ratio = linf_interpolation_check(gauss)
    assert lhs == pytest.approx(1.0 / math.sqrt(math.pi), rel=1e-10)
    assert rhs > 0 and 0 < ratio < 1.0


def test_linf_interpolation_zero(grid_small):
    zero = ScalarField(grid_small, np.zeros((grid_small.Nx, grid_small.Ny),
                                            dtype=complex))
    lhs, rhs, ratio = linf_interpolation_check(zero)
    assert lhs == 0.0 and rhs == 0.0 and ratio == 0.0


def test_linf_interpolation_random_family(grid_small):
    ratios = [linf_interpolation_check(random_field(grid_small, s))[2]
              for s in range(50)]
    assert max(ratios) < 1.0
