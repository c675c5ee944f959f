"""Parameters, potentials, matrix fields and symbol-level adiabatic formulas.

Everything here is a pure pointwise function of immutable parameter records.
Conventions: the two-level coupling matrix is M = Omega(x)[[cos t, e^{i phi}
sin t],[e^{-i phi} sin t, -cos t]] with Omega(x) = sqrt(1 + x^2), cos t =
x/Omega, evaluated at the anisotropically scaled argument sqrt(tau_x/tau_y) x
and phase phi = sqrt(tau_y/tau_x) y.  The adiabatic frame u0 diagonalizes M,
and the induced connection (A_k, X_k) and Born-Huang scalar |X|^2 drive the
effective one-band models.
"""

import math
from dataclasses import dataclass, field

import numpy as np

DELTA_MAX_DEFAULT = 2.5
FD_STEP = 1e-5  # step for 4th-order central differences on symbols


# ---------------------------------------------------------------------------
# smooth bump machinery shared by cutoffs and partitions

def _bump(s):
    """exp(-1/s) for s > 0, else 0; vectorized and overflow-safe."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out if out.ndim else float(out)


def smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, strictly monotone between."""
    a = _bump(u)
    b = _bump(1.0 - np.asarray(u, dtype=float))
    return a / (a + b)


def _bump_d(s):
    """Derivative of exp(-1/s): exp(-1/s)/s^2 for s > 0, else 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos]) / s[pos] ** 2
    return out if out.ndim else float(out)


def smooth_step_d(u):
    """Derivative of smooth_step; vanishes outside (0, 1)."""
    u = np.asarray(u, dtype=float)
    a, b = _bump(u), _bump(1.0 - u)
    da, db = _bump_d(u), -_bump_d(1.0 - u)
    return (da * b - a * db) / (a + b) ** 2


def chi_v(t):
    """Radial cutoff of the confining bump: 1 on [0,1], support in [0,2)."""
    return smooth_step(2.0 - np.asarray(t, dtype=float))


# ---------------------------------------------------------------------------
# parameter records

@dataclass(frozen=True)
class PhysicalParams:
    kappa: float
    G_phys: float
    ell_kappa: float
    k: float
    delta: float
    delta_max: float = DELTA_MAX_DEFAULT

    def __post_init__(self):
        for name in ("kappa", "G_phys", "ell_kappa", "k", "delta"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)
        if self.delta > self.delta_max:
            raise ValueError("delta exceeds the configured maximum")


@dataclass(frozen=True)
class ScaledParams:
    eps: float
    delta: float
    tau_x: float
    tau_y: float
    G: float
    ell_V: float
    G_eps_tau: float
    tau_x_effective: float
    snap_index: int

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        # requested tau_x lies in (0,1]; snapping may push the effective value
        # slightly above 1 on incommensurate boxes, so leave headroom here
        if not 0 < self.tau_x < 2:
            raise ValueError("tau_x out of range")
        if self.tau_y <= 0 or self.ell_V <= 0 or self.delta <= 0:
            raise ValueError("tau_y, ell_V and delta must be positive")
        if self.G < 0:
            raise ValueError("G must be nonnegative")
        expected = self.G * self.tau_x_effective * self.tau_y * self.eps_pow
        if abs(self.G_eps_tau - expected) > 1e-14 * max(1.0, abs(expected)):
            raise ValueError("G_eps_tau inconsistent with G tau_x tau_y eps^(2+2delta)")

    @property
    def eps_pow(self):
        """eps^(2+2delta), the small energy scale of the full model."""
        return self.eps ** (2 + 2 * self.delta)

    def effective(self):
        """Copy with tau_x replaced by its grid-snapped value.

        Grid-based evaluation must go through this view so the frame phases
        e^{+-iy/(2 sqrt(tau_x))} are exactly box-periodic.
        """
        if self.tau_x == self.tau_x_effective:
            return self
        return ScaledParams(eps=self.eps, delta=self.delta,
                            tau_x=self.tau_x_effective, tau_y=self.tau_y,
                            G=self.G, ell_V=self.ell_V,
                            G_eps_tau=self.G_eps_tau,
                            tau_x_effective=self.tau_x_effective,
                            snap_index=self.snap_index)


def snap_tau(tau_x_requested, Ly):
    """Snap tau_x so the frame phases e^{+-iy/(2 sqrt(tau_x))} fit the box.

    Returns (tau_x_effective, m) with 1/(2 sqrt(tau_x_effective)) = 2 pi m/Ly.
    """
    if not 0 < tau_x_requested <= 1:
        raise ValueError("tau_x must lie in (0, 1]")
    if Ly <= 0:
        raise ValueError("Ly must be positive")
    m = round(Ly / (4 * math.pi * math.sqrt(tau_x_requested)))
    if m < 1:
        raise ValueError("box too small to hold one frame period at this tau_x")
    return (Ly / (4 * math.pi * m)) ** 2, m


def assert_snapped(Ly, sp):
    """Fail unless the frame phases e^{+-iy/(2 sqrt(tau_x))} fit the box Ly."""
    period = 4.0 * math.pi * math.sqrt(sp.tau_x_effective)
    if abs(Ly - sp.snap_index * period) > 1e-9 * Ly:
        raise ValueError("tau_x is not snapped to this box; frame phases "
                         "would not be periodic")


def frame_wavenumber(Ly, sp):
    """The exact grid frequency 2 pi m / Ly = 1/(2 sqrt(tau_x_effective))."""
    assert_snapped(Ly, sp)
    return 2.0 * math.pi * sp.snap_index / Ly


def make_scaled(eps, delta, tau_x, Ly, G, ell_V, tau_y=1.0):
    """Build a ScaledParams record, snapping tau_x to the box."""
    tau_eff, m = snap_tau(tau_x, Ly)
    g_et = G * tau_eff * tau_y * eps ** (2 + 2 * delta)
    return ScaledParams(eps=eps, delta=delta, tau_x=tau_x, tau_y=tau_y,
                        G=G, ell_V=ell_V, G_eps_tau=g_et,
                        tau_x_effective=tau_eff, snap_index=m)


def rescale_physical(p, Ly, ell_V=1.0):
    """Reduce physical constants to the scaled record, branching on ell_kappa*k.

    For ell_kappa*k >= 1: eps^(2+2delta) = k^2/kappa and tau = (1/(k ell_kappa), 1).
    Otherwise: eps^(2+2delta) = 1/(ell_kappa^2 kappa) and tau = (1, k ell_kappa).
    Both give G_eps_tau = G k/(kappa ell_kappa).
    """
    lk = p.ell_kappa * p.k
    if lk >= 1:
        eps_pow = p.k ** 2 / p.kappa
        tau_x, tau_y = 1.0 / lk, 1.0
    else:
        eps_pow = 1.0 / (p.ell_kappa ** 2 * p.kappa)
        tau_x, tau_y = 1.0, lk
    eps = eps_pow ** (1.0 / (2 + 2 * p.delta))
    if eps >= 1:
        raise ValueError("parameters give eps >= 1; no scale separation")
    return make_scaled(eps, p.delta, tau_x, Ly, p.G_phys, ell_V, tau_y)


@dataclass(frozen=True)
class PartitionPair:
    """Radial quadratic partition chi1^2 + chi2^2 = 1.

    chi1 = cos(pi s/2), chi2 = sin(pi s/2) with s a smooth step in the radius:
    s = 0 for r <= rho0 and s = 1 for r >= rho1.
    """
    rho0: float
    rho1: float

    def __post_init__(self):
        if not 0 < self.rho0 < self.rho1:
            raise ValueError("need 0 < rho0 < rho1")

    def profile(self, r):
        return smooth_step((np.asarray(r, dtype=float) - self.rho0)
                           / (self.rho1 - self.rho0))

    def chi1(self, r):
        return np.cos(0.5 * np.pi * self.profile(r))

    def chi2(self, r):
        return np.sin(0.5 * np.pi * self.profile(r))

    def dprofile(self, r):
        return smooth_step_d((np.asarray(r, dtype=float) - self.rho0)
                             / (self.rho1 - self.rho0)) / (self.rho1 - self.rho0)

    def grad_sq(self, r):
        """|chi1'(r)|^2 + |chi2'(r)|^2 = (pi/2)^2 s'(r)^2, the localization cost."""
        return (0.5 * np.pi * self.dprofile(r)) ** 2


# ---------------------------------------------------------------------------
# potentials and matrix fields

def bump_v(x, y, tau_x=1.0):
    """Confining bump v = r^2 chi_v(r^2) + (1 - chi_v(r^2)) at (sqrt(tau_x) x, sqrt(tau_x) y).

    Equals r^2 inside the unit disk of the scaled radius and 1 outside r^2 >= 2.
    """
    t = tau_x * (np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2)
    c = chi_v(t)
    return t * c + (1.0 - c)


def bump_v_grid(grid, tau_x=1.0):
    return bump_v(grid.X, grid.Y, tau_x)


def born_huang_W(x, sp, convention="BO"):
    """Born-Huang scalar in its two displayed normalizations.

    convention "BO": W = tau_x/(tau_y (1 + (tau_x/tau_y) x^2)^2)
                       + tau_y/(tau_x (1 + (tau_x/tau_y) x^2));
    convention "V":  W = tau_x^2/(1 + tau_x x^2)^2 + 1/(1 + tau_x x^2),
    requiring tau_y = 1, where W_V = tau_x tau_y W_BO.
    Both equal 4 |X|^2 of the frame connection; the energy counter-terms
    carry the 1/4 (see potential_V).
    """
    x = np.asarray(x, dtype=float)
    if convention == "BO":
        d = 1.0 + (sp.tau_x / sp.tau_y) * x ** 2
        return sp.tau_x / (sp.tau_y * d ** 2) + sp.tau_y / (sp.tau_x * d)
    if convention == "V":
        if sp.tau_y != 1.0:
            raise ValueError("convention 'V' is defined for tau_y = 1")
        d = 1.0 + sp.tau_x * x ** 2
        return sp.tau_x ** 2 / d ** 2 + 1.0 / d
    raise ValueError("convention must be 'BO' or 'V'")


def potential_V(x, y, sp):
    """Scalar potential of the full model (tau_y = 1).

    Confinement plus the adiabatic band bottom sqrt(1 + tau_x x^2), minus the
    Born-Huang counter-term eps^(2+2delta) |X|^2 = eps^(2+2delta) W_V/4 that
    cancels the frame-change curvature energy of the lower band.
    """
    if sp.tau_y != 1.0:
        raise ValueError("potential_V is defined for tau_y = 1")
    x = np.asarray(x, dtype=float)
    ep = sp.eps_pow
    return (ep / sp.ell_V ** 2 * bump_v(x, y, sp.tau_x)
            + np.sqrt(1.0 + sp.tau_x * x ** 2)
            - 0.25 * ep * born_huang_W(x, sp, "V"))


def potential_V_grid(grid, sp):
    return potential_V(grid.X, grid.Y, sp)


def _angles(x, y, sp):
    """Scaled mixing angle theta in (0, pi) and phase phi."""
    s = math.sqrt(sp.tau_x / sp.tau_y)
    theta = 0.5 * np.pi - np.arctan(s * np.asarray(x, dtype=float))
    phi = np.asarray(y, dtype=float) / s
    return theta, phi


def omega(x, sp):
    """Band gap half-width sqrt(1 + (tau_x/tau_y) x^2) >= 1."""
    return np.sqrt(1.0 + (sp.tau_x / sp.tau_y) * np.asarray(x, dtype=float) ** 2)


def matrix_M(x, y, sp):
    """Two-level coupling matrix; Hermitian with eigenvalues +-omega(x)."""
    theta, phi = _angles(x, y, sp)
    om = omega(x, sp)
    ct, st = np.cos(theta), np.sin(theta)
    e = np.exp(1j * phi)
    return om * np.array([[ct + 0j, e * st], [np.conj(e) * st, -ct + 0j]])


def unitary_u0(x, y, sp):
    """Hermitian involution whose columns are the upper/lower band states."""
    theta, phi = _angles(x, y, sp)
    C, S = np.cos(theta / 2), np.sin(theta / 2)
    e = np.exp(1j * phi)
    return np.array([[C + 0j, S * e], [S * np.conj(e), -C + 0j]])


def unitary_u0_grid(grid, sp):
    """u0 evaluated on all grid nodes, shape (2, 2, Nx, Ny)."""
    theta, phi = _angles(grid.X, grid.Y, sp)
    C, S = np.cos(theta / 2), np.sin(theta / 2)
    e = np.exp(1j * phi)
    u = np.empty((2, 2, grid.Nx, grid.Ny), dtype=complex)
    u[0, 0] = C
    u[0, 1] = S * e
    u[1, 0] = S * np.conj(e)
    u[1, 1] = -C
    return u


def connection_AX(x, y, sp):
    """Frame connection entries (A_x, X_x, A_y, X_y).

    i u0 (d_k u0) = [[A_k, X_k], [conj(X_k), -A_k]] in the adapted frame;
    A_x vanishes identically and A_y = sqrt(tau_y/tau_x) sin^2(theta/2).
    """
    theta, phi = _angles(x, y, sp)
    s = math.sqrt(sp.tau_x / sp.tau_y)
    C, S = np.cos(theta / 2), np.sin(theta / 2)
    e = np.exp(1j * phi)
    dtheta_dx = -s / (1.0 + (s * np.asarray(x, dtype=float)) ** 2)
    A_x = np.zeros_like(dtheta_dx)
    X_x = 0.5j * dtheta_dx * e
    A_y = S ** 2 / s
    X_y = -(S * C / s) * e
    return A_x, X_x, A_y, X_y


# ---------------------------------------------------------------------------
# phase-space symbols of the adiabatic expansion

@dataclass(frozen=True)
class FSpec:
    """Kinetic symbol f_eps(p) = eps^(2 delta) t gamma(t), t = tau_x tau_y |p|^2.

    gamma is a smooth plateau cutoff: 1 on [0, 2 r_gamma^2], supported in
    [0, 4 r_gamma^2).  Derivatives in p use the closed form in t with gamma
    derivatives by 4th-order central differences (step fd_step).
    """
    r_gamma: float = 1.0
    fd_step: float = FD_STEP

    def gamma(self, t):
        r2 = self.r_gamma ** 2
        return 1.0 - smooth_step((np.asarray(t, dtype=float) - 2 * r2) / (2 * r2))

    def _h(self, t):
        return t * self.gamma(t)

    def _h1(self, t):
        h, s = self._h, self.fd_step
        return (-h(t + 2 * s) + 8 * h(t + s) - 8 * h(t - s) + h(t - 2 * s)) / (12 * s)

    def _h2(self, t):
        h, s = self._h, self.fd_step
        return (-h(t + 2 * s) + 16 * h(t + s) - 30 * h(t)
                + 16 * h(t - s) - h(t - 2 * s)) / (12 * s ** 2)

    def check_p(self, p, sp):
        t = sp.tau_x * sp.tau_y * float(np.dot(p, p))
        if t >= 4 * self.r_gamma ** 2:
            raise ValueError("momentum outside the cutoff support")
        return t

    def f(self, p, sp):
        t = self.check_p(p, sp)
        return sp.eps ** (2 * sp.delta) * self._h(t)

    def grad_p(self, p, sp):
        t = self.check_p(p, sp)
        c = sp.eps ** (2 * sp.delta) * 2 * sp.tau_x * sp.tau_y
        return c * self._h1(t) * np.asarray(p, dtype=float)

    def hess_p(self, p, sp):
        t = self.check_p(p, sp)
        tt = sp.tau_x * sp.tau_y
        pv = np.asarray(p, dtype=float)
        c = sp.eps ** (2 * sp.delta)
        return c * (4 * tt ** 2 * self._h2(t) * np.outer(pv, pv)
                    + 2 * tt * self._h1(t) * np.eye(2))


_P_PLUS = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)


def symbol_Pi0(q, sp):
    """Projection onto the upper band state at q."""
    u0 = unitary_u0(q[0], q[1], sp)
    return u0 @ _P_PLUS @ u0


def _dPi0_dq(q, sp):
    """Closed-form gradient of Pi0: d_k Pi0 = i u0 [[0, X_k],[-conj(X_k), 0]] u0."""
    u0 = unitary_u0(q[0], q[1], sp)
    _, X_x, _, X_y = connection_AX(q[0], q[1], sp)
    out = []
    for X in (X_x, X_y):
        inner = np.array([[0.0, X], [-np.conj(X), 0.0]], dtype=complex)
        out.append(1j * (u0 @ inner @ u0))
    return out


def _sigma3(q, sp):
    return 2.0 * symbol_Pi0(q, sp) - np.eye(2)


def _diag_od_split(B, Pi0):
    """Split B into its block-diagonal and block-off-diagonal parts w.r.t. Pi0."""
    one = np.eye(2)
    D = Pi0 @ B @ Pi0 + (one - Pi0) @ B @ (one - Pi0)
    return D, B - D


def symbol_Pi1(q, p, sp, f_spec):
    """First projector correction (i d_{p_k} f / (E+ - E-)) sigma3 d_{q_k} Pi0."""
    df = f_spec.grad_p(p, sp)
    gap = 2.0 * float(omega(q[0], sp))
    s3 = _sigma3(q, sp)
    dPi = _dPi0_dq(q, sp)
    out = np.zeros((2, 2), dtype=complex)
    for k in range(2):
        out += (1j * df[k] / gap) * (s3 @ dPi[k])
    return out


def symbol_u1(q, p, sp, f_spec):
    """First frame correction -(i d_{p_k} f / (E+ - E-)) (d_{q_k} Pi0) u0."""
    df = f_spec.grad_p(p, sp)
    gap = 2.0 * float(omega(q[0], sp))
    u0 = unitary_u0(q[0], q[1], sp)
    dPi = _dPi0_dq(q, sp)
    out = np.zeros((2, 2), dtype=complex)
    for k in range(2):
        out += -(1j * df[k] / gap) * (dPi[k] @ u0)
    return out


def _dV_dq(q, sp, step=FD_STEP):
    """4th-order central difference gradient of potential_V."""
    out = []
    for k in range(2):
        def Vs(h, k=k):
            qq = [q[0], q[1]]
            qq[k] += h
            return float(potential_V(qq[0], qq[1], sp))
        out.append((-Vs(2 * step) + 8 * Vs(step) - 8 * Vs(-step) + Vs(-2 * step))
                   / (12 * step))
    return np.array(out)


def _d2Pi0_dq(q, sp, step=FD_STEP):
    """4th-order central differences of the closed-form dPi0 gradient."""
    d2 = np.empty((2, 2, 2, 2), dtype=complex)
    for k in range(2):
        def dP(h, k=k):
            qq = [q[0], q[1]]
            qq[k] += h
            return _dPi0_dq(qq, sp)
        p2, p1, m1, m2 = dP(2 * step), dP(step), dP(-step), dP(-2 * step)
        for ell in range(2):
            d2[k, ell] = (-p2[ell] + 8 * p1[ell] - 8 * m1[ell] + m2[ell]) / (12 * step)
    return d2


def symbol_Pi2(q, p, sp, f_spec):
    """Second projector correction, returned as (diagonal, off-diagonal) parts.

    Diagonal part: -(1/gap^2) sum_{k,l} [sigma3 d_k f d_l f + gap d2_{kl} f]
    (d_k Pi0)(d_l Pi0); off-diagonal part:
    -(d_k f d_l f / gap) (d_k [(1/gap) d_l Pi0])^OD
    + (d2_{kl} f / (2 gap^2)) d_k(E+ + E-) (d_l Pi0),
    with d(E+ + E-) = 2 dV.  Both parts solve the order-2 composition and
    commutation constraints of the projector construction.
    """
    df = f_spec.grad_p(p, sp)
    d2f = f_spec.hess_p(p, sp)
    Pi0 = symbol_Pi0(q, sp)
    s3 = 2.0 * Pi0 - np.eye(2)
    dPi = _dPi0_dq(q, sp)
    d2Pi = _d2Pi0_dq(q, sp)
    gap = 2.0 * float(omega(q[0], sp))
    x = float(q[0])
    r = sp.tau_x / sp.tau_y
    dgap = np.array([2.0 * r * x / float(omega(x, sp)), 0.0])
    dV = _dV_dq(q, sp)

    D = np.zeros((2, 2), dtype=complex)
    OD = np.zeros((2, 2), dtype=complex)
    for k in range(2):
        for ell in range(2):
            prod = dPi[k] @ dPi[ell]
            D += -(1.0 / gap ** 2) * (df[k] * df[ell] * (s3 @ prod)
                                      + gap * d2f[k, ell] * prod)
            # d_k[(1/gap) d_l Pi0] = -(d_k gap/gap^2) d_l Pi0 + (1/gap) d2_{kl} Pi0
            mixed = (-(dgap[k] / gap ** 2) * dPi[ell] + (1.0 / gap) * d2Pi[k, ell])
            _, mixed_od = _diag_od_split(mixed, Pi0)
            OD += (-(df[k] * df[ell] / gap) * mixed_od
                   + (d2f[k, ell] / (2.0 * gap ** 2)) * (2.0 * dV[k]) * dPi[ell])
    return D, OD


def symbol_E(q, sp):
    """Band energies E+- = V +- omega entering the effective Hamiltonians."""
    V = float(potential_V(q[0], q[1], sp))
    om = float(omega(q[0], sp))
    return V + om, V - om


def symbol_h_pm(q, p, sp, f_spec):
    """Effective one-band symbols (h+, h-) through second order.

    h+- = f + E+- -+ (df . A) eps-order term + second-order A A and X X-bar
    terms; the off-band curvature term carries opposite signs in the two
    bands.  The eps factors follow the frame expansion, with A and X the
    connection entries at q.
    """
    fval = f_spec.f(p, sp)
    df = f_spec.grad_p(p, sp)
    d2f = f_spec.hess_p(p, sp)
    Ep, Em = symbol_E(q, sp)
    gap = Ep - Em
    A_x, X_x, A_y, X_y = connection_AX(q[0], q[1], sp)
    A = np.array([float(A_x), float(A_y)])
    X = np.array([complex(X_x), complex(X_y)])
    eps = sp.eps

    dfA = float(df @ A)
    AA = float(A @ d2f @ A)
    XXbar = complex(np.conj(X) @ d2f @ X)          # d2f_{kl} X_k conj(X_l), real
    dfX = complex(df @ X)                          # d_k f X_k
    cross = abs(dfX) ** 2 / gap
    h_plus = (fval + Ep - eps * dfA + 0.5 * eps ** 2 * AA
              + 0.5 * eps ** 2 * XXbar.real + eps ** 2 * cross)
    h_minus = (fval + Em + eps * dfA + 0.5 * eps ** 2 * AA
               + 0.5 * eps ** 2 * XXbar.real - eps ** 2 * cross)
    return float(h_plus), float(h_minus)


def symbol_h_bo(q, p, sp, f_spec, band=-1):
    """Leading Born-Oppenheimer symbol eps^(2 delta) tau' tau'' (|p -+ eps A|^2
    + |eps X|^2) + E+- , valid where the kinetic cutoff is 1."""
    A_x, X_x, A_y, X_y = connection_AX(q[0], q[1], sp)
    A = np.array([float(A_x), float(A_y)])
    X = np.array([complex(X_x), complex(X_y)])
    Ep, Em = symbol_E(q, sp)
    pv = np.asarray(p, dtype=float)
    tt = sp.tau_x * sp.tau_y
    sign = -1.0 if band == +1 else +1.0
    shifted = pv + sign * sp.eps * A
    kin = sp.eps ** (2 * sp.delta) * tt * (float(shifted @ shifted)
                                           + sp.eps ** 2 * float(np.real(np.conj(X) @ X)))
    return kin + (Ep if band == +1 else Em)
