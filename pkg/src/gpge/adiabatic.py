"""Adiabatic frame machinery.

Field level: the zeroth-order frame change psi <-> (a_plus, a_minus) through
the pointwise unitary u0 and the oscillatory phases e^{+-iy/(2 sqrt(tau_x))},
which are exactly box-periodic thanks to tau snapping.

Matrix level: the intertwining unitary of two nearby projections, the Riesz
projection of an almost-projection through a contour integral, and a small 1D
Weyl quantization facility used to verify the product expansion order by
order.  Dense operators are plain complex ndarrays.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import ScalarField, SpinorField
from .model import unitary_u0_grid, frame_wavenumber

DenseOperator = np.ndarray


# ---------------------------------------------------------------------------
# field-level frame change

def decompose(psi, sp):
    """Split a spinor into frame amplitudes (a_plus, a_minus)."""
    sp = sp.effective()
    g = psi.grid
    beta = frame_wavenumber(g.Ly, sp)
    u0 = unitary_u0_grid(g, sp)
    # u0 is a pointwise Hermitian involution, so u0* = u0
    t1 = u0[0, 0] * psi.comp1 + u0[0, 1] * psi.comp2
    t2 = u0[1, 0] * psi.comp1 + u0[1, 1] * psi.comp2
    ph = np.exp(1j * beta * g.Y)
    return (ScalarField(g, np.conj(ph) * t1), ScalarField(g, ph * t2))


def recompose(a_plus, a_minus, sp):
    """Inverse of decompose; builds psi = u0 (e^{i beta y} a+, e^{-i beta y} a-).

    Either amplitude may be passed as None or 0 (pure one-band state).
    """
    sp = sp.effective()

    def absent(a):
        return a is None or (isinstance(a, (int, float)) and a == 0)

    if absent(a_plus) and absent(a_minus):
        raise ValueError("at least one amplitude is required")
    g = a_minus.grid if absent(a_plus) else a_plus.grid
    beta = frame_wavenumber(g.Ly, sp)
    ph = np.exp(1j * beta * g.Y)
    b1 = 0.0 if absent(a_plus) else ph * a_plus.values
    b2 = 0.0 if absent(a_minus) else np.conj(ph) * a_minus.values
    u0 = unitary_u0_grid(g, sp)
    return SpinorField(g,
                       u0[0, 0] * b1 + u0[0, 1] * b2,
                       u0[1, 0] * b1 + u0[1, 1] * b2)


def l4_invariance_check(psi, sp):
    """Quartic integral before and after the pointwise frame change."""
    g = psi.grid
    lhs = float(np.sum(psi.density() ** 2) * g.cell_area)
    ap, am = decompose(psi, sp)
    dens = np.abs(ap.values) ** 2 + np.abs(am.values) ** 2
    rhs = float(np.sum(dens ** 2) * g.cell_area)
    rel = abs(lhs - rhs) / max(lhs, rhs, 1e-300)
    return lhs, rhs, rel


# ---------------------------------------------------------------------------
# dense projection machinery

def _opnorm(A):
    return float(np.linalg.norm(A, 2))


def _check_projection(P, name):
    if _opnorm(P - P.conj().T) > 1e-10:
        raise ValueError("%s is not Hermitian" % name)
    if _opnorm(P @ P - P) > 1e-10:
        raise ValueError("%s is not a projection" % name)


def nagy_unitary(P1, P2):
    """Unitary W with W P1 W* = P2, for projections with ||P2 - P1|| < 1.

    W = (1 - (P2 - P1)^2)^{-1/2} [P2 P1 + (1 - P2)(1 - P1)]; the inverse
    square root is taken through a Hermitian eigendecomposition.
    """
    P1 = np.asarray(P1, dtype=complex)
    P2 = np.asarray(P2, dtype=complex)
    _check_projection(P1, "P1")
    _check_projection(P2, "P2")
    D = P2 - P1
    if _opnorm(D) >= 1.0:
        raise ValueError("projections too far apart: ||P2 - P1|| >= 1")
    S = np.eye(len(P1)) - D @ D
    w, V = np.linalg.eigh(S)
    S_inv_sqrt = (V * (w ** -0.5)) @ V.conj().T
    one = np.eye(len(P1))
    return S_inv_sqrt @ (P2 @ P1 + (one - P2) @ (one - P1))


def _contour_integral(f, center, radius, nodes=256):
    """(1/2 pi i) times the contour integral of a matrix-valued f over a circle."""
    thetas = 2.0 * np.pi * np.arange(nodes) / nodes
    acc = None
    for th in thetas:
        z = center + radius * np.exp(1j * th)
        term = f(z) * (radius * np.exp(1j * th))
        acc = term if acc is None else acc + term
    return acc / nodes


def riesz_projection(T, nodes=256):
    """Spectral projection of an almost-projection T via a contour integral.

    P = (1/2 pi i) contour integral of (z - T)^{-1} over |z - 1| = 1/2.
    Requires ||T^2 - T|| < 1/4, which keeps the spectrum near {0, 1}.
    Diagnostics include the defect of the exact correction identity
    T - P = (T^2 - T)(A0 - A1) with the weighted resolvent integrals

        A1 = (1/2 pi i) int_{|z-1|=1/2} (T - z)^{-1} (1 - z)^{-1} dz,
        A0 = (1/2 pi i) int_{|z|=1/2}   (T - z)^{-1} z^{-1} dz.

    (The scalar case T = lambda fixes the order of the difference: for
    lambda near 1 only A0 contributes, with residue 1/lambda, and
    (lambda^2 - lambda)/lambda = lambda - 1 = T - P.)
    """
    T = np.asarray(T, dtype=complex)
    n = len(T)
    delta = _opnorm(T @ T - T)
    if delta >= 0.25:
        raise ValueError("||T^2 - T|| must be below 1/4")
    eigs = np.linalg.eigvals(T)
    if np.min(np.abs(np.abs(eigs - 1.0) - 0.5)) < 1e-6:
        raise ValueError("eigenvalue too close to the contour |z - 1| = 1/2")
    if np.min(np.abs(np.abs(eigs) - 0.5)) < 1e-6:
        raise ValueError("eigenvalue too close to the contour |z| = 1/2")
    one = np.eye(n)

    P = _contour_integral(lambda z: np.linalg.inv(z * one - T), 1.0, 0.5, nodes)
    A1 = _contour_integral(
        lambda z: np.linalg.inv(T - z * one) / (1.0 - z), 1.0, 0.5, nodes)
    A0 = _contour_integral(
        lambda z: np.linalg.inv(T - z * one) / z, 0.0, 0.5, nodes)

    diagnostics = {
        "delta": delta,
        "projection_defect": _opnorm(P @ P - P),
        "identity_defect": _opnorm((T - P) - (T @ T - T) @ (A0 - A1)),
        "rank": int(round(np.trace(P).real)),
        "n_inside": int(np.sum(np.abs(eigs - 1.0) < 0.5)),
    }
    return P, diagnostics


# ---------------------------------------------------------------------------
# 1D Weyl quantization and the product expansion check

def phase_grid_1d(L, N):
    """Position nodes and the conjugate integer wavenumbers 2 pi j / L."""
    if N % 2 or N < 8 or N > 128:
        raise ValueError("N must be even, between 8 and 128")
    q = -L / 2 + (L / N) * np.arange(N)
    k = 2.0 * np.pi * np.fft.fftfreq(N, d=L / N)
    return q, k


def weyl_quantize_1d(symbol, L, N, eps, check=True):
    """Dense matrix of the Weyl quantization of symbol(q, p) at scale eps.

    Kernel quadrature on the conjugate momenta p = eps k, k in (2 pi/L) Z:
    K[i, j] = (1/L) sum_k symbol((q_i + q_j)/2, eps k) e^{i k (q_i - q_j)},
    and the operator matrix carries the integration weight dq.  With check
    on, symbols must decay at the position edge of the sampled window, and
    momentum-dependent symbols must also decay at the momentum edge
    (momentum-free symbols quantize exactly as multipliers and are exempt);
    polynomial symbols quantize exactly through the same quadrature and may
    be passed with check=False.
    """
    q, k = phase_grid_1d(L, N)
    dq = L / N
    Qmid = 0.5 * (q[:, None] + q[None, :])
    Qdif = q[:, None] - q[None, :]
    K = np.zeros((N, N), dtype=complex)
    a_ref = np.asarray(symbol(Qmid, 0.0), dtype=complex)
    amax = 0.0
    edge = 0.0
    p_var = 0.0
    for kk in k:
        a = np.asarray(symbol(Qmid, eps * kk), dtype=complex)
        K += a * np.exp(1j * kk * Qdif)
        amax = max(amax, float(np.max(np.abs(a))))
        p_var = max(p_var, float(np.max(np.abs(a - a_ref))))
        if abs(kk) == np.max(np.abs(k)):
            edge = max(edge, float(np.max(np.abs(a))))
    if check and amax > 0:
        pos_edge = float(np.max(np.abs(
            np.asarray(symbol(np.array([q[0], -q[0]]), 0.0), dtype=complex))))
        # a momentum-free symbol quantizes exactly as a multiplier, so the
        # momentum-edge decay requirement only applies when p_var > 0
        if p_var > 1e-12 * amax and edge > 1e-6 * amax:
            raise ValueError("symbol not resolved on the phase grid "
                             "(no decay at the sampled momentum edge)")
        if pos_edge > 1e-6 * amax:
            raise ValueError("symbol not resolved on the phase grid "
                             "(no decay at the sampled position edge)")
    return K * (dq / L)


def _fd1(f, x, h):
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def _fd2(f, x, h):
    return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x)
            + 16 * f(x - h) - f(x - 2 * h)) / (12 * h ** 2)


def _moyal_truncation(a1, a2, order, eps, h=1e-2):
    """Symbol of the product expansion truncated at the given order.

    Order 0: a1 a2.  Order 1 adds (eps/2i)(d_p a1 d_q a2 - d_q a1 d_p a2).
    Order 2 adds -(eps^2/8)(d_pp a1 d_qq a2 + d_qq a1 d_pp a2
    - 2 d_pq a1 d_qp a2).  Derivatives by 4th-order central differences.
    """
    def trunc(qq, pp):
        val = a1(qq, pp) * a2(qq, pp)
        if order >= 1:
            d_p1 = _fd1(lambda t: a1(qq, t), pp, h)
            d_q1 = _fd1(lambda t: a1(t, pp), qq, h)
            d_p2 = _fd1(lambda t: a2(qq, t), pp, h)
            d_q2 = _fd1(lambda t: a2(t, pp), qq, h)
            val = val + (eps / 2j) * (d_p1 * d_q2 - d_q1 * d_p2)
        if order >= 2:
            d_pp1 = _fd2(lambda t: a1(qq, t), pp, h)
            d_qq1 = _fd2(lambda t: a1(t, pp), qq, h)
            d_pp2 = _fd2(lambda t: a2(qq, t), pp, h)
            d_qq2 = _fd2(lambda t: a2(t, pp), qq, h)
            d_pq1 = _fd1(lambda s: _fd1(lambda t: a1(t, s), qq, h), pp, h)
            d_pq2 = _fd1(lambda s: _fd1(lambda t: a2(t, s), qq, h), pp, h)
            val = val - (eps ** 2 / 8.0) * (d_pp1 * d_qq2 + d_qq1 * d_pp2
                                            - 2.0 * d_pq1 * d_pq2)
        return val
    return trunc


def _test_vectors(q, L):
    """Smooth decaying band-limited probes for operator-defect measurement."""
    vecs = [np.exp(-q ** 2), np.exp(-(q - 0.5) ** 2)]
    for m in (1, 2):
        vecs.append(np.exp(-q ** 2) * np.exp(2j * np.pi * m * q / L))
    return vecs


@dataclass
class MoyalCheckReport:
    eps_values: list
    defects: dict        # order -> list of defect norms, one per eps
    slopes: dict         # order -> fitted log-log slope

    def as_dict(self):
        return {"eps_values": list(self.eps_values),
                "defects": {str(k): list(v) for k, v in self.defects.items()},
                "slopes": {str(k): v for k, v in self.slopes.items()}}


def moyal_check(a1, a2, eps_values, L=8.0, N=128, orders=(0, 1, 2), check=True):
    """Compare op(a1) op(a2) with quantized truncations of the product symbol.

    Defects are measured by action on smooth decaying test vectors (the raw
    matrix norm is polluted by wrap-around kernel tails that act trivially on
    resolved states).  The order-j defect should scale like eps^(j+1).
    """
    q, _ = phase_grid_1d(L, N)
    dq = L / N
    vecs = _test_vectors(q, L)
    defects = {j: [] for j in orders}
    for eps in eps_values:
        O1 = weyl_quantize_1d(a1, L, N, eps, check=check)
        O2 = weyl_quantize_1d(a2, L, N, eps, check=check)
        prod = O1 @ O2
        for j in orders:
            trunc = _moyal_truncation(a1, a2, j, eps)
            Ot = weyl_quantize_1d(trunc, L, N, eps, check=check)
            Dmat = prod - Ot
            worst = 0.0
            for v in vecs:
                nv = np.sqrt(np.sum(np.abs(v) ** 2) * dq)
                dv = np.sqrt(np.sum(np.abs(Dmat @ v) ** 2) * dq)
                worst = max(worst, float(dv / nv))
            defects[j].append(worst)
    slopes = {}
    for j in orders:
        d = np.asarray(defects[j])
        if np.all(d > 0) and len(eps_values) >= 2:
            slopes[j] = float(np.polyfit(np.log(np.asarray(eps_values, dtype=float)),
                                         np.log(d), 1)[0])
        else:
            slopes[j] = float("nan")
    return MoyalCheckReport(eps_values=list(eps_values), defects=defects,
                            slopes=slopes)
