"""Constrained minimization of the three energies on the L2 unit sphere.

Projected, Sobolev-preconditioned gradient descent with backtracking line
search and deterministic multistart.  One iteration is

    u <- normalize(u - step * P (Hu + G|u|^2 u - lambda u)),

with P = (c - Laplacian)^{-1} by default.  Backtracking halves the step
until the energy stops increasing; after an accepted step the step regrows
by grow_factor but never beyond step0, which keeps the iteration inside the
stable-step region once the transient has passed (unbounded regrowth makes
the residual stall in a limit cycle at the stability boundary).

The two-component problem is badly two-scale (upper band curvature is O(1),
the lower band lives at eps^(2+2delta) tau_x); for it an optional band-split
preconditioner applies separate spectral shifts in the two frame channels,
which keeps the preconditioned curvature O(1) in both.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .grid import ScalarField, SpinorField, boundary_mass_ok
from .model import (bump_v_grid, potential_V_grid, unitary_u0_grid, omega,
                    frame_wavenumber)
from .energy import (energy_H, energy_tau, energy_eps, gauge_coeff_tau,
                     EnergyBreakdown)

_MIN_STEP_FACTOR = 1e-20
_ACCEPT_SLACK = 1e-13
_DEDUP_DISTANCE = 1e-3


class StartDiverged(RuntimeError):
    """A descent start produced a non-finite energy."""


@dataclass(frozen=True)
class Problem:
    """A constrained minimization target: kind in {'H', 'tau', 'eps'}.

    gauge_on=False is a test hook that drops the gauge term of the 'H'
    problem, leaving the plain oscillator -Laplacian + r^2/ell_V^2.
    """
    kind: str
    sp: object
    gauge_on: bool = True

    def __post_init__(self):
        if self.kind not in ("H", "tau", "eps"):
            raise ValueError("kind must be 'H', 'tau' or 'eps'")


@dataclass(frozen=True)
class MinimizeOptions:
    max_iters: int = 5000
    tol_residual: float = 1e-8
    step0: float = 1.0
    precond_c: float = None
    backtrack_factor: float = 0.5
    n_starts: int = 1
    seed: int = 0
    init_kind: str = "gaussian"
    vortex_charge: int = 1
    precond_kind: str = "helmholtz"
    init_field: object = None
    grow_factor: float = 1.25

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tol_residual <= 0 or self.step0 <= 0:
            raise ValueError("tol_residual and step0 must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.init_kind not in ("gaussian", "gaussian_vortex", "random",
                                  "provided"):
            raise ValueError("unknown init_kind %r" % (self.init_kind,))
        if self.precond_kind not in ("helmholtz", "band"):
            raise ValueError("precond_kind must be 'helmholtz' or 'band'")


@dataclass
class GroundState:
    field: object
    energy: EnergyBreakdown
    lam: float
    residual_norm: float
    iterations: int
    converged: bool
    boundary_warning: bool
    start_index: int


# ---------------------------------------------------------------------------
# problem engines on stacked arrays (ncomp, Nx, Ny)

class _Engine:
    """Precomputed appliers for one (problem, grid) pair."""

    def __init__(self, problem, grid):
        sp = problem.sp.effective()
        self.problem = problem
        self.grid = grid
        self.sp = sp
        self.dA = grid.cell_area
        if problem.kind == "H":
            self.ncomp = 1
            A = 0.5 * grid.X if problem.gauge_on else np.zeros_like(grid.X)
            self.A = A
            self.pot = A ** 2 + (grid.X ** 2 + grid.Y ** 2) / sp.ell_V ** 2
            self.G = sp.G
            self.kin_c = 1.0
        elif problem.kind == "tau":
            self.ncomp = 1
            A = gauge_coeff_tau(grid.X, sp.tau_x)
            self.A = A
            self.pot = A ** 2 + bump_v_grid(grid, sp.tau_x) / (sp.ell_V ** 2 * sp.tau_x)
            self.G = sp.G
            self.kin_c = 1.0
        elif problem.kind == "eps":
            self.ncomp = 2
            self.kin_c = sp.eps_pow * sp.tau_x
            V = potential_V_grid(grid, sp)
            om = omega(grid.X, sp)
            ct = np.sqrt(sp.tau_x) * grid.X / om
            st = 1.0 / om
            e = np.exp(1j * grid.Y / np.sqrt(sp.tau_x))
            self.m11 = om * ct
            self.m12 = om * st * e
            self.V = V
            self.om = om
            self.G = sp.G_eps_tau
            self.u0 = unitary_u0_grid(grid, sp)
            self.beta = frame_wavenumber(grid.Ly, sp)

    def apply_H(self, u):
        g = self.grid
        out = np.empty_like(u)
        if self.problem.kind in ("H", "tau"):
            f = np.fft.fft2(u[0])
            lap = np.fft.ifft2(-g.K2 * f)
            dy = np.fft.ifft2(1j * g.KY * f)
            out[0] = -lap + 2j * self.A * dy + self.pot * u[0]
            return out
        f1 = np.fft.fft2(u[0])
        f2 = np.fft.fft2(u[1])
        lap1 = np.fft.ifft2(-g.K2 * f1)
        lap2 = np.fft.ifft2(-g.K2 * f2)
        out[0] = -self.kin_c * lap1 + (self.V + self.m11) * u[0] + self.m12 * u[1]
        out[1] = (-self.kin_c * lap2 + np.conj(self.m12) * u[0]
                  + (self.V - self.m11) * u[1])
        return out

    def density(self, u):
        return np.sum(np.abs(u) ** 2, axis=0)

    def norm(self, u):
        return math.sqrt(float(np.sum(np.abs(u) ** 2)) * self.dA)

    def inner_real(self, a, b):
        return float(np.real(np.sum(np.conj(a) * b))) * self.dA

    def total_energy(self, u, Hu):
        dens = self.density(u)
        quart = float(np.sum(dens ** 2)) * self.dA
        return self.inner_real(u, Hu) + 0.5 * self.G * quart

    def default_precond_c(self):
        if self.problem.kind == "eps":
            return 1.0 + float(np.max(self.V + self.om))
        return 1.0 + float(np.max(self.pot))

    def make_precond(self, opts):
        g = self.grid
        if opts.precond_kind == "helmholtz" or self.problem.kind != "eps":
            c = opts.precond_c if opts.precond_c is not None \
                else self.default_precond_c()
            mult = 1.0 / (c + g.K2)

            def precond(r):
                out = np.empty_like(r)
                for i in range(r.shape[0]):
                    out[i] = np.fft.ifft2(mult * np.fft.fft2(r[i]))
                return out
            return precond

        # band-split preconditioner for the two-component problem: move to
        # the frame channels, invert the per-band curvature scale, move back
        sp = self.sp
        kin = self.kin_c
        A_tau = gauge_coeff_tau(g.X, sp.tau_x)
        c_minus = opts.precond_c if opts.precond_c is not None else \
            1.0 + float(np.max(A_tau ** 2 + bump_v_grid(g, sp.tau_x)
                               / (sp.ell_V ** 2 * sp.tau_x)))
        mult_plus = 1.0 / (2.0 + kin * g.K2)
        mult_minus = 1.0 / (kin * (c_minus + g.K2))
        u0 = self.u0
        ph = np.exp(1j * self.beta * g.Y)

        def precond(r):
            t1 = u0[0, 0] * r[0] + u0[0, 1] * r[1]
            t2 = u0[1, 0] * r[0] + u0[1, 1] * r[1]
            rp = np.conj(ph) * t1
            rm = ph * t2
            rp = np.fft.ifft2(mult_plus * np.fft.fft2(rp))
            rm = np.fft.ifft2(mult_minus * np.fft.fft2(rm))
            b1 = ph * rp
            b2 = np.conj(ph) * rm
            out = np.empty_like(r)
            out[0] = u0[0, 0] * b1 + u0[0, 1] * b2
            out[1] = u0[1, 0] * b1 + u0[1, 1] * b2
            return out
        return precond

    def wrap(self, u):
        if self.ncomp == 1:
            return ScalarField(self.grid, u[0].copy())
        return SpinorField(self.grid, u[0].copy(), u[1].copy())

    def breakdown(self, u):
        f = self.wrap(u)
        if self.problem.kind == "H":
            if not self.problem.gauge_on:
                # report through the same slots with the gauge terms absent
                Hu = self.apply_H(u)
                dens = self.density(u)
                quart = float(np.sum(dens ** 2)) * self.dA
                kin = self.inner_real(u, Hu) - float(np.sum(self.pot * dens)) * self.dA
                return EnergyBreakdown(
                    kinetic=kin,
                    potential=float(np.sum(self.pot * dens)) * self.dA,
                    gauge_cross=0.0,
                    interaction=0.5 * self.G * quart,
                    total=self.inner_real(u, Hu) + 0.5 * self.G * quart)
            return energy_H(f, self.sp.ell_V, self.sp.G)
        if self.problem.kind == "tau":
            return energy_tau(f, self.sp)
        return energy_eps(f, self.sp)


# ---------------------------------------------------------------------------
# initial states

def _vortex_positions(charge, dx):
    if charge <= 1:
        return [(0.123 * dx, 0.0789 * dx)]
    r0 = 0.6 * math.sqrt(charge)
    return [(r0 * math.cos(2 * math.pi * j / charge) + 0.123 * dx,
             r0 * math.sin(2 * math.pi * j / charge) + 0.0789 * dx)
            for j in range(charge)]


def _scalar_start(engine, kind, charge, rng):
    g = engine.grid
    env = np.exp(-(g.X ** 2 + g.Y ** 2) / 2.0).astype(complex)
    if kind == "gaussian":
        return env
    if kind == "gaussian_vortex":
        out = env.copy()
        for (x0, y0) in _vortex_positions(charge, g.dx):
            w = (g.X - x0) + 1j * (g.Y - y0)
            out *= w / (np.abs(w) + 1e-300)
        return out
    if kind == "random":
        noise = rng.standard_normal(env.shape) + 1j * rng.standard_normal(env.shape)
        sm = np.fft.ifft2(np.fft.fft2(noise * env) / (1.0 + g.K2))
        return sm
    raise ValueError("unknown start kind %r" % (kind,))


def _initial_state(engine, opts, kind, rng):
    if kind == "provided":
        f = opts.init_field
        if engine.ncomp == 1:
            if not isinstance(f, ScalarField):
                raise ValueError("provided init must be a ScalarField")
            u = np.array([f.values])
        else:
            if not isinstance(f, SpinorField):
                raise ValueError("provided init must be a SpinorField")
            u = np.array([f.comp1, f.comp2])
    else:
        base = _scalar_start(engine, kind, opts.vortex_charge, rng)
        if engine.ncomp == 1:
            u = np.array([base])
        else:
            # start in the lower frame channel, where the low-energy states live
            from .adiabatic import recompose
            psi = recompose(0, ScalarField(engine.grid, base), engine.sp)
            u = np.array([psi.comp1, psi.comp2])
    nrm = engine.norm(u)
    if nrm == 0 or not np.isfinite(nrm):
        raise StartDiverged("initial state has invalid norm")
    return u / nrm


# ---------------------------------------------------------------------------
# descent

def _descend(engine, opts, u, start_index):
    precond = engine.make_precond(opts)
    Hu = engine.apply_H(u)
    E = engine.total_energy(u, Hu)
    if not np.isfinite(E):
        raise StartDiverged("non-finite energy at the initial state")
    step = opts.step0
    min_step = opts.step0 * _MIN_STEP_FACTOR
    iterations = 0
    converged = False
    lam = 0.0
    res_norm = math.inf
    while True:
        dens = engine.density(u)
        grad = Hu + engine.G * dens * u
        lam = engine.inner_real(u, grad)
        res = grad - lam * u
        res_norm = engine.norm(res)
        if res_norm <= opts.tol_residual:
            converged = True
            break
        if iterations >= opts.max_iters:
            break
        d = precond(res)
        accepted = False
        while step >= min_step:
            trial = u - step * d
            trial = trial / engine.norm(trial)
            Ht = engine.apply_H(trial)
            Et = engine.total_energy(trial, Ht)
            if not np.isfinite(Et):
                raise StartDiverged("non-finite energy during line search")
            if Et <= E + _ACCEPT_SLACK * abs(E):
                accepted = True
                break
            step *= opts.backtrack_factor
        if not accepted:
            break
        u, Hu, E = trial, Ht, Et
        iterations += 1
        step = min(step * opts.grow_factor, opts.step0)
    f = engine.wrap(u)
    return GroundState(field=f,
                       energy=engine.breakdown(u),
                       lam=lam,
                       residual_norm=res_norm,
                       iterations=iterations,
                       converged=converged,
                       boundary_warning=not boundary_mass_ok(f),
                       start_index=start_index)


def _start_plan(opts):
    """Deterministic start sequence: the configured start, then vortex
    charges 1..3, then random starts."""
    plan = [(opts.init_kind, opts.vortex_charge)]
    n_vortex = min(3, opts.n_starts - 1)
    for i in range(1, opts.n_starts):
        if i <= n_vortex:
            plan.append(("gaussian_vortex", i))
        else:
            plan.append(("random", 0))
    return plan


def _run_start(args):
    problem, grid, opts, kind, charge, index = args
    engine = _Engine(problem, grid)
    rng = np.random.default_rng(opts.seed + index)
    local = replace(opts, vortex_charge=max(charge, 1))
    u = _initial_state(engine, local, kind, rng)
    return _descend(engine, local, u, index)


def _run_start_safe(args):
    try:
        return True, _run_start(args)
    except StartDiverged as exc:
        return False, str(exc)


def _phase_distance(f1, f2):
    """L2 distance modulo a global phase between two unit-norm states."""
    if isinstance(f1, SpinorField):
        ip = (np.sum(np.conj(f1.comp1) * f2.comp1)
              + np.sum(np.conj(f1.comp2) * f2.comp2)) * f1.grid.cell_area
    else:
        ip = np.sum(np.conj(f1.values) * f2.values) * f1.grid.cell_area
    return math.sqrt(max(0.0, 2.0 - 2.0 * abs(complex(ip))))


def multistart(problem, grid, opts, workers=1):
    """All starts, deduplicated modulo global phase and sorted by energy."""
    if opts.n_starts < 1:
        raise ValueError("n_starts must be at least 1")
    tasks = [(problem, grid, opts, kind, charge, i)
             for i, (kind, charge) in enumerate(_start_plan(opts))]
    results, failures = [], []
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_start_safe, tasks))
    else:
        outcomes = [_run_start_safe(t) for t in tasks]
    for ok, payload in outcomes:
        (results if ok else failures).append(payload)
    if not results:
        raise StartDiverged("all starts failed: %s" % "; ".join(failures))
    results.sort(key=lambda s: (s.energy.total, s.start_index))
    kept = []
    for s in results:
        if all(_phase_distance(s.field, k.field) > _DEDUP_DISTANCE for k in kept):
            kept.append(s)
    return kept


def minimize(problem, grid, opts, workers=1):
    """Best state over the configured starts."""
    return multistart(problem, grid, opts, workers=workers)[0]
