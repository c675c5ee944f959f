"""Periodic spectral grid on a box approximating R^2, and complex fields on it.

The box [-Lx/2, Lx/2) x [-Ly/2, Ly/2) carries Nx x Ny nodes, row-major with i
indexing x and j indexing y.  All derivatives are spectral (FFT with ik
multipliers), all integrals are plain Riemann sums, which are exact for
periodic grids.  Confined states are expected to decay below roundoff at the
boundary; a boundary-mass monitor flags fields for which that fails.
"""

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

BOUNDARY_DECAY_REL = 1e-6
GPGF_MAGIC = b"GPGF"
GPGF_VERSION = 1


class BoundaryMassWarning(UserWarning):
    """Field amplitude does not decay at the box boundary; aliasing likely."""


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Periodic box with precomputed node and wavenumber tables."""

    Lx: float
    Ly: float
    Nx: int
    Ny: int
    # derived tables, filled in __post_init__
    dx: float = field(init=False, repr=False)
    dy: float = field(init=False, repr=False)
    x: np.ndarray = field(init=False, repr=False)
    y: np.ndarray = field(init=False, repr=False)
    X: np.ndarray = field(init=False, repr=False)
    Y: np.ndarray = field(init=False, repr=False)
    KX: np.ndarray = field(init=False, repr=False)
    KY: np.ndarray = field(init=False, repr=False)
    K2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dx = self.Lx / self.Nx
        dy = self.Ly / self.Ny
        x = -self.Lx / 2 + dx * np.arange(self.Nx)
        y = -self.Ly / 2 + dy * np.arange(self.Ny)
        kx = 2 * np.pi * np.fft.fftfreq(self.Nx, d=dx)
        ky = 2 * np.pi * np.fft.fftfreq(self.Ny, d=dy)
        X, Y = np.meshgrid(x, y, indexing="ij")
        KX, KY = np.meshgrid(kx, ky, indexing="ij")
        for name, val in [("dx", dx), ("dy", dy), ("x", x), ("y", y),
                          ("X", X), ("Y", Y), ("KX", KX), ("KY", KY),
                          ("K2", KX**2 + KY**2)]:
            object.__setattr__(self, name, val)

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (self.Lx, self.Ly, self.Nx, self.Ny) == \
               (other.Lx, other.Ly, other.Nx, other.Ny)

    def __hash__(self):
        return hash((self.Lx, self.Ly, self.Nx, self.Ny))

    @property
    def cell_area(self):
        return self.dx * self.dy

    def zeros(self):
        return np.zeros((self.Nx, self.Ny), dtype=complex)


def make_grid(Lx, Ly, Nx, Ny):
    if Lx <= 0 or Ly <= 0:
        raise ValueError("box lengths must be positive")
    if Nx % 2 or Ny % 2 or Nx < 8 or Ny < 8:
        raise ValueError("grid sizes must be even and at least 8")
    return GridSpec(float(Lx), float(Ly), int(Nx), int(Ny))


@dataclass(eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.Nx, self.grid.Ny):
            raise ValueError("value array shape does not match the grid")

    def copy(self):
        return ScalarField(self.grid, self.values.copy())


@dataclass(eq=False)
class SpinorField:
    grid: GridSpec
    comp1: np.ndarray
    comp2: np.ndarray

    def __post_init__(self):
        self.comp1 = np.asarray(self.comp1, dtype=complex)
        self.comp2 = np.asarray(self.comp2, dtype=complex)
        shape = (self.grid.Nx, self.grid.Ny)
        if self.comp1.shape != shape or self.comp2.shape != shape:
            raise ValueError("component shapes do not match the grid")

    def copy(self):
        return SpinorField(self.grid, self.comp1.copy(), self.comp2.copy())

    def density(self):
        return np.abs(self.comp1) ** 2 + np.abs(self.comp2) ** 2


# ---------------------------------------------------------------------------
# array-level spectral operations (used heavily by the energy and minimizer
# paths; the field-level operations below wrap them)

def deriv_values(grid, values, axis, order=1):
    if axis in ("x", 0):
        k, ax = grid.KX, 0
    elif axis in ("y", 1):
        k, ax = grid.KY, 1
    else:
        raise ValueError("axis must be 'x' or 'y'")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    mult = (1j * k) ** order
    return np.fft.ifft(mult * np.fft.fft(values, axis=ax), axis=ax)


def laplacian_values(grid, values):
    return np.fft.ifft2(-grid.K2 * np.fft.fft2(values))


def inner_values(grid, a, b):
    return np.sum(np.conj(a) * b) * grid.cell_area


def norm_values(grid, a):
    return float(np.sqrt(np.sum(np.abs(a) ** 2) * grid.cell_area))


# ---------------------------------------------------------------------------
# field-level operations

def deriv(f, axis, order=1):
    return ScalarField(f.grid, deriv_values(f.grid, f.values, axis, order))


def l2_inner(f, g):
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    if isinstance(f, SpinorField):
        return (inner_values(f.grid, f.comp1, g.comp1)
                + inner_values(f.grid, f.comp2, g.comp2))
    return inner_values(f.grid, f.values, g.values)


def l2_norm(f):
    if isinstance(f, SpinorField):
        return float(np.sqrt(np.sum(f.density()) * f.grid.cell_area))
    return norm_values(f.grid, f.values)


def boundary_mass_ok(f):
    """True when the outermost node ring is below 1e-6 of the peak amplitude.

    Silent aliasing through the periodic boundary is the dominant failure
    mode for box-truncated confined states, so callers propagate this flag.
    """
    vals = f.density() ** 0.5 if isinstance(f, SpinorField) else np.abs(f.values)
    peak = vals.max()
    if peak == 0.0:
        return True
    ring = max(vals[0, :].max(), vals[-1, :].max(),
               vals[:, 0].max(), vals[:, -1].max())
    return bool(ring < BOUNDARY_DECAY_REL * peak)


def weighted_sobolev_norm(f, s):
    """Norm with all monomial weights and derivatives of total order <= s.

    The squared norm sums ||x^a1 y^a2 Dx^b1 Dy^b2 f||^2 over
    a1+a2+b1+b2 <= s with D = -i d/dq.  Position factors multiply after the
    derivatives are taken.
    """
    if s not in (1, 2):
        raise ValueError("s must be 1 or 2")
    if not boundary_mass_ok(f):
        warnings.warn("field does not decay at the box boundary; "
                      "weighted norm is untrusted", BoundaryMassWarning)
    g = f.grid
    total = 0.0
    for a1 in range(s + 1):
        for a2 in range(s + 1 - a1):
            for b1 in range(s + 1 - a1 - a2):
                for b2 in range(s + 1 - a1 - a2 - b1):
                    term = f.values
                    if b1:
                        term = deriv_values(g, term, "x", b1)
                    if b2:
                        term = deriv_values(g, term, "y", b2)
                    w = g.X ** a1 * g.Y ** a2 if (a1 or a2) else None
                    if w is not None:
                        term = w * term
                    total += np.sum(np.abs(term) ** 2) * g.cell_area
    return float(np.sqrt(total))


def apply_inverse_helmholtz(f, c):
    """(c - Laplacian)^{-1} f via the Fourier multiplier 1/(c + |k|^2)."""
    if c <= 0:
        raise ValueError("Helmholtz shift must be positive")
    g = f.grid
    return ScalarField(g, np.fft.ifft2(np.fft.fft2(f.values) / (c + g.K2)))


def inverse_helmholtz_values(grid, values, c):
    if c <= 0:
        raise ValueError("Helmholtz shift must be positive")
    return np.fft.ifft2(np.fft.fft2(values) / (c + grid.K2))


# ---------------------------------------------------------------------------
# binary field dump

def write_field(path, f):
    """Dump a field: magic, version, Nx, Ny, Lx, Ly, ncomp, complex128 data."""
    g = f.grid
    comps = [f.comp1, f.comp2] if isinstance(f, SpinorField) else [f.values]
    with open(path, "wb") as fh:
        fh.write(GPGF_MAGIC)
        fh.write(struct.pack("<IIIddI", GPGF_VERSION, g.Nx, g.Ny,
                             g.Lx, g.Ly, len(comps)))
        for c in comps:
            fh.write(np.ascontiguousarray(c, dtype="<c16").tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        if fh.read(4) != GPGF_MAGIC:
            raise ValueError("not a GPGF file")
        version, nx, ny, lx, ly, ncomp = struct.unpack("<IIIddI", fh.read(32))
        if version != GPGF_VERSION:
            raise ValueError("unsupported GPGF version %d" % version)
        if ncomp not in (1, 2):
            raise ValueError("ncomp must be 1 or 2")
        grid = make_grid(lx, ly, nx, ny)
        data = np.frombuffer(fh.read(), dtype="<c16", count=ncomp * nx * ny)
        comps = data.reshape(ncomp, nx, ny).astype(complex)
    if ncomp == 1:
        return ScalarField(grid, comps[0])
    return SpinorField(grid, comps[0], comps[1])
