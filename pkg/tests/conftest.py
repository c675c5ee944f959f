"""Shared fixtures: small grids and reference fields reused across modules."""

import numpy as np
import pytest

from gpge import make_grid, make_scaled, ScalarField, SpinorField


@pytest.fixture(scope="session")
def grid16():
    """Production-scale box used by the minimization tests."""
    return make_grid(16.0, 16.0, 128, 128)


@pytest.fixture(scope="session")
def grid_small():
    """Cheap box for identity and property tests."""
    return make_grid(20.0, 20.0, 64, 64)


@pytest.fixture(scope="session")
def gauss(grid_small):
    """Normalized Gaussian e^{-r^2/2}/sqrt(pi) (unit L2 norm on R^2)."""
    g = grid_small
    return ScalarField(g, np.exp(-(g.X ** 2 + g.Y ** 2) / 2) / np.sqrt(np.pi))


@pytest.fixture(scope="session")
def sp_exact(grid_small):
    """Scaled record whose tau_x fits the small box exactly (snap index 2)."""
    tau = (grid_small.Ly / (8.0 * np.pi)) ** 2
    sp = make_scaled(eps=0.5, delta=1.0, tau_x=tau, Ly=grid_small.Ly,
                     G=0.0, ell_V=1.0)
    assert sp.tau_x == sp.tau_x_effective
    return sp


def random_field(grid, seed, smooth=True):
    """Normalized random field, band-limited when smooth."""
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((grid.Nx, grid.Ny)) \
        + 1j * rng.standard_normal((grid.Nx, grid.Ny))
    if smooth:
        vals = np.fft.ifft2(np.fft.fft2(vals) / (1.0 + grid.K2) ** 2)
        vals = vals * np.exp(-(grid.X ** 2 + grid.Y ** 2) / 8)
    nrm = np.sqrt(np.sum(np.abs(vals) ** 2) * grid.cell_area)
    return ScalarField(grid, vals / nrm)


def random_spinor(grid, seed):
    a = random_field(grid, seed).values
    b = random_field(grid, seed + 1).values
    nrm = np.sqrt(np.sum(np.abs(a) ** 2 + np.abs(b) ** 2) * grid.cell_area)
    return SpinorField(grid, a / nrm, b / nrm)
