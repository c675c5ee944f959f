"""Vortex detection by plaquette phase winding, and vortex-set matching.

A vortex is an isolated zero of a complex field with integer phase
circulation.  Summing principal-value phase differences around each grid
plaquette gives an integer multiple of 2*pi; a nonzero multiple is the
charge of a vortex inside that plaquette.  Positions are refined inside the
plaquette by locating the zero of the bilinear interpolant.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .grid import ScalarField

_AMBIG_TOL = 1e-6
_NEWTON_STEPS = 12


@dataclass(frozen=True)
class Vortex:
    x: float
    y: float
    charge: int


@dataclass(frozen=True)
class VortexSet:
    vortices: tuple
    threshold: float
    grid: object
    ambiguous: tuple = ()

    def __post_init__(self):
        for v in self.vortices:
            if v.charge == 0:
                raise ValueError("vortex charges must be nonzero")
            if abs(v.x) > self.grid.Lx / 2 or abs(v.y) > self.grid.Ly / 2:
                raise ValueError("vortex position outside the box")

    def __len__(self):
        return len(self.vortices)

    @property
    def total_charge(self):
        return sum(v.charge for v in self.vortices)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "charge"])
            for v in self.vortices:
                writer.writerow(["%.17g" % v.x, "%.17g" % v.y, v.charge])


def _wrap(d):
    """Principal value of a phase difference, in (-pi, pi]."""
    return d - 2.0 * np.pi * np.floor((d + np.pi) / (2.0 * np.pi))


def _refine_position(a, b, c, d):
    """Zero of the bilinear patch a + b*xi + c*eta + d*xi*eta on [0,1]^2.

    Newton iteration from the center; falls back to the center if it
    wanders outside the patch or fails to settle.
    """
    xi, eta = 0.5, 0.5
    for _ in range(_NEWTON_STEPS):
        f = a + b * xi + c * eta + d * xi * eta
        fx = b + d * eta
        fy = c + d * xi
        det = fx.real * fy.imag - fx.imag * fy.real
        if det == 0.0 or not np.isfinite(det):
            return 0.5, 0.5
        dxi = (f.real * fy.imag - f.imag * fy.real) / det
        deta = (fx.real * f.imag - fx.imag * f.real) / det
        xi, eta = xi - dxi, eta - deta
    if not (0.0 <= xi <= 1.0 and 0.0 <= eta <= 1.0):
        return 0.5, 0.5
    return xi, eta


def find_vortices(u, amp_threshold_rel):
    """Detect phase-winding vortices of a complex field.

    Plaquettes whose four corners all exceed amp_threshold_rel times the
    peak amplitude are vortex-free (the winding of a nonvanishing bilinear
    patch is zero) and are skipped.  Each remaining plaquette contributes
    at most one vortex, with charge = round(winding / 2*pi).
    """
    if not isinstance(u, ScalarField):
        raise TypeError("find_vortices expects a ScalarField")
    if not 0 < amp_threshold_rel < 0.5:
        raise ValueError("amp_threshold_rel must lie in (0, 0.5)")
    g = u.grid
    vals = u.values
    amp = np.abs(vals)
    peak = float(amp.max())
    if peak == 0.0:
        raise ValueError("field is identically zero")
    ph = np.angle(vals)
    # counterclockwise circuit (i,j)->(i+1,j)->(i+1,j+1)->(i,j+1)->(i,j)
    d1 = _wrap(ph[1:, :-1] - ph[:-1, :-1])
    d2 = _wrap(ph[1:, 1:] - ph[1:, :-1])
    d3 = _wrap(ph[:-1, 1:] - ph[1:, 1:])
    d4 = _wrap(ph[:-1, :-1] - ph[:-1, 1:])
    winding = np.rint((d1 + d2 + d3 + d4) / (2.0 * np.pi)).astype(int)
    thr = amp_threshold_rel * peak
    clear = ((amp[:-1, :-1] > thr) & (amp[1:, :-1] > thr)
             & (amp[1:, 1:] > thr) & (amp[:-1, 1:] > thr))
    winding = np.where(clear, 0, winding)
    ambiguous_edge = np.zeros_like(winding, dtype=bool)
    for d in (d1, d2, d3, d4):
        ambiguous_edge |= np.abs(np.abs(d) - np.pi) < _AMBIG_TOL
    vortices = []
    ambiguous = []
    for i, j in zip(*np.nonzero(winding)):
        a = vals[i, j]
        b = vals[i + 1, j] - a
        c = vals[i, j + 1] - a
        d = vals[i + 1, j + 1] - vals[i + 1, j] - vals[i, j + 1] + a
        xi, eta = _refine_position(a, b, c, d)
        vortices.append(Vortex(x=float(g.x[i] + xi * g.dx),
                               y=float(g.y[j] + eta * g.dy),
                               charge=int(winding[i, j])))
        if ambiguous_edge[i, j]:
            ambiguous.append((float(g.x[i] + 0.5 * g.dx),
                              float(g.y[j] + 0.5 * g.dy)))
    order = sorted(range(len(vortices)),
                   key=lambda n: (vortices[n].x, vortices[n].y))
    return VortexSet(vortices=tuple(vortices[n] for n in order),
                     threshold=amp_threshold_rel,
                     grid=g,
                     ambiguous=tuple(ambiguous))


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple        # (index in V1, index in V2, displacement)
    unmatched1: tuple
    unmatched2: tuple
    max_displacement: float


def match_vortices(v1, v2, radius):
    """Greedy nearest-neighbor matching of equal-charge vortices.

    Candidate pairs within the radius are taken in order of increasing
    displacement (ties broken by indices), each vortex used at most once.
    """
    if radius <= max(v1.grid.dx, v1.grid.dy):
        raise ValueError("radius must exceed the grid spacing")
    candidates = []
    for i, a in enumerate(v1.vortices):
        for j, b in enumerate(v2.vortices):
            if a.charge != b.charge:
                continue
            dist = math.hypot(a.x - b.x, a.y - b.y)
            if dist <= radius:
                candidates.append((dist, i, j))
    candidates.sort()
    used1, used2, pairs = set(), set(), []
    for dist, i, j in candidates:
        if i in used1 or j in used2:
            continue
        used1.add(i)
        used2.add(j)
        pairs.append((i, j, dist))
    unmatched1 = tuple(i for i in range(len(v1.vortices)) if i not in used1)
    unmatched2 = tuple(j for j in range(len(v2.vortices)) if j not in used2)
    max_disp = max((p[2] for p in pairs), default=0.0)
    return MatchResult(pairs=tuple(pairs), unmatched1=unmatched1,
                       unmatched2=unmatched2, max_displacement=max_disp)


def winding_on_contour(u, amp_threshold_rel):
    """Phase winding along the largest centered rectangle above threshold.

    Independent of find_vortices: sums principal-value phase differences
    along an explicit closed grid path, the largest centered index
    rectangle on which |u| exceeds amp_threshold_rel times the peak
    everywhere.  By telescoping this equals the total enclosed charge.
    """
    if not isinstance(u, ScalarField):
        raise TypeError("winding_on_contour expects a ScalarField")
    g = u.grid
    amp = np.abs(u.values)
    thr = amp_threshold_rel * float(amp.max())
    margin = None
    for m in range(min(g.Nx, g.Ny) // 2):
        path = np.concatenate([amp[m, m:g.Ny - m], amp[g.Nx - 1 - m, m:g.Ny - m],
                               amp[m:g.Nx - m, m], amp[m:g.Nx - m, g.Ny - 1 - m]])
        if np.all(path > thr):
            margin = m
            break
    if margin is None:
        raise ValueError("no centered contour stays above the threshold")
    i0, i1 = margin, g.Nx - 1 - margin
    j0, j1 = margin, g.Ny - 1 - margin
    ph = np.angle(u.values)
    along = np.concatenate([ph[i0:i1, j0], [ph[i1, j0]],      # bottom, +x
                            ph[i1, j0:j1], [ph[i1, j1]],      # right, +y
                            ph[i1:i0:-1, j1], [ph[i0, j1]],   # top, -x
                            ph[i0, j1:j0:-1], [ph[i0, j0]]])  # left, -y
    total = float(np.sum(_wrap(np.diff(along))))
    return int(round(total / (2.0 * np.pi)))
