"""Command-line orchestration: configs in, reports and field dumps out.

Commands: ground-h, ground-tau, ground-full, sweep-tau, sweep-full,
spectrum, vortices, verify-identities, rescale.  Configuration is a JSON
file validated against a per-command schema (unknown keys rejected); a few
scalar flags override config values.  Every run writes its resolved
configuration (snapped tau_x included) and a manifest with a content hash
per output file.  Exit codes: 0 success, 1 usage or config error, 2 an
asserted property failed (reports are still written).
"""

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np
import jsonschema

from . import __version__
from .grid import ScalarField, SpinorField, make_grid, write_field, read_field, l2_norm
from .model import (PhysicalParams, make_scaled, rescale_physical,
                    PartitionPair, unitary_u0_grid, matrix_M, born_huang_W,
                    omega)
from .energy import apply_H_lin
from .minimize import Problem, MinimizeOptions, minimize
from .adiabatic import (decompose, l4_invariance_check, nagy_unitary,
                        riesz_projection, moyal_check)
from .verify import (SCHEMA_VERSION, spectrum_rpm, dense_ground_energy,
                     sweep_tau, sweep_full, ims_identity_check,
                     harmonic_params, options_hash)
from .vortex import find_vortices


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# schemas

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_BOOL = {"type": "boolean"}
_STR = {"type": "string"}


def _obj(props, required=()):
    return {"type": "object", "properties": props,
            "required": list(required), "additionalProperties": False}


_GRID_SCHEMA = _obj({"Lx": _NUM, "Ly": _NUM, "Nx": _INT, "Ny": _INT},
                    ("Lx", "Ly", "Nx", "Ny"))
_MINIMIZE_SCHEMA = _obj({
    "max_iters": _INT, "tol_residual": _NUM, "step0": _NUM,
    "precond_c": {"type": ["number", "null"]}, "backtrack_factor": _NUM,
    "n_starts": _INT, "seed": _INT, "init_kind": _STR, "vortex_charge": _INT,
    "precond_kind": _STR, "grow_factor": _NUM})

_SCHEMAS = {
    "ground-h": _obj({"grid": _GRID_SCHEMA, "minimize": _MINIMIZE_SCHEMA,
                      "ell_V": _NUM, "G": _NUM, "gauge_on": _BOOL,
                      "out_dir": _STR}, ("grid",)),
    "ground-tau": _obj({"grid": _GRID_SCHEMA, "minimize": _MINIMIZE_SCHEMA,
                        "ell_V": _NUM, "G": _NUM, "tau_x": _NUM,
                        "out_dir": _STR}, ("grid", "tau_x")),
    "ground-full": _obj({"grid": _GRID_SCHEMA, "minimize": _MINIMIZE_SCHEMA,
                         "ell_V": _NUM, "G": _NUM, "tau_x": _NUM, "eps": _NUM,
                         "delta": _NUM, "out_dir": _STR},
                        ("grid", "tau_x", "eps", "delta")),
    "sweep-tau": _obj({"grid": _GRID_SCHEMA, "minimize": _MINIMIZE_SCHEMA,
                       "ell_V": _NUM, "G": _NUM,
                       "tau_list": {"type": "array", "items": _NUM, "minItems": 1},
                       "out_dir": _STR}, ("grid", "tau_list")),
    "sweep-full": _obj({"grid": _GRID_SCHEMA, "minimize": _MINIMIZE_SCHEMA,
                        "ell_V": _NUM, "G": _NUM, "delta": _NUM,
                        "eps_tau_list": {"type": "array", "minItems": 1,
                                         "items": {"type": "array", "items": _NUM,
                                                   "minItems": 2, "maxItems": 2}},
                        "allow_infeasible": _BOOL, "vortex_threshold": _NUM,
                        "out_dir": _STR}, ("grid", "delta", "eps_tau_list")),
    "spectrum": _obj({"ell_V": _NUM, "oracle": _BOOL, "oracle_n": _INT,
                      "oracle_box": _NUM, "out_dir": _STR}),
    "vortices": _obj({"field": _STR, "amp_threshold_rel": _NUM,
                      "component": _INT, "out_dir": _STR}, ("field",)),
    "verify-identities": _obj({"grid": _GRID_SCHEMA, "seed": _INT,
                               "n_fields": _INT, "n_matrices": _INT,
                               "out_dir": _STR}),
    "rescale": _obj({"kappa": _NUM, "G": _NUM, "ell_kappa": _NUM, "k": _NUM,
                     "delta": _NUM, "Ly": _NUM, "ell_V": _NUM, "out_dir": _STR},
                    ("kappa", "G", "ell_kappa", "k", "delta")),
}

# flag destination -> (config path, cast)
_FLAG_MAP = {
    "ell_v": ("ell_V",), "g": ("G",), "tau_x": ("tau_x",), "eps": ("eps",),
    "delta": ("delta",), "kappa": ("kappa",), "ell_kappa": ("ell_kappa",),
    "k": ("k",), "field": ("field",), "threshold": ("amp_threshold_rel",),
    "out": ("out_dir",), "oracle": ("oracle",),
    "seed": ("minimize", "seed"), "n_starts": ("minimize", "n_starts"),
    "max_iters": ("minimize", "max_iters"), "tol": ("minimize", "tol_residual"),
    "precond": ("minimize", "precond_kind"),
}


# ---------------------------------------------------------------------------
# run directory plumbing

class _Run:
    def __init__(self, out_dir):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.files = []

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out_dir, name)

    def write_json(self, name, payload):
        with open(self.path(name), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")

    def finish(self, command):
        entries = []
        for name in sorted(set(self.files)):
            full = os.path.join(self.out_dir, name)
            with open(full, "rb") as fh:
                blob = fh.read()
            entries.append({"name": name,
                            "sha256": hashlib.sha256(blob).hexdigest(),
                            "bytes": len(blob)})
        manifest = {"schema_version": SCHEMA_VERSION, "command": command,
                    "version": __version__, "files": entries}
        with open(os.path.join(self.out_dir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _grid_from(cfg):
    g = cfg["grid"]
    return make_grid(g["Lx"], g["Ly"], g["Nx"], g["Ny"])


def _opts_from(cfg):
    return MinimizeOptions(**cfg.get("minimize", {}))


def _resolved(cfg, extra):
    out = dict(cfg)
    out["resolved"] = dict(extra)
    out["resolved"]["version"] = __version__
    out["resolved"]["schema_version"] = SCHEMA_VERSION
    return out


def _state_report(state, extra=None):
    rep = {"schema_version": SCHEMA_VERSION,
           "energy": state.energy.as_dict(),
           "lambda": state.lam,
           "residual_norm": state.residual_norm,
           "iterations": state.iterations,
           "converged": state.converged,
           "boundary_warning": state.boundary_warning,
           "start_index": state.start_index}
    if extra:
        rep.update(extra)
    return rep


# ---------------------------------------------------------------------------
# commands

def _cmd_ground(command, cfg, run, workers):
    grid = _grid_from(cfg)
    opts = _opts_from(cfg)
    ell_V = cfg.get("ell_V", 1.0)
    G = cfg.get("G", 0.0)
    extra = {}
    if command == "ground-h":
        sp = harmonic_params(ell_V, G, grid.Ly)
        problem = Problem("H", sp, gauge_on=cfg.get("gauge_on", True))
        resolved = {"workers": workers}
    elif command == "ground-tau":
        sp = make_scaled(eps=0.5, delta=1.0, tau_x=cfg["tau_x"], Ly=grid.Ly,
                         G=G, ell_V=ell_V)
        problem = Problem("tau", sp)
        resolved = {"tau_x_effective": sp.tau_x_effective,
                    "snap_index": sp.snap_index, "workers": workers}
    else:
        sp = make_scaled(eps=cfg["eps"], delta=cfg["delta"], tau_x=cfg["tau_x"],
                         Ly=grid.Ly, G=G, ell_V=ell_V)
        problem = Problem("eps", sp)
        resolved = {"tau_x_effective": sp.tau_x_effective,
                    "snap_index": sp.snap_index,
                    "G_eps_tau": sp.G_eps_tau, "workers": workers}
    state = minimize(problem, grid, opts, workers=workers)
    write_field(run.path("state.gpgf"), state.field)
    if command == "ground-full":
        a_plus, a_minus = decompose(state.field, sp)
        extra["norm_a_plus"] = l2_norm(a_plus)
        extra["norm_a_minus"] = l2_norm(a_minus)
    extra["options_hash"] = options_hash(opts)
    run.write_json("report.json", _state_report(state, extra))
    run.write_json("resolved_config.json", _resolved(cfg, resolved))
    print("%s: E = %.12g, residual = %.3g, converged = %s"
          % (command, state.energy.total, state.residual_norm, state.converged))
    return 0 if state.converged else 2


def _cmd_sweep(command, cfg, run, workers):
    grid = _grid_from(cfg)
    opts = _opts_from(cfg)
    ell_V = cfg.get("ell_V", 1.0)
    G = cfg.get("G", 0.0)
    if command == "sweep-tau":
        report = sweep_tau(ell_V, G, list(cfg["tau_list"]), grid, opts,
                           workers=workers)
        resolved = {"tau_x_effective": [r.tau_x_effective for r in report.rows],
                    "workers": workers}
    else:
        pairs = [tuple(p) for p in cfg["eps_tau_list"]]
        report = sweep_full(ell_V, G, cfg["delta"], pairs, grid, opts,
                            workers=workers,
                            allow_infeasible=cfg.get("allow_infeasible", False),
                            vortex_threshold=cfg.get("vortex_threshold", 0.2))
        resolved = {"tau_x_effective": [r.tau_x_effective for r in report.rows],
                    "workers": workers}
    report.to_csv(run.path("report.csv"))
    report.to_json(run.path("report.json"))
    run.write_json("resolved_config.json", _resolved(cfg, resolved))
    for a in report.assertions:
        print("%s: %s (%s)" % (a.name, "PASS" if a.passed else "FAIL", a.detail))
    return 0 if report.passed else 2


def _cmd_spectrum(cfg, run, workers):
    ell_V = cfg.get("ell_V", 1.0)
    r_plus, r_minus = spectrum_rpm(ell_V)
    total = r_plus + r_minus
    rep = {"schema_version": SCHEMA_VERSION, "ell_V": ell_V,
           "r_plus": r_plus, "r_minus": r_minus, "ground_energy": total}
    code = 0
    if cfg.get("oracle", False):
        oracle = dense_ground_energy(ell_V, box=cfg.get("oracle_box", 16.0),
                                     n=cfg.get("oracle_n", 48))
        defect = abs(oracle - total) / total
        rep.update({"oracle": oracle, "oracle_relative_defect": defect})
        code = 0 if defect <= 1e-3 else 2
    run.write_json("report.json", rep)
    run.write_json("resolved_config.json", _resolved(cfg, {"workers": workers}))
    print("r_plus = %.6f, r_minus = %.6f, r_plus + r_minus = %.6f"
          % (r_plus, r_minus, total))
    return code


def _cmd_vortices(cfg, run, workers):
    f = read_field(cfg["field"])
    if isinstance(f, SpinorField):
        comp = cfg.get("component", 1)
        f = ScalarField(f.grid, f.comp1 if comp == 1 else f.comp2)
    vs = find_vortices(f, cfg.get("amp_threshold_rel", 0.2))
    vs.to_csv(run.path("vortices.csv"))
    run.write_json("report.json", {
        "schema_version": SCHEMA_VERSION,
        "count": len(vs), "total_charge": vs.total_charge,
        "ambiguous": len(vs.ambiguous), "threshold": vs.threshold})
    run.write_json("resolved_config.json", _resolved(cfg, {"workers": workers}))
    print("vortices: %d (total charge %d)" % (len(vs), vs.total_charge))
    return 0


def _cmd_rescale(cfg, run, workers):
    p = PhysicalParams(kappa=cfg["kappa"], G_phys=cfg["G"],
                       ell_kappa=cfg["ell_kappa"], k=cfg["k"],
                       delta=cfg["delta"])
    Ly = cfg.get("Ly", 16.0)
    sp = rescale_physical(p, Ly, ell_V=cfg.get("ell_V", 1.0))
    # the defining power, computed directly from the physical inputs
    lk = p.ell_kappa * p.k
    eps_pow = p.k ** 2 / p.kappa if lk >= 1 else 1.0 / (p.ell_kappa ** 2 * p.kappa)
    rep = {"schema_version": SCHEMA_VERSION,
           "eps_pow": eps_pow, "eps": sp.eps, "delta": sp.delta,
           "tau_x": sp.tau_x, "tau_y": sp.tau_y,
           "tau_x_effective": sp.tau_x_effective, "snap_index": sp.snap_index,
           "G_eps_tau": sp.G_eps_tau, "ell_V": sp.ell_V, "Ly": Ly}
    run.write_json("report.json", rep)
    run.write_json("resolved_config.json", _resolved(cfg, {
        "tau_x_effective": sp.tau_x_effective, "snap_index": sp.snap_index,
        "workers": workers}))
    print("eps^(2+2*delta) = %.12g" % eps_pow)
    print("eps = %.12g, tau = (%.12g, %.12g), G_eps_tau = %.12g"
          % (sp.eps, sp.tau_x, sp.tau_y, sp.G_eps_tau))
    return 0


# ---------------------------------------------------------------------------
# identity suite

def _smooth_field(grid, rng):
    noise = (rng.standard_normal((grid.Nx, grid.Ny))
             + 1j * rng.standard_normal((grid.Nx, grid.Ny)))
    env = np.exp(-(grid.X ** 2 + grid.Y ** 2) / 2.0)
    vals = np.fft.ifft2(np.fft.fft2(noise * env) / (1.0 + grid.K2))
    vals /= math.sqrt(float(np.sum(np.abs(vals) ** 2)) * grid.cell_area)
    return ScalarField(grid, vals)


def _random_projection_pair(rng, n):
    r = int(rng.integers(1, n))
    M1 = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    Q1, _ = np.linalg.qr(M1)
    Q2, _ = np.linalg.qr(Q1 + 0.15 * (rng.standard_normal((n, r))
                                      + 1j * rng.standard_normal((n, r))))
    return Q1 @ Q1.conj().T, Q2 @ Q2.conj().T


def _random_admissible_T(rng, n):
    while True:
        k = int(rng.integers(1, n))
        inner = 0.3 * (rng.uniform(-1, 1, k) + 1j * rng.uniform(-1, 1, k))
        outer = 0.3 * (rng.uniform(-1, 1, n - k) + 1j * rng.uniform(-1, 1, n - k))
        eigs = np.concatenate([1.0 + inner, outer])
        S = np.eye(n) + 0.25 * (rng.standard_normal((n, n))
                                + 1j * rng.standard_normal((n, n))) / math.sqrt(n)
        try:
            T = S @ np.diag(eigs) @ np.linalg.inv(S)
        except np.linalg.LinAlgError:
            continue
        if np.linalg.norm(T @ T - T, 2) < 0.24:
            return T


def _identity_suite(cfg):
    grid = cfg.get("grid")
    grid = make_grid(grid["Lx"], grid["Ly"], grid["Nx"], grid["Ny"]) \
        if grid else make_grid(16.0, 16.0, 64, 64)
    seed = cfg.get("seed", 0)
    n_fields = cfg.get("n_fields", 20)
    n_matrices = cfg.get("n_matrices", 20)
    rng = np.random.default_rng(seed)
    checks = []

    def add(name, value, bound):
        checks.append({"name": name, "value": float(value),
                       "bound": float(bound), "passed": bool(value <= bound)})

    sp = make_scaled(eps=0.3, delta=1.0, tau_x=0.25, Ly=grid.Ly, G=5.0, ell_V=1.0)
    u0 = unitary_u0_grid(grid, sp)
    ident = np.einsum("ikxy,kjxy->ijxy", u0, u0)
    ident[0, 0] -= 1.0
    ident[1, 1] -= 1.0
    add("u0_involution", np.max(np.abs(ident)), 1e-12)
    M = matrix_M(grid.X, grid.Y, sp)
    diag = np.einsum("ikxy,klxy,ljxy->ijxy", u0, M, u0)
    om = omega(grid.X, sp)
    diag[0, 0] -= om
    diag[1, 1] += om
    add("u0_diagonalizes_M", np.max(np.abs(diag)), 1e-12)
    w_bo = born_huang_W(grid.x, sp, convention="BO")
    w_v = born_huang_W(grid.x, sp, convention="V")
    add("born_huang_scaling", np.max(np.abs(w_v - sp.tau_x * sp.tau_y * w_bo)),
        1e-13)

    psi = SpinorField(grid, _smooth_field(grid, rng).values,
                      _smooth_field(grid, rng).values)
    h_m = apply_H_lin(psi, sp, form="multiplier")
    h_f = apply_H_lin(psi, sp, form="frame")
    qm = complex(np.sum(np.conj(psi.comp1) * h_m.comp1
                        + np.conj(psi.comp2) * h_m.comp2)) * grid.cell_area
    qf = complex(np.sum(np.conj(psi.comp1) * h_f.comp1
                        + np.conj(psi.comp2) * h_f.comp2)) * grid.cell_area
    add("h_lin_two_form", abs(qm - qf) / abs(qm), 1e-11)
    _, _, rel = l4_invariance_check(psi, sp)
    add("l4_invariance", rel, 1e-12)

    part = PartitionPair(1.0, 2.0)
    worst = 0.0
    for _ in range(n_fields):
        u = _smooth_field(grid, rng)
        worst = max(worst, ims_identity_check(u, part, 1.0 / 9.0, sp, "H"))
        worst = max(worst, ims_identity_check(u, part, 1.0 / 9.0, sp, "tau"))
    add("ims_identity", worst, 1e-9)

    def a1(q, p):
        return np.exp(-q ** 2 - p ** 2)

    def a2(q, p):
        return np.exp(-((q - 0.5) ** 2) - 2.0 * p ** 2)

    moyal = moyal_check(a1, a2, (0.2, 0.1, 0.05))
    for order in sorted(moyal.slopes):
        add("moyal_slope_order_%d" % order,
            abs(moyal.slopes[order] - (order + 1)), 0.3)

    worst_u, worst_i = 0.0, 0.0
    for _ in range(n_matrices):
        P1, P2 = _random_projection_pair(rng, 12)
        W = nagy_unitary(P1, P2)
        worst_u = max(worst_u,
                      np.linalg.norm(W.conj().T @ W - np.eye(12), 2))
        worst_i = max(worst_i, np.linalg.norm(W @ P1 - P2 @ W, 2))
    add("nagy_unitarity", worst_u, 1e-10)
    add("nagy_intertwining", worst_i, 1e-10)

    worst_p, worst_d = 0.0, 0.0
    for _ in range(n_matrices):
        T = _random_admissible_T(rng, 10)
        _, diag_info = riesz_projection(T)
        worst_p = max(worst_p, diag_info["projection_defect"])
        worst_d = max(worst_d, diag_info["identity_defect"])
    add("riesz_idempotence", worst_p, 1e-10)
    add("riesz_difference_identity", worst_d, 1e-9)
    return checks


def _cmd_verify_identities(cfg, run, workers):
    checks = _identity_suite(cfg)
    run.write_json("report.json", {"schema_version": SCHEMA_VERSION,
                                   "checks": checks})
    run.write_json("resolved_config.json", _resolved(cfg, {"workers": workers}))
    for c in checks:
        print("%s: %.3g (bound %.3g) %s"
              % (c["name"], c["value"], c["bound"],
                 "PASS" if c["passed"] else "FAIL"))
    return 0 if all(c["passed"] for c in checks) else 2


# ---------------------------------------------------------------------------
# argument handling

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="gpge",
        description="Gross-Pitaevskii energies for a two-level atom in a "
                    "shaped beam: ground states, reduction sweeps, and "
                    "identity checks.")
    parser.add_argument("command", choices=sorted(_SCHEMAS))
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--ell-v", dest="ell_v", type=float, default=None)
    parser.add_argument("--g", dest="g", type=float, default=None)
    parser.add_argument("--tau-x", dest="tau_x", type=float, default=None)
    parser.add_argument("--eps", type=float, default=None)
    parser.add_argument("--delta", type=float, default=None)
    parser.add_argument("--kappa", type=float, default=None)
    parser.add_argument("--ell-kappa", dest="ell_kappa", type=float, default=None)
    parser.add_argument("--k", type=float, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--n-starts", dest="n_starts", type=int, default=None)
    parser.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    parser.add_argument("--tol", type=float, default=None)
    parser.add_argument("--precond", choices=("helmholtz", "band"), default=None)
    parser.add_argument("--field", default=None)
    parser.add_argument("--threshold", type=float, default=None)
    parser.add_argument("--oracle", action="store_true", default=None)
    return parser


def _apply_flags(cfg, args):
    for dest, path in _FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        node = cfg
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value
    return cfg


def _resolve_workers(args):
    if args.workers is not None:
        return args.workers
    env = os.environ.get("GPGE_WORKERS")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError("GPGE_WORKERS must be an integer")
    return 1


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = {}
        if args.config:
            with open(args.config) as fh:
                cfg = json.load(fh)
        cfg = _apply_flags(cfg, args)
        try:
            jsonschema.validate(cfg, _SCHEMAS[args.command])
        except jsonschema.ValidationError as exc:
            raise UsageError("config: %s" % exc.message)
        workers = _resolve_workers(args)
        if workers < 1:
            raise UsageError("workers must be at least 1")
        out_dir = cfg.get("out_dir", os.path.join("gpge-runs", args.command))
        run = _Run(out_dir)
        if args.command in ("ground-h", "ground-tau", "ground-full"):
            code = _cmd_ground(args.command, cfg, run, workers)
        elif args.command in ("sweep-tau", "sweep-full"):
            code = _cmd_sweep(args.command, cfg, run, workers)
        elif args.command == "spectrum":
            code = _cmd_spectrum(cfg, run, workers)
        elif args.command == "vortices":
            code = _cmd_vortices(cfg, run, workers)
        elif args.command == "verify-identities":
            code = _cmd_verify_identities(cfg, run, workers)
        else:
            code = _cmd_rescale(cfg, run, workers)
        run.finish(args.command)
        return code
    except (UsageError, json.JSONDecodeError, FileNotFoundError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
