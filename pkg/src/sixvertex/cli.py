"""Command-line driver: runs the pipelines and emits CSV/JSON artifacts.

Configuration comes from an optional JSON file (flat key/value map, schema
checked, unknown keys rejected) merged with command-line flags; flags win.
Outputs are deterministic: fixed float formatting and fixed sweep order.

Exit codes: 0 success, 2 domain/validation error, 3 solver failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import bethe, commute, flow, kernels, thermo, xfer
from .errors import DomainError, SolverError

FLOAT_FMT = "%.12e"


def _fmt(x):
    return FLOAT_FMT % float(x)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(c) if isinstance(c, (int, float, np.floating))
                              else str(c) for c in row) + "\n")


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_floats(text):
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _parse_range(text):
    """lo:hi:n -> n evenly spaced values, or a comma list."""
    if ":" in text:
        lo, hi, n = text.split(":")
        return list(np.linspace(float(lo), float(hi), int(n)))
    return _parse_floats(text)


def _parse_pairs(text):
    out = []
    for chunk in text.split(";"):
        if chunk.strip():
            a, b = chunk.split(",")
            out.append((float(a), float(b)))
    return out


def load_config(path, allowed):
    if not os.path.exists(path):
        raise DomainError(f"config file not found: {path}")
    with open(path) as fh:
        cfg = json.load(fh)
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise DomainError(f"unknown config keys: {unknown}")
    return cfg


def _merged(args, defaults_by_cmd):
    """Config-file values with explicit flags layered on top."""
    d = vars(args).copy()
    cfg_path = d.pop("config", None)
    cmd = d.pop("cmd")
    func = d.pop("func")
    out_dir = d.pop("out_dir")
    if cfg_path:
        cfg = load_config(cfg_path, allowed=set(d))
        defaults = defaults_by_cmd[cmd]
        for key, val in cfg.items():
            if d.get(key) == defaults.get(key):
                d[key] = val
    return cmd, func, out_dir, d


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

_EMBED_SPEC = {(1, 2): "abcd,ef->abecdf",
               (1, 3): "abcd,ef->aebcfd",
               (2, 3): "abcd,ef->eabfcd"}


def embed_two_site(R, i, j):
    """Lift a 4x4 two-site matrix to factors (i, j) of C^2 x C^2 x C^2."""
    T = np.asarray(R).reshape(2, 2, 2, 2)  # (out_i, out_j, in_i, in_j)
    return np.einsum(_EMBED_SPEC[(i, j)], T, np.eye(2)).reshape(8, 8)


def yang_baxter_residual(u, v, eta):
    """Max-norm residual of R12(u) R13(u+v) R23(v) = R23(v) R13(u+v) R12(u)."""
    Ru = embed_two_site(kernels.r_matrix(u, 0, 0, eta), 1, 2)
    Ruv = embed_two_site(kernels.r_matrix(u + v, 0, 0, eta), 1, 3)
    Rv = embed_two_site(kernels.r_matrix(v, 0, 0, eta), 2, 3)
    return float(np.max(np.abs(Ru @ Ruv @ Rv - Rv @ Ruv @ Ru)))


def cmd_check_kernels(out, eta, samples, seed, **_):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.2, 1.2, samples) + 1j * rng.uniform(-0.3, 0.3, samples)
    report = {
        "eta": eta,
        "p_oddness": float(np.max(np.abs(kernels.p_eval(-a, eta)
                                         + kernels.p_eval(a, eta)))),
        "theta_oddness": float(np.max(np.abs(kernels.theta_eval(-a, eta)
                                             + kernels.theta_eval(a, eta)))),
        "p_conjugation": float(np.max(np.abs(
            kernels.p_eval(np.conj(a), eta) - np.conj(kernels.p_eval(a, eta))))),
        "K_conjugation": float(np.max(np.abs(
            kernels.kernel_K(np.conj(a), eta) - np.conj(kernels.kernel_K(a, eta))))),
    }
    worst = 0.0
    for _ in range(samples):
        uu, vv = rng.uniform(0.05, eta / 2 - 0.025, 2)
        worst = max(worst, yang_baxter_residual(uu, vv, eta))
    report["yang_baxter"] = worst
    write_json(os.path.join(out, "kernel_checks.json"), report)
    for k, val in report.items():
        if k != "eta":
            print(f"{k}: {val:.3e}")
    return 0


def cmd_xfer_eigen(out, N, n, eta, u, H, V, v, tol, **_):
    v_list = tuple(_parse_floats(v)) if v else ()
    params = kernels.ModelParams(eta=eta, u=u, H=H, V=V, v_list=v_list)
    op = xfer.SectorOperator(N, n, params)
    lam, _vec = xfer.top_eigenvalue(op, u, tol=tol)
    rec = {"N": N, "n": n, "eta": eta, "u": u, "H": H,
           "lambda_max": lam, "log_lambda_per_site": float(np.log(lam) / N)}
    write_json(os.path.join(out, "xfer_eigen.json"), rec)
    write_csv(os.path.join(out, "xfer_eigen.csv"),
              ["N", "n", "eta", "u", "H", "lambda_max"],
              [[N, n, eta, u, H, lam]])
    print(f"lambda_max = {lam:.12e}")
    return 0


def cmd_bethe_solve(out, N, n, eta, u, H, v, tol, check_xfer, **_):
    v_list = tuple(_parse_floats(v)) if v else ()
    params = kernels.ModelParams(eta=eta, u=u, H=H, v_list=v_list)
    sol = bethe.solve_bethe(N, n, params, tol=tol)
    lam = bethe.eigenvalue(sol, u)
    rows = [[j, sol.roots[j].real, sol.roots[j].imag, sol.quantum_numbers[j]]
            for j in range(n)]
    write_csv(os.path.join(out, "bethe_roots.csv"),
              ["j", "re_alpha", "im_alpha", "I_j"], rows)
    rec = {"N": N, "n": n, "residual": sol.residual,
           "eigenvalue_re": lam.real, "eigenvalue_im": lam.imag}
    if check_xfer:
        op = xfer.SectorOperator(N, n, params)
        lam_x, _ = xfer.top_eigenvalue(op, u)
        rec["xfer_lambda"] = lam_x
        rec["rel_error_vs_xfer"] = abs(lam - lam_x) / abs(lam_x)
    write_json(os.path.join(out, "bethe_solve.json"), rec)
    print(f"residual = {sol.residual:.3e}, eigenvalue = {lam.real:.12e}")
    return 0


def cmd_free_energy(out, q, H, u, eta, M, **_):
    pt = thermo.free_energy_full(u, q, H, eta, M=M)
    rec = pt.flat_record()
    header = ["u", "q", "H", "value", "branch", "F1", "F2",
              "F11", "F12", "F22", "F13", "F23"]
    write_csv(os.path.join(out, "free_energy.csv"), header,
              [[rec[k] for k in header]])
    write_json(os.path.join(out, "free_energy.json"), rec)
    print(f"F_u(q,H) = {pt.value:.12f}  branch {pt.branch}")
    return 0


def cmd_verify_identities(out, eta, q_grid, H_grid, pairs, source, M, workers, **_):
    qs = _parse_range(q_grid)
    Hs = _parse_range(H_grid)
    uw = _parse_pairs(pairs)
    reports, failures, summary = commute.sweep_verify(
        qs, Hs, uw, eta, source=source, M=M, workers=workers)
    write_csv(os.path.join(out, "identity_reports.csv"),
              commute.CSV_COLUMNS, [r.row() for r in reports])
    write_json(os.path.join(out, "identity_summary.json"),
               {**summary, "failures": failures})
    print("max residuals: 1) %.3e  2) %.3e  3) %.3e  (%d points, %d failed)"
          % (summary["max_residual1"], summary["max_residual2"],
             summary["max_residual3"], summary["n_points"], summary["n_failed"]))
    return 0 if reports else 3


def cmd_build_surface(out, eta, s_range, t_range, u_range, degrees, M, workers,
                      surface_name, **_):
    sr = tuple(_parse_floats(s_range))
    tr = tuple(_parse_floats(t_range))
    ur = tuple(_parse_floats(u_range))
    deg = tuple(int(d) for d in _parse_floats(degrees))
    surf = flow.build_surface(eta, sr, tr, ur, degrees=deg, M=M, workers=workers)
    path = os.path.join(out, surface_name)
    surf.save(path)
    write_json(os.path.join(out, "surface_report.json"),
               {"eta": eta, "box": [list(b) for b in surf.box],
                "degrees": list(surf.degrees), "branch": surf.branch,
                "probe_errors": surf.probe_errors, "path": path})
    print("probe errors:", {k: f"{v:.2e}" for k, v in surf.probe_errors.items()})
    return 0


def _u_profile(u0, u_amp, u_freq):
    if u_amp == 0.0:
        return u0
    return lambda y: u0 + u_amp * np.sin(2 * np.pi * u_freq * y)


def cmd_evolve(out, surface, q, G, L, y1, dy, u, u_amp, u_freq, v_amp, v_freq,
               perturb_h, perturb_pi, probes, dx_kind, snapshot_stride, **_):
    surf = flow.FreeEnergySurface.load(surface)
    x = np.arange(G) * (L / G)
    h0 = q * x / L + perturb_h * np.sin(2 * np.pi * x / L)
    pi0 = perturb_pi * np.cos(2 * np.pi * x / L)
    state = flow.FieldState.from_height(h0, pi0, L=L, q=q)
    v = (lambda xx: v_amp * np.sin(2 * np.pi * v_freq * xx / L)) if v_amp else 0.0
    w_list = _parse_floats(probes) if probes else []
    traj = flow.evolve(state, _u_profile(u, u_amp, u_freq), v, surf,
                       (0.0, y1), dy, probes=w_list, dx_kind=dx_kind,
                       snapshot_stride=snapshot_stride or max(1, int(round(y1 / dy)) // 16))
    rows = []
    for iy, y in enumerate(traj.snapshots_y):
        for i in range(G):
            rows.append([y, x[i], traj.snapshots_h[iy][i], traj.snapshots_pi[iy][i]])
    write_csv(os.path.join(out, "trajectory.csv"), ["y", "x", "h", "pi"], rows)
    rows = [[y, w, traj.monitors[w][k]]
            for w in w_list for k, y in enumerate(traj.ys)]
    write_csv(os.path.join(out, "conservation.csv"), ["y", "w", "H_w"], rows)
    drifts = {str(w): traj.drift(w) for w in w_list}
    write_json(os.path.join(out, "evolve_summary.json"),
               {"drifts": drifts, "steps": int(round(y1 / dy)), "dy": dy})
    for w, d in drifts.items():
        print(f"H_w drift (w={w}): {d:.3e}")
    return 0


def cmd_minimize_action(out, surface, q, L, T, nx, ny, u, v_amp, v_freq,
                        bump, max_iter, **_):
    surf = flow.FreeEnergySurface.load(surface)
    x = np.arange(nx) * (L / nx)
    phi1 = q * x / L + bump * np.sin(2 * np.pi * x / L)
    phi2 = q * x / L
    v = (lambda xx: v_amp * np.sin(2 * np.pi * v_freq * xx / L)) if v_amp else 0.0
    result = flow.minimize_action(phi1, phi2, q, L, T, u, v, surf,
                                  ny=ny, max_iter=max_iter)
    rows = []
    for j in range(result.h.shape[0]):
        for i in range(nx):
            rows.append([j * T / ny, x[i], result.h[j, i]])
    write_csv(os.path.join(out, "minimizer.csv"), ["y", "x", "h"], rows)
    write_json(os.path.join(out, "action_summary.json"),
               {"action": result.action, "el_residual": result.el_residual,
                "iterations": result.iterations, "converged": result.converged})
    print(f"S = {result.action:.10f}, EL residual = {result.el_residual:.3e}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(
        prog="sixvertex",
        description="Six-vertex model pipelines: finite-size spectra, "
                    "thermodynamic free energy, identity checks, height flow.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    defaults_by_cmd = {}

    def common(p, func):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out-dir", dest="out_dir", default=".",
                       help="output directory")
        p.set_defaults(func=func)
        defaults_by_cmd[p.prog.split()[-1]] = {
            a.dest: a.default for a in p._actions
            if a.dest not in ("help", "config", "out_dir", "func")}

    p = sub.add_parser("check-kernels", help="kernel symmetry and YB checks")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    common(p, cmd_check_kernels)

    p = sub.add_parser("xfer-eigen", help="sector top eigenvalue")
    p.add_argument("--N", type=int, default=8)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--u", type=float, default=0.4)
    p.add_argument("--H", type=float, default=0.0)
    p.add_argument("--V", type=float, default=0.0)
    p.add_argument("--v", default="", help="comma list of column shifts v_k")
    p.add_argument("--tol", type=float, default=1e-12)
    common(p, cmd_xfer_eigen)

    p = sub.add_parser("bethe-solve", help="ground-state Bethe roots")
    p.add_argument("--N", type=int, default=8)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--u", type=float, default=0.4)
    p.add_argument("--H", type=float, default=0.0)
    p.add_argument("--v", default="")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--check-xfer", dest="check_xfer", action="store_true")
    common(p, cmd_bethe_solve)

    p = sub.add_parser("free-energy", help="free energy and derivatives")
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--H", type=float, default=0.0)
    p.add_argument("--u", type=float, default=0.4)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--M", type=int, default=128)
    common(p, cmd_free_energy)

    p = sub.add_parser("verify-identities", help="commutation identity sweep")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--q-grid", dest="q_grid", default="0.3:0.5:5")
    p.add_argument("--H-grid", dest="H_grid", default="-0.1:0.1:5")
    p.add_argument("--pairs", default="0.3,0.5;0.35,0.45;0.3,0.45")
    p.add_argument("--source", default="closed-form",
                   choices=["closed-form", "fd"])
    p.add_argument("--M", type=int, default=128)
    p.add_argument("--workers", type=int, default=None)
    common(p, cmd_verify_identities)

    p = sub.add_parser("build-surface", help="tabulate the free energy")
    p.add_argument("--eta", type=float, default=3.5)
    p.add_argument("--s-range", dest="s_range", default="0.44,0.49")
    p.add_argument("--t-range", dest="t_range", default="-0.1,0.1")
    p.add_argument("--u-range", dest="u_range", default="0.24,0.62")
    p.add_argument("--degrees", default="24,20,16")
    p.add_argument("--M", type=int, default=96)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--surface-name", dest="surface_name", default="surface.npz")
    common(p, cmd_build_surface)

    p = sub.add_parser("evolve", help="Hamiltonian height flow")
    p.add_argument("--surface", required=True)
    p.add_argument("--q", type=float, default=0.468)
    p.add_argument("--G", type=int, default=256)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--y1", type=float, default=1.0)
    p.add_argument("--dy", type=float, default=1e-3)
    p.add_argument("--u", type=float, default=0.4)
    p.add_argument("--u-amp", dest="u_amp", type=float, default=0.0)
    p.add_argument("--u-freq", dest="u_freq", type=float, default=1.0)
    p.add_argument("--v-amp", dest="v_amp", type=float, default=0.05)
    p.add_argument("--v-freq", dest="v_freq", type=float, default=1.0)
    p.add_argument("--perturb-h", dest="perturb_h", type=float, default=1e-3)
    p.add_argument("--perturb-pi", dest="perturb_pi", type=float, default=1e-3)
    p.add_argument("--probes", default="0.3,0.35,0.45,0.5")
    p.add_argument("--dx-kind", dest="dx_kind", default="fd6",
                   choices=["spectral", "fd2", "fd4", "fd6"])
    p.add_argument("--snapshot-stride", dest="snapshot_stride", type=int, default=0)
    common(p, cmd_evolve)

    p = sub.add_parser("minimize-action", help="variational height minimizer")
    p.add_argument("--surface", required=True)
    p.add_argument("--q", type=float, default=0.468)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--T", type=float, default=0.25)
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--ny", type=int, default=64)
    p.add_argument("--u", type=float, default=0.4)
    p.add_argument("--v-amp", dest="v_amp", type=float, default=0.0)
    p.add_argument("--v-freq", dest="v_freq", type=float, default=1.0)
    p.add_argument("--bump", type=float, default=0.01)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=4000)
    common(p, cmd_minimize_action)

    return ap, defaults_by_cmd


def run(argv=None):
    ap, defaults_by_cmd = build_parser()
    try:
        args = ap.parse_args(argv)
        cmd, func, out_dir, kw = _merged(args, defaults_by_cmd)
        os.makedirs(out_dir, exist_ok=True)
        return func(out_dir, **kw)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
