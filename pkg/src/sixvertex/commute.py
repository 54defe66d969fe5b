"""Numerical verification of the free-energy commutation identities.

With F = F(q, H; u) and Ft = F(q, H; w) evaluated at the same (q, H) and
indices (1, 2, 3) = (q, H, u), the three bilinear identities

    F11 Ft22 - Ft11 F22                          = 0
    F11 Ft23 + F12 Ft13 - F13 Ft12 - F23 Ft11    = 0
    F12 Ft23 + F22 Ft13 - F13 Ft22 - F23 Ft12    = 0

hold for every pair of spectral parameters (u, w).  Residuals are reported
normalized by the largest constituent product so tolerances are meaningful
across regimes.  Hessians come either from the closed forms (source
"closed-form") or from pure value-based central differences ("fd"), which
serves as an independent oracle.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np

from . import thermo
from .errors import DomainError

WORKERS_ENV = "SIXVERTEX_WORKERS"

CSV_COLUMNS = ["q", "H", "u", "w", "residual1", "residual2", "residual3",
               "hessian_source"]


@dataclass
class IdentityReport:
    u: float
    w: float
    q: float
    H: float
    residual1: float
    residual2: float
    residual3: float
    hessian_source: str

    def row(self):
        d = asdict(self)
        return [d[k] for k in CSV_COLUMNS]


def hessian_closed(u, q, H, params, M=128):
    return thermo.second_derivs(u, q, H, params, M=M)


def hessian_fd(u, q, H, params, M=96, dq=1e-4, dH=1e-4, du=1e-3):
    """Hessian entries from central differences of free-energy values only."""
    def val(qq, HH, uu):
        return thermo.free_energy(uu, qq, HH, params, M=M).value

    f11 = (val(q + dq, H, u) - 2 * val(q, H, u) + val(q - dq, H, u)) / dq ** 2
    f22 = (val(q, H + dH, u) - 2 * val(q, H, u) + val(q, H - dH, u)) / dH ** 2
    f12 = (val(q + dq, H + dH, u) - val(q + dq, H - dH, u)
           - val(q - dq, H + dH, u) + val(q - dq, H - dH, u)) / (4 * dq * dH)
    f13 = (val(q + dq, H, u + du) - val(q + dq, H, u - du)
           - val(q - dq, H, u + du) + val(q - dq, H, u - du)) / (4 * dq * du)
    f23 = (val(q, H + dH, u + du) - val(q, H + dH, u - du)
           - val(q, H - dH, u + du) + val(q, H - dH, u - du)) / (4 * dH * du)
    return f11, f12, f22, f13, f23


def identity_values(hu, hw):
    """The three bilinear combinations and their normalization scales."""
    f11, f12, f22, f13, f23 = hu
    g11, g12, g22, g13, g23 = hw
    i1 = f11 * g22 - g11 * f22
    i2 = f11 * g23 + f12 * g13 - f13 * g12 - f23 * g11
    i3 = f12 * g23 + f22 * g13 - f13 * g22 - f23 * g12
    n1 = max(abs(f11 * g22), abs(g11 * f22))
    n2 = max(abs(f11 * g23), abs(f12 * g13), abs(f13 * g12), abs(f23 * g11))
    n3 = max(abs(f12 * g23), abs(f22 * g13), abs(f13 * g22), abs(f23 * g12))
    return (i1, i2, i3), (n1, n2, n3)


def identity_residuals(u, w, q, H, params, source="closed-form", M=128):
    """Normalized residuals of the three identities at one parameter point."""
    if u == w:
        return IdentityReport(u=u, w=w, q=q, H=H, residual1=0.0, residual2=0.0,
                              residual3=0.0, hessian_source=source)
    if source == "closed-form":
        hu = hessian_closed(u, q, H, params, M=M)
        hw = hessian_closed(w, q, H, params, M=M)
    elif source in ("fd", "finite-difference"):
        hu = hessian_fd(u, q, H, params)
        hw = hessian_fd(w, q, H, params)
    else:
        raise DomainError(f"unknown hessian source {source!r}")
    (i1, i2, i3), (n1, n2, n3) = identity_values(hu, hw)
    return IdentityReport(u=u, w=w, q=q, H=H,
                          residual1=i1 / n1 if n1 else 0.0,
                          residual2=i2 / n2 if n2 else 0.0,
                          residual3=i3 / n3 if n3 else 0.0,
                          hessian_source=source)


def _point_task(args):
    u, w, q, H, eta, source, M = args
    try:
        rep = identity_residuals(u, w, q, H, eta, source=source, M=M)
        return ("ok", rep)
    except Exception as exc:  # per-point isolation, sweep continues
        return ("fail", {"u": u, "w": w, "q": q, "H": H,
                         "error": f"{type(exc).__name__}: {exc}"})


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def sweep_verify(q_values, H_values, uw_pairs, params, source="closed-form",
                 M=128, workers=None):
    """Residuals over a (q, H) x (u, w) grid; per-point failures are recorded.

    Returns (reports, failures, summary).  Sweep order is deterministic,
    independent of the worker count.
    """
    eta = params.eta if hasattr(params, "eta") else float(params)
    tasks = [(u, w, q, H, eta, source, M)
             for q in q_values for H in H_values for (u, w) in uw_pairs]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_point_task, tasks, chunksize=1))
    else:
        results = [_point_task(t) for t in tasks]
    reports = [r for tag, r in results if tag == "ok"]
    failures = [r for tag, r in results if tag == "fail"]
    summary = {
        "n_points": len(tasks),
        "n_ok": len(reports),
        "n_failed": len(failures),
        "hessian_source": source,
        "max_residual1": max((abs(r.residual1) for r in reports), default=0.0),
        "max_residual2": max((abs(r.residual2) for r in reports), default=0.0),
        "max_residual3": max((abs(r.residual3) for r in reports), default=0.0),
    }
    return reports, failures, summary
