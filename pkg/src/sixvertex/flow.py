"""Height-field Hamiltonian flow driven by the tabulated free energy.

The flow on periodic fields (h(x), pi(x)) with fixed monodromy q is

    dh/dy  = F_2(dx h, pi; u - v(x))
    dpi/dy = d/dx [ F_1(dx h, pi; u - v(x)) ]

where F(s, t; u) is the per-site free energy with s in the filling slot and
t in the horizontal-field slot.  The functionals H_w = int F(dx h, pi; w -
v(x)) dx are conserved along the flow for every probe parameter w, which is
what the conservation monitor measures.

The surface is a tensor Chebyshev interpolant of F on a box in (s, t, u).
F_1 and F_2 used by the flow are the analytic partial derivatives of that
single scalar interpolant, so the semi-discrete system is exactly canonical
for the interpolated Hamiltonian and the generator itself is conserved to
integrator accuracy.  Closed-form derivative tables at the fit nodes and
off-grid probes validate the interpolant against the direct solver.

Note the evolution is a Euclidean (elliptic) problem: linearized modes grow
like exp(|k| sqrt(-F_11 F_22) y).  The product |F_11 F_22| shrinks rapidly
with eta, so conservation experiments over order-one horizons are run deep
in the massive regime.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as nch

from . import thermo
from .errors import ConvergenceError, DomainError, FeasibilityError, RegimeExitError

PI = np.pi
WORKERS_ENV = "SIXVERTEX_WORKERS"
SURFACE_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# tensor Chebyshev interpolant
# ---------------------------------------------------------------------------

def cheb_nodes(n, lo, hi):
    """First-kind Chebyshev nodes mapped to [lo, hi], ascending."""
    if n == 1:
        return np.array([0.5 * (lo + hi)])
    x = np.cos(PI * (2 * np.arange(n) + 1) / (2 * n))[::-1]
    return lo + (hi - lo) * (x + 1) / 2


def _to_unit(x, lo, hi):
    if hi == lo:
        return np.zeros_like(np.asarray(x, dtype=float))
    return 2.0 * (np.asarray(x, dtype=float) - lo) / (hi - lo) - 1.0


def _fit_axis(values, n):
    """Contract one leading axis of node values against the Chebyshev basis."""
    if n == 1:
        return values[None, 0] if values.ndim == 1 else values[0][None, ...]
    x = np.cos(PI * (2 * np.arange(n) + 1) / (2 * n))[::-1]
    P = nch.chebvander(x, n - 1)          # (n, n): P[k, j] = T_j(x_k)
    w = np.full(n, 2.0 / n)
    w[0] = 1.0 / n
    return np.tensordot(P * w[None, :], values, axes=(0, 0))


class ChebSurface3:
    """Chebyshev tensor interpolant on a box in (s, t, u)."""

    def __init__(self, coef, box):
        self.coef = np.asarray(coef, dtype=float)
        self.box = tuple((float(lo), float(hi)) for lo, hi in box)

    @classmethod
    def fit(cls, values, box):
        c = _fit_axis(values, values.shape[0])
        c = np.moveaxis(_fit_axis(np.moveaxis(c, 1, 0), values.shape[1]), 0, 1)
        c = np.moveaxis(_fit_axis(np.moveaxis(c, 2, 0), values.shape[2]), 0, 2)
        return cls(c, box)

    def derivative(self, axis):
        (lo, hi) = self.box[axis]
        if self.coef.shape[axis] == 1:
            return ChebSurface3(np.zeros_like(self.coef), self.box)
        scl = 2.0 / (hi - lo)
        d = nch.chebder(self.coef, m=1, scl=scl, axis=axis)
        pad = [(0, 0)] * d.ndim
        pad[axis] = (0, 1)  # keep the parent shape so basis matrices are shared
        return ChebSurface3(np.pad(d, pad), self.box)

    def _vanders(self, s, t, u):
        xs = _to_unit(s, *self.box[0])
        xt = _to_unit(t, *self.box[1])
        xu = _to_unit(u, *self.box[2])
        shp = np.broadcast(xs, xt, xu).shape
        xs, xt, xu = (np.broadcast_to(v, shp).ravel() for v in (xs, xt, xu))
        return (nch.chebvander(xs, self.coef.shape[0] - 1),
                nch.chebvander(xt, self.coef.shape[1] - 1),
                nch.chebvander(xu, self.coef.shape[2] - 1), shp)

    def __call__(self, s, t, u):
        Vs, Vt, Vu, shp = self._vanders(s, t, u)
        out = _contract(self.coef, Vs, Vt, Vu)
        return out.reshape(shp) if shp else float(out[0])

    def eval_many(self, coefs, s, t, u):
        """Evaluate several coefficient tensors at shared points."""
        Vs, Vt, Vu, shp = self._vanders(s, t, u)
        outs = [_contract(c, Vs, Vt, Vu).reshape(shp) for c in coefs]
        return outs


def _contract(coef, Vs, Vt, Vu):
    tmp = np.tensordot(Vs, coef, axes=(1, 0))        # (p, nt, nu)
    tmp = np.einsum("pb,pbc->pc", Vt, tmp)
    return np.einsum("pc,pc->p", Vu, tmp)


# ---------------------------------------------------------------------------
# free-energy surface
# ---------------------------------------------------------------------------

@dataclass
class FreeEnergySurface:
    """Tabulated free energy with analytic-derivative evaluation."""

    eta: float
    box: tuple                     # ((s_lo, s_hi), (t_lo, t_hi), (u_lo, u_hi))
    degrees: tuple
    interp: ChebSurface3
    d_s: ChebSurface3 = field(repr=False)
    d_t: ChebSurface3 = field(repr=False)
    d_tt: ChebSurface3 = field(repr=False)
    node_values: np.ndarray = field(repr=False)
    node_d1: np.ndarray = field(repr=False)       # closed-form F_1 at fit nodes
    node_d2: np.ndarray = field(repr=False)       # closed-form F_2 at fit nodes
    branch: str = "+"
    M: int = 96
    probe_errors: dict = field(default_factory=dict)

    def contains(self, s, t, u, margin=0.0):
        (slo, shi), (tlo, thi), (ulo, uhi) = self.box
        ok = (np.all(s >= slo + margin) and np.all(s <= shi - margin)
              and np.all(t >= tlo + margin) and np.all(t <= thi - margin))
        if self.degrees[2] > 1:
            ok = ok and np.all(u >= ulo) and np.all(u <= uhi)
        return bool(ok)

    def _check(self, s, t, u):
        if not self.contains(s, t, u):
            raise RegimeExitError("query outside the tabulated surface box",
                                  where=_first_violation(self.box, s, t, u))

    def value(self, s, t, u):
        self._check(s, t, u)
        return self.interp(s, t, u)

    def d1(self, s, t, u):
        """dF/ds (filling-slot derivative)."""
        self._check(s, t, u)
        return self.d_s(s, t, u)

    def d2(self, s, t, u):
        """dF/dt (field-slot derivative)."""
        self._check(s, t, u)
        return self.d_t(s, t, u)

    def value_d1_d2(self, s, t, u):
        self._check(s, t, u)
        return self.interp.eval_many(
            [self.interp.coef, self.d_s.coef, self.d_t.coef], s, t, u)

    def d1_d2(self, s, t, u):
        self._check(s, t, u)
        return self.interp.eval_many([self.d_s.coef, self.d_t.coef], s, t, u)

    def save(self, path):
        np.savez(path,
                 format_version=SURFACE_FORMAT_VERSION,
                 eta=self.eta, box=np.array(self.box), degrees=np.array(self.degrees),
                 coef=self.interp.coef, node_values=self.node_values,
                 node_d1=self.node_d1, node_d2=self.node_d2,
                 branch=self.branch, M=self.M,
                 probe_err_d1=self.probe_errors.get("d1", np.nan),
                 probe_err_d2=self.probe_errors.get("d2", np.nan),
                 probe_err_value=self.probe_errors.get("value", np.nan))

    @classmethod
    def load(cls, path):
        z = np.load(path, allow_pickle=False)
        if int(z["format_version"]) != SURFACE_FORMAT_VERSION:
            raise DomainError(f"unsupported surface format {z['format_version']}")
        box = tuple((float(lo), float(hi)) for lo, hi in z["box"])
        interp = ChebSurface3(z["coef"], box)
        surf = cls(eta=float(z["eta"]), box=box,
                   degrees=tuple(int(d) for d in z["degrees"]), interp=interp,
                   d_s=interp.derivative(0), d_t=interp.derivative(1),
                   d_tt=interp.derivative(1).derivative(1),
                   node_values=z["node_values"], node_d1=z["node_d1"],
                   node_d2=z["node_d2"], branch=str(z["branch"]), M=int(z["M"]))
        surf.probe_errors = {"d1": float(z["probe_err_d1"]),
                             "d2": float(z["probe_err_d2"]),
                             "value": float(z["probe_err_value"])}
        return surf


def _surface_task(args):
    """One (s, t) pipeline: free-energy values over the u nodes plus F_1, F_2."""
    s, t, u_nodes, eta, M = args
    try:
        vals, d1s, d2s, branches = [], [], [], []
        for u in u_nodes:
            pt = thermo.free_energy(u, s, t, eta, M=M)
            f1, f2 = thermo.first_derivs(u, s, t, eta, M=M)
            vals.append(pt.value)
            d1s.append(f1)
            d2s.append(f2)
            branches.append(pt.branch)
        return ("ok", (vals, d1s, d2s, branches))
    except Exception as exc:
        return ("hole", f"(s={s:.6g}, t={t:.6g}): {type(exc).__name__}: {exc}")


def build_surface(params, s_range, t_range, u_range, degrees=(24, 20, 16),
                  M=96, workers=None, n_probes=20, probe_seed=20260810):
    """Tabulate the free energy on a box and fit the Chebyshev interpolant.

    Any solver failure leaves a hole; holes are not tolerated and abort the
    build.  Validation probes re-evaluate F_1 and F_2 with the direct solver
    at random interior points and store the observed interpolation error.
    """
    eta = params.eta if hasattr(params, "eta") else float(params)
    ns, nt, nu = degrees
    if u_range[0] == u_range[1]:
        nu = 1
    s_nodes = cheb_nodes(ns, *s_range)
    t_nodes = cheb_nodes(nt, *t_range)
    u_nodes = cheb_nodes(nu, *u_range)

    tasks = [(s, t, tuple(u_nodes), eta, M) for s in s_nodes for t in t_nodes]
    nworkers = _default_workers() if workers is None else workers
    if nworkers > 1:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            results = list(pool.map(_surface_task, tasks, chunksize=4))
    else:
        results = [_surface_task(t) for t in tasks]

    holes = [msg for tag, msg in results if tag == "hole"]
    if holes:
        raise ConvergenceError(
            "surface build left %d hole(s); first: %s" % (len(holes), holes[0]))

    V = np.empty((ns, nt, nu))
    D1 = np.empty_like(V)
    D2 = np.empty_like(V)
    branches = set()
    for (i, j), (_tag, payload) in zip(
            ((i, j) for i in range(ns) for j in range(nt)), results):
        vals, d1s, d2s, brs = payload
        V[i, j, :] = vals
        D1[i, j, :] = d1s
        D2[i, j, :] = d2s
        branches.update(brs)
    if len(branches) > 1:
        raise DomainError(
            "free-energy branch changes inside the box; split the u-range "
            f"(branches seen: {sorted(branches)})")

    box = (tuple(s_range), tuple(t_range), tuple(u_range))
    interp = ChebSurface3.fit(V, box)
    d_s = interp.derivative(0)
    d_t = interp.derivative(1)
    surf = FreeEnergySurface(eta=eta, box=box, degrees=(ns, nt, nu),
                             interp=interp, d_s=d_s, d_t=d_t,
                             d_tt=d_t.derivative(1),
                             node_values=V, node_d1=D1, node_d2=D2,
                             branch=branches.pop(), M=M)

    rng = np.random.default_rng(probe_seed)
    errs = {"value": 0.0, "d1": 0.0, "d2": 0.0}
    for _ in range(n_probes):
        s = rng.uniform(*_shrink(s_range))
        t = rng.uniform(*_shrink(t_range))
        u = u_nodes[0] if nu == 1 else rng.uniform(*_shrink(u_range))
        pt = thermo.free_energy(u, s, t, eta, M=M)
        f1, f2 = thermo.first_derivs(u, s, t, eta, M=M)
        errs["value"] = max(errs["value"], abs(surf.value(s, t, u) - pt.value))
        errs["d1"] = max(errs["d1"], abs(surf.d1(s, t, u) - f1))
        errs["d2"] = max(errs["d2"], abs(surf.d2(s, t, u) - f2))
    surf.probe_errors = errs
    return surf


def _shrink(rng, frac=0.05):
    lo, hi = rng
    pad = (hi - lo) * frac
    return lo + pad, hi - pad


def _first_violation(box, s, t, u):
    for name, val, (lo, hi) in (("s", s, box[0]), ("t", t, box[1]), ("u", u, box[2])):
        v = np.atleast_1d(val)
        bad = (v < lo) | (v > hi)
        if np.any(bad):
            i = int(np.argmax(bad))
            return f"{name}[{i}] = {v[i]:.6g} outside [{lo:.6g}, {hi:.6g}]"
    return None


def _default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# periodic fields and derivative operators
# ---------------------------------------------------------------------------

_FD_STENCILS = {
    "fd2": ([1], [0.5]),
    "fd4": ([1, 2], [2.0 / 3.0, -1.0 / 12.0]),
    "fd6": ([1, 2, 3], [0.75, -0.15, 1.0 / 60.0]),
}


def make_dx(G, L, kind="fd6"):
    """Periodic d/dx on a uniform G-point grid: spectral or central stencils."""
    h = L / G
    if kind == "spectral":
        k = 2j * PI * np.fft.rfftfreq(G, d=h)
        def dx(f):
            return np.fft.irfft(k * np.fft.rfft(f), n=G)
        return dx
    if kind not in _FD_STENCILS:
        raise DomainError(f"unknown derivative kind {kind!r}")
    offsets, coeffs = _FD_STENCILS[kind]
    def dx(f):
        out = np.zeros_like(f)
        for o, cf in zip(offsets, coeffs):
            out += cf * (np.roll(f, -o) - np.roll(f, o))
        return out / h
    return dx


@dataclass
class FieldState:
    """Periodic pair (h, pi) with monodromy q stored separately.

    h(x) = q x / L + htilde(x) with htilde periodic, so dx h is computed
    from the periodic part and the monodromy is conserved exactly.
    """

    L: float
    q: float
    htilde: np.ndarray
    pi: np.ndarray
    y: float = 0.0

    def __post_init__(self):
        self.htilde = np.asarray(self.htilde, dtype=float)
        self.pi = np.asarray(self.pi, dtype=float)
        if self.htilde.shape != self.pi.shape:
            raise DomainError("h and pi grids differ")

    @property
    def G(self):
        return len(self.htilde)

    @property
    def x(self):
        return np.arange(self.G) * (self.L / self.G)

    @property
    def h(self):
        return self.q * self.x / self.L + self.htilde

    def slope(self, dx):
        return self.q / self.L + dx(self.htilde)

    @classmethod
    def from_height(cls, h, pi, L, q, y=0.0):
        h = np.asarray(h, dtype=float)
        x = np.arange(len(h)) * (L / len(h))
        return cls(L=L, q=q, htilde=h - q * x / L, pi=np.asarray(pi, float), y=y)

    def check_gradient(self, dx, lo=0.0, hi=1.0, margin=0.0):
        s = self.slope(dx)
        if np.any(s <= lo + margin) or np.any(s >= hi - margin):
            raise RegimeExitError(
                f"height gradient range [{s.min():.4f}, {s.max():.4f}] leaves "
                f"({lo + margin}, {hi - margin})")


# ---------------------------------------------------------------------------
# Hamiltonian functional and evolution
# ---------------------------------------------------------------------------

def _v_values(v, x):
    if callable(v):
        return np.asarray(v(x), dtype=float) * np.ones_like(x)
    return np.asarray(v, dtype=float) * np.ones_like(x)


def hamiltonian_value(state, u, v, surf, dx=None):
    """H_u = int F(dx h, pi; u - v(x)) dx by the periodic trapezoid rule."""
    dx = dx or make_dx(state.G, state.L)
    s = state.slope(dx)
    uu = u - _v_values(v, state.x)
    vals = surf.value(s, state.pi, uu)
    return float(np.sum(vals) * (state.L / state.G))


@dataclass
class Trajectory:
    ys: np.ndarray
    monitors: dict                 # w -> H_w(y) arrays aligned with ys
    snapshots_y: np.ndarray
    snapshots_h: np.ndarray
    snapshots_pi: np.ndarray
    state: FieldState
    exited: bool = False
    exit_message: str = ""

    def drift(self, w):
        vals = self.monitors[w]
        return float(np.max(np.abs(vals - vals[0])) / max(abs(vals[0]), 1e-300))


def evolve(state, u, v, surf, y_span, dy, probes=(), dx_kind="fd6",
           monitor_stride=1, snapshot_stride=None, margin=0.0):
    """Integrate the canonical flow with classical RK4 and monitor H_w.

    u may be a constant or a callable u(y) (time-dependent generator).
    Monitored functionals are evaluated with the same discrete derivative
    used by the dynamics.  Leaving the surface box or the gradient window
    raises RegimeExitError carrying the partial trajectory.
    """
    y0, y1 = y_span
    nsteps = int(round((y1 - y0) / dy))
    if abs(y0 + nsteps * dy - y1) > 1e-9 * max(1.0, abs(y1)):
        raise DomainError("y_span is not an integer number of steps")
    dx = make_dx(state.G, state.L, dx_kind)
    u_of = u if callable(u) else (lambda _y: u)
    x = state.x
    vx = _v_values(v, x)
    probes = tuple(probes)

    def rhs(y, ht, pi):
        s = state.q / state.L + dx(ht)
        uu = u_of(y) - vx
        f1, f2 = surf.d1_d2(s, pi, uu)
        return f2, dx(f1)

    def monitor(ht, pi):
        s = state.q / state.L + dx(ht)
        return [float(np.sum(surf.value(s, pi, w - vx)) * (state.L / state.G))
                for w in probes]

    ht = state.htilde.copy()
    pi = state.pi.copy()
    ys, mons = [y0], [monitor(ht, pi)] if probes else [[]]
    snap_y, snap_h, snap_pi = [y0], [state.q * x / state.L + ht], [pi.copy()]
    exited, exit_msg = False, ""

    y = y0
    for istep in range(nsteps):
        try:
            k1h, k1p = rhs(y, ht, pi)
            k2h, k2p = rhs(y + dy / 2, ht + dy / 2 * k1h, pi + dy / 2 * k1p)
            k3h, k3p = rhs(y + dy / 2, ht + dy / 2 * k2h, pi + dy / 2 * k2p)
            k4h, k4p = rhs(y + dy, ht + dy * k3h, pi + dy * k3p)
        except RegimeExitError as exc:
            exited, exit_msg = True, str(exc)
            break
        ht = ht + dy / 6 * (k1h + 2 * k2h + 2 * k3h + k4h)
        pi = pi + dy / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        y = y0 + (istep + 1) * dy
        s = state.q / state.L + dx(ht)
        if (not np.all(np.isfinite(ht)) or not np.all(np.isfinite(pi))
                or np.any(s <= margin) or np.any(s >= 1.0 - margin)):
            exited, exit_msg = True, "gradient left (0, 1) or state diverged"
            break
        if (istep + 1) % monitor_stride == 0 or istep == nsteps - 1:
            ys.append(y)
            if probes:
                mons.append(monitor(ht, pi))
        if snapshot_stride and ((istep + 1) % snapshot_stride == 0
                                or istep == nsteps - 1):
            snap_y.append(y)
            snap_h.append(state.q * x / state.L + ht)
            snap_pi.append(pi.copy())

    final = FieldState(L=state.L, q=state.q, htilde=ht, pi=pi, y=y)
    mons = np.array(mons) if probes else np.zeros((len(ys), 0))
    traj = Trajectory(ys=np.array(ys),
                      monitors={w: mons[:, i] for i, w in enumerate(probes)},
                      snapshots_y=np.array(snap_y),
                      snapshots_h=np.array(snap_h),
                      snapshots_pi=np.array(snap_pi),
                      state=final, exited=exited, exit_message=exit_msg)
    if exited:
        raise RegimeExitError(exit_msg or "flow left the disordered region",
                              partial=traj, where=f"y={y:.6g}")
    return traj


# ---------------------------------------------------------------------------
# surface tension (Legendre transform in the field slot)
# ---------------------------------------------------------------------------

def _legendre_pi(s, yslope, u, surf, tol=1e-12, max_iter=80):
    """Maximizer pi* of pi*yslope - F(s, pi; u): solves F_2(s, pi; u) = yslope.

    Vectorized safeguarded Newton; F must be strictly convex in the field
    slot on the surface box for the maximizer to be unique.
    """
    s = np.asarray(s, dtype=float)
    yslope = np.asarray(yslope, dtype=float)
    u = np.broadcast_to(np.asarray(u, dtype=float), np.broadcast(s, yslope).shape)
    shp = np.broadcast(s, yslope, u).shape
    s, yslope, u = (np.broadcast_to(a, shp).ravel() for a in (s, yslope, u))
    tlo, thi = surf.box[1]
    pad = 1e-9 * (thi - tlo)
    pi = np.zeros_like(s) + 0.5 * (tlo + thi)
    for _ in range(max_iter):
        g = surf.d_t(s, pi, u) - yslope
        gp = surf.d_tt(s, pi, u)
        if np.any(gp <= 0):
            raise RegimeExitError("free energy not convex in the field slot here")
        step = g / gp
        pi = np.clip(pi - step, tlo + pad, thi - pad)
        if np.max(np.abs(g)) < tol:
            break
    else:
        raise ConvergenceError("Legendre inversion did not converge")
    g = surf.d_t(s, pi, u) - yslope
    if np.max(np.abs(g)) > 1e-8:
        raise RegimeExitError(
            f"no interior maximizer: residual {np.max(np.abs(g)):.2e} "
            "(y-slope outside the reachable window)")
    return pi.reshape(shp)


def surface_tension(s, yslope, u, surf, return_pi=False):
    """sigma_u(s, yslope) = max_pi (pi*yslope - F(s, pi; u))."""
    pi = _legendre_pi(s, yslope, u, surf)
    sigma = pi * yslope - surf.value(np.asarray(s, float), pi, u)
    if return_pi:
        return sigma, pi
    return sigma


# ---------------------------------------------------------------------------
# action functional on the space-time rectangle
# ---------------------------------------------------------------------------

def _cell_slopes(h, q, Lx, Ly):
    """Cell-centered (dx h, dy h) for rows y_0..y_Ny, periodic x with monodromy."""
    ny1, nx = h.shape
    dxs = Lx / nx
    dys = Ly / (ny1 - 1)
    h_e = np.concatenate([h, h[:, :1] + q], axis=1)   # close the seam
    sx = (h_e[:-1, 1:] - h_e[:-1, :-1] + h_e[1:, 1:] - h_e[1:, :-1]) / (2 * dxs)
    sy = (h_e[1:, :-1] + h_e[1:, 1:] - h_e[:-1, :-1] - h_e[:-1, 1:]) / (2 * dys)
    return sx, sy


def _cell_params(u, v, nx, ny, Lx, Ly):
    xc = (np.arange(nx) + 0.5) * (Lx / nx)
    yc = (np.arange(ny) + 0.5) * (Ly / ny)
    vv = _v_values(v, xc)
    if callable(u):
        uu = np.asarray([u(y) for y in yc], dtype=float)[:, None] - vv[None, :]
    else:
        uu = u - vv[None, :] + np.zeros((ny, 1))
    return uu


def action_value(h, q, L, T, u, v, surf):
    """S[h] = iint sigma_{u(y)-v(x)}(dx h, dy h) dx dy on the cell centers."""
    h = np.asarray(h, dtype=float)
    ny1, nx = h.shape
    sx, sy = _cell_slopes(h, q, L, T)
    uu = _cell_params(u, v, nx, ny1 - 1, L, T)
    sigma = surface_tension(sx, sy, uu, surf)
    return float(np.sum(sigma) * (L / nx) * (T / (ny1 - 1)))


@dataclass
class ActionResult:
    h: np.ndarray
    action: float
    el_residual: float
    grad_norm: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def _action_and_grad(h, q, L, T, u, v, surf):
    ny1, nx = h.shape
    dxs, dys = L / nx, T / (ny1 - 1)
    sx, sy = _cell_slopes(h, q, L, T)
    uu = _cell_params(u, v, nx, ny1 - 1, L, T)
    sigma, pi = surface_tension(sx, sy, uu, surf, return_pi=True)
    S = float(np.sum(sigma) * dxs * dys)
    # envelope gradient: dsigma/ds = -F_1(s, pi*), dsigma/dt = pi*
    sig_s = -surf.d1(sx, pi, uu)
    sig_t = pi
    cs = sig_s * dys / 2.0
    ct = sig_t * dxs / 2.0
    G = np.zeros_like(h)
    G[:-1] += -cs - ct
    G[:-1] += np.roll(cs - ct, 1, axis=1)
    G[1:] += -cs + ct
    G[1:] += np.roll(cs + ct, 1, axis=1)
    return S, G


def _project_slopes(h, q, L, lo, hi):
    """Clip per-row x-slopes into [lo, hi] and restore the monodromy."""
    ny1, nx = h.shape
    dxs = L / nx
    h_e = np.concatenate([h, h[:, :1] + q], axis=1)
    s = (h_e[:, 1:] - h_e[:, :-1]) / dxs
    if np.all(s > lo) and np.all(s < hi):
        return h
    for _ in range(3):
        s = np.clip(s, lo, hi)
        s += (q - np.sum(s, axis=1, keepdims=True) * dxs) / L
    base = np.cumsum(s, axis=1) * dxs
    rows = np.concatenate([np.zeros((ny1, 1)), base[:, :-1]], axis=1)
    rows += (np.mean(h, axis=1) - np.mean(rows, axis=1))[:, None]
    return rows


def minimize_action(phi1, phi2, q, L, T, u, v, surf, ny=None, max_iter=4000,
                    gtol=1e-10, margin=0.02):
    """Projected first-order descent for the height-field action.

    Starts from the linear interpolant of the boundary rows, uses
    Barzilai-Borwein steps with backtracking, and keeps x-gradients inside
    the surface window by slope clipping.  The discrete Euler-Lagrange
    residual is the interior gradient divided by the cell area.
    """
    phi1 = np.asarray(phi1, dtype=float)
    phi2 = np.asarray(phi2, dtype=float)
    if phi1.shape != phi2.shape:
        raise FeasibilityError("boundary rows have different lengths")
    nx = len(phi1)
    ny = nx if ny is None else ny
    slo, shi = surf.box[0]
    for name, row in (("phi1", phi1), ("phi2", phi2)):
        ext = np.concatenate([row, row[:1] + q])
        s = np.diff(ext) / (L / nx)
        if np.any(s <= slo) or np.any(s >= shi):
            raise FeasibilityError(
                f"{name} slopes [{s.min():.4f}, {s.max():.4f}] leave the "
                f"surface window ({slo:.4f}, {shi:.4f})")

    w = np.linspace(0.0, 1.0, ny + 1)[:, None]
    h = (1 - w) * phi1[None, :] + w * phi2[None, :]
    cell_area = (L / nx) * (T / ny)

    def masked(G):
        Gi = G.copy()
        Gi[0] = 0.0
        Gi[-1] = 0.0
        return Gi

    S, G = _action_and_grad(h, q, L, T, u, v, surf)
    G = masked(G)
    step = 1e-2 / max(np.max(np.abs(G)), 1e-12)
    history = [S]
    h_prev, G_prev = None, None
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = np.max(np.abs(G))
        if gnorm < gtol:
            break
        if h_prev is not None:
            dh = (h - h_prev).ravel()
            dg = (G - G_prev).ravel()
            denom = dh @ dg
            if denom > 0:
                step = (dh @ dh) / denom
        accepted = False
        for _ in range(30):
            h_try = _project_slopes(h - step * G, q, L, slo + margin, shi - margin)
            h_try[0], h_try[-1] = phi1, phi2
            try:
                S_try, G_try = _action_and_grad(h_try, q, L, T, u, v, surf)
            except (RegimeExitError, ConvergenceError):
                step /= 4
                continue
            if S_try <= S + 1e-12 * abs(S):
                accepted = True
                break
            step /= 4
        if not accepted:
            break
        h_prev, G_prev = h, G
        h, S, G = h_try, S_try, masked(G_try)
        history.append(S)

    el = np.abs(G[1:-1]) / cell_area
    return ActionResult(h=h, action=S,
                        el_residual=float(np.max(el)) if el.size else 0.0,
                        grad_norm=float(np.max(np.abs(G))),
                        iterations=it, converged=bool(np.max(np.abs(G)) < 10 * gtol),
                        history=history)


def pi_from_yslope(s, yslope, u, surf):
    """Conjugate field recovered from the Legendre maximizer."""
    return _legendre_pi(s, yslope, u, surf)
