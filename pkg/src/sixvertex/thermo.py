"""Thermodynamic limit: contour equation, Fredholm machinery, free energy.

Ground-state Bethe roots condense on a contour C in the complex plane,
parametrized by alpha(t) on t in [-q/2, q/2].  The contour solves

    2 pi t = p(alpha(t)) + 2iH - int_{-q/2}^{q/2} Theta(alpha(t) - alpha(s)) ds

and carries the root density rho = dt/dalpha with int_C rho dalpha = q.
The per-site free energy at filling q and horizontal field H is

    F_u(q, H) = max(+H + l_+ + int psi_u^+ rho dalpha,
                    -H + l_- + int psi_u^- rho dalpha)

and its first and second partial derivatives in (q, H, u) follow in closed
form from the auxiliary Fredholm solutions D_-, D_+ and the resolvent R:

    dF/dH = +-1 - 2i int f' D_- dalpha
    dF/dq = (f(B) + f(A))/2 + (1/2) int f' D_+ dalpha
    d2F/dH2    =  (2i/pi)  (D_-(B)^2 xi / rho(B) - D_-(A)^2 xi~ / rho(A))
    d2F/dHdq   = -(1/2pi) ((1+D_+(B)) D_-(B) xi / rho(B)
                           + (1-D_+(A)) D_-(A) xi~ / rho(A))
    d2F/dq2    = -(i/8pi) ((1+D_+(B))^2 xi / rho(B) - (1-D_+(A))^2 xi~ / rho(A))
    d2F/dHdu   = -(i/pi)  (D_-(B) xi - D_-(A) xi~)
    d2F/dqdu   =  (1/4pi) ((1+D_+(B)) xi + (1-D_+(A)) xi~)

with the endpoint functionals xi = 2 pi i (f'(B) + int f' R(., B) dalpha)
and xi~ the analogue at A.  Unknowns are alpha(t_i) at Gauss-Legendre nodes;
all integrals are plain t-quadratures; the density at the nodes is reported
both as 1/alpha'(t) (spectral differentiation) and through the differentiated
contour equation, which is the more accurate estimator near the endpoints.

Fillings q > 1/2 are handled through the arrow-reversal identity
F_u(q, H) = F_u(1 - q, -H); the direct contour solve covers q <= 1/2.
"""

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import kernels
from .errors import (BranchJumpError, ContinuationError, DomainError,
                     ResolutionError)

PI = np.pi
TIE_TOL = 1e-12


# ---------------------------------------------------------------------------
# barycentric interpolation on Gauss-Legendre nodes
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=64)
def _gauss_legendre(M):
    return np.polynomial.legendre.leggauss(M)


def barycentric_weights(x):
    x = np.asarray(x, dtype=float)
    scale = 4.0 / (x.max() - x.min())
    diff = scale * (x[:, None] - x[None, :])
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / np.prod(diff, axis=1)
    return w / np.max(np.abs(w))


def differentiation_matrix(x, w):
    x = np.asarray(x, dtype=float)
    D = np.zeros((len(x), len(x)))
    with np.errstate(divide="ignore", invalid="ignore"):
        D = (w[None, :] / w[:, None]) / (x[:, None] - x[None, :])
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -np.sum(D, axis=1))
    return D


def barycentric_eval(x, w, f, xq):
    """Interpolant of (x, f) evaluated at a scalar query point."""
    hit = np.where(x == xq)[0]
    if hit.size:
        return f[hit[0]]
    r = w / (xq - x)
    return np.dot(r, f) / np.sum(r)


# ---------------------------------------------------------------------------
# contour solution
# ---------------------------------------------------------------------------

@dataclass
class ContourSolution:
    """Discretized root contour at filling q and field H."""

    q: float
    H: float
    eta: float
    M: int
    nodes_t: np.ndarray
    weights_t: np.ndarray
    alpha: np.ndarray
    alpha_prime: np.ndarray
    A: complex
    B: complex
    rho_A: complex
    rho_B: complex
    bary_w: np.ndarray = field(repr=False)
    diff_mat: np.ndarray = field(repr=False)

    @property
    def rho(self):
        """Density 1/alpha'(t) at the nodes (spectral differentiation)."""
        return 1.0 / self.alpha_prime

    @property
    def rho_eq(self):
        """Density from the differentiated contour equation (endpoint-robust)."""
        K = kernels.kernel_K(self.alpha[:, None] - self.alpha[None, :], self.eta)
        return (kernels.p_prime(self.alpha, self.eta) - K @ self.weights_t) / (2 * PI)

    @property
    def contour_weights(self):
        """Quadrature weights for integrals in dalpha along the contour."""
        return self.weights_t * self.alpha_prime

    def residual(self):
        """Max contour-equation residual over the nodes."""
        TH = kernels.theta_eval(self.alpha[:, None] - self.alpha[None, :], self.eta)
        G = (kernels.p_eval(self.alpha, self.eta) + 2j * self.H
             - TH @ self.weights_t - 2 * PI * self.nodes_t)
        return float(np.max(np.abs(G)))

    def interpolate_alpha(self, t):
        return barycentric_eval(self.nodes_t, self.bary_w, self.alpha, t)


def _contour_residual(al, t, w, eta, H):
    TH = kernels.theta_eval(al[:, None] - al[None, :], eta)
    return kernels.p_eval(al, eta) + 2j * H - TH @ w - 2 * PI * t


def _contour_newton(al, t, w, eta, H, tol=1e-13, max_iter=50):
    for _ in range(max_iter):
        G = _contour_residual(al, t, w, eta, H)
        r = np.max(np.abs(G))
        if r < tol:
            return al
        if not np.isfinite(r):
            raise ContinuationError("contour residual diverged")
        K = kernels.kernel_K(al[:, None] - al[None, :], eta)
        np.fill_diagonal(K, 0.0)
        J = K * w[None, :]
        J[np.diag_indices_from(J)] = (kernels.p_prime(al, eta)
                                      - np.sum(K * w[None, :], axis=1))
        al = al - np.linalg.solve(J, G)
    raise ContinuationError(f"contour Newton stalled at residual {r:.2e}")


def _endpoint(al, w, eta, H, t_end, guess, tol=1e-14):
    """Endpoint and density there from the Nystrom-extended contour equation."""
    z = guess
    for _ in range(60):
        G = (kernels.p_eval(z, eta) + 2j * H
             - kernels.theta_eval(z - al, eta) @ w - 2 * PI * t_end)
        slope = kernels.p_prime(z, eta) - kernels.kernel_K(z - al, eta) @ w
        z = z - G / slope
        if abs(G) < tol:
            break
    rho_end = (kernels.p_prime(z, eta) - kernels.kernel_K(z - al, eta) @ w) / (2 * PI)
    return complex(z), complex(rho_end)


def _pole_clearance(al, eta):
    """Distance of node differences from the poles of K at k*pi +- i*eta."""
    d = al[:, None] - al[None, :]
    k = np.round(np.real(d) / PI)
    base = d - k * PI
    return float(min(np.min(np.abs(base - 1j * eta)), np.min(np.abs(base + 1j * eta))))


def solve_contour(q, H, params, M_nodes=128, h_step=0.02, tol=1e-13):
    """Solve the nonlinear contour equation at filling q and field H.

    Direct solves cover 0 < q <= 1/2 (use the reflection identity for the
    complementary window).  The H = 0 solution is real; H != 0 is reached by
    continuation with automatic step halving.
    """
    eta = kernels._eta_of(params)
    if not (0.0 < q <= 0.5 + 1e-12):
        raise DomainError(
            f"direct contour solve needs 0 < q <= 1/2 (got q={q}); "
            "fillings above 1/2 are served by the reflection q -> 1-q, H -> -H")
    if M_nodes < 64:
        raise DomainError(f"need at least 64 quadrature nodes, got {M_nodes}")
    xg, wg = _gauss_legendre(M_nodes)
    t = 0.5 * q * xg
    w = 0.5 * q * wg

    al = np.arctan(np.tanh(eta / 2) * np.tan(PI * t)).astype(complex)
    al = _contour_newton(al, t, w, eta, 0.0, tol=tol)
    Ht, step, halvings = 0.0, h_step, 0
    while abs(Ht - H) > 1e-15:
        H_try = Ht + np.sign(H - Ht) * min(step, abs(H - Ht))
        try:
            al = _contour_newton(al.copy(), t, w, eta, H_try, tol=tol)
        except ContinuationError:
            halvings += 1
            step /= 2
            if halvings > 14:
                raise ContinuationError(f"field continuation failed near H={Ht:.4g}")
            continue
        Ht = H_try

    clearance = _pole_clearance(al, eta)
    if clearance < 0.05:
        raise ContinuationError(
            f"contour approaches a kernel pole (clearance {clearance:.3f}); "
            "deform or reduce |H|")

    bw = barycentric_weights(t)
    D = differentiation_matrix(t, bw)
    aprime = D @ al
    B_guess = barycentric_eval(t, bw, al, q / 2)
    A_guess = barycentric_eval(t, bw, al, -q / 2)
    B, rho_B = _endpoint(al, w, eta, H, q / 2, B_guess)
    A, rho_A = _endpoint(al, w, eta, H, -q / 2, A_guess)
    return ContourSolution(q=q, H=H, eta=eta, M=M_nodes, nodes_t=t, weights_t=w,
                           alpha=al, alpha_prime=aprime, A=A, B=B,
                           rho_A=rho_A, rho_B=rho_B, bary_w=bw, diff_mat=D)


# ---------------------------------------------------------------------------
# Fredholm layer
# ---------------------------------------------------------------------------

@dataclass
class ResolventData:
    """Nystrom solutions of the auxiliary integral equations on a contour.

    All equations share the operator I + K/2pi; rows are collocation points
    alpha_i, integrals use the contour weights w_j alpha'_j.  Endpoint values
    come from the natural Nystrom extension.
    """

    contour: ContourSolution
    nystrom: np.ndarray
    R_matrix: np.ndarray          # R(alpha_i, alpha_j)
    R_at_B: np.ndarray
    R_at_A: np.ndarray
    F_at_B: np.ndarray            # F(alpha_i, B)
    F_at_A: np.ndarray
    D_minus: np.ndarray
    D_plus: np.ndarray
    Dm_A: complex
    Dm_B: complex
    Dp_A: complex
    Dp_B: complex
    condition: float
    _lu: tuple = field(repr=False)
    xi_cache: dict = field(default_factory=dict, repr=False)

    def solve(self, rhs):
        """Apply (I + K/2pi)^{-1} to right-hand-side columns at the nodes."""
        return lu_solve(self._lu, rhs)

    def extend(self, sol, rhs_fn, z):
        """Nystrom extension of a solved equation to an off-node point z."""
        c = self.contour
        Kv = kernels.kernel_K(z - c.alpha, c.eta)
        return rhs_fn(z) - (Kv * c.contour_weights) @ sol / (2 * PI)

    def f_nodes(self):
        """F(alpha_i, gamma_j) for gamma at all nodes."""
        c = self.contour
        TH = kernels.theta_eval(c.alpha[:, None] - c.alpha[None, :], c.eta)
        return self.solve(TH / (2 * PI))


def solve_resolvent(contour, cond_limit=1e10):
    """Build the resolvent bundle: R, F(., A/B), D_-, D_+ and endpoint values."""
    c = contour
    K = kernels.kernel_K(c.alpha[:, None] - c.alpha[None, :], c.eta)
    Mny = np.eye(c.M) + K * c.contour_weights[None, :] / (2 * PI)
    cond = float(np.linalg.cond(Mny))
    if cond > cond_limit:
        raise ResolutionError(
            f"Nystrom matrix condition {cond:.2e} exceeds {cond_limit:.0e}; "
            "increase the node count")
    lu = lu_factor(Mny)

    th_B = kernels.theta_eval(c.alpha - c.B, c.eta)
    th_A = kernels.theta_eval(c.alpha - c.A, c.eta)
    K_B = kernels.kernel_K(c.alpha - c.B, c.eta)
    K_A = kernels.kernel_K(c.alpha - c.A, c.eta)

    R_matrix = lu_solve(lu, -K / (2 * PI))
    R_at_B = lu_solve(lu, -K_B / (2 * PI))
    R_at_A = lu_solve(lu, -K_A / (2 * PI))
    F_at_B = lu_solve(lu, th_B / (2 * PI))
    F_at_A = lu_solve(lu, th_A / (2 * PI))
    D_minus = lu_solve(lu, np.full(c.M, 1 / (2 * PI), dtype=complex))
    D_plus = lu_solve(lu, (th_B + th_A) / (2 * PI))

    res = ResolventData(contour=c, nystrom=Mny, R_matrix=R_matrix,
                        R_at_B=R_at_B, R_at_A=R_at_A,
                        F_at_B=F_at_B, F_at_A=F_at_A,
                        D_minus=D_minus, D_plus=D_plus,
                        Dm_A=0j, Dm_B=0j, Dp_A=0j, Dp_B=0j,
                        condition=cond, _lu=lu)
    const_rhs = lambda z: 1 / (2 * PI)
    dp_rhs = lambda z: (kernels.theta_eval(z - c.B, c.eta)
                        + kernels.theta_eval(z - c.A, c.eta)) / (2 * PI)
    res.Dm_B = complex(res.extend(D_minus, const_rhs, c.B))
    res.Dm_A = complex(res.extend(D_minus, const_rhs, c.A))
    res.Dp_B = complex(res.extend(D_plus, dp_rhs, c.B))
    res.Dp_A = complex(res.extend(D_plus, dp_rhs, c.A))
    return res


# ---------------------------------------------------------------------------
# driving functions and density integrals
# ---------------------------------------------------------------------------

@dataclass
class DrivingFunction:
    """A scalar function along the contour with branch-consistent values.

    values carry the reflection-symmetric branch (imaginary part vanishing
    at the contour midpoint), so density integrals of conjugation-symmetric
    functions come out real.  Derivative values are branch-free.
    """

    label: str
    values: np.ndarray
    deriv: np.ndarray
    f_A: complex
    f_B: complex
    fp_A: complex
    fp_B: complex


def make_psi_driving(contour, u, sign):
    """psi_pm(alpha + iu) along the contour with the symmetric branch."""
    c = contour
    z = c.alpha + 1j * u
    raw = np.log(kernels.psi_ratio(z, sign, c.eta))
    vals, _ = kernels.unwrap_imag(raw)
    fB = np.log(kernels.psi_ratio(c.B + 1j * u, sign, c.eta))
    fB -= 2j * PI * np.round((fB.imag - vals[-1].imag) / (2 * PI))
    fA = np.log(kernels.psi_ratio(c.A + 1j * u, sign, c.eta))
    fA -= 2j * PI * np.round((fA.imag - vals[0].imag) / (2 * PI))
    anchor = barycentric_eval(c.nodes_t, c.bary_w, np.imag(vals), 0.0)
    vals = vals - 1j * anchor
    fA -= 1j * anchor
    fB -= 1j * anchor
    return DrivingFunction(
        label=f"psi{'+' if sign > 0 else '-'}(u={u:.6g})",
        values=vals,
        deriv=kernels.psi_prime(z, sign, c.eta),
        f_A=complex(fA), f_B=complex(fB),
        fp_A=complex(kernels.psi_prime(c.A + 1j * u, sign, c.eta)),
        fp_B=complex(kernels.psi_prime(c.B + 1j * u, sign, c.eta)))


def density_integral(f, contour):
    """int_C f rho dalpha as the plain t-quadrature sum_i w_i f(alpha_i).

    f may be a callable or an array of node values.  Callable values are
    branch-checked: successive samples must differ by less than pi.
    """
    if callable(f):
        vals = np.asarray(f(contour.alpha), dtype=complex)
        step = np.max(np.abs(np.diff(vals))) if len(vals) > 1 else 0.0
        if step >= PI:
            raise BranchJumpError(
                f"driving function jumps by {step:.3f} >= pi between nodes")
    elif isinstance(f, DrivingFunction):
        vals = f.values
    else:
        vals = np.asarray(f, dtype=complex)
    return complex(np.sum(contour.weights_t * vals))


def xi_pair(res, f):
    """Endpoint functionals (xi, xi~) of a driving function.

    xi  = 2 pi i (f'(B) + int_C f'(a) R(a, B) da)
    xi~ = 2 pi i (f'(A) + int_C f'(a) R(a, A) da)
    """
    key = f.label if isinstance(f, DrivingFunction) else None
    if key is not None and key in res.xi_cache:
        return res.xi_cache[key]
    c = res.contour
    cw = c.contour_weights
    xi = 2j * PI * (f.fp_B + np.sum(cw * f.deriv * res.R_at_B))
    xit = 2j * PI * (f.fp_A + np.sum(cw * f.deriv * res.R_at_A))
    out = (complex(xi), complex(xit))
    if key is not None:
        res.xi_cache[key] = out
    return out


# ---------------------------------------------------------------------------
# free energy and derivatives
# ---------------------------------------------------------------------------

@dataclass
class FreeEnergyPoint:
    u: float
    q: float
    H: float
    value: float
    branch: str                   # "+" or "-"
    tie: bool = False
    d1: tuple = None              # (F_1, F_2) = (d/dq, d/dH)
    d2: tuple = None              # (F_11, F_12, F_22, F_13, F_23); 3 = d/du
    imag_residual: float = 0.0

    def flat_record(self):
        rec = {"u": self.u, "q": self.q, "H": self.H,
               "value": self.value, "branch": self.branch}
        if self.d1 is not None:
            rec.update(F1=self.d1[0], F2=self.d1[1])
        if self.d2 is not None:
            rec.update(F11=self.d2[0], F12=self.d2[1], F22=self.d2[2],
                       F13=self.d2[3], F23=self.d2[4])
        return rec


@functools.lru_cache(maxsize=512)
def _pipeline(q, H, eta, M):
    c = solve_contour(q, H, eta, M_nodes=M)
    return c, solve_resolvent(c)


def clear_cache():
    _pipeline.cache_clear()


def _branch_values(c, u):
    out = {}
    for sign in (+1, -1):
        f = make_psi_driving(c, u, sign)
        g = density_integral(f, c)
        out[sign] = (sign * c.H + kernels.l_pm(u, sign, c.eta) + g, f)
    return out


def _select_branch(c, u):
    vals = _branch_values(c, u)
    vp, vm = vals[+1][0], vals[-1][0]
    tie = abs(vp.real - vm.real) < TIE_TOL * max(1.0, abs(vp.real))
    sign = +1 if (vp.real >= vm.real or tie) else -1
    return sign, vals[sign], tie, max(abs(vp.imag), abs(vm.imag))


def free_energy(u, q, H, params, M=128):
    """Per-site free energy F_u(q, H); both branches evaluated, max returned."""
    eta = kernels._eta_of(params)
    if not (0.0 < q < 1.0):
        raise DomainError(f"filling q={q} outside (0, 1)")
    if q > 0.5:
        pt = free_energy(u, 1.0 - q, -H, eta, M=M)
        return FreeEnergyPoint(u=u, q=q, H=H, value=pt.value, branch=pt.branch,
                               tie=pt.tie, imag_residual=pt.imag_residual)
    c, _ = _pipeline(q, H, eta, M)
    sign, (val, _f), tie, imag = _select_branch(c, u)
    return FreeEnergyPoint(u=u, q=q, H=H, value=float(val.real),
                           branch="+" if sign > 0 else "-", tie=tie,
                           imag_residual=float(imag))


def first_derivs(u, q, H, params, M=128):
    """(dF/dq, dF/dH) from the dressed-density closed forms."""
    eta = kernels._eta_of(params)
    if q > 0.5:
        g1, g2 = first_derivs(u, 1.0 - q, -H, eta, M=M)
        return -g1, -g2
    c, res = _pipeline(q, H, eta, M)
    sign, (_val, f), _tie, _ = _select_branch(c, u)
    cw = c.contour_weights
    gH = -2j * np.sum(cw * f.deriv * res.D_minus)
    gq = 0.5 * (f.f_B + f.f_A) + 0.5 * np.sum(cw * f.deriv * res.D_plus)
    F1, F2 = gq, sign * 1.0 + gH
    return float(F1.real), float(F2.real)


def _second_derivs_direct(c, res, f):
    xi, xit = xi_pair(res, f)
    DmB, DmA = res.Dm_B, res.Dm_A
    DpB, DpA = res.Dp_B, res.Dp_A
    rB, rA = c.rho_B, c.rho_A
    gHH = (2j / PI) * (DmB ** 2 * xi / rB - DmA ** 2 * xit / rA)
    gHq = -(1 / (2 * PI)) * ((1 + DpB) * DmB * xi / rB + (1 - DpA) * DmA * xit / rA)
    gqq = -(1j / (8 * PI)) * ((1 + DpB) ** 2 * xi / rB - (1 - DpA) ** 2 * xit / rA)
    gHu = -(1j / PI) * (DmB * xi - DmA * xit)
    gqu = (1 / (4 * PI)) * ((1 + DpB) * xi + (1 - DpA) * xit)
    return gqq, gHq, gHH, gqu, gHu


def second_derivs(u, q, H, params, M=128, imag_tol=1e-7):
    """(F_11, F_12, F_22, F_13, F_23); indices (1, 2, 3) = (q, H, u)."""
    eta = kernels._eta_of(params)
    if q > 0.5:
        h11, h12, h22, h13, h23 = second_derivs(u, 1.0 - q, -H, eta, M=M)
        return h11, h12, h22, -h13, -h23
    c, res = _pipeline(q, H, eta, M)
    sign, (_val, f), _tie, _ = _select_branch(c, u)
    if abs(c.rho_B) < 1e-8:
        raise DomainError(
            f"endpoint density |rho(B)| = {abs(c.rho_B):.2e} vanishes; "
            "the point sits at the boundary of the smooth regime")
    vals = _second_derivs_direct(c, res, f)
    scale = max(1.0, max(abs(v) for v in vals))
    imag = max(abs(v.imag) for v in vals)
    if imag > imag_tol * scale:
        raise ResolutionError(
            f"second derivatives have imaginary residue {imag:.2e}; "
            "increase the node count")
    return tuple(float(v.real) for v in vals)


def free_energy_full(u, q, H, params, M=128):
    """FreeEnergyPoint with value, first and second derivatives populated."""
    pt = free_energy(u, q, H, params, M=M)
    pt.d1 = first_derivs(u, q, H, params, M=M)
    pt.d2 = second_derivs(u, q, H, params, M=M)
    return pt


# ---------------------------------------------------------------------------
# variation-law predictions (used by consistency tests)
# ---------------------------------------------------------------------------

def t_variation(res):
    """Coefficients of dt(alpha) = 2i D_-(alpha) dH - (1/2) D_+(alpha) dq."""
    return 2j * res.D_minus, -0.5 * res.D_plus


def endpoint_variation(res):
    """Endpoint responses dB/dH, dB/dq, dA/dH, dA/dq."""
    c = res.contour
    dB_dH = -2j * res.Dm_B / c.rho_B
    dB_dq = (1 + res.Dp_B) / (2 * c.rho_B)
    dA_dH = -2j * res.Dm_A / c.rho_A
    dA_dq = -(1 - res.Dp_A) / (2 * c.rho_A)
    return {"dB_dH": dB_dH, "dB_dq": dB_dq, "dA_dH": dA_dH, "dA_dq": dA_dq}
