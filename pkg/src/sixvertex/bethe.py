"""Bethe root solver in logarithmic form, with eigenvalue assembly.

The n roots alpha_j of the width-N chain satisfy

    (1/N) sum_k p(alpha_j + i v_k)
        = -2iH + 2 pi I_j / N + (1/N) sum_{m != j} Theta(alpha_j - alpha_m)

with half-integer quantum numbers I_j for even n and integers for odd n.
The sector ground state uses the symmetric string I_j = (n + 1 - 2j)/2.
Solutions are obtained by Newton iteration with an analytic Jacobian,
continued from the free point H = 0, v = 0 where the decoupled guess
alpha_j = arctan(tanh(eta/2) tan(pi I_j / N)) is exact up to interactions.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContinuationError, DegenerateRootsError, DomainError, SingularityError
from .kernels import ModelParams

PI = np.pi


def ground_state_numbers(n):
    """Symmetric quantum-number string (n+1-2j)/2, j = 1..n."""
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")
    return [(n + 1 - 2 * j) / 2.0 for j in range(1, n + 1)]


@dataclass
class BetheSolution:
    N: int
    n: int
    roots: np.ndarray
    quantum_numbers: list
    residual: float
    params: ModelParams
    newton_residuals: list = field(default_factory=list)

    def min_root_distance(self):
        if self.n < 2:
            return np.inf
        d = np.abs(self.roots[:, None] - self.roots[None, :])
        np.fill_diagonal(d, np.inf)
        return float(np.min(d))

    def reflection_residual(self):
        """Distance of the root set from its image under a -> -conj(a)."""
        img = -np.conj(self.roots)
        d = np.abs(self.roots[:, None] - img[None, :])
        return float(np.max(np.min(d, axis=1)))


def log_residual(roots, N, n, params, H=None, v=None):
    """Residual vector of the logarithmic Bethe system."""
    eta = params.eta
    H = params.H if H is None else H
    v = (params.v_list or (0.0,) * N) if v is None else v
    I = np.array(ground_state_numbers(n))
    vv = np.asarray(v, dtype=float)
    parg = roots[:, None] + 1j * vv[None, :]
    G = np.mean(kernels.p_eval(parg, eta), axis=1) + 2j * H - 2 * PI * I / N
    TH = kernels.theta_eval(_offdiag(roots), eta)
    G -= np.sum(TH, axis=1) / N
    return G


def _offdiag(roots):
    """Pairwise differences with exact zeros on the diagonal."""
    d = roots[:, None] - roots[None, :]
    np.fill_diagonal(d, 0.0)
    return d


def _jacobian(roots, N, params, v):
    eta = params.eta
    vv = np.asarray(v, dtype=float)
    diag = np.mean(kernels.p_prime(roots[:, None] + 1j * vv[None, :], eta), axis=1)
    KM = kernels.kernel_K(_offdiag(roots), eta)
    np.fill_diagonal(KM, 0.0)  # Theta(0) is a constant, no self-interaction term
    J = KM / N
    J[np.diag_indices_from(J)] = diag - np.sum(KM, axis=1) / N
    return J


def _newton(roots, N, n, params, H, v, tol, history, max_iter=60):
    for _ in range(max_iter):
        G = log_residual(roots, N, n, params, H=H, v=v)
        r = float(np.max(np.abs(G)))
        history.append(r)
        if r < tol:
            return roots
        if not np.isfinite(r):
            raise ContinuationError("Bethe residual diverged")
        J = _jacobian(roots, N, params, v)
        roots = roots - np.linalg.solve(J, G)
    raise ContinuationError(f"Newton stalled at residual {r:.3e}")


def solve_bethe(N, n, params, tol=1e-12, max_ramp_steps=10):
    """Ground-state Bethe roots for the (N, n) sector.

    Continuation path: solve at H = 0, v = 0 first, then ramp the pair
    (H, {v_k}) toward the target in at most `max_ramp_steps` segments,
    halving a segment on Newton failure.
    """
    if n > N:
        raise DomainError(f"n={n} exceeds N={N}")
    I = np.array(ground_state_numbers(n))
    roots = np.arctan(np.tanh(params.eta / 2) * np.tan(PI * I / N)).astype(complex)
    history = []
    v_target = np.asarray(params.v_list or (0.0,) * N, dtype=float)
    if n > 0:
        roots = _newton(roots, N, n, params, 0.0, np.zeros(N), tol, history)
        lam = 1.0 if (params.H == 0.0 and not np.any(v_target)) else 0.0
        step = 1.0 / max_ramp_steps
        halvings = 0
        while lam < 1.0 - 1e-15:
            lam_try = min(1.0, lam + step)
            try:
                roots_try = _newton(roots.copy(), N, n, params,
                                    lam_try * params.H, lam_try * v_target, tol, history)
            except ContinuationError:
                halvings += 1
                step /= 2
                if halvings > 12:
                    raise ContinuationError(
                        f"continuation failed near H={lam * params.H:.4g}")
                continue
            roots, lam = roots_try, lam_try
    sol = BetheSolution(N=N, n=n, roots=roots, quantum_numbers=list(I),
                        residual=float(np.max(np.abs(
                            log_residual(roots, N, n, params)))) if n else 0.0,
                        params=params, newton_residuals=history)
    if n >= 2:
        d = np.abs(_offdiag(roots))
        np.fill_diagonal(d, np.inf)
        if np.min(d) < 1e-8:
            raise DegenerateRootsError(f"root collision, min distance {np.min(d):.2e}")
    return sol


def product_form_residual(sol):
    """Max deviation of the exponentiated Bethe system from 1 (cross-check)."""
    if sol.n == 0:
        return 0.0
    eta = sol.params.eta
    N, H = sol.N, sol.params.H
    v = np.asarray(sol.params.v_list or (0.0,) * N, dtype=float)
    worst = 0.0
    for j, aj in enumerate(sol.roots):
        lhs = np.prod(np.sinh(eta / 2 + 1j * aj - v) / np.sinh(eta / 2 - 1j * aj + v))
        rhs = np.exp(2 * H * N)
        for m, am in enumerate(sol.roots):
            if m != j:
                rhs *= np.sinh(1j * (aj - am) + eta) / np.sinh(1j * (aj - am) - eta)
        worst = max(worst, abs(lhs / rhs - 1.0))
    return float(worst)


def eigenvalue(sol, u):
    """Transfer eigenvalue assembled from the root set at spectral parameter u.

    Lambda = e^{NH} prod_k sinh(eta - u + v_k) prod_j e^{psi+(a_j + iu)}
           + e^{-NH} prod_k sinh(u - v_k)     prod_j e^{psi-(a_j + iu)}
    """
    p = sol.params
    N, H, eta = sol.N, p.H, p.eta
    v = np.asarray(p.v_list or (0.0,) * N, dtype=float)
    zs = sol.roots + 1j * u
    try:
        rp = kernels.psi_ratio(zs, +1, eta)
        rm = kernels.psi_ratio(zs, -1, eta)
    except SingularityError as exc:
        raise SingularityError(
            f"spectral parameter u={u} collides with a Bethe root") from exc
    lam_p = np.exp(N * H) * np.prod(np.sinh(eta - u + v)) * np.prod(rp)
    lam_m = np.exp(-N * H) * np.prod(np.sinh(u - v)) * np.prod(rm)
    return lam_p + lam_m
