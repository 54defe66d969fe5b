"""Special functions of the six-vertex model in the antiferroelectric regime.

Weights are parametrized as a = sinh(eta - u), b = sinh(u), c = sinh(eta)
with 0 < u < eta, so the anisotropy is Delta = -cosh(eta) < -1.  This module
collects the bare-kernel layer: the momentum function p, the two-particle
scattering phase Theta and its derivative K, the eigenvalue factors psi_pm,
and the vertex R-matrix.  All logarithms are continuous branches anchored at
p(0) = Theta(0) = 0; closed forms are used for every derivative.

Branch handling exploits quasi-periodicity: p(z + pi) = p(z) + 2*pi and
Theta(z + pi) = Theta(z) + 2*pi, so an argument is first reduced to the strip
|Re z| <= pi/2 where the principal logarithm of the sinh ratio is continuous.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BranchJumpError, DomainError, SingularityError

PI = np.pi
_POLE_TOL = 1e-12


def _eta_of(params) -> float:
    """Accept ModelParams or a bare eta value."""
    return params.eta if hasattr(params, "eta") else float(params)


@dataclass(frozen=True)
class ModelParams:
    """Model parameters for the Delta < -1 window.

    eta    : Baxter parameter, eta > 0 (Delta = -cosh eta)
    u      : spectral parameter, 0 < u < eta
    H, V   : horizontal / vertical fields
    v_list : per-column spectral shifts v_k
    u_list : per-row spectral shifts u_i
    """

    eta: float
    u: float
    H: float = 0.0
    V: float = 0.0
    v_list: tuple = ()
    u_list: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "v_list", tuple(float(v) for v in self.v_list))
        object.__setattr__(self, "u_list", tuple(float(w) for w in self.u_list))
        self.validate()

    def validate(self):
        if not self.eta > 0:
            raise DomainError(f"eta must be positive, got {self.eta}")
        shifts = self.v_list if self.v_list else (0.0,)
        lo = self.u - max(shifts)
        hi = self.u - min(shifts)
        if not (0.0 < lo and hi < self.eta):
            raise DomainError(
                f"effective spectral arguments u - v_k must lie in (0, eta): "
                f"got range ({lo:.6g}, {hi:.6g}) with eta={self.eta}"
            )

    @property
    def a(self) -> float:
        return np.sinh(self.eta - self.u)

    @property
    def b(self) -> float:
        return np.sinh(self.u)

    @property
    def c(self) -> float:
        return np.sinh(self.eta)

    @property
    def delta(self) -> float:
        return delta_param(self.a, self.b, self.c)


def delta_param(a, b, c):
    """Anisotropy (a^2 + b^2 - c^2) / (2ab) of the symmetric six-vertex model."""
    if a <= 0 or b <= 0 or c <= 0:
        raise DomainError(f"weights must be positive, got a={a}, b={b}, c={c}")
    return (a * a + b * b - c * c) / (2.0 * a * b)


def _check_poles(den, what):
    if np.any(np.abs(den) < _POLE_TOL):
        raise SingularityError(f"{what} evaluated at a pole of its logarithm")


def _strip_reduce(z):
    """Shift z by a multiple of pi into |Re z| <= pi/2; return (z0, m)."""
    z = np.asarray(z, dtype=complex)
    m = np.round(np.real(z) / PI)
    return z - m * PI, m


def p_eval(alpha, params):
    """Momentum function: exp(i p(a)) = sinh(eta/2 + ia) / sinh(eta/2 - ia).

    Continuous branch with p(0) = 0; odd and real on the real axis.
    """
    eta = _eta_of(params)
    a0, m = _strip_reduce(alpha)
    num = np.sinh(eta / 2 + 1j * a0)
    den = np.sinh(eta / 2 - 1j * a0)
    _check_poles(den, "p")
    _check_poles(num, "p")
    return 2 * PI * m - 1j * np.log(num / den)


def p_prime(alpha, params):
    """dp/da in closed form: sinh(eta) / (sinh(eta/2 + ia) sinh(eta/2 - ia))."""
    eta = _eta_of(params)
    alpha = np.asarray(alpha, dtype=complex)
    den = np.sinh(eta / 2 + 1j * alpha) * np.sinh(eta / 2 - 1j * alpha)
    _check_poles(den, "p'")
    return np.sinh(eta) / den


def theta_eval(gamma, params):
    """Scattering phase: exp(i Theta(g)) = -sinh(ig + eta) / sinh(ig - eta).

    Continuous branch with Theta(0) = 0; odd, real on the real axis, and
    quasi-periodic: Theta(g + pi) = Theta(g) + 2*pi.
    """
    eta = _eta_of(params)
    g0, m = _strip_reduce(gamma)
    num = np.sinh(eta + 1j * g0)
    den = np.sinh(eta - 1j * g0)
    _check_poles(den, "Theta")
    _check_poles(num, "Theta")
    return 2 * PI * m - 1j * np.log(num / den)


def kernel_K(gamma, params):
    """K = Theta' in closed form: sinh(2 eta) / (sinh(eta + ig) sinh(eta - ig))."""
    eta = _eta_of(params)
    gamma = np.asarray(gamma, dtype=complex)
    den = np.sinh(eta + 1j * gamma) * np.sinh(eta - 1j * gamma)
    _check_poles(den, "K")
    return np.sinh(2 * eta) / den


def psi_ratio(z, sign, params):
    """The ratio whose logarithm is psi_pm, at combined argument z = a + iu.

    sign=+1: sinh(eta/2 + u - ia) / sinh(eta/2 - u + ia)
    sign=-1: sinh(3 eta/2 - u + ia) / sinh(u - eta/2 - ia)
    written in terms of z via  u - ia = -i z.
    """
    eta = _eta_of(params)
    z = np.asarray(z, dtype=complex)
    if sign > 0:
        num = np.sinh(eta / 2 - 1j * z)
        den = np.sinh(eta / 2 + 1j * z)
    else:
        num = np.sinh(3 * eta / 2 + 1j * z)
        den = np.sinh(-eta / 2 - 1j * z)
    _check_poles(den, "psi")
    return num / den


def psi_pm(z, sign, params):
    """Principal-branch logarithm of psi_ratio.

    Satisfies psi(z)* = psi(-z*) away from the cut.  For evaluation along a
    contour use BranchedFunctions.psi_along, which unwraps the branch.
    """
    return np.log(psi_ratio(z, sign, params))


def psi_prime(z, sign, params):
    """d psi_pm / da at z = a + iu, in closed form.

    sign=+1: -2i sinh(eta) / (cosh(eta) - cosh(-2iz))
    sign=-1: +2i sinh(eta) / (cosh(eta) - cosh(2 eta + 2iz))
    """
    eta = _eta_of(params)
    z = np.asarray(z, dtype=complex)
    if sign > 0:
        den = np.cosh(eta) - np.cosh(-2j * z)
        _check_poles(den, "psi'")
        return -2j * np.sinh(eta) / den
    den = np.cosh(eta) - np.cosh(2 * eta + 2j * z)
    _check_poles(den, "psi'")
    return 2j * np.sinh(eta) / den


def l_pm(u, sign, params):
    """Reference free-energy constants: l+ = ln sinh(eta-u), l- = ln sinh(u)."""
    eta = _eta_of(params)
    arg = eta - u if sign > 0 else u
    if arg <= 0:
        raise DomainError(f"l_pm argument sinh({arg}) not positive")
    return np.log(np.sinh(arg))


def field_matrix(H):
    """Edge-field factor diag(e^{H/2}, e^{-H/2})."""
    return np.diag([np.exp(H / 2.0), np.exp(-H / 2.0)])


def r_matrix(u, H, V, params):
    """Vertex weight matrix on C^2 x C^2 in the basis (11, 12, 21, 22).

    [[a e^{H+V}, 0,          0,          0         ],
     [0,         b e^{H-V},  c,          0         ],
     [0,         c,          b e^{-H+V}, 0         ],
     [0,         0,          0,          a e^{-H-V}]]

    Factorizes as (D^H x D^V) R(u) (D^H x D^V).
    """
    eta = _eta_of(params)
    if not (0 < u < eta):
        raise DomainError(f"spectral parameter u={u} outside (0, eta={eta})")
    a, b, c = np.sinh(eta - u), np.sinh(u), np.sinh(eta)
    R = np.zeros((4, 4))
    R[0, 0] = a * np.exp(H + V)
    R[1, 1] = b * np.exp(H - V)
    R[2, 2] = b * np.exp(-H + V)
    R[3, 3] = a * np.exp(-H - V)
    R[1, 2] = R[2, 1] = c
    return R


def unwrap_imag(values, jump=2 * PI):
    """Remove integer multiples of `jump` from Im(values) along an ordered list."""
    values = np.asarray(values, dtype=complex)
    d = np.diff(np.imag(values))
    shifts = np.concatenate([[0.0], np.cumsum(np.round(d / jump))])
    return values - 1j * jump * shifts, shifts


@dataclass
class BranchedFunctions:
    """Branch-tracked evaluation of p, Theta and psi_pm along ordered contours.

    Continuity threshold: successive values along a supplied point list must
    differ by less than pi, otherwise the sampling is too coarse to identify
    the branch and a BranchJumpError is raised.  Winding counters of the last
    evaluation are kept for inspection.
    """

    eta: float
    max_step: float = PI
    windings: dict = field(default_factory=dict)

    def _guard(self, vals, name):
        step = np.max(np.abs(np.diff(vals))) if len(vals) > 1 else 0.0
        if step >= self.max_step:
            raise BranchJumpError(
                f"{name}: successive branch-tracked values jump by {step:.3f} >= pi; "
                "refine the contour sampling"
            )

    def p_along(self, points):
        vals = p_eval(np.asarray(points, dtype=complex), self.eta)
        self._guard(vals, "p")
        self.windings["p"] = np.round(np.real(points) / PI)
        return vals

    def theta_along(self, points):
        vals = theta_eval(np.asarray(points, dtype=complex), self.eta)
        self._guard(vals, "Theta")
        self.windings["Theta"] = np.round(np.real(points) / PI)
        return vals

    def psi_along(self, points, sign):
        """Continuous branch of psi_pm along an ordered point list.

        The branch is anchored so the first point carries the principal value;
        use thermo's driving-function builder for the reflection-symmetric
        anchoring required by density integrals.
        """
        raw = np.log(psi_ratio(np.asarray(points, dtype=complex), sign, self.eta))
        vals, shifts = unwrap_imag(raw)
        self._guard(vals, "psi")
        self.windings["psi%+d" % sign] = shifts
        return vals
