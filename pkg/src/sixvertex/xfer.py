"""Finite-size transfer matrix as a matrix-free operator on a fixed-n sector.

The row-to-row transfer operator t(u, {v_k}, H, V=0) acts on occupation
states of N vertical edges and conserves the number n of occupied edges
(ice rule).  Vertex weights at column k use the shifted spectral parameter
u - v_k.  Horizontal-edge field convention: the auxiliary line contributes
e^{+H} per column while unoccupied and e^{-H} while occupied, which makes
the empty sector eigenvalue equal to

    e^{N H} prod_k a(u - v_k) + e^{-N H} prod_k b(u - v_k),

matching the Bethe eigenvalue formula with no roots.  The vertical field
only reweights sectors: a factor e^{M (N - 2n) V} per M rows.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConvergenceError, DomainError
from .kernels import ModelParams

_DENSE_LIMIT = 4096


def sector_basis(N, n):
    """Occupation bitmasks with n bits set, ascending (bit k = column k)."""
    masks = []
    for comb in combinations(range(N), n):
        m = 0
        for k in comb:
            m |= 1 << k
        masks.append(m)
    return np.array(sorted(masks), dtype=np.int64)


def _site_tensor(a_k, b_k, c, H):
    """W[h, s, h', s'] for one column; h is the auxiliary (horizontal) edge."""
    W = np.zeros((2, 2, 2, 2))
    W[0, 0, 0, 0] = a_k * np.exp(H)   # empty vertex
    W[1, 1, 1, 1] = a_k * np.exp(-H)  # fully occupied vertex
    W[1, 0, 1, 0] = b_k * np.exp(-H)  # horizontal line passes through
    W[0, 1, 0, 1] = b_k * np.exp(H)   # vertical line passes through
    W[1, 0, 0, 1] = c                 # corners
    W[0, 1, 1, 0] = c
    return W


@dataclass
class SectorOperator:
    """Transfer operator restricted to the n-particle sector of width N."""

    N: int
    n: int
    params: ModelParams

    def __post_init__(self):
        if not (0 <= self.n <= self.N):
            raise DomainError(f"sector n={self.n} outside 0..N={self.N}")
        v = self.params.v_list
        if v and len(v) != self.N:
            raise DomainError(f"need {self.N} inhomogeneities, got {len(v)}")
        self.basis = sector_basis(self.N, self.n)
        self.dim = len(self.basis)

    def site_weights(self, u):
        eta = self.params.eta
        v = self.params.v_list or (0.0,) * self.N
        a = np.array([np.sinh(eta - u + vk) for vk in v])
        b = np.array([np.sinh(u - vk) for vk in v])
        if np.any(a <= 0) or np.any(b <= 0):
            raise DomainError("effective spectral argument left (0, eta)")
        return a, b, np.sinh(eta)


def apply_transfer(state, u, op):
    """Apply t(u, {v_k}, H, 0) to a sector vector (or a stack of columns).

    Sequential contraction over columns with a two-dimensional auxiliary
    space; the 2^N x 2^N matrix is never formed.  Output support stays in
    the same sector.
    """
    state = np.asarray(state)
    single = state.ndim == 1
    if single:
        state = state[:, None]
    if state.shape[0] != op.dim:
        raise DomainError(f"state dimension {state.shape[0]} != C(N,n) = {op.dim}")
    nbatch = state.shape[1]
    a, b, c = op.site_weights(u)
    H = op.params.H
    N = op.N

    full = np.zeros((2 ** N, nbatch), dtype=state.dtype)
    full[op.basis, :] = state
    # amp[h0, h, cfg, batch]: h0 = auxiliary edge state at the seam (traced at the end)
    amp = np.zeros((2, 2, 2 ** N, nbatch), dtype=np.result_type(state.dtype, float))
    amp[0, 0] = full
    amp[1, 1] = full
    for k in range(N):
        W = _site_tensor(a[k], b[k], c, H)
        # split the flat cfg index around bit k (place value 2^k)
        shaped = amp.reshape(2, 2, 2 ** (N - 1 - k), 2, 2 ** k, nbatch)
        amp = np.einsum("hwcv,ghqwpn->gcqvpn", W, shaped,
                        optimize=True).reshape(2, 2, 2 ** N, nbatch)
    out_full = amp[0, 0] + amp[1, 1]
    out = out_full[op.basis, :]
    if single:
        return out[:, 0]
    return out


def dense_matrix(op, u, chunk=256):
    """Materialize the sector matrix column-by-column (desk-scale sizes)."""
    cols = []
    eye = np.eye(op.dim)
    for start in range(0, op.dim, chunk):
        block = eye[:, start:start + chunk]
        cols.append(apply_transfer(block, u, op))
    return np.hstack(cols)


def top_eigenvalue(op, u, tol=1e-12, max_iter=4000):
    """Dominant eigenvalue and eigenvector of the sector operator.

    Weights are positive for in-domain parameters, so the dominant
    eigenvalue is real and positive.  Small sectors use a dense solve;
    larger ones use power iteration with a Rayleigh-quotient stopping rule.
    """
    if op.dim <= _DENSE_LIMIT:
        T = dense_matrix(op, u)
        w, V = np.linalg.eig(T)
        i = np.argmax(w.real)
        lam = w[i]
        vec = V[:, i]
        vec = np.real(vec / vec[np.argmax(np.abs(vec))])
        return float(lam.real), vec / np.linalg.norm(vec)

    rng = np.random.default_rng(7)
    x = rng.standard_normal(op.dim)
    x = np.abs(x) + 0.1  # positive start aligns with the Perron vector
    x /= np.linalg.norm(x)
    lam_prev = None
    for _ in range(max_iter):
        y = apply_transfer(x, u, op)
        lam = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0:
            raise ConvergenceError("transfer application annihilated the vector")
        x = y / ny
        if lam_prev is not None and abs(lam - lam_prev) <= tol * abs(lam):
            return lam, x
        lam_prev = lam
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")


def sector_spectrum(op, u):
    """All eigenvalues of the sector operator (complex; dense solve)."""
    return np.linalg.eigvals(dense_matrix(op, u))


def torus_logZ(M, N, params, u=None):
    """ln Z on the M x N torus: sum of Lambda_i^M e^{M (N-2n) V} over all sectors.

    Stabilized by factoring out the largest exponent; complex eigenvalues
    enter in conjugate pairs so the result is real.
    """
    if N > 12:
        raise DomainError("torus spectrum limited to N <= 12")
    u = params.u if u is None else u
    V = params.V
    exps = []
    for n in range(N + 1):
        op = SectorOperator(N, n, params)
        lam = sector_spectrum(op, u)
        lam = lam[np.abs(lam) > 1e-300]
        exps.append(M * np.log(lam.astype(complex)) + M * (N - 2 * n) * V)
    w = np.concatenate(exps)
    shift = np.max(w.real)
    total = np.sum(np.exp(w - shift))
    if abs(total.imag) > 1e-8 * abs(total.real):
        raise ConvergenceError("torus partition sum has a non-negligible imaginary part")
    return float(shift + np.log(total.real))


def cyclic_shift_matrix(N, n):
    """Permutation matrix of the one-column cyclic shift on the sector basis."""
    basis = sector_basis(N, n)
    index = {int(m): i for i, m in enumerate(basis)}
    dim = len(basis)
    S = np.zeros((dim, dim))
    mask = (1 << N) - 1
    for i, m in enumerate(basis):
        shifted = ((int(m) << 1) & mask) | (int(m) >> (N - 1))
        S[index[shifted], i] = 1.0
    return S
