import numpy as np
import pytest

from sixvertex import bethe, thermo, xfer
from sixvertex.kernels import ModelParams

ETA, U = 1.0, 0.4


def test_ground_state_numbers():
    assert bethe.ground_state_numbers(3) == [1.0, 0.0, -1.0]
    assert bethe.ground_state_numbers(2) == [0.5, -0.5]
    assert bethe.ground_state_numbers(0) == []


def test_single_root_free_case():
    p = ModelParams(eta=ETA, u=U)
    sol = bethe.solve_bethe(2, 1, p)
    assert abs(sol.roots[0]) < 1e-14
    assert sol.residual < 1e-12


def test_roots_real_symmetric_at_zero_field():
    p = ModelParams(eta=ETA, u=U)
    sol = bethe.solve_bethe(10, 5, p)
    assert np.max(np.abs(sol.roots.imag)) < 1e-12
    r = np.sort(sol.roots.real)
    assert np.max(np.abs(r + r[::-1])) < 1e-10


def test_reflection_symmetry_with_field():
    p = ModelParams(eta=ETA, u=U, H=0.07)
    sol = bethe.solve_bethe(8, 4, p)
    assert sol.reflection_residual() < 1e-8


def test_product_form_cross_check():
    p = ModelParams(eta=ETA, u=U, H=0.05,
                    v_list=[0.02 * np.sin(2 * np.pi * k / 6) for k in range(6)])
    sol = bethe.solve_bethe(6, 3, p)
    assert bethe.product_form_residual(sol) < 1e-11


def test_newton_quadratic_tail():
    p = ModelParams(eta=ETA, u=U)
    sol = bethe.solve_bethe(8, 4, p)
    r = [x for x in sol.newton_residuals if x > 0]
    # once inside the basin, one step collapses the residual quadratically
    idx = next(i for i, x in enumerate(r) if x < 1e-4)
    assert r[idx + 1] < 50 * r[idx] ** 2 + 1e-15


def test_eigenvalue_empty_sector():
    N, H = 4, 0.06
    v = (0.01, -0.02, 0.015, 0.0)
    p = ModelParams(eta=ETA, u=U, H=H, v_list=v)
    sol = bethe.solve_bethe(N, 0, p)
    lam = bethe.eigenvalue(sol, U)
    expect = (np.exp(N * H) * np.prod([np.sinh(ETA - U + vk) for vk in v])
              + np.exp(-N * H) * np.prod([np.sinh(U - vk) for vk in v]))
    assert lam.real == pytest.approx(expect, rel=1e-13)
    assert abs(lam.imag) < 1e-14


def test_eigenvalue_matches_transfer_homogeneous():
    p = ModelParams(eta=ETA, u=U)
    sol = bethe.solve_bethe(4, 2, p)
    lam = bethe.eigenvalue(sol, U)
    lam_x, _ = xfer.top_eigenvalue(xfer.SectorOperator(4, 2, p), U)
    assert abs(lam.imag) < 1e-12 * abs(lam)
    assert lam.real == pytest.approx(lam_x, rel=1e-10)


def test_eigenvalue_matches_transfer_inhomogeneous():
    N, n = 6, 3
    v = [0.02 * np.sin(2 * np.pi * k / N) for k in range(N)]
    p = ModelParams(eta=ETA, u=U, H=0.05, v_list=v)
    sol = bethe.solve_bethe(N, n, p)
    lam = bethe.eigenvalue(sol, U)
    lam_x, _ = xfer.top_eigenvalue(xfer.SectorOperator(N, n, p), U)
    assert abs(lam - lam_x) / abs(lam_x) < 1e-9


def test_shared_roots_two_spectral_parameters():
    # commuting t(u), t(w) share eigenvectors: one root set serves both
    N, n = 6, 3
    v = [0.03 * np.cos(2 * np.pi * k / N) for k in range(N)]
    p = ModelParams(eta=ETA, u=U, H=0.04, v_list=v)
    sol = bethe.solve_bethe(N, n, p)
    for w in (0.3, 0.55):
        lam = bethe.eigenvalue(sol, w)
        lam_x, _ = xfer.top_eigenvalue(xfer.SectorOperator(N, n, p), w)
        assert abs(lam - lam_x) / abs(lam_x) < 1e-9


def test_free_energy_trend():
    p = ModelParams(eta=ETA, u=U)
    fe = thermo.free_energy(U, 0.5, 0.0, ETA, M=96).value
    gaps = []
    for N in (4, 6, 8):
        sol = bethe.solve_bethe(N, N // 2, p)
        lam = bethe.eigenvalue(sol, U).real
        gaps.append(abs(np.log(lam) / N - fe))
    assert gaps[0] > gaps[1] > gaps[2]
