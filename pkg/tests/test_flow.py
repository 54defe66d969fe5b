import numpy as np
import pytest

from sixvertex import flow, thermo
from sixvertex.errors import ConvergenceError, DomainError, RegimeExitError
from sixvertex.flow import (ChebSurface3, FieldState, action_value, build_surface,
                            cheb_nodes, evolve, hamiltonian_value, make_dx,
                            minimize_action, pi_from_yslope, surface_tension)


def test_cheb_fit_roundtrip():
    box = ((0.0, 1.0), (-1.0, 1.0), (2.0, 3.0))
    f = lambda s, t, u: np.sin(3 * s) * np.exp(0.4 * t) + u ** 2 * s
    S, T, U = (cheb_nodes(14, *box[i]) for i in range(3))
    V = f(S[:, None, None], T[None, :, None], U[None, None, :])
    surf = ChebSurface3.fit(V, box)
    rng = np.random.default_rng(0)
    pts = rng.uniform([0, -1, 2], [1, 1, 3], size=(30, 3))
    err = np.abs(surf(pts[:, 0], pts[:, 1], pts[:, 2])
                 - f(pts[:, 0], pts[:, 1], pts[:, 2]))
    assert np.max(err) < 1e-12


def test_make_dx_accuracy():
    G, L = 64, 1.0
    x = np.arange(G) * L / G
    f = np.sin(2 * np.pi * x) + 0.3 * np.cos(4 * np.pi * x)
    fp = 2 * np.pi * np.cos(2 * np.pi * x) - 1.2 * np.pi * np.sin(4 * np.pi * x)
    errs = {k: np.max(np.abs(make_dx(G, L, k)(f) - fp))
            for k in ("spectral", "fd2", "fd4", "fd6")}
    assert errs["spectral"] < 1e-11
    assert errs["fd6"] < errs["fd4"] < errs["fd2"]


def test_surface_probe_accuracy(surf_eta1):
    assert surf_eta1.probe_errors["d1"] < 1e-5
    assert surf_eta1.probe_errors["d2"] < 1e-5
    assert surf_eta1.probe_errors["value"] < 1e-6
    assert surf_eta1.degrees[2] == 1  # degenerate u-range accepted


def test_surface_matches_thermo_reflection(surf_eta1):
    # reflected evaluation q -> 1-q, H -> -H agrees with the tabulated side
    s, t, u = 0.41, 0.05, 0.4
    direct = surf_eta1.value(s, t, u)
    reflected = thermo.free_energy(u, 1.0 - s, -t, 1.0, M=96).value
    assert direct == pytest.approx(reflected, abs=1e-9)


def test_surface_save_load(tmp_path, surf_eta1):
    path = tmp_path / "surf.npz"
    surf_eta1.save(path)
    loaded = flow.FreeEnergySurface.load(path)
    assert loaded.value(0.41, 0.03, 0.4) == pytest.approx(
        surf_eta1.value(0.41, 0.03, 0.4), abs=1e-14)
    assert loaded.eta == surf_eta1.eta


def test_surface_range_guard(surf_eta1):
    with pytest.raises(RegimeExitError):
        surf_eta1.value(0.6, 0.0, 0.4)


def test_build_surface_holes_abort():
    # any pipeline failure is a hole; holes are not tolerated
    with pytest.raises(ConvergenceError, match="hole"):
        build_surface(1.0, (0.46, 0.56), (-0.02, 0.02), (0.4, 0.4),
                      degrees=(4, 3, 1), M=64, n_probes=0)


def test_field_state_basics():
    G, L, q = 32, 1.0, 0.45
    x = np.arange(G) * L / G
    h = q * x / L + 1e-3 * np.sin(2 * np.pi * x)
    st = FieldState.from_height(h, np.zeros(G), L=L, q=q)
    assert np.max(np.abs(st.h - h)) < 1e-15
    dx = make_dx(G, L, "spectral")
    st.check_gradient(dx)
    bad = FieldState.from_height(1.2 * x, np.zeros(G), L=L, q=1.2)
    with pytest.raises(RegimeExitError):
        bad.check_gradient(dx)


def test_hamiltonian_value_constant_state(surf_eta35):
    G, L, q = 64, 1.0, 0.47
    x = np.arange(G) * L / G
    st = FieldState.from_height(q * x / L, np.full(G, 0.02), L=L, q=q)
    got = hamiltonian_value(st, 0.4, 0.05, surf_eta35)
    expect = L * thermo.free_energy(0.35, q, 0.02, 3.5, M=96).value
    assert got == pytest.approx(expect, abs=1e-9)


def test_hamiltonian_value_translation_invariance(surf_eta35):
    G, L, q = 64, 1.0, 0.47
    x = np.arange(G) * L / G
    h = q * x / L + 1e-3 * np.sin(2 * np.pi * x)
    pi = 0.01 * np.cos(2 * np.pi * x)
    st = FieldState.from_height(h, pi, L=L, q=q)
    v0 = hamiltonian_value(st, 0.4, 0.0, surf_eta35)
    shift = 13
    st2 = FieldState(L=L, q=q, htilde=np.roll(st.htilde, shift),
                     pi=np.roll(pi, shift))
    assert hamiltonian_value(st2, 0.4, 0.0, surf_eta35) == pytest.approx(v0, abs=1e-12)


def test_hamiltonian_value_grid_refinement(surf_eta35):
    L, q = 1.0, 0.47
    vals = []
    for G in (128, 256):
        x = np.arange(G) * L / G
        h = q * x / L + 1e-3 * np.sin(2 * np.pi * x)
        pi = 0.01 * np.cos(2 * np.pi * x)
        st = FieldState.from_height(h, pi, L=L, q=q)
        vals.append(hamiltonian_value(st, 0.4, lambda xx: 0.03 * np.sin(2 * np.pi * xx),
                                      surf_eta35))
    assert abs(vals[0] - vals[1]) < 1e-8


def test_evolve_constant_state_fixed_point(surf_eta35):
    G, L, q = 64, 1.0, 0.47
    x = np.arange(G) * L / G
    st = FieldState.from_height(q * x / L, np.full(G, 0.01), L=L, q=q)
    traj = evolve(st, 0.4, 0.0, surf_eta35, (0.0, 0.05), 1e-3)
    assert np.max(np.abs(traj.state.htilde)) < 1e-13
    assert np.max(np.abs(traj.state.pi - 0.01)) < 1e-13
    assert traj.state.q == q  # monodromy untouched by construction


def test_evolve_short_horizon_conservation(surf_eta35):
    G, L, q = 128, 1.0, 0.48
    x = np.arange(G) * L / G
    h = q * x / L + 1e-3 * np.sin(2 * np.pi * x)
    pi = 1e-3 * np.cos(2 * np.pi * x)
    st = FieldState.from_height(h, pi, L=L, q=q)
    traj = evolve(st, 0.4, lambda xx: 0.05 * np.sin(2 * np.pi * xx), surf_eta35,
                  (0.0, 0.2), 1e-3, probes=(0.3, 0.5), dx_kind="fd6")
    assert traj.drift(0.3) < 1e-10
    assert traj.drift(0.5) < 1e-10


def test_evolve_momentum_conservation(surf_eta35):
    # constant u and v: total momentum int pi dx h dx is conserved
    G, L, q = 128, 1.0, 0.48
    x = np.arange(G) * L / G
    h = q * x / L + 1e-3 * np.sin(2 * np.pi * x)
    pi = 2e-3 * np.cos(2 * np.pi * x)
    st = FieldState.from_height(h, pi, L=L, q=q)
    dx = make_dx(G, L, "fd6")
    traj = evolve(st, 0.4, 0.0, surf_eta35, (0.0, 0.2), 1e-3,
                  snapshot_stride=100, dx_kind="fd6")

    def momentum(hh, pp):
        httld = hh - q * x / L
        return np.sum(pp * (q / L + dx(httld))) * (L / G)

    p0 = momentum(traj.snapshots_h[0], traj.snapshots_pi[0])
    p1 = momentum(traj.snapshots_h[-1], traj.snapshots_pi[-1])
    assert abs(p1 - p0) < 1e-10


def test_evolve_regime_exit_partial_trajectory(surf_eta35):
    G, L, q = 64, 1.0, 0.47
    x = np.arange(G) * L / G
    st = FieldState.from_height(q * x / L, np.full(G, 0.30), L=L, q=q)  # pi off-box
    with pytest.raises(RegimeExitError) as err:
        evolve(st, 0.4, 0.0, surf_eta35, (0.0, 0.1), 1e-3)
    assert err.value.partial is not None


def test_surface_tension_envelope(surf_eta1):
    s, u = 0.40, 0.4
    t0 = 0.03
    sig, pi_star = surface_tension(s, t0, u, surf_eta1, return_pi=True)
    d = 1e-5
    dsig = (surface_tension(s, t0 + d, u, surf_eta1)
            - surface_tension(s, t0 - d, u, surf_eta1)) / (2 * d)
    assert dsig == pytest.approx(float(pi_star), abs=1e-6)


def test_surface_tension_convex_in_slope(surf_eta1):
    s, u = 0.40, 0.4
    ts = np.linspace(0.0, 0.1, 11)
    sig = np.array([surface_tension(s, t, u, surf_eta1) for t in ts])
    second = np.diff(sig, 2)
    assert np.min(second) > -1e-8


def test_legendre_roundtrip(surf_eta1):
    s, u, pi0 = 0.42, 0.4, 0.05
    t0 = surf_eta1.d2(s, pi0, u)
    assert pi_from_yslope(s, t0, u, surf_eta1) == pytest.approx(pi0, abs=1e-10)


def test_action_density_along_flow(surf_eta1):
    # sigma(dx h, dy h) equals pi dy h - F along a flow line
    G, L, q, u = 64, 1.0, 0.4, 0.4
    x = np.arange(G) * L / G
    h = q * x / L + 2e-3 * np.sin(2 * np.pi * x)
    pi = 0.03 * np.cos(2 * np.pi * x)
    st = FieldState.from_height(h, pi, L=L, q=q)
    dx = make_dx(G, L, "fd6")
    s = st.slope(dx)
    yslope = surf_eta1.d2(s, pi, np.full(G, u))  # dy h = F_2 on the flow
    sig = surface_tension(s, yslope, np.full(G, u), surf_eta1)
    direct = pi * yslope - surf_eta1.value(s, pi, np.full(G, u))
    assert np.max(np.abs(sig - direct)) < 1e-5


def test_action_value_flat_minimizer(surf_eta1):
    L, T, nx, ny, q, u = 1.0, 0.03125, 32, 24, 0.4, 0.4
    x = np.arange(nx) * L / nx
    f2 = thermo.first_derivs(u, q, 0.0, 1.0, M=96)[1]
    phi1 = q * x / L
    phi2 = q * x / L + T * f2
    w = np.linspace(0, 1, ny + 1)[:, None]
    h = (1 - w) * phi1 + w * phi2
    S = action_value(h, q, L, T, u, 0.0, surf_eta1)
    sig = surface_tension(q / L, f2, u, surf_eta1)
    assert S == pytest.approx(T * L * float(sig), abs=1e-10)
    res = minimize_action(phi1, phi2, q, L, T, u, 0.0, surf_eta1,
                          ny=ny, max_iter=200)
    assert np.max(np.abs(res.h - h)) < 1e-6  # linear field already optimal


def test_minimize_action_small_grid(surf_eta1):
    L, T, nx, ny, q, u = 1.0, 0.03125, 32, 24, 0.4, 0.4
    x = np.arange(nx) * L / nx
    f2 = thermo.first_derivs(u, q, 0.0, 1.0, M=96)[1]
    phi1 = q * x / L + 0.002 * np.sin(2 * np.pi * x / L)
    phi2 = q * x / L + T * f2
    res = minimize_action(phi1, phi2, q, L, T, u, 0.0, surf_eta1,
                          ny=ny, max_iter=4000, gtol=1e-9)
    assert res.el_residual < 1e-3
    S_flat = action_value(np.outer(1 - np.linspace(0, 1, ny + 1), phi1)
                          + np.outer(np.linspace(0, 1, ny + 1), phi2),
                          q, L, T, u, 0.0, surf_eta1)
    assert res.action < S_flat


def test_minimize_action_infeasible_boundary(surf_eta1):
    L, T, nx, q, u = 1.0, 0.03125, 32, 0.4, 0.4
    x = np.arange(nx) * L / nx
    phi_bad = 0.9 * x  # slopes outside the tabulated window
    with pytest.raises(Exception):
        minimize_action(phi_bad, phi_bad, 0.9, L, T, u, 0.0, surf_eta1, ny=16)
