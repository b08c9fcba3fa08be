import numpy as np
import pytest
from hypothesis import given, strategies as st

from blowup_cpm.band_grid import interp_matrix
from blowup_cpm.cpm_solver import (assemble, cusp_band, explicit_step, implicit_matrix, implicit_solve,
                                   implicit_step, initial_state, plan_steps, run, sample_on_curve,
                                   timestep_size, write_run_log, write_state)
from blowup_cpm.errors import DomainError, InfeasibleRunError
from blowup_cpm.spectral import cusp_initial_theta
from blowup_cpm.varieties import catalogue
from oracles import curve_laplacian

CUSP1 = catalogue("cusp", 1.0)
THETA = np.linspace(-np.pi, np.pi, 512, endpoint=False)


def F(t):
    return np.cos(t) + 0.3 * np.sin(2 * t)


def extended_F(grid):
    return F(CUSP1.param_of_unit(grid.cp)[:, 0])


@pytest.fixture(scope="module")
def coarse():
    g = cusp_band(0.125)
    return g, assemble(g, 0.5)


def test_unit_eps_has_identity_coefficient(cusp_grids):
    g = cusp_grids(0.1)
    ops = assemble(g, 1.0)
    assert np.abs(ops.B.diagonal() - 1).max() < 1e-12
    b = assemble(g, 0.05).B.diagonal()
    assert b.min() >= 1 - 1e-12 and b.max() <= 20 + 1e-9
    with pytest.raises(DomainError):
        assemble(g, 0.0)


def test_constants_in_kernel(cusp_grids):
    ops = assemble(cusp_grids(0.1), 0.5)
    one = np.ones(ops.size)
    assert np.abs(ops.L @ one).max() < 1e-10
    assert np.abs(ops.E @ one - 1).max() < 1e-13


@pytest.mark.parametrize("eps", [1.0, 0.5])
def test_operator_second_order(cusp_grids, eps):
    ref = curve_laplacian(catalogue("cusp", eps), F, THETA)
    errs = []
    for h in (0.1, 0.05):
        g = cusp_grids(h)
        S = interp_matrix(g, CUSP1.gamma(THETA))
        errs.append(np.abs(S @ (assemble(g, eps).L @ extended_F(g)) - ref).max())
    assert errs[1] < errs[0]
    assert np.log2(errs[0] / errs[1]) > 1.6


def test_timestep_sizes():
    assert timestep_size("explicit", 0.5, 0.1) == pytest.approx(0.25 * 0.25 * 0.01)
    assert timestep_size("implicit", 0.05, 0.1) == pytest.approx(0.01)
    with pytest.raises(DomainError):
        timestep_size("crank", 0.5, 0.1)
    with pytest.raises(DomainError):
        timestep_size("explicit", 0.0, 0.1)
    steps, tau = plan_steps("implicit", 0.5, 0.1, 0.1)
    assert steps == 10 and steps * tau == pytest.approx(0.1)
    steps, tau = plan_steps("explicit", 0.5, 0.1, 0.1 + 1e-9)
    assert tau <= timestep_size("explicit", 0.5, 0.1)
    assert plan_steps("explicit", 0.5, 0.1, 0.0) == (0, 0.0)
    with pytest.raises(InfeasibleRunError):
        plan_steps("explicit", 0.005, 0.0125, 0.1)
    with pytest.raises(DomainError):
        plan_steps("implicit", 0.5, 0.1, -1.0)


def test_constant_state_decays_exponentially(coarse):
    g, ops = coarse
    w = np.full(ops.size, 2.0)
    tau = 1e-3
    assert np.allclose(explicit_step(ops, w, tau), 2.0 * (1 - tau))
    assert np.allclose(implicit_step(ops, w, tau), 2.0 / (1 + tau))


def test_single_steps_match_dense_algebra(coarse):
    g, ops = coarse
    w = initial_state(g)
    tau = 1e-3
    E = ops.E.toarray()
    L = ops.L.toarray()
    A = (1 + tau) * np.eye(ops.size) - tau * E @ L
    assert np.abs(implicit_step(ops, w, tau) - E @ np.linalg.solve(A, w)).max() < 1e-10
    assert np.abs(explicit_step(ops, w, tau) - E @ (w + tau * (E @ L @ w - w))).max() < 1e-12
    assert np.abs(implicit_matrix(ops, tau).toarray() - A).max() < 1e-12


def test_iterative_solver_agrees(coarse):
    g, ops = coarse
    w = initial_state(g)
    a = implicit_solve(ops, w, 1e-3)
    b = implicit_solve(ops, w, 1e-3, method="bicgstab")
    assert np.abs(a - b).max() < 1e-8
    assert np.abs(implicit_matrix(ops, 1e-3) @ a - w).max() < 1e-12


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_steps_are_linear(a, b):
    g = cusp_band(0.125)
    ops = assemble(g, 0.5)
    u = initial_state(g)
    v = np.cos(g.cp[:, 0])
    for step in (explicit_step, implicit_step):
        lhs = step(ops, a * u + b * v, 1e-3)
        rhs = a * step(ops, u, 1e-3) + b * step(ops, v, 1e-3)
        assert np.abs(lhs - rhs).max() < 1e-12 * (1 + abs(a) + abs(b))


def test_first_order_in_time(cusp_grids):
    g = cusp_grids(0.1)
    ops = assemble(g, 0.5)
    w0 = initial_state(g)

    def integrate(n):
        w = w0.copy()
        for _ in range(n):
            w = implicit_step(ops, w, 0.02 / n)
        return w

    a, b, c = integrate(4), integrate(8), integrate(16)
    ratio = np.abs(a - b).max() / np.abs(b - c).max()
    assert 1.7 < ratio < 2.3


def test_extension_is_nearly_idempotent(cusp_grids):
    gaps = []
    for h in (0.05, 0.025, 0.0125):
        g = cusp_grids(h)
        E = interp_matrix(g, g.cp)
        w = E @ initial_state(g)
        gaps.append(np.abs(E @ w - w).max())
    assert gaps[-1] < 1e-6
    assert np.all(np.log2(np.array(gaps[:-1]) / gaps[1:]) > 3)


def test_run_zero_time_returns_initial(coarse):
    g, ops = coarse
    w0 = initial_state(g)
    r = run(ops, w0, "implicit", 0.0, 0.2)
    assert r.steps == 0 and np.array_equal(r.state, w0)
    assert r.log == [(0, 0.0, w0.max(), w0.min())]


def test_stable_runs_decay(cusp_grids):
    g = cusp_grids(0.1)
    w0 = initial_state(g)
    r = run(assemble(g, 0.5), w0, "explicit", 0.01, 0.1, log_every=2)
    assert r.steps == 16
    assert np.all(np.isfinite(r.state)) and r.state.max() < w0.max()
    maxima = [m for _, _, m, _ in r.log]
    assert all(b <= a + 1e-12 for a, b in zip(maxima, maxima[1:]))
    stiff = assemble(g, 0.005)
    w = w0.copy()
    for _ in range(200):
        w = implicit_step(stiff, w, 0.01)
    assert w.max() < w0.max()


def test_sample_on_curve(cusp_grids):
    g = cusp_grids(0.05)
    w = initial_state(g)
    s = sample_on_curve(g, w, THETA)
    assert np.abs(s - cusp_initial_theta(THETA)).max() < 5e-3


def test_outputs(tmp_path, coarse):
    g, ops = coarse
    w0 = initial_state(g)
    r = run(ops, w0, "implicit", 0.08, 0.2, log_every=1)
    write_run_log(tmp_path / "log.csv", r)
    rows = (tmp_path / "log.csv").read_text().splitlines()
    assert rows[0] == "step,t,max_w,min_w" and len(rows) == 1 + 1 + r.steps
    write_state(tmp_path / "state.csv", g, r.state)
    data = np.loadtxt(tmp_path / "state.csv", delimiter=",", skiprows=1)
    assert data.shape == (g.n_active, 6)
    assert np.array_equal(data[:, 1].astype(np.int64), g.active)
    assert np.array_equal(data[:, -1], r.state)
