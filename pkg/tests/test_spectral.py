import numpy as np
import pytest
from hypothesis import given, strategies as st

from blowup_cpm.errors import DomainError, QuadratureError
from blowup_cpm.spectral import (arclength, choose_truncation, cusp_initial_theta, cusp_initial_xy,
                                 epsilon_study, fourier_coefficients, loglog_slope, solve_reference,
                                 tail_bound, total_length)
from blowup_cpm.varieties import catalogue
from oracles import fft_heat_solution, riemann_length

# midpoint rule with 10^7 panels (tests/oracles.py::riemann_length)
CUSP_BASE_LENGTH = 2.5686684171546608
THETA = np.linspace(-np.pi, np.pi, 2048, endpoint=False)


class Circle:
    """Unit circle fixture."""

    param_dim = 1

    def dgamma(self, th):
        th = np.asarray(th, float)
        return np.stack([-np.sin(th), np.cos(th)], -1)

    def gamma(self, th):
        th = np.asarray(th, float)
        return np.stack([np.cos(th), np.sin(th)], -1)


def test_cusp_base_length_matches_riemann_oracle():
    a = arclength(catalogue("cusp", 0.0))
    assert a(-np.pi) == 0.0
    assert abs(a.total - CUSP_BASE_LENGTH) < 1e-8


@pytest.mark.slow
def test_riemann_oracle_recomputed():
    assert abs(riemann_length(catalogue("cusp", 0.0).dgamma) - CUSP_BASE_LENGTH) < 1e-12


def test_circle_length():
    assert abs(total_length(Circle()) - 2 * np.pi) < 1e-12


def test_arclength_monotone_and_consistent():
    a = arclength(catalogue("cusp", 0.1))
    th = np.linspace(-np.pi, np.pi, 5001)
    v = a(th)
    assert np.all(np.diff(v) > 0)
    assert abs(v[-1] - a.total) < 1e-14
    # refinement of the tolerance moves the length by less than 10x the tolerance
    for tol in (1e-8, 1e-10):
        assert abs(arclength(catalogue("cusp", 0.1), tol).total
                   - arclength(catalogue("cusp", 0.1), tol / 10).total) < 10 * tol
    with pytest.raises(DomainError):
        a(4.0)


def test_arclength_matches_trapezoid_table():
    e = catalogue("cusp", 0.3)
    th = np.linspace(-np.pi, np.pi, 400001)
    sp = np.linalg.norm(e.dgamma(th), axis=-1)
    cum = np.concatenate([[0], np.cumsum(0.5 * (sp[1:] + sp[:-1]) * np.diff(th))])
    pick = slice(0, None, 997)
    assert np.abs(arclength(e)(th[pick]) - cum[pick]).max() < 1e-9


def test_length_bounds_and_monotonicity():
    L0 = total_length(catalogue("cusp", 0.0))
    Ls = [total_length(catalogue("cusp", e)) for e in (0.0, 0.25, 0.5, 1.0)]
    assert all(b >= a for a, b in zip(Ls, Ls[1:]))
    for e in (1.0, 0.1, 0.01, 0.001):
        d = total_length(catalogue("cusp", e)) - L0
        assert 0 <= d <= e * np.pi
        assert d / e < 1.0


def test_cardioid_lift_has_nonfinite_derivative():
    with pytest.raises((DomainError, QuadratureError)):
        arclength(catalogue("cardioid", 1.0))


def test_truncation_choice():
    L = CUSP_BASE_LENGTH
    for t in (0.1, 0.01, 1e-3, 1e-4):
        M = choose_truncation(L, t, 1e-14, B=1.1)
        c = (2 * np.pi / L) ** 2 * t
        m = np.arange(M + 1, M + 10_000_001, dtype=float)
        direct = 2 * 1.1 * np.exp(-c * m ** 2).sum()
        assert direct <= tail_bound(L, t, M, 1.1) <= 1e-14
        assert tail_bound(L, t, M - 1, 1.1) > 1e-14
    assert choose_truncation(L, 0.1) <= choose_truncation(L, 0.001)
    with pytest.raises(DomainError):
        choose_truncation(L, 0.0)


def test_constant_datum():
    a = arclength(catalogue("cusp", 0.5))
    c = fourier_coefficients(lambda th: np.full_like(th, 2.5), a, 8)
    assert abs(c[8] - 2.5) < 1e-12
    assert np.abs(np.delete(c, 8)).max() < 1e-12
    sol = solve_reference(catalogue("cusp", 0.5), lambda th: np.full_like(th, 2.5), 1.0, 0.1, M=8)
    assert np.abs(sol.evaluate(0.3, THETA) - 2.5 * np.exp(-0.3)).max() < 1e-12


def test_coefficients_real_and_conjugate_symmetric():
    sol = solve_reference(catalogue("cusp", 0.0), cusp_initial_theta, 1.0, 0.01)
    c = sol.coeffs
    assert np.abs(c.imag).max() < 1e-10
    assert np.abs(c - np.conj(c[::-1])).max() < 1e-12
    th = np.linspace(-np.pi, np.pi, 64)
    a = sol.alen(th)
    m = np.arange(-sol.M, sol.M + 1)
    series = np.exp(2j * np.pi / sol.length * np.outer(a, m)) @ c
    assert np.abs(series.imag).max() < 1e-10


def test_parseval():
    e = catalogue("cusp", 0.25)
    sol = solve_reference(e, cusp_initial_theta, 1.0, 1e-4)
    from blowup_cpm.quadrature import adaptive_gk
    energy = adaptive_gk(lambda th: cusp_initial_theta(th) ** 2 * sol.alen.derivative(th), -np.pi, np.pi,
                         1e-13).value / sol.length
    # coefficients decay like m^-2 for this datum; tail below ~M^-3
    assert abs(np.sum(np.abs(sol.coeffs) ** 2) - energy) < 1e-6


def test_initial_reproduction_for_smooth_datum():
    circ = Circle()
    sol = solve_reference(circ, lambda th: np.exp(np.cos(th)), 0.0, 1.0, M=40)
    assert np.abs(sol.evaluate(0.0, THETA) - np.exp(np.cos(THETA))).max() < 1e-13


def test_initial_reproduction_improves_with_modes():
    e = catalogue("cusp", 0.5)
    errs = [np.abs(solve_reference(e, cusp_initial_theta, 1.0, 1.0, M=M).evaluate(0.0, THETA)
                   - cusp_initial_theta(THETA)).max() for M in (32, 128)]
    assert errs[1] < errs[0] / 2


def test_mass_conserved_without_reaction():
    e = catalogue("cusp", 0.5)
    sol = solve_reference(e, cusp_initial_theta, 0.0, 0.01)
    from blowup_cpm.quadrature import adaptive_gk
    masses = [adaptive_gk(lambda th: sol.evaluate(t, th) * sol.alen.derivative(th), -np.pi, np.pi,
                          1e-11).value for t in (0.01, 0.1, 1.0)]
    assert np.ptp(masses) < 1e-9


@pytest.mark.parametrize("t", [0.1, 1e-3])
def test_matches_fft_oracle(t):
    e = catalogue("cusp", 0.5)
    ref, L = fft_heat_solution(e.gamma, cusp_initial_theta, 1.0, t, THETA)
    sol = solve_reference(e, cusp_initial_theta, 1.0, t)
    assert abs(L - sol.length) < 1e-9
    assert np.abs(sol.evaluate(t, THETA) - ref).max() < 1e-7


@given(st.floats(0.1, 2.0), st.floats(-1, 1))
def test_linearity(k, shift):
    e = catalogue("cusp", 0.5)
    f = cusp_initial_theta
    g = lambda th: k * np.sin(th + shift)  # noqa: E731
    M = 60
    s_sum = solve_reference(e, lambda th: f(th) + g(th), 1.0, 0.01, M=M)
    s_f = solve_reference(e, f, 1.0, 0.01, M=M)
    s_g = solve_reference(e, g, 1.0, 0.01, M=M)
    th = THETA[::16]
    assert np.abs(s_sum.evaluate(0.01, th) - s_f.evaluate(0.01, th) - s_g.evaluate(0.01, th)).max() < 1e-10


def test_doubling_modes_changes_little():
    e = catalogue("cusp", 0.05)
    for t in (0.1, 1e-4):
        s = solve_reference(e, cusp_initial_theta, 1.0, t)
        s2 = solve_reference(e, cusp_initial_theta, 1.0, t, M=2 * s.M)
        assert np.abs(s.evaluate(t, THETA) - s2.evaluate(t, THETA)).max() < 1e-10


def test_initial_forms_agree():
    th = np.linspace(-np.pi, np.pi, 101)
    p = catalogue("cusp", 0.0).gamma(th)
    assert np.allclose(cusp_initial_theta(th), cusp_initial_xy(p[:, 0], p[:, 1]), rtol=1e-13)


def test_a_prime_bound():
    th = np.linspace(-np.pi, np.pi, 2048, endpoint=False)
    s0 = np.linalg.norm(catalogue("cusp", 0.0).dgamma(th), axis=-1)
    for e in (1.0, 0.3, 0.01):
        d = np.linalg.norm(catalogue("cusp", e).dgamma(th), axis=-1) - s0
        assert d.min() >= 0 and d.max() <= e / 2


def test_eps_study_small():
    eps = [2.0 ** -j for j in range(1, 10)]
    r = epsilon_study("cusp", cusp_initial_theta, 1.0, 0.1, eps, exclude_first=3, n_theta=1024)
    assert np.all(np.diff(r.linf_diff[3:]) < 0)
    assert 1.5 < r.slope < 2.1
    assert r.slope >= 0.9


def test_zero_eps_member_is_reference():
    ref = solve_reference(catalogue("cusp", 0.0), cusp_initial_theta, 1.0, 0.1)
    again = solve_reference(catalogue("cusp", 0.0), cusp_initial_theta, 1.0, 0.1)
    assert np.abs(ref.evaluate(0.1, THETA) - again.evaluate(0.1, THETA)).max() < 1e-12


def test_loglog_slope():
    x = np.array([1, 2, 4, 8.0])
    assert abs(loglog_slope(x, 3 * x ** 1.5) - 1.5) < 1e-12


def test_large_eps_slopes_drop_for_short_times():
    eps = [2.0 ** -j for j in range(1, 15)]
    slopes = {}
    for tf in (0.1, 1e-4):
        r = epsilon_study("cusp", cusp_initial_theta, 1.0, tf, eps, exclude_first=6)
        slopes[tf] = loglog_slope(r.eps[:6], r.linf_diff[:6])
        assert 1.7 <= r.slope <= 2.0
    assert slopes[1e-4] < slopes[0.1]
