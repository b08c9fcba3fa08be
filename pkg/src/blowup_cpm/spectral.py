"""Fourier-series reference solutions of ``u_t = u_ss - mu^2 u`` on closed curves.

For a closed curve of length ``L`` with arclength ``a(theta)`` the solution is

    u(t, theta) = exp(-mu^2 t) sum_m c_m exp(-(2 pi m / L)^2 t) exp(2 pi i m a(theta) / L),

with ``c_m = (1/L) int u0(theta) exp(-2 pi i m a(theta) / L) a'(theta) dtheta``.
Arclength and coefficients are computed by adaptive Gauss-Kronrod quadrature
in the original parameter, so no arclength reparametrization is tabulated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import DomainError, QuadratureError
from .quadrature import NODES, KRONROD_WEIGHTS, adaptive_gk, refine_edges

TWO_PI = 2.0 * np.pi


def curve_speed(entry):
    """``theta -> |gamma'(theta)|`` for a one-parameter catalogue entry."""
    if entry.param_dim != 1:
        raise DomainError("arclength needs a curve")

    def speed(theta):
        d = entry.dgamma(np.asarray(theta, dtype=float))
        s = np.linalg.norm(d, axis=-1)
        if not np.all(np.isfinite(s)):
            raise DomainError("parametrization derivative is not finite on the interval")
        return s

    return speed


@dataclass
class Arclength:
    """Monotone map ``theta -> a(theta)`` on ``[-pi, pi]`` stored as quadrature panels."""

    speed: object
    edges: np.ndarray
    cumulative: np.ndarray
    tol: float

    @property
    def total(self):
        return float(self.cumulative[-1])

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        lo, hi = self.edges[0], self.edges[-1]
        if np.any(theta < lo - 1e-12) | np.any(theta > hi + 1e-12):
            raise DomainError("theta outside the parameter interval")
        th = np.clip(theta, lo, hi).ravel()
        k = np.clip(np.searchsorted(self.edges, th, side="right") - 1, 0, self.edges.size - 2)
        left = self.edges[k]
        half = 0.5 * (th - left)
        nodes = (left + half)[:, None] + half[:, None] * NODES
        part = (self.speed(nodes.ravel()).reshape(nodes.shape) @ KRONROD_WEIGHTS) * half
        return (self.cumulative[k] + part).reshape(theta.shape)

    def derivative(self, theta):
        return self.speed(np.asarray(theta, dtype=float))


def arclength(entry_or_speed, tol=1e-13, max_panels=200_000):
    """Build the arclength function of a curve (catalogue entry or speed callable)."""
    speed = curve_speed(entry_or_speed) if hasattr(entry_or_speed, "dgamma") else entry_or_speed
    res = adaptive_gk(speed, -np.pi, np.pi, tol, max_panels=max_panels)
    cum = np.concatenate([[0.0], np.cumsum(res.panel_values)])
    return Arclength(speed, res.edges, cum, tol)


def total_length(entry, tol=1e-13):
    return arclength(entry, tol).total


def tail_bound(L, t, M, B):
    """Bound on ``sup |u - u_M|`` from dropping modes ``|m| > M``.

    Uses ``|c_m| <= B`` and ``sum_{m>M} exp(-c m^2) <= int_M^inf exp(-c s^2) ds``
    with ``c = (2 pi / L)^2 t``, which gives ``B sqrt(pi / c) erfc(M sqrt(c))``
    for both signs of ``m`` together.
    """
    c = (TWO_PI / L) ** 2 * t
    return B * np.sqrt(np.pi / c) * erfc(M * np.sqrt(c))


def choose_truncation(L, t, tail_tol=1e-14, B=1.0, M_max=1_000_000):
    """Smallest ``M`` whose tail bound is below ``tail_tol``."""
    if not t > 0:
        raise DomainError("truncation needs t > 0")
    if not L > 0:
        raise DomainError("length must be positive")
    lo, hi = 0, 1
    while tail_bound(L, t, hi, B) > tail_tol:
        hi *= 2
        if hi > M_max:
            raise DomainError(f"truncation exceeds {M_max} modes")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail_bound(L, t, mid, B) > tail_tol:
            lo = mid
        else:
            hi = mid
    return hi


def fourier_coefficients(u0, alen, M, tol=1e-12, max_panels=400_000):
    """Coefficients ``c_m`` for ``m = -M..M`` (index ``m + M``)."""
    L = alen.total
    m = np.arange(-M, M + 1)
    omega = TWO_PI / L

    def integrand(theta):
        a = alen(theta)
        w = u0(theta) * alen.derivative(theta) / L
        return w[:, None] * np.exp(-1j * omega * np.outer(a, m))

    # start from panels fine enough to resolve the highest oscillation
    n0 = max(8, int(np.ceil(2 * M)))
    edges = refine_edges(alen.edges, TWO_PI / n0)
    total = np.zeros(m.size, dtype=complex)
    # integrate panel blocks with the adaptive rule; tolerance shared by width
    blocks = np.array_split(np.arange(edges.size - 1), max(1, (edges.size - 1) // 64))
    for b in blocks:
        l, r = edges[b[0]], edges[b[-1] + 1]
        res = adaptive_gk(integrand, l, r, tol * (r - l) / TWO_PI, max_panels=max_panels,
                          initial_panels=len(b))
        total += res.value
    return total


@dataclass
class FourierSolution:
    coeffs: np.ndarray
    M: int
    mu: float
    alen: Arclength
    meta: dict = field(default_factory=dict)

    @property
    def length(self):
        return self.alen.total

    def evaluate(self, t, theta):
        if t < 0:
            raise DomainError("time must be non-negative")
        theta = np.asarray(theta, dtype=float)
        a = self.alen(theta).ravel()
        m = np.arange(-self.M, self.M + 1)
        omega = TWO_PI / self.length
        damp = np.exp(-(omega * m) ** 2 * t - self.mu ** 2 * t) * self.coeffs
        out = np.empty(a.size)
        for s in range(0, a.size, 4096):
            ph = np.exp(1j * omega * np.outer(a[s:s + 4096], m))
            out[s:s + 4096] = (ph @ damp).real
        return out.reshape(theta.shape)


def solve_reference(entry, u0, mu, t, tail_tol=1e-14, M=None, B=None,
                    arclength_tol=1e-13, coeff_tol=1e-12, alen=None):
    """Fourier reference solution on the lifted curve ``entry`` (any ``eps >= 0``)."""
    if alen is None:
        alen = arclength(entry, arclength_tol)
    if B is None:
        th = np.linspace(-np.pi, np.pi, 4097)
        B = float(np.max(np.abs(u0(th))))
    if M is None:
        M = choose_truncation(alen.total, t, tail_tol, B)
    c = fourier_coefficients(u0, alen, M, coeff_tol)
    return FourierSolution(c, M, float(mu), alen, dict(t=t, tail_tol=tail_tol, B=B))


@dataclass
class EpsStudyResult:
    eps: np.ndarray
    t_final: float
    linf_diff: np.ndarray
    slope: float
    fit_from: int


def loglog_slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def epsilon_study(name, u0, mu, t_final, eps_list, exclude_first=6, n_theta=2048,
                  tail_tol=1e-14):
    """Sup-distance between eps-solutions and the eps = 0 solution at ``t_final``.

    The slope is fit over ``eps_list[exclude_first:]`` on log-log axes.
    """
    from .varieties import catalogue

    theta = np.linspace(-np.pi, np.pi, n_theta, endpoint=False)
    ref = solve_reference(catalogue(name, 0.0), u0, mu, t_final, tail_tol)
    u_ref = ref.evaluate(t_final, theta)
    diffs = []
    for e in eps_list:
        sol = solve_reference(catalogue(name, e), u0, mu, t_final, tail_tol)
        diffs.append(np.max(np.abs(sol.evaluate(t_final, theta) - u_ref)))
    eps_arr = np.asarray(eps_list, float)
    diffs = np.asarray(diffs)
    slope = loglog_slope(eps_arr[exclude_first:], diffs[exclude_first:])
    return EpsStudyResult(eps_arr, t_final, diffs, slope, exclude_first)


def cusp_initial_theta(theta):
    """Standard initial datum ``exp(4 cos^2 theta) / 50`` in the curve parameter."""
    return np.exp(4.0 * np.cos(theta) ** 2) / 50.0


def cusp_initial_xy(x, y=None):
    """The same datum in the plane: ``exp(4 (2x - 1)^2) / 50``."""
    return np.exp(4.0 * (2.0 * np.asarray(x) - 1.0) ** 2) / 50.0
