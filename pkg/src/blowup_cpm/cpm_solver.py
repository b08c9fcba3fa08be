"""Closest point method for ``w_t = beta div(beta grad w) - mu^2 w`` on the lifted cusp.

The discrete operator is ``L_h = B sum_a D_a E B D_a`` with ``E`` the cubic
interpolation at closest points, ``D_a`` central differences and ``B`` the
diagonal of the extended coefficient ``beta``.  Time stepping follows the
classical closest-point loop: a step of the embedded equation followed by a
re-extension ``w <- E w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .band_grid import build_band, diag_matrix, diff_matrix, interp_matrix, GridSpec
from .closest_point import (DescentConfig, beta_from_tangent, cp_two_stage,
                            cusp_unit_tangent_on_curve, in_band)
from .errors import DomainError, InfeasibleRunError, SolverError
from .varieties import catalogue

CUSP_BOX = ((-0.5, 1.5), (-1.0, 1.0), (-1.0, 1.0))
EXPLICIT_STEP_GUARD = 100_000_000


@dataclass
class OperatorSet:
    E: sp.csr_matrix
    D: list
    B: sp.csr_matrix
    L: sp.csr_matrix
    EL: sp.csr_matrix
    eps: float
    mu: float
    n_core: int
    _lu: dict = field(default_factory=dict, repr=False)

    @property
    def size(self):
        return self.E.shape[0]


def cusp_band(h, box=CUSP_BOX, radius_factor=None, cfg=DescentConfig(), sample_theta=2048):
    """Banded grid around the lifted cusp with sampling stencils for ``sample_theta`` points.

    Seed band: admissible region ``in_band`` intersected with the tube
    ``|x - cp(x)| <= radius``; the default radius is half the cell diagonal,
    the smallest tube guaranteed to contain a grid point near every curve point.
    """
    spec = GridSpec.cube(box, h)
    r = (np.sqrt(spec.ndim) / 2 if radius_factor is None else radius_factor) * h * (1 + 1e-9)

    def predicate(X):
        out = np.zeros(len(X), dtype=bool)
        m = in_band(X)
        # cheap screen before the exact closest point
        m &= (np.abs(X[:, 2] ** 2 + (X[:, 0] - 0.5) ** 2 - 0.25) <= 3.0 * r + 3 * r * r) & \
             (np.abs(X[:, 1] - X[:, 2] * X[:, 0]) <= 2.1 * r + r * r)
        if np.any(m):
            c = cp_two_stage(X[m], cfg).point
            out[m] = np.linalg.norm(c - X[m], axis=1) <= r
        return out

    theta = np.linspace(-np.pi, np.pi, sample_theta, endpoint=False)
    targets = catalogue("cusp", 1.0).gamma(theta)
    return build_band(spec, predicate, lambda X: cp_two_stage(X, cfg).point, targets)


def assemble(grid, eps, mu=1.0):
    """Operator set for the transformed problem at ``eps`` on ``grid``."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    E = interp_matrix(grid, grid.cp)
    D = [diff_matrix(grid, a) for a in range(grid.spec.ndim)]
    beta = beta_from_tangent(cusp_unit_tangent_on_curve(grid.cp), eps)
    if not np.all(np.isfinite(beta)):
        bad = np.flatnonzero(~np.isfinite(beta))
        raise SolverError(f"coefficient undefined at band ordinals {bad[:10].tolist()}")
    B = diag_matrix(beta)
    inner = sum(Da @ E @ B @ Da for Da in D)
    L = (B @ inner).tocsr()
    EL = (E @ L).tocsr()
    return OperatorSet(E, D, B, L, EL, float(eps), float(mu), grid.n_core)


def timestep_size(scheme, eps, h):
    if not (eps > 0 and h > 0):
        raise DomainError("eps and h must be positive")
    if scheme == "explicit":
        return 0.25 * eps ** 2 * h ** 2
    if scheme == "implicit":
        return h ** 2
    raise DomainError(f"unknown scheme {scheme!r}")


def explicit_step(ops, w, tau):
    v = w + tau * (ops.EL @ w - ops.mu ** 2 * w)
    out = ops.E @ v
    if not np.all(np.isfinite(out)):
        raise SolverError(f"explicit step produced non-finite values; tau = {tau:g} too large "
                          f"(stable estimate ~ {0.25 * ops.eps ** 2:g} h^2)")
    return out


def implicit_matrix(ops, tau):
    n = ops.size
    return ((1.0 + tau * ops.mu ** 2) * sp.identity(n, format="csc") - tau * ops.EL).tocsc()


def _factor(ops, tau):
    key = float(tau)
    if key not in ops._lu:
        ops._lu.clear()
        try:
            ops._lu[key] = spla.splu(implicit_matrix(ops, tau), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
    return ops._lu[key]


def implicit_solve(ops, w, tau, method="direct", rtol=1e-10):
    if method == "direct":
        v = _factor(ops, tau).solve(w)
    else:
        A = implicit_matrix(ops, tau).tocsr()
        ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
        hist = []
        v, info = spla.bicgstab(A, w, rtol=rtol, atol=0.0, M=M, maxiter=2000,
                                callback=lambda xk: hist.append(np.linalg.norm(A @ xk - w)))
        if info != 0:
            raise SolverError(f"BiCGSTAB stagnated (info={info}); residuals {hist[-5:]}")
    return v


def implicit_step(ops, w, tau, method="direct"):
    return ops.E @ implicit_solve(ops, w, tau, method)


@dataclass
class SolverRun:
    scheme: str
    tau: float
    steps: int
    t_final: float
    state: np.ndarray
    log: list


def initial_state(grid, u0_xy=None):
    """``w0(x) = u0(cp(x)_1, cp(x)_2)``; default datum ``exp(4 (2x - 1)^2) / 50``."""
    from .spectral import cusp_initial_xy
    f = cusp_initial_xy if u0_xy is None else u0_xy
    return np.asarray(f(grid.cp[:, 0], grid.cp[:, 1]), dtype=float)


def plan_steps(scheme, eps, h, t_final, guard=EXPLICIT_STEP_GUARD):
    """Step count and step size dividing ``t_final`` exactly."""
    if t_final < 0:
        raise DomainError("t_final must be non-negative")
    if t_final == 0:
        return 0, 0.0
    tau0 = timestep_size(scheme, eps, h)
    steps = int(np.ceil(t_final / tau0 * (1 - 1e-12)))
    if scheme == "explicit" and steps > guard:
        raise InfeasibleRunError(
            f"explicit run needs {steps:.3e} steps (> {guard:.0e}) for eps={eps:g}, h={h:g}")
    return steps, t_final / steps


def run(ops, w0, scheme, t_final, h, log_every=0, method="direct", guard=EXPLICIT_STEP_GUARD):
    steps, tau = plan_steps(scheme, ops.eps, h, t_final, guard)
    w = np.array(w0, dtype=float)
    log = [(0, 0.0, float(w.max()), float(w.min()))]
    for k in range(1, steps + 1):
        if scheme == "explicit":
            w = explicit_step(ops, w, tau)
        else:
            w = implicit_step(ops, w, tau, method)
        if log_every and (k % log_every == 0 or k == steps):
            log.append((k, k * tau, float(w.max()), float(w.min())))
    if steps and (not log_every) and log[-1][0] != steps:
        log.append((steps, steps * tau, float(w.max()), float(w.min())))
    return SolverRun(scheme, tau, steps, t_final, w, log)


def sample_on_curve(grid, w, theta):
    """Interpolate the band state at ``gamma(theta)`` on the ``eps = 1`` lifted cusp."""
    pts = catalogue("cusp", 1.0).gamma(np.asarray(theta, dtype=float))
    return interp_matrix(grid, pts) @ w


def write_run_log(path, run_result):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("step,t,max_w,min_w\n")
        for k, t, mx, mn in run_result.log:
            fh.write(f"{k},{t:.17g},{mx:.17g},{mn:.17g}\n")


def write_state(path, grid, w):
    pts = grid.points
    n = pts.shape[1]
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("ordinal,flat_index," + ",".join(f"x{i + 1}" for i in range(n)) + ",w\n")
        for i in range(grid.n_active):
            fh.write(f"{i},{grid.active[i]}," + ",".join(f"{v:.17g}" for v in pts[i])
                     + f",{w[i]:.17g}\n")
