"""Closest point maps onto the smooth lifted varieties.

Two constructions are provided.

``cp_two_stage`` is specific to the lifted cusp curve in R^3 (``eps = 1``
geometry), the intersection of ``phi = z^2 + (x - 1/2)^2 - 1/4`` and
``psi = y - z x``.  A point first follows the steepest-descent trajectory of
``psi`` onto the saddle surface ``psi = 0``, then the surface-gradient
trajectory of ``phi`` within that surface.  The first flow is linear and is
integrated in closed form; the second is integrated with RK4 in the graph
coordinates ``(x, z)`` of the saddle, using the level value of ``phi`` as the
independent variable so that the stopping event is hit exactly.

``cp_nearest_param`` is a generic Euclidean nearest point over an explicit
parametrization (multistart Newton), used for the R^5 surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NonConvergenceError, NonProjectableError
from .varieties import catalogue, unit_tangent_raw


@dataclass(frozen=True)
class DescentConfig:
    """Settings for the two-stage construction.

    ``step`` is measured in level-value units of ``phi`` for the second stage.
    """

    step: float = 2e-3
    event_tol: float = 1e-12
    max_steps: int = 100_000
    order: int = 4

    def __post_init__(self):
        if not (self.step > 0 and self.event_tol > 0 and self.max_steps > 0):
            raise DomainError("descent settings must be positive")
        if self.order != 4:
            raise DomainError("only the classical RK4 integrator is implemented")


@dataclass
class CPResult:
    point: np.ndarray          # (..., n)
    converged: np.ndarray      # (...,) bool
    residuals: np.ndarray      # (..., m)
    moved: np.ndarray          # (...,) distance |x - cp(x)|


# ---------------------------------------------------------------------------
# lifted cusp geometry (eps = 1)


def cusp_phi(p):
    p = np.asarray(p, dtype=float)
    return p[..., 2] ** 2 + (p[..., 0] - 0.5) ** 2 - 0.25


def cusp_psi(p):
    p = np.asarray(p, dtype=float)
    return p[..., 1] - p[..., 2] * p[..., 0]


def in_band(p):
    """Admissible neighbourhood ``sqrt(5 phi^2 + psi^2) < 1/2``."""
    return np.sqrt(5.0 * cusp_phi(p) ** 2 + cusp_psi(p) ** 2) < 0.5


def nonprojectable_point(tau):
    """Point on the trajectory that stage one sends to the centre ``(1/2, 0, 0)``."""
    tau = np.asarray(tau, dtype=float)
    return np.stack([0.5 * np.cosh(tau), tau, -0.5 * np.sinh(tau)], axis=-1)


def _stage_one(p, tol=1e-15, iters=200):
    """Exact steepest-descent trajectory of ``psi`` to its zero level.

    Along ``xi' = -grad psi`` one has ``x = x0 cosh s + z0 sinh s``,
    ``z = x0 sinh s + z0 cosh s`` and ``y = y0 - s``; ``psi`` is strictly
    decreasing in ``s`` with slope at most ``-1``, so the root lies in
    ``|s| <= |psi(0)|``.
    """
    x0, y0, z0 = p[..., 0], p[..., 1], p[..., 2]
    A = x0 * z0
    Bh = 0.5 * (x0 ** 2 + z0 ** 2)

    def f(s):
        return y0 - s - A * np.cosh(2 * s) - Bh * np.sinh(2 * s)

    def df(s):
        return -1.0 - 2 * A * np.sinh(2 * s) - 2 * Bh * np.cosh(2 * s)

    f0 = f(np.zeros_like(x0))
    lo = -np.abs(f0)
    hi = np.abs(f0)
    s = np.zeros_like(x0)
    for _ in range(iters):
        fs = f(s)
        # maintain bracket: f decreasing, root where f = 0
        lo = np.where(fs > 0, s, lo)
        hi = np.where(fs < 0, s, hi)
        step = fs / df(s)
        s_new = s - step
        outside = (s_new <= lo) | (s_new >= hi)
        s_new = np.where(outside, 0.5 * (lo + hi), s_new)
        done = np.abs(s_new - s) <= tol * (1 + np.abs(s))
        s = s_new
        if np.all(done | (fs == 0)):
            break
    x = x0 * np.cosh(s) + z0 * np.sinh(s)
    z = x0 * np.sinh(s) + z0 * np.cosh(s)
    return x, z


def _graph_velocity(x, z):
    """Velocity ``d(x, z)/d phi`` of the surface-gradient flow on ``y = z x``."""
    gx, gz = 2 * (x - 0.5), 2 * z
    det = 1 + x ** 2 + z ** 2
    vx = ((1 + x ** 2) * gx - x * z * gz) / det
    vz = (-x * z * gx + (1 + z ** 2) * gz) / det
    denom = gx * vx + gz * vz
    with np.errstate(divide="ignore", invalid="ignore"):
        return vx / denom, vz / denom, denom


def surface_gradient_norm(x, z):
    _, _, denom = _graph_velocity(x, z)
    return np.sqrt(np.maximum(denom, 0.0))


def _phi_xz(x, z):
    return z ** 2 + (x - 0.5) ** 2 - 0.25


def cp_two_stage(points, cfg=DescentConfig(), raise_on_error=True, grad_tol=1e-8):
    """Closest point onto the lifted cusp curve (``eps = 1``) for points in the band.

    Works on arrays ``(..., 3)``.  Raises :class:`NonProjectableError` when a
    point lands within ``grad_tol`` of the centre of the saddle after the
    first stage, and :class:`NonConvergenceError` when the second stage does
    not reach the zero level; with ``raise_on_error=False`` those points are
    flagged unconverged instead.
    """
    p = np.asarray(points, dtype=float)
    if p.shape[-1] != 3:
        raise DomainError("two-stage closest point is defined in R^3")
    shape = p.shape[:-1]
    p = p.reshape(-1, 3)
    x, z = _stage_one(p)

    gnorm = surface_gradient_norm(x, z)
    bad = gnorm < grad_tol
    if raise_on_error and np.any(bad):
        raise NonProjectableError(
            f"{int(bad.sum())} point(s) too close to the non-projectable trajectory")

    phi0 = _phi_xz(x, z)
    nsteps = np.clip(np.ceil(np.abs(phi0) / cfg.step), 1, None)
    too_long = nsteps > cfg.max_steps
    if raise_on_error and np.any(too_long):
        raise NonConvergenceError("second stage exceeds the maximum step count")
    nsteps = np.minimum(nsteps, cfg.max_steps).astype(np.int64)
    dphi = np.where(bad, 0.0, -phi0 / nsteps)
    for k in range(int(nsteps.max()) if nsteps.size else 0):
        act = (k < nsteps) & ~bad
        if not np.any(act):
            break
        xa, za, d = x[act], z[act], dphi[act]
        k1x, k1z, _ = _graph_velocity(xa, za)
        k2x, k2z, _ = _graph_velocity(xa + 0.5 * d * k1x, za + 0.5 * d * k1z)
        k3x, k3z, _ = _graph_velocity(xa + 0.5 * d * k2x, za + 0.5 * d * k2z)
        k4x, k4z, _ = _graph_velocity(xa + d * k3x, za + d * k3z)
        x[act] = xa + d / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        z[act] = za + d / 6 * (k1z + 2 * k2z + 2 * k3z + k4z)
    # Newton polish along the surface gradient onto phi = 0
    for _ in range(8):
        ph = _phi_xz(x, z)
        vx, vz, _ = _graph_velocity(x, z)
        upd = ~bad
        x = np.where(upd, x - ph * vx, x)
        z = np.where(upd, z - ph * vz, z)
        if np.all(np.abs(ph[upd]) < 0.1 * cfg.event_tol):
            break

    out = np.stack([x, z * x, z], axis=-1)
    res = np.stack([cusp_phi(out), cusp_psi(out)], axis=-1)
    conv = ~bad & np.all(np.abs(res) < 10 * cfg.event_tol, axis=-1) & np.all(np.isfinite(out), axis=-1)
    if raise_on_error and not np.all(conv):
        raise NonConvergenceError(f"{int((~conv).sum())} point(s) did not reach the curve")
    moved = np.linalg.norm(out - p, axis=-1)
    return CPResult(out.reshape(shape + (3,)), conv.reshape(shape),
                    res.reshape(shape + (2,)), moved.reshape(shape))


def jacobian_check(cpmap, x, step=1e-5):
    """Central finite-difference Jacobian of ``cpmap`` at ``x`` (``(n, n)``)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    I = np.eye(n) * step
    plus = cpmap(x[None, :] + I)
    minus = cpmap(x[None, :] - I)
    return ((plus - minus) / (2 * step)).T


# ---------------------------------------------------------------------------
# generic parametric nearest point


def _seed_lattice(param_dim, per_dim):
    th = np.linspace(-np.pi, np.pi, per_dim, endpoint=False)
    if param_dim == 1:
        return th[:, None]
    al = np.linspace(0.0, 2 * np.pi, per_dim, endpoint=False)
    T, A = np.meshgrid(th, al, indexing="ij")
    return np.stack([T.ravel(), A.ravel()], axis=-1)


def _second_derivs(entry, u, h=1e-5):
    """``d^2 sigma / du_a du_b`` by central differences of the analytic tangents."""
    d = entry.param_dim
    cols = []
    for b in range(d):
        e = np.zeros(d)
        e[b] = h
        cols.append((entry.tangents_unit(u + e) - entry.tangents_unit(u - e)) / (2 * h))
    return np.stack(cols, axis=-1)  # (..., n, d, d)


def _newton_polish(entry, x, u, iters=100, tol=1e-14):
    d = entry.param_dim
    u = u.copy()
    f = 0.5 * np.sum((entry.point_unit(u) - x) ** 2, axis=-1)
    ok = np.zeros(u.shape[0], dtype=bool)
    for _ in range(iters):
        r = entry.point_unit(u) - x
        J = entry.tangents_unit(u)
        g = np.einsum("pn,pna->pa", r, J)
        S = _second_derivs(entry, u)
        Hm = np.einsum("pna,pnb->pab", J, J) + np.einsum("pn,pnab->pab", r, S)
        w, V = np.linalg.eigh(Hm)
        floor = 1e-10 * np.maximum(np.abs(w).max(axis=-1, keepdims=True), 1e-300)
        w = np.maximum(w, floor)
        delta = -np.einsum("pab,pb->pa", V, np.einsum("pba,pb->pa", V, g) / w)
        # backtracking line search
        t = np.ones(u.shape[0])
        for _ls in range(40):
            un = u + t[:, None] * delta
            fn = 0.5 * np.sum((entry.point_unit(un) - x) ** 2, axis=-1)
            good = fn <= f + 1e-16 * np.maximum(f, 1.0)
            if np.all(good):
                break
            t = np.where(good, t, 0.5 * t)
        un = u + t[:, None] * delta
        fn = 0.5 * np.sum((entry.point_unit(un) - x) ** 2, axis=-1)
        accept = fn <= f + 1e-16 * np.maximum(f, 1.0)
        u = np.where(accept[:, None], un, u)
        f = np.where(accept, fn, f)
        step_norm = np.linalg.norm(t[:, None] * delta, axis=-1)
        ok = step_norm < tol * (1 + np.linalg.norm(u, axis=-1))
        if np.all(ok):
            break
    return u, f, ok


def cp_nearest_param(entry, x, multistart=32, keep=3, chunk=4096):
    """Euclidean nearest point on ``entry``'s ``eps = 1`` parametrized variety.

    Seeds: ``multistart`` values per parameter (a lattice for surfaces); the
    ``keep`` closest seeds per point are polished with damped Newton and the
    best local minimum is returned.  Also returns the optimal parameters in
    ``CPResult`` via the attribute ``params``.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    n = entry.ambient_dim
    if x.shape[-1] != n:
        raise DomainError(f"points must live in R^{n}")
    X = x.reshape(-1, n)
    seeds = _seed_lattice(entry.param_dim, multistart)
    S = entry.point_unit(seeds)
    keep = min(keep, seeds.shape[0])
    best_u = np.empty((X.shape[0], entry.param_dim))
    best_f = np.empty(X.shape[0])
    conv = np.empty(X.shape[0], dtype=bool)
    for s in range(0, X.shape[0], chunk):
        Xc = X[s:s + chunk]
        d2 = (np.sum(Xc ** 2, axis=1)[:, None] - 2 * Xc @ S.T + np.sum(S ** 2, axis=1)[None, :])
        idx = np.argpartition(d2, keep - 1, axis=1)[:, :keep] if keep < seeds.shape[0] else \
            np.tile(np.arange(seeds.shape[0]), (Xc.shape[0], 1))
        U0 = seeds[idx].reshape(-1, entry.param_dim)
        Xr = np.repeat(Xc, keep, axis=0)
        U, F, OK = _newton_polish(entry, Xr, U0)
        F = F.reshape(-1, keep)
        OKr = OK.reshape(-1, keep)
        j = np.argmin(np.where(np.isfinite(F), F, np.inf), axis=1)
        rows = np.arange(Xc.shape[0])
        best_u[s:s + chunk] = U.reshape(-1, keep, entry.param_dim)[rows, j]
        best_f[s:s + chunk] = F[rows, j]
        conv[s:s + chunk] = OKr[rows, j] | OKr.any(axis=1)
    if not np.all(np.isfinite(best_f)):
        raise NonConvergenceError("all Newton starts failed for some points")
    pts = entry.point_unit(best_u)
    res = entry.lifted_unit.residual(pts)
    out = CPResult(pts.reshape(shape + (n,)), conv.reshape(shape),
                   res.reshape(shape + (res.shape[-1],)),
                   np.sqrt(2 * best_f).reshape(shape))
    out.params = best_u.reshape(shape + (entry.param_dim,))
    return out


# ---------------------------------------------------------------------------
# tangent field and beta coefficient


def _params_for(entry, x):
    """Parameters of points ``x`` on ``entry`` at its own ``eps``."""
    X = np.asarray(x, dtype=float)
    if entry.eps > 0:
        X1 = entry.H.inverse(X)
    else:
        raise DomainError("tangent orientation needs eps > 0")
    try:
        return entry.param_of_unit(X1)
    except DomainError:
        return cp_nearest_param(catalogue(entry.name, 1.0), X1).params


def unit_tangent(entry, x):
    """Unit tangent of a lifted curve at ``x``, oriented like the parametrization."""
    if entry.param_dim != 1:
        raise DomainError("unit tangent is defined for curves")
    x = np.asarray(x, dtype=float)
    t = unit_tangent_raw(entry.system, x)
    u = _params_for(entry, x)
    ref = entry.tangents(u)[..., 0]
    sign = np.where(np.sum(t * ref, axis=-1) < 0, -1.0, 1.0)
    return t * sign[..., None]


def beta_from_tangent(T, eps):
    """``1 / |H_eps T|`` for unit tangents ``T`` of the lifted cusp curve."""
    T = np.asarray(T, dtype=float)
    return 1.0 / np.sqrt(T[..., 0] ** 2 + T[..., 1] ** 2 + (eps * T[..., 2]) ** 2)


def cusp_unit_tangent_on_curve(p):
    """Unsigned unit tangent of the ``eps = 1`` lifted cusp at points on the curve."""
    p = np.asarray(p, dtype=float)
    gphi = np.stack([2 * (p[..., 0] - 0.5), np.zeros(p.shape[:-1]), 2 * p[..., 2]], axis=-1)
    gpsi = np.stack([-p[..., 2], np.ones(p.shape[:-1]), -p[..., 0]], axis=-1)
    t = np.cross(gphi, gpsi)
    return t / np.linalg.norm(t, axis=-1, keepdims=True)


def beta_coeff(x, eps, cpmap=None):
    """Coefficient ``beta_eps(cp(x)) = 1 / |H_eps T(cp(x))|`` for band points."""
    if not eps > 0:
        raise DomainError("beta needs eps > 0")
    if cpmap is None:
        cpmap = lambda q: cp_two_stage(q).point  # noqa: E731
    c = cpmap(np.asarray(x, dtype=float))
    return beta_from_tangent(cusp_unit_tangent_on_curve(c), eps)


def write_cp_dump(path, x, result):
    """CSV ``x1..xn,cp1..cpn,res_phi,res_psi,converged``."""
    x = np.asarray(x, dtype=float).reshape(-1, np.shape(x)[-1])
    n = x.shape[1]
    cp = np.asarray(result.point).reshape(-1, n)
    res = np.asarray(result.residuals).reshape(cp.shape[0], -1)
    conv = np.asarray(result.converged).reshape(-1)
    header = [f"x{i + 1}" for i in range(n)] + [f"cp{i + 1}" for i in range(n)] + ["res_phi", "res_psi"]
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(header + ["converged"]) + "\n")
        for i in range(x.shape[0]):
            vals = list(x[i]) + list(cp[i]) + [res[i, 0], res[i, 1] if res.shape[1] > 1 else 0.0]
            fh.write(",".join(f"{v:.17g}" for v in vals) + f",{int(conv[i])}\n")
