"""Reaction-diffusion on the lifted surface of revolution in R^5.

The lifted surface at ``eps`` is the image of the ``eps = 1`` surface under
``H = diag(1, 1, 1, eps, eps)``.  Pulling the Laplace-Beltrami operator back
to the ``eps = 1`` surface gives the matrix-coefficient form
``trace(C^T D(C grad w))`` with

    C = H P (H^-2 - H^-2 N (N^T H^-2 N)^-1 N^T H^-2),

``N`` the transposed Jacobian of the defining system and ``P`` the tangent
projector.  For a curve this collapses to ``beta^2 H T T^T`` and reproduces
``beta d/ds (beta d/ds)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .band_grid import GridSpec, TensorInterpolator, build_band, diff_matrix, interp_matrix
from .closest_point import cp_nearest_param
from .errors import DomainError, SingularPointError, SolverError
from .varieties import catalogue

DEMO_BOX = ((-0.3, 1.2),) + ((-0.75, 0.75),) * 4
DEMO_H = 0.075


def coefficient_matrix(system, x, hdiag):
    """``C`` at points ``x`` on the variety (``eps = 1`` system), shape ``(..., n, n)``."""
    x = np.asarray(x, dtype=float)
    J = system.jacobian(x)                          # (..., m, n)
    N = np.swapaxes(J, -1, -2)                      # (..., n, m)
    n = x.shape[-1]
    G = J @ N
    if np.any(np.linalg.cond(G) > 1e12):
        raise SingularPointError("normal frame is rank deficient")
    P = np.eye(n) - N @ np.linalg.solve(G, J)
    hinv2 = 1.0 / np.asarray(hdiag, dtype=float) ** 2
    HN = hinv2[:, None] * N                          # H^-2 N
    M = J @ HN                                       # N^T H^-2 N
    if np.any(np.linalg.cond(M) > 1e12):
        raise SingularPointError("N^T H^-2 N is singular")
    K = np.diag(hinv2) - HN @ np.linalg.solve(M, np.swapaxes(HN, -1, -2))
    return np.asarray(hdiag)[:, None] * (P @ K)


def build_Ceps(x, eps, entry=None):
    """``C_eps`` on the lifted surface of revolution at points ``x`` (``eps = 1`` geometry)."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    entry = catalogue("revolution", 1.0) if entry is None else entry
    return coefficient_matrix(entry.lifted_unit, x, catalogue(entry.name, eps).H.diag)


def rotation_block(alpha):
    """Rotation by ``alpha`` in the ``(y, z)`` and ``(xi, eta)`` planes."""
    c, s = np.cos(alpha), np.sin(alpha)
    R = np.eye(5)
    R[1:3, 1:3] = [[c, -s], [s, c]]
    R[3:5, 3:5] = [[c, -s], [s, c]]
    return R


def quadratic_screen(system, x, radius):
    """Conservative test ``dist(x, variety) <= radius`` for systems of degree <= 2.

    For a quadratic ``p`` and any point ``c`` with ``p(c) = 0``,
    ``|p(x)| <= |grad p(x)| d + |Hess p| d^2 / 2``.
    """
    ok = np.ones(x.shape[0], dtype=bool)
    r = system.residual(x)
    J = system.jacobian(x)
    for i, p in enumerate(system.polys):
        if p.degree() > 2:
            raise DomainError("screen needs a system of degree <= 2")
        Hm = np.array([[p.diff(a).diff(b)(np.zeros(system.ambient_dim)) for b in range(system.ambient_dim)]
                       for a in range(system.ambient_dim)])
        hb = np.linalg.norm(Hm, 2)
        ok &= np.abs(r[:, i]) <= np.linalg.norm(J[:, i, :], axis=1) * radius + 0.5 * hb * radius ** 2 + 1e-12
    return ok


def surface_cp(points, multistart=32):
    entry = catalogue("revolution", 1.0)
    return cp_nearest_param(entry, points, multistart=multistart).point


def surface_band(h=DEMO_H, box=DEMO_BOX, radius_factor=None, sample_lattice=(64, 32),
                 multistart=32):
    """Banded grid around the ``eps = 1`` surface of revolution.

    Seeds are grid points with ``|x - cp(x)| <= radius`` (default half the cell
    diagonal); sampling stencils for the pull-down lattice are included.
    """
    entry = catalogue("revolution", 1.0)
    spec = GridSpec.cube(box, h)
    r = (np.sqrt(spec.ndim) / 2 if radius_factor is None else radius_factor) * h * (1 + 1e-9)
    cpf = lambda X: cp_nearest_param(entry, X, multistart=multistart).point  # noqa: E731

    def predicate(X):
        out = np.zeros(len(X), dtype=bool)
        m = quadratic_screen(entry.lifted_unit, X, r)
        if np.any(m):
            out[m] = np.linalg.norm(cpf(X[m]) - X[m], axis=1) <= r
        return out

    targets = pulldown_points(*sample_lattice)[2]
    return build_band(spec, predicate, cpf, targets)


@dataclass
class SurfaceOperator:
    grid: object
    E: TensorInterpolator
    D: list
    C: np.ndarray            # (n_core, n, n)
    eps: float
    mu: float

    def laplacian(self, w):
        """``sum_ij C_ij D_j E g_i`` with ``g_i = sum_k C_ik D_k w`` on core rows."""
        nc = self.grid.n_core
        n = len(self.D)
        Dw = np.stack([Dk @ w for Dk in self.D], axis=1)[:nc]          # (nc, n)
        g = np.zeros((w.size, n))
        g[:nc] = np.einsum("pik,pk->pi", self.C, Dw)
        Eg = self.E @ g if not isinstance(self.E, TensorInterpolator) else self.E.apply(g)
        out = np.zeros(w.size)
        for j in range(n):
            DjEg = (self.D[j] @ Eg)[:nc]                                 # (nc, n): d_j of E g_i
            out[:nc] += np.einsum("pi,pi->p", self.C[:, :, j], DjEg)
        return out

    def as_linear_operator(self):
        n = self.grid.n_active
        return LinearOperator((n, n), matvec=self.laplacian, dtype=np.float64)

    def extend(self, v):
        return self.E.apply(v) if isinstance(self.E, TensorInterpolator) else self.E @ v

    def explicit_step(self, w, tau):
        v = w + tau * (self.extend(self.laplacian(w)) - self.mu ** 2 * w)
        out = self.extend(v)
        if not np.all(np.isfinite(out)):
            raise SolverError("explicit step produced non-finite values")
        return out


def assemble_matrix_operator(grid, system, hdiag, eps, mu=1.0, matrix_free=True):
    """Matrix-coefficient closest point operator for any lifted variety."""
    C = coefficient_matrix(system, grid.cp[: grid.n_core], hdiag)
    if matrix_free:
        E = TensorInterpolator(grid, grid.cp)
        E.check()
    else:
        E = interp_matrix(grid, grid.cp)
    D = [diff_matrix(grid, a) for a in range(grid.spec.ndim)]
    return SurfaceOperator(grid, E, D, C, float(eps), float(mu))


def assemble_Lh_surface(grid, eps, mu=1.0):
    if not eps > 0:
        raise DomainError("eps must be positive")
    entry = catalogue("revolution", 1.0)
    return assemble_matrix_operator(grid, entry.lifted_unit, catalogue("revolution", eps).H.diag,
                                    eps, mu)


def demo_initial(x):
    """``exp(2 cos(4 arccos(2x - 1))^2) / 7.5``."""
    s = np.clip(2.0 * np.asarray(x, dtype=float) - 1.0, -1.0, 1.0)
    return np.exp(2.0 * np.cos(4.0 * np.arccos(s)) ** 2) / 7.5


def pulldown_points(n_theta=64, n_alpha=32, x_cut=0.05):
    """Lifted points ``(x, y, z, y/x, z/x)`` above a ``(theta, alpha)`` lattice of the base surface."""
    th = np.linspace(-np.pi, np.pi, n_theta, endpoint=False)
    al = np.linspace(0.0, 2 * np.pi, n_alpha, endpoint=False)
    T, A = np.meshgrid(th, al, indexing="ij")
    u = np.stack([T.ravel(), A.ravel()], axis=-1)
    base = catalogue("revolution", 0.0).base_point(u)
    keep = np.abs(base[:, 0]) >= x_cut
    u, base = u[keep], base[keep]
    x = base[:, 0]
    lifted = np.concatenate([base, (base[:, 1] / x)[:, None], (base[:, 2] / x)[:, None]], axis=1)
    return u[:, 0], u[:, 1], lifted


@dataclass
class DemoResult:
    theta: np.ndarray
    alpha: np.ndarray
    u_initial: np.ndarray
    u_final: np.ndarray
    max_history: list
    steps: int
    tau: float
    band_fraction: float
    active_fraction: float
    n_active: int
    h: float

    def alpha_symmetry_residual(self):
        res = 0.0
        for t in np.unique(self.theta):
            m = self.theta == t
            v = self.u_final[m]
            a = self.alpha[m]
            ref = v[np.argmin(a)]
            res = max(res, float(np.max(np.abs(v - ref))))
        return res


def run_demo(eps=0.5, t_final=1e-3, h=DEMO_H, mu=1.0, grid=None, lattice=(64, 32), progress=None):
    if grid is None:
        grid = surface_band(h, sample_lattice=lattice)
    ops = assemble_Lh_surface(grid, eps, mu)
    w = demo_initial(grid.cp[:, 0])
    tau0 = 0.25 * eps ** 2 * h ** 2
    steps = int(np.ceil(t_final / tau0 * (1 - 1e-12))) if t_final > 0 else 0
    tau = t_final / steps if steps else 0.0
    th, al, pts = pulldown_points(*lattice)
    S = interp_matrix(grid, pts)
    u_init = S @ w
    hist = [float(np.max(np.abs(w)))]
    for k in range(steps):
        w = ops.explicit_step(w, tau)
        hist.append(float(np.max(np.abs(w))))
        if progress:
            progress(k + 1, steps, hist[-1])
    return DemoResult(th, al, u_init, S @ w, hist, steps, tau, grid.band_fraction,
                      grid.active_fraction, grid.n_active, h)


def write_demo_csv(path, result):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("theta,alpha,u_initial,u_final\n")
        for row in zip(result.theta, result.alpha, result.u_initial, result.u_final):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
