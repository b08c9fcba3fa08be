"""Polynomial systems, point classification, and the catalogue of blown-up varieties.

Every catalogue entry pairs a singular base variety with its lifted
(desingularized) family, depending on a deformation parameter ``eps``.  The
lifted variety at ``eps`` is the image of the ``eps = 1`` variety under
``H_eps = diag(1, .., 1, eps, .., eps)``; the trailing coordinates are the ones
adjoined by the blow-up.  At ``eps = 0`` the entry exposes the base system and
the lifted parametrization collapses onto the base variety.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, NotOnVarietyError, SingularPointError


class Polynomial:
    """Sparse real polynomial in ``nvars`` variables: ``{exponents: coeff}``."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars, terms=None):
        self.nvars = int(nvars)
        self.terms = {}
        for e, c in (terms or {}).items():
            e = tuple(int(k) for k in e)
            if len(e) != self.nvars:
                raise DomainError("exponent length does not match nvars")
            if c != 0:
                self.terms[e] = self.terms.get(e, 0.0) + float(c)

    @classmethod
    def variables(cls, nvars):
        out = []
        for i in range(nvars):
            e = [0] * nvars
            e[i] = 1
            out.append(cls(nvars, {tuple(e): 1.0}))
        return out

    @classmethod
    def constant(cls, nvars, c):
        return cls(nvars, {(0,) * nvars: c})

    def _lift(self, other):
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise DomainError("polynomials live in different rings")
            return other
        return Polynomial.constant(self.nvars, float(other))

    def __add__(self, other):
        other = self._lift(other)
        t = dict(self.terms)
        for e, c in other.terms.items():
            t[e] = t.get(e, 0.0) + c
        return Polynomial(self.nvars, {e: c for e, c in t.items() if c != 0})

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        t = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                t[e] = t.get(e, 0.0) + c1 * c2
        return Polynomial(self.nvars, {e: c for e, c in t.items() if c != 0})

    __rmul__ = __mul__

    def __pow__(self, k):
        if int(k) != k or k < 0:
            raise DomainError("only non-negative integer powers")
        out = Polynomial.constant(self.nvars, 1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def degree(self):
        return max((sum(e) for e in self.terms), default=0)

    def diff(self, var):
        t = {}
        for e, c in self.terms.items():
            if e[var] > 0:
                e2 = list(e)
                e2[var] -= 1
                t[tuple(e2)] = c * e[var]
        return Polynomial(self.nvars, t)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.nvars:
            raise DomainError(f"point has dimension {x.shape[-1]}, expected {self.nvars}")
        out = np.zeros(x.shape[:-1])
        for e, c in self.terms.items():
            term = np.full(x.shape[:-1], c)
            for i, k in enumerate(e):
                if k:
                    term = term * x[..., i] ** k
            out = out + term
        return out

    def __repr__(self):
        return f"Polynomial({self.nvars}, {self.terms})"


@dataclass
class ImplicitSystem:
    """Zero set of ``polys`` in ``R^ambient_dim``."""

    polys: list
    ambient_dim: int
    _grads: list = field(init=False, repr=False)

    def __post_init__(self):
        for p in self.polys:
            if p.nvars != self.ambient_dim:
                raise DomainError("polynomial ring does not match ambient dimension")
        self._grads = [[p.diff(j) for j in range(self.ambient_dim)] for p in self.polys]

    @property
    def codim(self):
        return len(self.polys)

    def residual(self, x):
        """Values ``(..., m)``."""
        x = self._check(x)
        return np.stack([p(x) for p in self.polys], axis=-1)

    def jacobian(self, x):
        """Jacobian ``(..., m, n)``."""
        x = self._check(x)
        return np.stack([np.stack([g(x) for g in row], axis=-1) for row in self._grads], axis=-2)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.ambient_dim:
            raise DomainError(f"point has dimension {x.shape[-1]}, expected {self.ambient_dim}")
        return x


def eval_system(system, x):
    return system.residual(x), system.jacobian(x)


def numerical_rank(J):
    s = np.linalg.svd(np.atleast_2d(J), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > max(J.shape) * np.finfo(float).eps * s[0]))


def classify_point(system, x, tol=1e-10):
    """Return ``"regular"`` or ``"singular"`` for a point of the variety."""
    x = np.asarray(x, dtype=float)
    r = system.residual(x)
    if np.max(np.abs(r)) > tol:
        raise NotOnVarietyError(f"residual {np.max(np.abs(r)):.3e} exceeds {tol:g}")
    return "regular" if numerical_rank(system.jacobian(x)) == system.codim else "singular"


def tangent_projector(system, x, check_tol=1e-8):
    """Orthogonal projector onto the tangent space, ``(..., n, n)``.

    ``P = I - N (N^T N)^{-1} N^T`` with ``N`` the transposed Jacobian.
    Raises when ``N^T N`` is numerically singular.
    """
    x = np.asarray(x, dtype=float)
    J = system.jacobian(x)
    N = np.swapaxes(J, -1, -2)
    G = J @ N
    cond = np.linalg.cond(G)
    if np.any(~np.isfinite(cond)) or np.any(cond > 1.0 / check_tol ** 1.5):
        raise SingularPointError("Jacobian rank deficient; tangent space undefined")
    n = system.ambient_dim
    return np.eye(n) - N @ np.linalg.solve(G, J)


def unit_tangent_raw(system, x):
    """Unit vector spanning the null space of the Jacobian (curves only), unsigned."""
    J = np.asarray(system.jacobian(x))
    if J.shape[-2] != J.shape[-1] - 1:
        raise DomainError("unit tangent needs a curve (codimension n - 1)")
    if J.shape[-1] == 3:
        t = np.cross(J[..., 0, :], J[..., 1, :])
    else:
        _, _, vt = np.linalg.svd(J)
        t = vt[..., -1, :]
    nrm = np.linalg.norm(t, axis=-1, keepdims=True)
    if np.any(nrm <= 1e-13):
        raise SingularPointError("tangent undefined at a singular point")
    return t / nrm


# ---------------------------------------------------------------------------
# catalogue


@dataclass(frozen=True)
class DeformationMatrix:
    """``diag(1, .., 1, eps, .., eps)`` with ``n_base`` leading ones."""

    n_base: int
    n_total: int
    eps: float

    @property
    def diag(self):
        d = np.ones(self.n_total)
        d[self.n_base:] = self.eps
        return d

    def __call__(self, x):
        return np.asarray(x, dtype=float) * self.diag

    def inverse(self, x):
        if self.eps == 0:
            raise DomainError("H_0 is not invertible")
        return np.asarray(x, dtype=float) / self.diag


@dataclass(frozen=True)
class VarietyEntry:
    """One catalogue member at a fixed ``eps``.

    ``point(u)`` and ``tangents(u)`` take parameters with trailing axis of
    length ``param_dim`` and return lifted points ``(..., n)`` and tangent
    vectors ``(..., n, param_dim)``.
    """

    name: str
    eps: float
    base_dim: int
    ambient_dim: int
    param_dim: int
    base_system: ImplicitSystem
    lifted_unit: ImplicitSystem          # the eps = 1 lifted system
    lifted: ImplicitSystem | None        # at this eps; None when eps = 0
    _point1: Callable                    # eps = 1 parametrization
    _tangents1: Callable
    _blow_up: Callable                   # (base points, eps) -> lifted points
    singular_points: np.ndarray
    flags: frozenset = frozenset()
    _param_of: Callable | None = None    # eps = 1 lifted point -> parameters
    _valid_param: Callable | None = None

    @property
    def H(self):
        return DeformationMatrix(self.base_dim, self.ambient_dim, self.eps)

    @property
    def system(self):
        return self.lifted if self.lifted is not None else self.base_system

    def point(self, u):
        return self.H(self._point1(np.asarray(u, dtype=float)))

    def tangents(self, u):
        T = self._tangents1(np.asarray(u, dtype=float))
        return T * self.H.diag[:, None]

    def point_unit(self, u):
        return self._point1(np.asarray(u, dtype=float))

    def tangents_unit(self, u):
        return self._tangents1(np.asarray(u, dtype=float))

    # curve conveniences ---------------------------------------------------
    def gamma(self, theta):
        return self.point(np.asarray(theta, dtype=float)[..., None])

    def dgamma(self, theta):
        return self.tangents(np.asarray(theta, dtype=float)[..., None])[..., 0]

    def base_point(self, u):
        return self.blow_down(self.point(u))

    def blow_down(self, x):
        return np.asarray(x, dtype=float)[..., : self.base_dim]

    def blow_up(self, p, tol=1e-10):
        p = np.asarray(p, dtype=float)
        r = self.base_system.residual(p)
        if np.max(np.abs(r)) > tol:
            raise NotOnVarietyError(f"base residual {np.max(np.abs(r)):.3e}")
        return self._blow_up(p, self.eps)

    def param_of_unit(self, x):
        if self._param_of is None:
            raise DomainError(f"{self.name} has no closed-form inverse parametrization")
        return self._param_of(np.asarray(x, dtype=float))

    def valid_params(self, u):
        if self._valid_param is None:
            return np.ones(np.shape(u)[:-1], dtype=bool)
        return self._valid_param(np.asarray(u, dtype=float))

    def sample_params(self, n):
        """Deterministic samples of valid parameters, shape ``(n, param_dim)``."""
        if self.param_dim == 1:
            th = np.linspace(-np.pi, np.pi, 4 * n, endpoint=False)[:, None]
            th = th[self.valid_params(th)]
            idx = np.linspace(0, th.shape[0] - 1, n).round().astype(int)
            return th[idx]
        k = int(np.ceil(np.sqrt(n)))
        th, al = np.meshgrid(np.linspace(-np.pi, np.pi, k, endpoint=False),
                             np.linspace(0, 2 * np.pi, k, endpoint=False), indexing="ij")
        u = np.stack([th.ravel(), al.ravel()], axis=-1)
        return u[self.valid_params(u)][:n]


def _lift_guard(x):
    return np.where(x == 0, 1.0, x)


def _cusp(eps):
    x, y = Polynomial.variables(2)
    base = ImplicitSystem([y ** 2 - x ** 3 + x ** 4], 2)

    def lifted_system(e):
        X, Y, Z = Polynomial.variables(3)
        return ImplicitSystem([(1.0 / e ** 2) * Z ** 2 + (X - 0.5) ** 2 - 0.25, e * Y - Z * X], 3)

    def point1(u):
        th = u[..., 0]
        c, s = np.cos(th), np.sin(th)
        return np.stack([0.5 * (1 + c), 0.25 * (1 + c) * s, 0.5 * s], axis=-1)

    def tangents1(u):
        th = u[..., 0]
        c, s = np.cos(th), np.sin(th)
        return np.stack([-0.5 * s, 0.25 * (c + np.cos(2 * th)), 0.5 * c], axis=-1)[..., None]

    def blow_up(p, e):
        px, py = p[..., 0], p[..., 1]
        z = np.where(px == 0, 0.0, e * py / _lift_guard(px))
        return np.stack([px, py, z], axis=-1)

    def param_of(X):
        return np.arctan2(2 * X[..., 2], 2 * X[..., 0] - 1)[..., None]

    return dict(base_dim=2, ambient_dim=3, param_dim=1, base_system=base,
                lifted_unit=lifted_system(1.0),
                lifted=lifted_system(eps) if eps > 0 else None,
                _point1=point1, _tangents1=tangents1, _blow_up=blow_up,
                singular_points=np.array([[0.0, 0.0]]), _param_of=param_of)


def _cardioid(eps):
    x, y = Polynomial.variables(2)
    r2 = x ** 2 + y ** 2
    base = ImplicitSystem([r2 ** 2 - x * r2 - 0.25 * y ** 2], 2)

    def lifted_system(e):
        X, Y, Z = Polynomial.variables(3)
        q = 1 + (1.0 / e ** 2) * Z ** 2
        return ImplicitSystem([(X * q - 0.5) ** 2 - 0.25 * q, Y - (1.0 / e) * Z * X], 3)

    def point1(u):
        th = u[..., 0]
        c, s = np.cos(th), np.sin(th)
        return np.stack([0.5 * c * (1 + c), 0.5 * s * (1 + c), np.tan(th)], axis=-1)

    def tangents1(u):
        th = u[..., 0]
        c, s = np.cos(th), np.sin(th)
        with np.errstate(divide="ignore", over="ignore"):
            sec2 = np.where(c == 0, np.inf, 1.0 / c ** 2)
        return np.stack([-0.5 * s - s * c, 0.5 * (c + np.cos(2 * th)), sec2], axis=-1)[..., None]

    def blow_up(p, e):
        px, py = p[..., 0], p[..., 1]
        if np.any((px == 0) & (py != 0)):
            raise DomainError("cardioid blow-up is undefined where x = 0 away from the cusp")
        z = np.where(px == 0, 0.0, e * py / _lift_guard(px))
        return np.stack([px, py, z], axis=-1)

    def valid(u):
        return np.abs(np.cos(u[..., 0])) > 0.1

    return dict(base_dim=2, ambient_dim=3, param_dim=1, base_system=base,
                lifted_unit=lifted_system(1.0),
                lifted=lifted_system(eps) if eps > 0 else None,
                _point1=point1, _tangents1=tangents1, _blow_up=blow_up,
                singular_points=np.array([[0.0, 0.0]]),
                _param_of=lambda X: np.arctan2(X[..., 1], X[..., 0])[..., None],
                _valid_param=valid, flags=frozenset({"tears_apart"}))


def _figure_eight(eps):
    x, y = Polynomial.variables(2)
    base = ImplicitSystem([y ** 2 - x ** 2 + x ** 4], 2)

    def lifted_system(e):
        X, Y, Z = Polynomial.variables(3)
        return ImplicitSystem([(1.0 / e ** 2) * Z ** 2 + X ** 2 - 1, Y - (1.0 / e) * Z * X], 3)

    def point1(u):
        th = u[..., 0]
        c, s = np.cos(th), np.sin(th)
        return np.stack([s, c * s, c], axis=-1)

    def tangents1(u):
        th = u[..., 0]
        c, s = np.cos(th), np.sin(th)
        return np.stack([c, np.cos(2 * th), -s], axis=-1)[..., None]

    def blow_up(p, e):
        px, py = p[..., 0], p[..., 1]
        if np.any(px == 0):
            raise DomainError("figure-eight junction has two preimages; blow-up undefined there")
        return np.stack([px, py, e * py / px], axis=-1)

    return dict(base_dim=2, ambient_dim=3, param_dim=1, base_system=base,
                lifted_unit=lifted_system(1.0),
                lifted=lifted_system(eps) if eps > 0 else None,
                _point1=point1, _tangents1=tangents1, _blow_up=blow_up,
                singular_points=np.array([[0.0, 0.0]]),
                _param_of=lambda X: np.arctan2(X[..., 0], X[..., 2])[..., None],
                flags=frozenset({"junction_dependent"}))


def _double_cusp(eps):
    x, y = Polynomial.variables(2)
    base = ImplicitSystem([y ** 2 - x ** 3 * (1 - x) ** 3], 2)

    def lifted_system(e):
        X, Y, Z, W = Polynomial.variables(4)
        return ImplicitSystem([
            (1.0 / e ** 2) * W ** 2 + (X - 0.5) ** 2 - 0.25,
            Y - (1.0 / e) * Z * (X - 1),
            Z - W * X,
        ], 4)

    def point1(u):
        th = u[..., 0]
        c, s = np.cos(th), np.sin(th)
        return np.stack([0.5 * (1 + c), -s ** 3 / 8, 0.25 * s * (1 + c), 0.5 * s], axis=-1)

    def tangents1(u):
        th = u[..., 0]
        c, s = np.cos(th), np.sin(th)
        return np.stack([-0.5 * s, -3 * s ** 2 * c / 8, 0.25 * (c + np.cos(2 * th)), 0.5 * c],
                        axis=-1)[..., None]

    def blow_up(p, e):
        px, py = p[..., 0], p[..., 1]
        z = np.where((px == 1) | (px == 0), 0.0, e * py / _lift_guard(px - 1))
        w = np.where((px == 1) | (px == 0), 0.0, z / _lift_guard(px))
        return np.stack([px, py, z, w], axis=-1)

    return dict(base_dim=2, ambient_dim=4, param_dim=1, base_system=base,
                lifted_unit=lifted_system(1.0),
                lifted=lifted_system(eps) if eps > 0 else None,
                _point1=point1, _tangents1=tangents1, _blow_up=blow_up,
                singular_points=np.array([[0.0, 0.0], [1.0, 0.0]]),
                _param_of=lambda X: np.arctan2(2 * X[..., 3], 2 * X[..., 0] - 1)[..., None])


def _revolution(eps):
    x, y, z = Polynomial.variables(3)
    base = ImplicitSystem([y ** 2 + z ** 2 - x ** 3 + x ** 4], 3)

    def lifted_system(e):
        X, Y, Z, XI, ETA = Polynomial.variables(5)
        return ImplicitSystem([
            (1.0 / e ** 2) * (XI ** 2 + ETA ** 2) + (X - 0.5) ** 2 - 0.25,
            e * Y - XI * X,
            e * Z - ETA * X,
        ], 5)

    def point1(u):
        th, al = u[..., 0], u[..., 1]
        c, s = np.cos(th), np.sin(th)
        ca, sa = np.cos(al), np.sin(al)
        f = 0.25 * (1 + c) * s
        g = 0.5 * s
        return np.stack([0.5 * (1 + c), f * ca, f * sa, g * ca, g * sa], axis=-1)

    def tangents1(u):
        th, al = u[..., 0], u[..., 1]
        c, s = np.cos(th), np.sin(th)
        ca, sa = np.cos(al), np.sin(al)
        f = 0.25 * (1 + c) * s
        g = 0.5 * s
        df = 0.25 * (c + np.cos(2 * th))
        dg = 0.5 * c
        zero = np.zeros_like(th)
        d_th = np.stack([-0.5 * s, df * ca, df * sa, dg * ca, dg * sa], axis=-1)
        d_al = np.stack([zero, -f * sa, f * ca, -g * sa, g * ca], axis=-1)
        return np.stack([d_th, d_al], axis=-1)

    def blow_up(p, e):
        px = p[..., 0]
        safe = _lift_guard(px)
        xi = np.where(px == 0, 0.0, e * p[..., 1] / safe)
        eta = np.where(px == 0, 0.0, e * p[..., 2] / safe)
        return np.stack([px, p[..., 1], p[..., 2], xi, eta], axis=-1)

    def param_of(X):
        rho = np.hypot(X[..., 3], X[..., 4])
        th = np.arctan2(2 * rho, 2 * X[..., 0] - 1)
        al = np.mod(np.arctan2(X[..., 4], X[..., 3]), 2 * np.pi)
        return np.stack([th, al], axis=-1)

    return dict(base_dim=3, ambient_dim=5, param_dim=2, base_system=base,
                lifted_unit=lifted_system(1.0),
                lifted=lifted_system(eps) if eps > 0 else None,
                _point1=point1, _tangents1=tangents1, _blow_up=blow_up,
                singular_points=np.array([[0.0, 0.0, 0.0]]), _param_of=param_of)


_BUILDERS = {
    "cusp": _cusp,
    "cardioid": _cardioid,
    "figure_eight": _figure_eight,
    "double_cusp": _double_cusp,
    "revolution": _revolution,
}

CATALOGUE_NAMES = tuple(_BUILDERS)


def catalogue(name, eps=1.0):
    if name not in _BUILDERS:
        raise DomainError(f"unknown variety {name!r}; known: {', '.join(_BUILDERS)}")
    eps = float(eps)
    if not np.isfinite(eps) or eps < 0:
        raise DomainError("eps must be a non-negative real")
    return VarietyEntry(name=name, eps=eps, **_BUILDERS[name](eps))
