"""Uniform Cartesian grids restricted to a band around a variety.

Index conventions: a grid point has a multi-index ``(i_1, .., i_n)`` and a
row-major flat index.  A :class:`BandedGrid` stores the active flat indices in
band order (core points first, then padding) and a dense lookup from flat
index to band ordinal (``-1`` outside the band).

Core points are the points read by interpolation (the union of all cubic
stencils around closest points of active points, together with the seed
band).  Padding points are axis neighbours of core points that are not core;
they carry values and closest points but no difference rows.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .errors import BandConfigurationError, DomainError, StencilError

CHUNK = 1 << 16


@dataclass(frozen=True)
class GridSpec:
    lo: tuple
    hi: tuple
    h: float

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or len(lo) < 1:
            raise DomainError("box bounds have mismatched dimension")
        if not self.h > 0:
            raise DomainError("mesh width must be positive")
        for a, b in zip(lo, hi):
            cells = (b - a) / self.h
            if b <= a or abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
                raise DomainError(f"extent {b - a} is not an integer multiple of h = {self.h}")

    @classmethod
    def cube(cls, box, h):
        return cls(tuple(b[0] for b in box), tuple(b[1] for b in box), h)

    @property
    def ndim(self):
        return len(self.lo)

    @property
    def shape(self):
        return tuple(int(round((b - a) / self.h)) + 1 for a, b in zip(self.lo, self.hi))

    @property
    def size(self):
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def strides(self):
        s = np.ones(self.ndim, dtype=np.int64)
        for a in range(self.ndim - 2, -1, -1):
            s[a] = s[a + 1] * self.shape[a + 1]
        return s

    def multi_of(self, flat):
        return np.stack(np.unravel_index(np.asarray(flat, dtype=np.int64), self.shape), axis=-1)

    def flat_of(self, multi):
        return np.asarray(multi, dtype=np.int64) @ self.strides

    def coords(self, flat):
        return np.asarray(self.lo) + self.h * self.multi_of(flat)

    def iter_points(self, chunk=CHUNK):
        for s in range(0, self.size, chunk):
            flat = np.arange(s, min(self.size, s + chunk), dtype=np.int64)
            yield flat, self.coords(flat)


# ---------------------------------------------------------------------------
# cubic stencils


def cubic_weights(t):
    """Lagrange weights for nodes ``-1, 0, 1, 2`` at local coordinate ``t``."""
    t = np.asarray(t, dtype=float)
    return np.stack([
        -t * (t - 1) * (t - 2) / 6.0,
        (t + 1) * (t - 1) * (t - 2) / 2.0,
        -(t + 1) * t * (t - 2) / 2.0,
        (t + 1) * t * (t - 1) / 6.0,
    ], axis=-1)


def stencil_data(spec, targets):
    """First stencil multi-index ``(P, n)`` and per-axis weights ``(P, n, 4)``."""
    X = np.asarray(targets, dtype=float).reshape(-1, spec.ndim)
    if not np.all(np.isfinite(X)):
        raise StencilError("interpolation target is not finite")
    u = (X - np.asarray(spec.lo)) / spec.h
    k = np.floor(u)
    t = u - k
    snap = t > 1.0 - 1e-12
    k = np.where(snap, k + 1, k)
    t = np.where(snap, t - 1.0, t)
    first = k.astype(np.int64) - 1
    shape = np.asarray(spec.shape)
    if np.any(first < 0) or np.any(first + 3 > shape - 1):
        raise StencilError("interpolation stencil leaves the grid box")
    return first, cubic_weights(t)


def stencil_offsets(spec, width=4):
    """Flat offsets of a ``width^n`` block relative to its first corner."""
    grids = np.meshgrid(*[np.arange(width)] * spec.ndim, indexing="ij")
    multi = np.stack([g.ravel() for g in grids], axis=-1)
    return multi @ spec.strides


def tensor_weights(w1d):
    """Outer product of per-axis weights ``(P, n, 4)`` -> ``(P, 4^n)``."""
    P, n, _ = w1d.shape
    W = w1d[:, 0, :]
    for a in range(1, n):
        W = (W[:, :, None] * w1d[:, a, None, :]).reshape(P, -1)
    return W


# ---------------------------------------------------------------------------
# banded grid


@dataclass
class BandedGrid:
    spec: GridSpec
    active: np.ndarray        # flat indices, core first
    n_core: int
    cp: np.ndarray            # closest points of active points, (n_active, n)
    seed_count: int
    lookup: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.lookup is None:
            self.lookup = np.full(self.spec.size, -1, dtype=np.int64)
            self.lookup[self.active] = np.arange(self.active.size)

    @property
    def n_active(self):
        return int(self.active.size)

    @property
    def points(self):
        return self.spec.coords(self.active)

    def ordinal(self, flat):
        return self.lookup[np.asarray(flat, dtype=np.int64)]

    @property
    def band_fraction(self):
        """Seed band points over all grid points."""
        return self.seed_count / self.spec.size

    @property
    def active_fraction(self):
        """Active points (band plus stencil closure) over all grid points."""
        return self.n_active / self.spec.size


def _mark_stencils(spec, mask, targets, chunk=8192):
    offs = stencil_offsets(spec)
    for s in range(0, len(targets), chunk):
        first, _ = stencil_data(spec, targets[s:s + chunk])
        base = spec.flat_of(first)
        mask[(base[:, None] + offs[None, :]).ravel()] = True


def _neighbor_flats(spec, flat):
    multi = spec.multi_of(flat)
    shape = np.asarray(spec.shape)
    out = []
    for a in range(spec.ndim):
        for d in (-1, 1):
            m = multi.copy()
            m[:, a] += d
            if np.any(m[:, a] < 0) or np.any(m[:, a] >= shape[a]):
                raise BandConfigurationError("band reaches the box boundary; enlarge the box")
            out.append(spec.flat_of(m))
    return np.concatenate(out) if out else np.empty(0, np.int64)


def build_band(spec, band_predicate, cp_fn, extra_targets=None, max_rounds=50):
    """Seed band from ``band_predicate`` closed under stencils and neighbours.

    ``band_predicate(points) -> bool mask``; ``cp_fn(points) -> closest points``.
    ``extra_targets`` are points whose stencils must be available (for
    sampling the solution on the variety).
    """
    seed_parts = []
    for flat, pts in spec.iter_points():
        m = np.asarray(band_predicate(pts), dtype=bool)
        if np.any(m):
            seed_parts.append(flat[m])
    seeds = np.concatenate(seed_parts) if seed_parts else np.empty(0, np.int64)
    if seeds.size == 0:
        raise BandConfigurationError("band predicate selects no grid point")

    core = np.zeros(spec.size, dtype=bool)
    core[seeds] = True
    try:
        if extra_targets is not None and len(extra_targets):
            _mark_stencils(spec, core, np.asarray(extra_targets, float).reshape(-1, spec.ndim))
    except StencilError as exc:
        raise BandConfigurationError(f"sampling stencil leaves the box: {exc}") from exc

    cp_known = np.zeros(spec.size, dtype=bool)
    cp_store = {}
    for _ in range(max_rounds):
        core_flat = np.flatnonzero(core)
        act = np.zeros(spec.size, dtype=bool)
        act[core_flat] = True
        act[_neighbor_flats(spec, core_flat)] = True
        new = np.flatnonzero(act & ~cp_known)
        if new.size == 0:
            break
        cps = np.asarray(cp_fn(spec.coords(new)), dtype=float)
        for s in range(0, new.size, CHUNK):
            cp_store[int(new[s])] = (new[s:s + CHUNK], cps[s:s + CHUNK])
        cp_known[new] = True
        try:
            _mark_stencils(spec, core, cps)
        except StencilError as exc:
            raise BandConfigurationError(f"closure stencil is invalid: {exc}") from exc
    else:
        raise BandConfigurationError("stencil closure did not terminate")

    core_flat = np.flatnonzero(core)
    act = np.zeros(spec.size, dtype=bool)
    act[core_flat] = True
    act[_neighbor_flats(spec, core_flat)] = True
    pad_flat = np.flatnonzero(act & ~core)
    active = np.concatenate([core_flat, pad_flat])

    lookup = np.full(spec.size, -1, dtype=np.int64)
    lookup[active] = np.arange(active.size)
    cp = np.empty((active.size, spec.ndim))
    for flats, cps in cp_store.values():
        o = lookup[flats]
        keep = o >= 0
        cp[o[keep]] = cps[keep]
    return BandedGrid(spec, active, int(core_flat.size), cp, int(seeds.size), lookup)


def closure_is_complete(grid):
    """True when every stencil of an active closest point and every core neighbour is active."""
    spec = grid.spec
    offs = stencil_offsets(spec)
    first, _ = stencil_data(spec, grid.cp)
    cols = spec.flat_of(first)[:, None] + offs[None, :]
    if np.any(grid.lookup[cols] < 0) or np.any(grid.lookup[cols] >= grid.n_core):
        return False
    nb = _neighbor_flats(spec, grid.active[: grid.n_core])
    return bool(np.all(grid.lookup[nb] >= 0))


# ---------------------------------------------------------------------------
# operators


def interp_matrix(grid, targets):
    """Sparse tensor-cubic interpolation from band values to ``targets``."""
    spec = grid.spec
    T = np.asarray(targets, dtype=float).reshape(-1, spec.ndim)
    offs = stencil_offsets(spec)
    rows, cols, vals = [], [], []
    step = max(1, (1 << 20) // offs.size)
    for s in range(0, T.shape[0], step):
        first, w1 = stencil_data(spec, T[s:s + step])
        W = tensor_weights(w1)
        flat = spec.flat_of(first)[:, None] + offs[None, :]
        ords = grid.lookup[flat]
        if np.any(ords < 0):
            raise StencilError("interpolation stencil leaves the band")
        rows.append(np.repeat(np.arange(s, s + first.shape[0]), offs.size))
        cols.append(ords.ravel())
        vals.append(W.ravel())
    E = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(T.shape[0], grid.n_active))
    E.eliminate_zeros()
    return E


class TensorInterpolator(LinearOperator):
    """Matrix-free tensor-cubic interpolation (for bands too large to store ``E``).

    Stores only the first stencil corner and the per-axis weights of each
    target; stencil values are gathered and contracted axis by axis.
    """

    def __init__(self, grid, targets, chunk=2048):
        spec = grid.spec
        T = np.asarray(targets, dtype=float).reshape(-1, spec.ndim)
        first, self.w1 = stencil_data(spec, T)
        self.base = spec.flat_of(first)
        self.offs = stencil_offsets(spec)
        self.lookup = grid.lookup
        self.ndim = spec.ndim
        self.chunk = chunk
        ords = self.lookup[self.base[:, None] + self.offs[None, :]] if T.shape[0] < 4096 else None
        if ords is not None and np.any(ords < 0):
            raise StencilError("interpolation stencil leaves the band")
        super().__init__(dtype=np.float64, shape=(T.shape[0], grid.n_active))

    def check(self):
        for s in range(0, self.base.size, self.chunk):
            ords = self.lookup[self.base[s:s + self.chunk, None] + self.offs[None, :]]
            if np.any(ords < 0):
                raise StencilError("interpolation stencil leaves the band")

    def apply(self, V):
        V = np.asarray(V, dtype=float)
        vec = V.ndim == 1
        if vec:
            V = V[:, None]
        k = V.shape[1]
        out = np.empty((self.base.size, k))
        n = self.ndim
        for s in range(0, self.base.size, self.chunk):
            ords = self.lookup[self.base[s:s + self.chunk, None] + self.offs[None, :]]
            vals = V[ords]                                   # (c, 4^n, k)
            c = vals.shape[0]
            w = self.w1[s:s + self.chunk]
            for a in range(n):                               # contract leading stencil axis
                vals = np.einsum("cjr,cj->cr", vals.reshape(c, 4, -1), w[:, a, :])
            out[s:s + c] = vals.reshape(c, k)
        return out[:, 0] if vec else out

    def _matvec(self, v):
        return self.apply(v)

    def _matmat(self, V):
        return self.apply(V)


def diff_matrix(grid, axis):
    """Central difference ``(f(x + h e_a) - f(x - h e_a)) / 2h`` on core rows."""
    spec = grid.spec
    if not 0 <= axis < spec.ndim:
        raise DomainError("axis out of range")
    core = grid.active[: grid.n_core]
    multi = spec.multi_of(core)
    cols = []
    for d in (1, -1):
        m = multi.copy()
        m[:, axis] += d
        if np.any(m[:, axis] < 0) or np.any(m[:, axis] >= spec.shape[axis]):
            raise BandConfigurationError("difference stencil leaves the box")
        o = grid.lookup[spec.flat_of(m)]
        if np.any(o < 0):
            raise StencilError("difference neighbour missing from band")
        cols.append(o)
    rows = np.arange(grid.n_core)
    inv = 1.0 / (2.0 * spec.h)
    D = sp.csr_matrix((np.concatenate([np.full(rows.size, inv), np.full(rows.size, -inv)]),
                       (np.concatenate([rows, rows]), np.concatenate(cols))),
                      shape=(grid.n_active, grid.n_active))
    return D


def diag_matrix(values, size=None):
    values = np.asarray(values, dtype=float).ravel()
    if size is not None and values.size != size:
        raise DomainError(f"diagonal has length {values.size}, expected {size}")
    return sp.diags(values, format="csr")


# ---------------------------------------------------------------------------
# band index dump

_MAGIC = b"CPMBAND\0"
_VERSION = 1


def save_band(path, grid):
    spec = grid.spec
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, spec.ndim))
        fh.write(struct.pack(f"<{spec.ndim}d", *spec.lo))
        fh.write(struct.pack(f"<{spec.ndim}d", *spec.hi))
        fh.write(struct.pack("<dQQQ", spec.h, grid.n_core, grid.n_active, grid.seed_count))
        fh.write(np.asarray(grid.active, dtype="<i8").tobytes())


def load_band_indices(path):
    """Return ``(spec, active, n_core, seed_count)`` from a band dump."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise DomainError("not a band dump")
        version, n = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise DomainError(f"unsupported band dump version {version}")
        lo = struct.unpack(f"<{n}d", fh.read(8 * n))
        hi = struct.unpack(f"<{n}d", fh.read(8 * n))
        h, n_core, n_active, seeds = struct.unpack("<dQQQ", fh.read(32))
        active = np.frombuffer(fh.read(8 * n_active), dtype="<i8").astype(np.int64)
    return GridSpec(lo, hi, h), active, int(n_core), int(seeds)
