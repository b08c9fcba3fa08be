import functools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blowup_cpm.band_grid import (GridSpec, TensorInterpolator, build_band, closure_is_complete,
                                  cubic_weights, diag_matrix, diff_matrix, interp_matrix,
                                  load_band_indices, save_band, stencil_data)
from blowup_cpm.errors import BandConfigurationError, DomainError, StencilError

BOX = ((-1.0, 1.0),) * 3


def sphere_cp(X, r=0.6):
    return r * X / np.linalg.norm(X, axis=1, keepdims=True)


@functools.lru_cache(maxsize=None)
def sphere_band(h, r=0.6):
    spec = GridSpec.cube(BOX, h)
    pred = lambda X: np.abs(np.linalg.norm(X, axis=1) - r) <= np.sqrt(3) / 2 * h  # noqa: E731
    return build_band(spec, pred, lambda X: sphere_cp(X, r))


@pytest.fixture(scope="module")
def sph():
    return sphere_band(0.1)


def test_gridspec_validation():
    s = GridSpec.cube(BOX, 0.25)
    assert s.shape == (9, 9, 9) and s.size == 729 and s.ndim == 3
    assert s.strides.tolist() == [81, 9, 1]
    flat = np.array([0, 5, 728])
    assert np.array_equal(s.flat_of(s.multi_of(flat)), flat)
    assert np.allclose(s.coords(728), [1, 1, 1])
    with pytest.raises(DomainError):
        GridSpec.cube(BOX, 0.3)
    with pytest.raises(DomainError):
        GridSpec.cube(BOX, 0.0)
    with pytest.raises(DomainError):
        GridSpec((0.0,), (1.0, 2.0), 0.5)
    seen = np.concatenate([f for f, _ in s.iter_points(chunk=100)])
    assert np.array_equal(seen, np.arange(729))


def test_cubic_weights():
    for t in (0.0, 0.3, 0.999):
        w = cubic_weights(t)
        assert abs(w.sum() - 1) < 1e-14
        nodes = np.array([-1, 0, 1, 2.0])
        for k in range(4):
            assert abs(w @ nodes ** k - t ** k) < 1e-13
    assert np.allclose(cubic_weights(0.0), [0, 1, 0, 0])


def test_stencil_snapping_and_box():
    s = GridSpec.cube(BOX, 0.25)
    first, w = stencil_data(s, np.array([[0.25 - 1e-15, 0.0, 0.0]]))
    assert np.allclose(w[0, 0], [0, 1, 0, 0])
    with pytest.raises(StencilError):
        stencil_data(s, np.array([[0.95, 0.0, 0.0]]))


def test_band_structure(sph):
    assert 0 < sph.band_fraction < sph.active_fraction < 1
    assert sph.n_core <= sph.n_active
    assert closure_is_complete(sph)
    assert np.array_equal(sph.ordinal(sph.active), np.arange(sph.n_active))
    outside = np.setdiff1d(np.arange(sph.spec.size), sph.active)
    assert np.all(sph.ordinal(outside) == -1)
    assert np.allclose(sph.cp, sphere_cp(sph.points))
    # rebuilding is deterministic
    again = sphere_band(0.1)
    assert np.array_equal(again.active, sph.active) and again.n_core == sph.n_core


def test_band_minimality(sph):
    """Dropping a padding point breaks closure; padding points are nobody's stencil point."""
    E = interp_matrix(sph, sph.cp)
    used = np.unique(E.indices)
    assert used.max() < sph.n_core
    pad = sph.active[sph.n_core:]
    spec = sph.spec
    multi = spec.multi_of(pad)
    core_mask = np.zeros(spec.size, bool)
    core_mask[sph.active[:sph.n_core]] = True
    touches = np.zeros(pad.size, bool)
    for a in range(3):
        for d in (-1, 1):
            m = multi.copy()
            m[:, a] += d
            ok = (m[:, a] >= 0) & (m[:, a] < spec.shape[a])
            touches[ok] |= core_mask[spec.flat_of(m[ok])]
    assert touches.all()


def test_band_errors():
    spec = GridSpec.cube(BOX, 0.1)
    with pytest.raises(BandConfigurationError):
        build_band(spec, lambda X: np.zeros(len(X), bool), sphere_cp)
    with pytest.raises(BandConfigurationError):
        sphere_band(0.1, r=0.95)
    with pytest.raises(BandConfigurationError):
        sphere_band(0.25, r=0.5)  # stencils reach the centre where the projection is undefined


def test_unit_rows_and_exact_cubic(sph):
    E = interp_matrix(sph, sph.cp)
    assert np.allclose(np.asarray(E.sum(axis=1)).ravel(), 1.0, atol=1e-13)
    X = sph.points
    p = lambda Y: Y[:, 0] ** 3 + 2 * Y[:, 1] ** 2 * Y[:, 2]  # noqa: E731
    assert np.abs(E @ p(X) - p(sph.cp)).max() < 1e-12
    # closest points that are grid nodes reproduce the nodal value
    on_node = np.array([[0.6, 0.0, 0.0], [0.0, -0.6, 0.0]])
    assert np.allclose(interp_matrix(sph, on_node).toarray().max(axis=1), 1.0)


def test_interp_fourth_order():
    f = lambda Y: np.sin(2 * Y[:, 0]) * np.cos(Y[:, 1]) * np.exp(Y[:, 2])  # noqa: E731
    errs = []
    for h in (0.1, 0.05):
        g = sphere_band(h)
        errs.append(np.abs(interp_matrix(g, g.cp) @ f(g.points) - f(g.cp)).max())
    assert 10 < errs[0] / errs[1] < 24


def test_diff_matrix(sph):
    X = sph.points
    D = [diff_matrix(sph, a) for a in range(3)]
    c = sph.n_core
    assert np.abs((D[0] @ np.ones(sph.n_active))[:c]).max() < 1e-12
    for a in range(3):
        lin = 2 * X[:, 0] - X[:, 1] + 3 * X[:, 2]
        assert np.allclose((D[a] @ lin)[:c], [2, -1, 3][a], atol=1e-12)
        assert np.all((D[a] @ lin)[c:] == 0)
    def err(h):
        g = sphere_band(h)
        return np.abs((diff_matrix(g, 0) @ np.sin(g.points[:, 0]))[:g.n_core]
                      - np.cos(g.points[:g.n_core, 0])).max()

    assert 3.5 < err(0.1) / err(0.05) < 4.5
    with pytest.raises(DomainError):
        diff_matrix(sph, 3)


def test_diff_skew_on_core(sph):
    c = sph.n_core
    D = diff_matrix(sph, 1)[:c, :c].toarray()
    # interior core rows whose neighbours are core: D is antisymmetric there
    inner = np.flatnonzero(np.count_nonzero(D, axis=1) == 2)
    sub = D[np.ix_(inner, inner)]
    assert np.abs(sub + sub.T).max() < 1e-12


def test_diag_matrix():
    d = diag_matrix([1, 2, 3])
    assert np.array_equal(d.toarray(), np.diag([1.0, 2, 3]))
    with pytest.raises(DomainError):
        diag_matrix([1, 2], size=3)


@given(st.integers(0, 1000))
def test_tensor_interpolator_matches_matrix(seed):
    g = sphere_band(0.1)
    rng = np.random.default_rng(seed)
    v = rng.normal(size=g.n_active)
    T = sphere_cp(rng.normal(size=(50, 3)))
    E = interp_matrix(g, T)
    Ti = TensorInterpolator(g, T)
    Ti.check()
    assert np.abs(Ti @ v - E @ v).max() < 1e-12
    V = rng.normal(size=(g.n_active, 2))
    assert np.abs(Ti.apply(V) - E @ V).max() < 1e-12


def test_interp_outside_band(sph):
    with pytest.raises(StencilError):
        interp_matrix(sph, np.array([[0.0, 0.0, 0.0]]))
    with pytest.raises(StencilError):
        TensorInterpolator(sph, np.array([[0.0, 0.0, 0.0]]))


def test_band_dump_roundtrip(tmp_path, sph):
    path = tmp_path / "band.bin"
    save_band(path, sph)
    spec, active, n_core, seeds = load_band_indices(path)
    assert spec == sph.spec
    assert np.array_equal(active, sph.active)
    assert (n_core, seeds) == (sph.n_core, sph.seed_count)
    (tmp_path / "bad.bin").write_bytes(b"nonsense" * 4)
    with pytest.raises(DomainError):
        load_band_indices(tmp_path / "bad.bin")


def test_cusp_band(cusp_grids):
    g = cusp_grids(0.1)
    assert g.n_active == 1367
    assert closure_is_complete(g)
    assert 0 < g.band_fraction < 1
