import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carleman import _core
from carleman.geodist import (BumpProfile, GeodistError, GridDomain, build_sweep,
                              geodesic_distance, load_grid, neighbor_offsets,
                              region_of_dependence, save_grid, save_grid_csv, sup_distance)
from carleman.geodist import _edge_weights


def point_source(dom, idx):
    s = np.zeros(dom.shape, bool)
    s[idx] = True
    return s


def test_neighbor_offsets_counts():
    assert len(neighbor_offsets(1)) == 2
    assert len(neighbor_offsets(2)) == 8
    assert len(neighbor_offsets(3)) == 26
    # order 2 in 2D adds the 8 knight moves
    assert len(neighbor_offsets(2, 2)) == 16


def test_1d_distance_is_exact():
    dom = GridDomain([0.0], [1.0], [101])
    d = geodesic_distance(dom, point_source(dom, 30))
    np.testing.assert_allclose(d, np.abs(dom.axes()[0] - 0.3), atol=1e-13)


def test_constant_metric_scales_distance():
    flat = GridDomain([0.0, 0.0], [1.0, 1.0], [21, 21])
    scaled = GridDomain([0.0, 0.0], [1.0, 1.0], [21, 21], metric=[["4", "0"], ["0", "4"]])
    src = point_source(flat, (10, 10))
    np.testing.assert_allclose(geodesic_distance(scaled, src), 2 * geodesic_distance(flat, src),
                               rtol=1e-14)


def test_2d_overestimate_bound():
    dom = GridDomain([-1.0, -1.0], [1.0, 1.0], [41, 41])
    d = geodesic_distance(dom, point_source(dom, (20, 20)))
    X, Y = dom.coords()
    r = np.hypot(X, Y)
    far = r > 0
    ratio = d[far] / r[far]
    assert ratio.min() >= 1 - 1e-12
    assert ratio.max() <= math.sqrt(4 - 2 * math.sqrt(2)) + 1e-12
    # axes and diagonals are exact
    np.testing.assert_allclose(d[20, :], np.abs(dom.axes()[1]), atol=1e-13)
    np.testing.assert_allclose(np.diag(d), np.abs(dom.axes()[0]) * math.sqrt(2), atol=1e-13)


def test_mask_forces_detour():
    shape = (21, 21)
    mask = np.ones(shape, bool)
    mask[10, 0:18] = False
    dom_open = GridDomain([0.0, 0.0], [1.0, 1.0], shape)
    dom_wall = GridDomain([0.0, 0.0], [1.0, 1.0], shape, mask=mask)
    src = point_source(dom_open, (0, 2))
    assert geodesic_distance(dom_wall, src)[20, 2] > geodesic_distance(dom_open, src)[20, 2] + 0.5
    assert np.isinf(geodesic_distance(dom_wall, src)[10, 5])


def test_bad_inputs():
    with pytest.raises(GeodistError):
        GridDomain([0.0], [1.0], [1])
    with pytest.raises(GeodistError):
        GridDomain([0.0, 0.0], [1.0, 1.0], [5, 5], metric=[["1", "x1"], ["0", "1"]]).metric_at(
            np.array([[0.5, 0.5]]))
    dom = GridDomain([0.0, 0.0], [1.0, 1.0], [5, 5], metric=[["-1", "0"], ["0", "1"]])
    with pytest.raises(GeodistError):
        geodesic_distance(dom, point_source(dom, (2, 2)))
    with pytest.raises(GeodistError):
        geodesic_distance(GridDomain([0.0], [1.0], [5]), np.zeros(5, bool))


def test_sup_distance_is_directional():
    dom = GridDomain([0.0], [1.0], [11])
    x = dom.axes()[0]
    E0 = x <= 0.2
    E1 = x >= 0.5
    assert sup_distance(dom, E1, E0) == pytest.approx(0.8)
    assert sup_distance(dom, E0, E1) == pytest.approx(0.5)


def test_region_of_dependence():
    dom = GridDomain([0.0], [1.0], [11])
    omega = np.zeros(11, bool)
    omega[5] = True
    R = region_of_dependence(dom, omega, 0.3, [0.0, 0.1, 0.3])
    assert R[0].sum() == 5 and R[1].sum() == 3 and R[2].sum() == 0


def test_grid_file_round_trip(tmp_path):
    vals = np.random.default_rng(1).standard_normal((4, 6))
    save_grid(tmp_path / "a.cgrid", vals, [0.1, 0.2], origin=[1.0, 2.0], kind="distance")
    back, hdr = load_grid(tmp_path / "a.cgrid")
    np.testing.assert_array_equal(back, vals)
    assert hdr["shape"] == [4, 6] and hdr["kind"] == "distance" and hdr["byteorder"] == "little"
    (tmp_path / "b.cgrid").write_bytes(b"nope")
    with pytest.raises(GeodistError):
        load_grid(tmp_path / "b.cgrid")


def test_grid_csv(tmp_path):
    dom = GridDomain([0.0, 0.0], [1.0, 1.0], [3, 2])
    save_grid_csv(tmp_path / "g.csv", dom, np.arange(6.0).reshape(3, 2))
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,value" and len(lines) == 7


def test_backends_agree():
    dom = GridDomain([-1.0, -1.0], [1.0, 1.0], [25, 25], metric=[["1 + x1^2", "0.2"], ["0.2", "2"]])
    W, offs = _edge_weights(dom, 1)
    src = np.zeros(625, np.uint8)
    src[[0, 300]] = 1
    a = _core.get_backend("python").dijkstra(W, offs, src)
    if _core.BACKEND != "compiled":
        pytest.skip("compiled kernels not built")
    b = _core.get_backend("compiled").dijkstra(W, offs, src)
    np.testing.assert_array_equal(np.asarray(a), np.asarray(b))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 14), st.integers(0, 14), st.floats(0.1, 2.0))
def test_distance_is_one_lipschitz_along_edges(i, j, a):
    dom = GridDomain([0.0, 0.0], [1.0, 1.0], [15, 15], metric=[[f"1 + {a}*x1^2", "0"], ["0", "1"]])
    d = geodesic_distance(dom, point_source(dom, (i, j))).reshape(-1)
    W, offs = _edge_weights(dom, 1)
    assert d[i * 15 + j] == 0.0 and np.all(d >= 0)
    for k, o in enumerate(offs):
        ok = np.isfinite(W[k])
        src = np.flatnonzero(ok)
        assert np.all(np.abs(d[src + o] - d[src]) <= W[k, ok] + 1e-12)


def test_bump_profile_values_and_derivatives():
    z = BumpProfile(0.6, 0.05)
    assert float(z(0.0)) == pytest.approx(1.0, abs=1e-15)
    assert float(z(1.0)) == 0.0 and float(z(-1.0)) == 0.0
    s = np.linspace(-0.95, 0.95, 77)
    np.testing.assert_allclose(z(s), z(-s), atol=1e-15)
    h = 1e-6
    np.testing.assert_allclose(z.deriv(s), (z(s + h) - z(s - h)) / (2 * h), atol=1e-6)
    np.testing.assert_allclose(z.deriv2(s), (z.deriv(s + h) - z.deriv(s - h)) / (2 * h), atol=1e-4)
    # the peak loses 5w/(16 s1) to smoothing, which steepens the flanks
    assert float(z(0.0) * z.norm) == pytest.approx(1 - 5 * 0.05 / (16 * 0.6), rel=1e-12)
    assert z.max_slope() == pytest.approx(1 / (0.6 - 5 * 0.05 / 16), rel=1e-6)


def test_sweep_invariants_enforced():
    with pytest.raises(GeodistError, match="alpha_lt_t0_over_ell0"):
        build_sweep(1.0, 1.5, 2.0)
    fam = build_sweep(1.0, 1.5, 2.0, allow_invalid=True)
    assert not fam.invariants()["alpha_lt_t0_over_ell0"]


def test_sweep_margin_at_least_predicted():
    fam = build_sweep(1.0, 3.0, 1.5, n_eps=9)
    rep = fam.evaluate(n=32)
    assert fam.eta_pred == pytest.approx(0.75)
    assert rep.min_margin >= fam.eta_pred - 1e-12
    assert rep.max_jump <= rep.jump_bound + 1e-12
    assert fam.zeta.max_slope() == pytest.approx(0.98 * 1.5, rel=1e-6)
    assert [e for e, _ in rep.per_eps] == pytest.approx(list(np.linspace(0, 1, 9)))
