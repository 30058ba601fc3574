import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carleman import _core
from carleman.wavesolve import (CFLError, WaveError, WaveProblem, WaveState, dalembert_oracle,
                                discrete_energy, evolve, finite_speed_check, kirchhoff_oracle,
                                modified_energy)

needs_compiled = pytest.mark.skipif(_core.BACKEND != "compiled", reason="compiled kernels not built")


def bump(x, c=0.0, r=0.2):
    s = np.clip((x - c) / r, -1, 1)
    return np.where(np.abs(x - c) < r, (1 - s * s) ** 4, 0.0)


def test_apply_K_matches_second_difference():
    P = WaveProblem([0.0], [1.0], [11])
    u = np.sin(np.pi * P.axes()[0])
    Ku = P.apply_K(u)
    ref = -(u[2:] - 2 * u[1:-1] + u[:-2]) / 0.1 ** 2
    np.testing.assert_allclose(Ku[1:-1], ref, rtol=1e-13)
    assert Ku[0] == Ku[-1] == 0.0


def test_K_is_symmetric_2d():
    P = WaveProblem([0.0, 0.0], [1.0, 2.0], [7, 9], cometric=["1 + x1", "2 + x2^2"], q="x1*x2")
    inner = P.interior()
    m = int(inner.sum())
    cols = []
    for k in range(m):
        e = np.zeros(P.shape)
        e[inner] = np.eye(m)[k]
        cols.append(P.apply_K(e)[inner])
    K = np.array(cols).T
    np.testing.assert_allclose(K, K.T, atol=1e-12)
    assert np.linalg.eigvalsh(K).min() > 0


def test_cfl_cap():
    P = WaveProblem([0.0], [1.0], [101])
    with pytest.raises(CFLError):
        evolve(P, WaveState(np.zeros(101), np.zeros(101)), 0.0099, 10)
    assert P.cfl(P.dt_for(0.5)) == pytest.approx(0.5)


def test_invalid_problems():
    with pytest.raises(WaveError):
        WaveProblem([0.0], [1.0], [2])
    with pytest.raises(WaveError):
        WaveProblem([0.0], [1.0], [11], cometric=["x1 - 0.5"])
    with pytest.raises(WaveError):
        WaveProblem([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [5, 5, 5])


def test_dalembert_convergence():
    # second order: the error drops by about 4 per refinement
    errs = []
    for n in (201, 401, 801):
        P = WaveProblem([-2.0], [2.0], [n])
        x = P.axes()[0]
        dt = P.dt_for(0.5)
        steps = int(round(0.5 / dt))
        dt = 0.5 / steps
        st, _ = evolve(P, WaveState(bump(x), np.zeros(n)), dt, steps)
        ref = dalembert_oracle(bump, lambda s: 0 * s, 0.5, x, U1=lambda s: 0 * s)
        errs.append(np.max(np.abs(st.u - ref)))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5
    assert errs[-1] < 1e-3


def test_dalembert_oracle_quadrature_matches_antiderivative():
    x = np.linspace(-1, 1, 7)
    a = dalembert_oracle(np.sin, np.cos, 0.3, x)
    b = dalembert_oracle(np.sin, np.cos, 0.3, x, U1=np.sin)
    np.testing.assert_allclose(a, b, atol=1e-13)


def test_kirchhoff_oracle_constant_velocity():
    # u1 = 1 gives u = t
    out = kirchhoff_oracle(lambda p: np.ones(len(p)), 0.7, [[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]])
    np.testing.assert_allclose(out, 0.7, rtol=1e-13)
    # u1 = |y|^2 gives t |x|^2 + t^3
    x = np.array([[0.3, -0.2, 0.5]])
    out = kirchhoff_oracle(lambda p: np.sum(p * p, axis=1), 0.4, x)
    assert out[0] == pytest.approx(0.4 * 0.38 + 0.4 ** 3, rel=1e-13)
    with pytest.raises(WaveError):
        kirchhoff_oracle(lambda p: p[:, 0], 1.0, x, order=11)


def test_modified_energy_conserved_2d():
    P = WaveProblem([0.0, 0.0], [1.0, 1.0], [41, 41], cometric=["1 + 0.5*x1", "1 + 0.3*x2"], q="1")
    X, Y = P.coords()
    u0 = P.project(bump(X, 0.5, 0.3) * bump(Y, 0.5, 0.3))
    dt = P.dt_for(0.9)
    st, _ = evolve(P, WaveState(u0, np.zeros(P.shape)), dt, 400)
    E0 = modified_energy(P, WaveState(u0, np.zeros(P.shape)), dt)
    assert abs(modified_energy(P, st, dt) - E0) <= 1e-12 * E0
    assert abs(discrete_energy(P, st) - E0) / E0 < 0.05


def test_time_reversibility():
    P = WaveProblem([0.0], [1.0], [51], cometric=["1 + x1^2"], q="2")
    x = P.axes()[0]
    s0 = WaveState(P.project(bump(x, 0.5, 0.3)), P.project(bump(x, 0.4, 0.2)))
    dt = P.dt_for(0.7)
    s1, _ = evolve(P, s0, dt, 300)
    s2, _ = evolve(P, s1, -dt, 300)
    np.testing.assert_allclose(s2.u, s0.u, atol=1e-12)
    np.testing.assert_allclose(s2.v, s0.v, atol=1e-12)


def test_forcing_callable_and_samples_agree():
    P = WaveProblem([0.0], [1.0], [31])
    x = P.axes()[0]
    dt = P.dt_for(0.5)
    f = lambda t: np.sin(3 * t) * bump(x, 0.5, 0.3)
    F = np.stack([f(k * dt) for k in range(21)])
    a, _ = evolve(P, WaveState(np.zeros(31), np.zeros(31)), dt, 20, forcing=f)
    b, _ = evolve(P, WaveState(np.zeros(31), np.zeros(31)), dt, 20, forcing=F)
    np.testing.assert_array_equal(a.u, b.u)
    with pytest.raises(WaveError):
        evolve(P, WaveState(np.zeros(31), np.zeros(31)), dt, 20, forcing=F[:-1])


def test_record_history():
    P = WaveProblem([0.0, 0.0], [1.0, 1.0], [11, 11])
    u0 = P.project("x1*(1-x1)*x2*(1-x2)")
    _, hist = evolve(P, WaveState(u0, np.zeros(P.shape)), P.dt_for(0.5), 10, record=5)
    assert hist.shape == (3, 11, 11)
    np.testing.assert_array_equal(hist[0], u0)


def test_finite_speed_small_leak():
    P = WaveProblem([-1.0, -1.0], [1.0, 1.0], [81, 81])
    data = lambda X, Y: bump(np.hypot(X, Y), 0.65, 0.2)
    rep = finite_speed_check(P, data, lambda X, Y: 0 * X, [0.0, 0.0], 0.4, 0.3)
    assert rep["max_in_stencil_cone"] == 0.0
    assert rep["ratio"] < 1e-5


@needs_compiled
@pytest.mark.parametrize("dim", [1, 2])
def test_backends_agree(dim):
    shape = [41] * dim
    P = WaveProblem([0.0] * dim, [1.0] * dim, shape, cometric=["1 + x1"] * dim, q="x1")
    u0 = P.project("x1*(1 - x1)" if dim == 1 else "x1*(1 - x1)*x2*(1 - x2)")
    v0 = P.project("sin(3*x1)")
    dt = P.dt_for(0.8)
    F = np.random.default_rng(0).standard_normal((51,) + tuple(shape))
    out = {}
    for name in ("compiled", "python"):
        st, hist = evolve(P, WaveState(u0, v0), dt, 50, forcing=F, record=1, backend=name)
        out[name] = (st.u, st.v, hist)
    for a, b in zip(out["compiled"], out["python"]):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(0.5, 3.0), st.floats(0.0, 5.0))
def test_modified_energy_invariant(cfl, g, q):
    P = WaveProblem([0.0], [1.0], [41], cometric=[f"{g} + x1"], q=q)
    x = P.axes()[0]
    s0 = WaveState(P.project(np.sin(math.pi * x) * x), P.project(bump(x, 0.3, 0.2)))
    dt = P.dt_for(cfl)
    E0 = modified_energy(P, s0, dt)
    s1, _ = evolve(P, s0, dt, 200)
    assert modified_energy(P, s1, dt) == pytest.approx(E0, rel=1e-11)
