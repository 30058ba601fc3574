"""Leapfrog solver for ``u_tt = div(G grad u) - q u + f`` with zero Dirichlet data.

The spatial operator is in flux form with face-averaged coefficients, so the
discrete operator is symmetric.  Time stepping is the kick-drift-kick form of
leapfrog, which keeps ``(u, u_t)`` at the same time level and is exactly
time-reversible.  ``G`` is a diagonal (possibly anisotropic) cometric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import lebedev_rule, quad

from . import _core
from .fieldlang import ScalarField, variable_names

__all__ = [
    "WaveError", "CFLError", "WaveProblem", "WaveState", "evolve",
    "discrete_energy", "modified_energy", "dalembert_oracle", "kirchhoff_oracle",
    "finite_speed_check", "CFL_MAX",
]

CFL_MAX = 0.95


class WaveError(ValueError):
    """Invalid solver input."""


class CFLError(WaveError):
    """Time step above the stability cap."""


def _field(v, names):
    if v is None:
        return None
    if isinstance(v, ScalarField):
        return v
    if isinstance(v, (int, float)):
        return ScalarField.constant(float(v), names)
    return ScalarField.parse(str(v), names=names)


@dataclass
class WaveProblem:
    """Box ``[lower, upper]`` with ``shape`` nodes per axis (boundary included).

    ``cometric`` lists the diagonal entries of ``G`` (expressions in
    ``x1, x2``); ``None`` means the identity.  ``q`` is the potential.
    """

    lower: Sequence[float]
    upper: Sequence[float]
    shape: Sequence[int]
    cometric: Sequence | None = None
    q: object = None

    def __post_init__(self):
        self.lower = tuple(float(v) for v in self.lower)
        self.upper = tuple(float(v) for v in self.upper)
        self.shape = tuple(int(v) for v in self.shape)
        d = len(self.shape)
        if d not in (1, 2):
            raise WaveError("only 1D and 2D grids are supported")
        if any(n < 3 for n in self.shape):
            raise WaveError("need at least 3 nodes per axis")
        self.names = variable_names(d)
        X = self.coords()
        if self.cometric is None:
            G = [np.ones(self.shape) for _ in range(d)]
        else:
            if len(self.cometric) != d:
                raise WaveError(f"cometric needs {d} diagonal entries")
            G = [_field(g, self.names)(*X) for g in self.cometric]
        if any(np.any(g <= 0) for g in G):
            raise WaveError("cometric must be positive")
        self.G = G
        qf = _field(self.q, self.names)
        self.qv = np.zeros(self.shape) if qf is None else qf(*X)
        # face averages
        self.gface = [0.5 * (np.take(g, range(0, n - 1), axis=k) + np.take(g, range(1, n), axis=k))
                      for k, (g, n) in enumerate(zip(G, self.shape))]
        self.gface = [np.ascontiguousarray(g) for g in self.gface]
        self.qv = np.ascontiguousarray(self.qv, dtype=float)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(u - l) / (n - 1) for l, u, n in zip(self.lower, self.upper, self.shape)])

    @property
    def cell(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self):
        return [np.linspace(l, u, n) for l, u, n in zip(self.lower, self.upper, self.shape)]

    def coords(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def cfl(self, dt: float) -> float:
        """``c_max dt sqrt(sum 1/h_k^2)``; the scheme is stable below 1."""
        cmax = math.sqrt(max(float(np.max(g)) for g in self.G))
        return cmax * dt * math.sqrt(float(np.sum(1.0 / self.spacing ** 2)))

    def dt_for(self, cfl: float) -> float:
        return cfl * dt_unit(self)

    def interior(self) -> np.ndarray:
        m = np.zeros(self.shape, bool)
        m[(slice(1, -1),) * self.dim] = True
        return m

    def apply_K(self, u: np.ndarray) -> np.ndarray:
        """``-div(G grad u) + q u`` at interior nodes (zero on the boundary)."""
        h = self.spacing
        out = np.zeros_like(u)
        inner = (slice(1, -1),) * self.dim
        acc = np.zeros_like(u[inner])
        for k in range(self.dim):
            flux = self.gface[k] * np.diff(u, axis=k)
            lo = [slice(1, -1)] * self.dim
            hi = [slice(1, -1)] * self.dim
            lo[k] = slice(0, -1)
            hi[k] = slice(1, None)
            acc += (flux[tuple(hi)] - flux[tuple(lo)]) / h[k] ** 2
        out[inner] = -acc + self.qv[inner] * u[inner]
        return out

    def project(self, fun) -> np.ndarray:
        """Sample an array, callable or expression on the grid and zero the boundary."""
        if isinstance(fun, np.ndarray):
            vals = np.asarray(fun, float)
        elif callable(fun) and not isinstance(fun, ScalarField):
            vals = np.asarray(fun(*self.coords()), float)
        else:
            vals = _field(fun, self.names)(*self.coords())
        vals = np.broadcast_to(vals, self.shape).copy()
        vals[~self.interior()] = 0.0
        return vals


def dt_unit(problem: WaveProblem) -> float:
    return problem.cfl(1.0) ** -1


@dataclass
class WaveState:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0


def evolve(problem: WaveProblem, state: WaveState, dt: float, nsteps: int,
           forcing=None, record: int = 0, backend=None):
    """Advance ``nsteps`` leapfrog steps of size ``dt`` (negative runs backwards).

    Parameters
    ----------
    forcing : callable or ndarray, optional
        ``f(t)`` returning a grid array, or samples of shape
        ``(nsteps + 1,) + shape`` at the time levels.
    record : int
        Store ``u`` every ``record`` steps (0 disables).

    Returns
    -------
    state : WaveState
    history : ndarray
        Recorded ``u`` levels, shape ``(m,) + shape``.
    """
    c = problem.cfl(abs(dt))
    if c > CFL_MAX:
        raise CFLError(f"CFL number {c:.4f} exceeds {CFL_MAX}")
    if nsteps < 0:
        raise WaveError("nsteps must be nonnegative")
    kern = _core.get_backend(backend)
    F = None
    if forcing is not None:
        if callable(forcing):
            F = np.stack([np.asarray(forcing(state.t + k * dt), float) * np.ones(problem.shape)
                          for k in range(nsteps + 1)])
        else:
            F = np.asarray(forcing, float)
            if F.shape != (nsteps + 1,) + problem.shape:
                raise WaveError("forcing samples have the wrong shape")
        F = np.ascontiguousarray(F)
    u0 = np.ascontiguousarray(state.u, dtype=float)
    v0 = np.ascontiguousarray(state.v, dtype=float)
    if problem.dim == 1:
        u, v, hist = kern.verlet_1d(u0, v0, problem.gface[0], problem.qv, float(dt),
                                    float(problem.spacing[0]), int(nsteps), F, bool(record))
        hist = np.asarray(hist)
        if record and record > 1:
            hist = hist[::record]
    else:
        u, v, hist = kern.verlet_2d(u0, v0, problem.gface[0], problem.gface[1], problem.qv,
                                    float(dt), float(problem.spacing[0]), float(problem.spacing[1]),
                                    int(nsteps), F, int(record))
    return WaveState(np.asarray(u), np.asarray(v), state.t + nsteps * dt), np.asarray(hist)


def discrete_energy(problem: WaveProblem, state: WaveState) -> float:
    """``1/2 sum (v^2 + G grad u . grad u + q u^2)`` times the cell volume."""
    u, v = state.u, state.v
    return 0.5 * problem.cell * float(np.sum(v * v) + np.sum(u * problem.apply_K(u)))


def modified_energy(problem: WaveProblem, state: WaveState, dt: float) -> float:
    """Quadratic invariant of the scheme: ``E - dt^2/8 |K u|^2`` (cell-weighted).

    Conserved to round-off by the kick-drift-kick leapfrog for linear
    problems without forcing.
    """
    Ku = problem.apply_K(state.u)
    return discrete_energy(problem, state) - 0.125 * dt * dt * problem.cell * float(np.sum(Ku * Ku))


# ---------------------------------------------------------------------------
# oracles

def dalembert_oracle(u0: Callable, u1: Callable, t: float, x, U1: Callable | None = None):
    """``(u0(x - t) + u0(x + t)) / 2 + (1/2) int_{x-t}^{x+t} u1`` for unit speed on R.

    ``U1`` is an antiderivative of ``u1``; without it the integral is done by
    adaptive quadrature.
    """
    x = np.asarray(x, float)
    out = 0.5 * (u0(x - t) + u0(x + t))
    if U1 is not None:
        return out + 0.5 * (U1(x + t) - U1(x - t))
    integ = np.array([quad(u1, a - t, a + t, limit=200, epsabs=1e-14, epsrel=1e-13)[0]
                      for a in x.ravel()]).reshape(x.shape)
    return out + 0.5 * integ


def kirchhoff_oracle(u1: Callable, t: float, x, order: int = 23):
    """``(t / 4 pi) int_{S^2} u1(x - t sigma) dsigma`` for ``u0 = 0`` in R^3.

    ``u1`` maps arrays of shape ``(m, 3)`` to ``(m,)``.  The sphere integral
    uses the Lebedev rule of the given order (at least 17).
    """
    if order < 17:
        raise WaveError("Kirchhoff quadrature needs order >= 17")
    pts, w = lebedev_rule(order)
    sig = pts.T
    x = np.atleast_2d(np.asarray(x, float))
    out = np.empty(x.shape[0])
    for k, xk in enumerate(x):
        out[k] = t / (4.0 * np.pi) * np.dot(w, u1(xk[None, :] - t * sig))
    return out


def finite_speed_check(problem: WaveProblem, u0, u1, center, r0: float, T: float,
                       cfl: float = 0.5, kappa: float = 2.0, backend=None) -> dict:
    """Run data vanishing on ``B(center, r0)`` and measure ``u`` in the shrinking cone.

    Returns the largest ``|u|`` over ``{|x - c| <= r0 - t - kappa h}`` divided by
    the data norm, together with the exact zero region predicted by the
    stencil (one cell per step).
    """
    h = float(np.max(problem.spacing))
    dt = cfl / problem.cfl(1.0)
    nsteps = int(math.ceil(T / dt))
    dt = T / nsteps
    U0, U1 = problem.project(u0), problem.project(u1)
    X = problem.coords()
    r = np.sqrt(sum((Xk - c) ** 2 for Xk, c in zip(X, center)))
    if np.any(np.abs(U0[r <= r0]) > 0) or np.any(np.abs(U1[r <= r0]) > 0):
        raise WaveError("data do not vanish on the ball")
    data = math.sqrt(problem.cell * float(np.sum(U0 ** 2 + U1 ** 2)))
    _, hist = evolve(problem, WaveState(U0, U1), dt, nsteps, record=1, backend=backend)
    worst = 0.0
    worst_discrete = 0.0
    for k, u in enumerate(hist):
        t = k * dt
        cone = r <= r0 - t - kappa * h
        if np.any(cone):
            worst = max(worst, float(np.max(np.abs(u[cone]))))
        dcone = r <= r0 - k * h - h
        if np.any(dcone):
            worst_discrete = max(worst_discrete, float(np.max(np.abs(u[dcone]))))
    return {"max_in_cone": worst, "data_norm": data, "ratio": worst / data if data else 0.0,
            "max_in_stencil_cone": worst_discrete, "dt": dt, "nsteps": nsteps, "h": h}
