"""Approximate controllability of the discrete wave equation by duality.

``F_T`` maps a control ``f`` (samples at the leapfrog time levels) to the
final state ``(u(T), u_t(T))`` of ``u_tt - div(G grad u) + q u = chi f`` with
zero initial data.  Its transpose sends final data ``(w0, w1)`` to
``chi w``, where ``w`` is the free solution run backwards from
``w(T) = w0, w_t(T) = w1``.  Because the scheme is symplectic, the pairing

    <u_t(T), w0> - <u(T), w1> = sum_n dt theta_n <chi f^n, w^n>

(``theta_n`` the trapezoid weights) holds to round-off.  Controls are
computed in dual form: with ``Lambda = F_T F_T^*`` the Tikhonov control is
``f = F_T^* phi`` with ``(Lambda + alpha) phi = target``, and ``alpha`` is
chosen so the final-state error is ``eps ||target||``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .wavesolve import WaveProblem, WaveState, evolve

__all__ = [
    "ControlError", "ControlProblem", "ControlResult", "apply_FT", "apply_FT_transpose",
    "pairing", "control_inner", "gram_matrix", "compute_control", "cost_curve",
    "smooth_cutoff", "cost_curve_csv",
]

ERROR_SLACK = 1.05


class ControlError(RuntimeError):
    """Control computation failed."""


def smooth_cutoff(problem: WaveProblem, a, b) -> np.ndarray:
    """``prod_k exp(1 - 1/(1 - s_k^2))`` on the box ``[a, b]``, zero outside.

    Positive exactly on the open box, equal to 1 at its centre.
    """
    a, b = np.atleast_1d(np.asarray(a, float)), np.atleast_1d(np.asarray(b, float))
    out = np.ones(problem.shape)
    for Xk, ak, bk in zip(problem.coords(), a, b):
        s = (2.0 * Xk - ak - bk) / (bk - ak)
        v = np.zeros_like(Xk)
        m = np.abs(s) < 1
        v[m] = np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
        out *= v
    out[~problem.interior()] = 0.0
    return out


@dataclass
class ControlProblem:
    """Control from ``chi`` over ``[0, T]`` towards ``target = (v0, v1)``.

    ``chi`` is a grid cutoff with values in ``[0, 1]``; ``omega`` is its
    positivity set.  The time step is ``cfl`` times the stability limit,
    adjusted so that ``T`` is a whole number of steps.
    """

    problem: WaveProblem
    chi: np.ndarray
    T: float
    target: tuple | None = None
    eps: float = 0.01
    cfl: float = 0.5
    tikhonov: float | None = None
    backend: str | None = None
    nsteps: int = field(init=False)
    dt: float = field(init=False)

    def __post_init__(self):
        self.chi = np.asarray(self.chi, float)
        if self.chi.shape != self.problem.shape:
            raise ControlError("chi does not match the grid")
        if np.any(self.chi < 0) or np.any(self.chi > 1):
            raise ControlError("chi must take values in [0, 1]")
        if not np.any(self.chi > 0):
            raise ControlError("empty control region")
        if not self.T > 0:
            raise ControlError("T must be positive")
        if not self.eps > 0:
            raise ControlError("eps must be positive")
        self.nsteps = max(1, int(math.ceil(self.T / self.problem.dt_for(self.cfl))))
        self.dt = self.T / self.nsteps
        if self.target is not None:
            v0, v1 = (np.asarray(v, float) for v in self.target)
            if v0.shape != self.problem.shape or v1.shape != self.problem.shape:
                raise ControlError("target does not match the grid")
            self.target = (v0, v1)

    @property
    def omega(self) -> np.ndarray:
        return self.chi > 0

    @property
    def theta(self) -> np.ndarray:
        """Trapezoid weights of the time levels."""
        w = np.ones(self.nsteps + 1)
        w[0] = w[-1] = 0.5
        return w

    def with_target(self, target, eps=None) -> "ControlProblem":
        return ControlProblem(self.problem, self.chi, self.T, target,
                              self.eps if eps is None else eps, self.cfl, self.tikhonov, self.backend)


def _ip(problem: WaveProblem, a, b) -> float:
    return problem.cell * float(np.sum(a * b))


def pairing(prob: ControlProblem, state, w) -> float:
    """``<u_t(T), w0> - <u(T), w1>`` for ``state = (u, u_t)`` and ``w = (w0, w1)``."""
    return _ip(prob.problem, state[1], w[0]) - _ip(prob.problem, state[0], w[1])


def control_inner(prob: ControlProblem, f, g) -> float:
    """Space-time inner product with trapezoid weights in time."""
    th = prob.theta.reshape((-1,) + (1,) * prob.problem.dim)
    return prob.dt * prob.problem.cell * float(np.sum(th * f * g))


def apply_FT(prob: ControlProblem, f) -> tuple[np.ndarray, np.ndarray]:
    """Final state ``(u(T), u_t(T))`` driven by ``chi f`` from rest.

    ``f`` has shape ``(nsteps + 1,) + grid shape``.
    """
    f = np.asarray(f, float)
    shape = (prob.nsteps + 1,) + prob.problem.shape
    if f.shape != shape:
        raise ControlError(f"control must have shape {shape}")
    zero = np.zeros(prob.problem.shape)
    st, _ = evolve(prob.problem, WaveState(zero, zero), prob.dt, prob.nsteps,
                   forcing=prob.chi * f, backend=prob.backend)
    return st.u, st.v


def apply_FT_transpose(prob: ControlProblem, w0, w1) -> np.ndarray:
    """``chi w`` at every time level, ``w`` the free wave with ``w(T) = w0``, ``w_t(T) = w1``."""
    P = prob.problem
    w0 = np.asarray(w0, float) * P.interior()
    w1 = np.asarray(w1, float) * P.interior()
    _, hist = evolve(P, WaveState(w0, w1, prob.T), -prob.dt, prob.nsteps, record=1,
                     backend=prob.backend)
    hist = np.asarray(hist).reshape((prob.nsteps + 1,) + P.shape)
    return prob.chi * hist[::-1]


def _adjoint(prob: ControlProblem, zu, zv) -> np.ndarray:
    """``F_T^*`` with respect to the grid L2 product on states."""
    return apply_FT_transpose(prob, zv, -zu)


def _interior_index(prob: ControlProblem):
    return np.flatnonzero(prob.problem.interior().ravel())


def _pack(prob, u, v) -> np.ndarray:
    idx = _interior_index(prob)
    s = math.sqrt(prob.problem.cell)
    return s * np.concatenate([u.ravel()[idx], v.ravel()[idx]])


def _unpack(prob, z):
    idx = _interior_index(prob)
    m = idx.size
    s = math.sqrt(prob.problem.cell)
    u = np.zeros(int(np.prod(prob.problem.shape)))
    v = np.zeros_like(u)
    u[idx] = z[:m] / s
    v[idx] = z[m:] / s
    return u.reshape(prob.problem.shape), v.reshape(prob.problem.shape)


def gram_matrix(prob: ControlProblem) -> np.ndarray:
    """Matrix of ``Lambda = F_T F_T^*`` in L2-orthonormal state coordinates.

    Coordinates are the interior values of ``(u, u_t)`` scaled by
    ``sqrt(cell)``.  One backward and one forward solve per column.
    """
    m = _interior_index(prob).size
    G = np.empty((2 * m, 2 * m))
    for j in range(2 * m):
        e = np.zeros(2 * m)
        e[j] = 1.0
        zu, zv = _unpack(prob, e)
        G[:, j] = _pack(prob, *apply_FT(prob, _adjoint(prob, zu, zv)))
    return 0.5 * (G + G.T)


def _cg(apply, b, tol=1e-10, maxiter=None):
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    nb = math.sqrt(float(b @ b))
    maxiter = maxiter or 10 * b.size
    if nb == 0:
        return x, 0, 0.0
    for k in range(1, maxiter + 1):
        Ap = apply(p)
        a = rr / float(p @ Ap)
        x += a * p
        r -= a * Ap
        rr_new = float(r @ r)
        if math.sqrt(rr_new) <= tol * nb:
            return x, k, math.sqrt(rr_new) / nb
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise ControlError(f"CG did not converge in {maxiter} iterations "
                       f"(relative residual {math.sqrt(rr) / nb:.3e})")


@dataclass
class ControlResult:
    f: np.ndarray
    achieved_error: float
    cost: float
    alpha: float
    iterations: int
    residual: float
    target_norm: float
    eps: float

    @property
    def relative_error(self) -> float:
        return self.achieved_error / self.target_norm if self.target_norm else 0.0

    def summary(self) -> dict:
        return {"eps": self.eps, "cost": self.cost, "achieved_error": self.achieved_error,
                "relative_error": self.relative_error, "alpha": self.alpha,
                "iterations": self.iterations, "cg_residual": self.residual}


def _choose_alpha(evals, coef2, eps, tnorm):
    """Largest ``alpha`` whose predicted error stays within ``eps ||target||``."""
    lam = np.clip(evals, 0.0, None)
    goal = eps * tnorm

    def err(la):
        a = math.exp(la)
        return math.sqrt(float(np.sum(coef2 * (a / (lam + a)) ** 2))) - goal

    lo, hi = math.log(1e-300), math.log(max(float(lam.max()), 1e-300) * 1e6)
    if err(lo) > 0:
        raise ControlError("target lies outside the reachable space at this precision")
    if err(hi) < 0:
        return math.exp(hi)
    # aim slightly below the goal so round-off cannot push the error over it
    target = 0.99 * goal

    def err2(la):
        a = math.exp(la)
        return math.sqrt(float(np.sum(coef2 * (a / (lam + a)) ** 2))) - target

    return math.exp(brentq(err2, lo, hi, xtol=1e-12))


def compute_control(prob: ControlProblem, gram: np.ndarray | None = None,
                    cg_tol: float | None = None, maxiter: int | None = None) -> ControlResult:
    """Tikhonov control reaching ``target`` up to ``eps ||target||``.

    ``alpha`` is chosen from the spectrum of ``Lambda`` (unless the problem
    fixes ``tikhonov``); ``phi`` is found by conjugate gradients on
    ``(Lambda + alpha) phi = target``; the control ``f = F_T^* phi`` and its
    error are then recomputed with fresh wave solves.

    The final-state error is ``r + alpha phi`` with ``r`` the CG residual,
    so the default CG tolerance ``0.02 eps`` keeps it within the 5% slack.
    """
    if prob.target is None:
        raise ControlError("no target")
    G = gram_matrix(prob) if gram is None else gram
    z = _pack(prob, *prob.target)
    tnorm = float(np.linalg.norm(z))
    if tnorm == 0:
        f = np.zeros((prob.nsteps + 1,) + prob.problem.shape)
        return ControlResult(f, 0.0, 0.0, 0.0, 0, 0.0, 0.0, prob.eps)
    if prob.tikhonov is not None:
        alpha = float(prob.tikhonov)
    else:
        w, V = np.linalg.eigh(G)
        alpha = _choose_alpha(w, (V.T @ z) ** 2, prob.eps, tnorm)
    tol = 0.02 * prob.eps if cg_tol is None else cg_tol
    phi, its, res = _cg(lambda x: G @ x + alpha * x, z, tol, maxiter)
    f = _adjoint(prob, *_unpack(prob, phi))
    reached = _pack(prob, *apply_FT(prob, f))
    err = float(np.linalg.norm(reached - z))
    cost = math.sqrt(max(control_inner(prob, f, f), 0.0))
    return ControlResult(f, err, cost, alpha, its, res, tnorm, prob.eps)


def cost_curve(prob: ControlProblem, eps_list, gram: np.ndarray | None = None) -> list[ControlResult]:
    """Controls for each ``eps`` in ``eps_list`` (the Gram matrix is shared)."""
    G = gram_matrix(prob) if gram is None else gram
    return [compute_control(prob.with_target(prob.target, eps), gram=G) for eps in eps_list]


def cost_curve_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps", "cost", "achieved_error", "iterations"])
    for r in results:
        w.writerow([repr(r.eps), repr(r.cost), repr(r.achieved_error), r.iterations])
    return buf.getvalue()
