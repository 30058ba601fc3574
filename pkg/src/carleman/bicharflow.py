"""Bicharacteristic flow and tangency classification.

Integrates Hamilton's equations ``x' = dp/dxi, xi' = -dp/dx`` with classical
RK4.  Besides quadratic principal symbols this module accepts arbitrary
symbols written as expressions in ``(x, xi)``, e.g. the first-order symbol
``xi1`` of a vector field.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fieldlang import ScalarField, variable_names
from .symbolcalc import PrincipalSymbol

__all__ = [
    "FlowError", "HamiltonSymbol", "Trajectory", "TangencyReport",
    "integrate", "classify_tangency", "flow_brackets",
]


class FlowError(RuntimeError):
    """Raised when a trajectory leaves the allowed box."""


class HamiltonSymbol:
    """A general symbol ``p(x, xi)`` given as an expression.

    Coordinates are named ``x1..xn, xi1..xin`` (or ``t, x1.., xit, xi1..``
    with ``time=True``).
    """

    def __init__(self, src: str, n: int, time: bool = False):
        xs = variable_names(n, time)
        xis = tuple("xi" + s[1:] if s.startswith("x") else "xi" + s for s in xs)
        self.n = n
        self.x_names = xs
        self.field = ScalarField.parse(src, names=xs + xis)

    def value(self, x, xi) -> float:
        return self.field.value(np.concatenate([x, xi]))

    def grads(self, x, xi):
        v, g = self.field.jet1(np.concatenate([x, xi]))
        return g[:self.n], g[self.n:]

    def jet(self, x, xi):
        return self.field.jet(np.concatenate([x, xi]))


def _grads(p, x, xi):
    """``(dp/dx, dp/dxi)`` for either symbol kind."""
    if isinstance(p, PrincipalSymbol):
        A, dA = p.coefficient_jets(x)
        return np.einsum("kij,i,j->k", dA, xi, xi), 2.0 * A @ xi
    return p.grads(x, xi)


def _value(p, x, xi):
    if isinstance(p, PrincipalSymbol):
        return float(xi @ p.coefficients(x) @ xi)
    return p.value(x, xi)


@dataclass
class Trajectory:
    """Samples of a bicharacteristic; ``s`` is increasing and contains 0."""

    s: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    p: np.ndarray
    i0: int

    @property
    def conservation_error(self) -> float:
        return float(np.max(np.abs(self.p - self.p[self.i0])))

    def to_csv(self, path):
        n = self.x.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s"] + [f"x{k}" for k in range(n)] + [f"xi{k}" for k in range(n)] + ["p"])
            for k in range(len(self.s)):
                w.writerow([repr(float(self.s[k]))]
                           + [repr(float(v)) for v in self.x[k]]
                           + [repr(float(v)) for v in self.xi[k]]
                           + [repr(float(self.p[k]))])


def _rk4(p, x, xi, h, nsteps, box):
    n = x.size
    xs = np.empty((nsteps + 1, n))
    xis = np.empty((nsteps + 1, n))
    xs[0], xis[0] = x, xi

    def rhs(x, xi):
        gx, gxi = _grads(p, x, xi)
        return gxi, -gx

    for k in range(nsteps):
        k1x, k1e = rhs(x, xi)
        k2x, k2e = rhs(x + 0.5 * h * k1x, xi + 0.5 * h * k1e)
        k3x, k3e = rhs(x + 0.5 * h * k2x, xi + 0.5 * h * k2e)
        k4x, k4e = rhs(x + h * k3x, xi + h * k3e)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        xi = xi + (h / 6.0) * (k1e + 2 * k2e + 2 * k3e + k4e)
        if box is not None and (np.any(x < box[0]) or np.any(x > box[1])):
            raise FlowError(f"trajectory left the domain at s = {(k + 1) * h:g}")
        xs[k + 1], xis[k + 1] = x, xi
    return xs, xis


def integrate(p, x0, xi0, s_max: float = 1.0, step: float = 1e-3,
              box: tuple[Sequence[float], Sequence[float]] | None = None,
              symmetric: bool = True) -> Trajectory:
    """Integrate the Hamiltonian flow of ``p`` through ``(x0, xi0)``.

    Parameters
    ----------
    p : PrincipalSymbol or HamiltonSymbol
    x0, xi0 : array_like
    s_max : float
        Flow parameter range; negative values integrate backwards.
    step : float
        RK4 step size.
    box : (lower, upper), optional
        Raise :class:`FlowError` if ``x`` leaves this box.
    symmetric : bool
        Integrate over ``[-s_max, s_max]`` rather than ``[0, s_max]``.
    """
    x0 = np.asarray(x0, float)
    xi0 = np.asarray(xi0, float)
    nsteps = int(round(abs(s_max) / step))
    h = np.sign(s_max) * abs(step) if s_max != 0 else step
    bx = None if box is None else (np.asarray(box[0], float), np.asarray(box[1], float))
    fx, fe = _rk4(p, x0, xi0, h, nsteps, bx)
    s = h * np.arange(nsteps + 1)
    i0 = 0
    if symmetric and nsteps > 0:
        bxs, bes = _rk4(p, x0, xi0, -h, nsteps, bx)
        fx = np.concatenate([bxs[:0:-1], fx])
        fe = np.concatenate([bes[:0:-1], fe])
        s = np.concatenate([-s[:0:-1], s])
        i0 = nsteps
    if h < 0:
        s, fx, fe = s[::-1], fx[::-1], fe[::-1]
        i0 = len(s) - 1 - i0
    pv = np.array([_value(p, a, b) for a, b in zip(fx, fe)])
    return Trajectory(s, fx, fe, pv, i0)


def flow_brackets(p, psi: ScalarField, x, xi):
    """``({p, psi}, {p, {p, psi}})`` for a general symbol at ``(x, xi)``."""
    x = np.asarray(x, float)
    xi = np.asarray(xi, float)
    n = x.size
    jp = psi.jet(x)
    if isinstance(p, PrincipalSymbol):
        A, dA = p.coefficient_jets(x)
        px = np.einsum("kij,i,j->k", dA, xi, xi)
        pxi = 2.0 * A @ xi
        pxi_x = 2.0 * np.einsum("kij,j->ik", dA, xi)   # d/dx_k of (dp/dxi_i)
        pxi_xi = 2.0 * A
    else:
        J = p.jet(x, xi)
        px, pxi = J.grad[:n], J.grad[n:]
        pxi_x = J.hess[n:, :n]
        pxi_xi = J.hess[n:, n:]
    b1 = float(pxi @ jp.grad)
    f_x = pxi_x.T @ jp.grad + jp.hess @ pxi
    f_xi = pxi_xi @ jp.grad
    b2 = float(pxi @ f_x - px @ f_xi)
    return b1, b2


@dataclass
class TangencyReport:
    c0: float
    c_dot0: float
    c_ddot0: float
    kind: str

    def as_dict(self):
        return {"c0": self.c0, "c_dot0": self.c_dot0, "c_ddot0": self.c_ddot0, "kind": self.kind}


def classify_tangency(traj: Trajectory, psi: ScalarField, tol: float = 1e-8) -> TangencyReport:
    """Derivatives of ``c(s) = psi(x(s))`` at ``s = 0`` from the trajectory.

    Uses fourth-order central differences on the stored samples.  The kind is
    ``"transversal"`` if ``|c'| > tol``, otherwise ``"convex-tangent"``
    (``c'' > tol``), ``"concave-tangent"`` (``c'' < -tol``) or
    ``"higher-order"``.
    """
    i = traj.i0
    if i < 2 or i + 2 >= len(traj.s):
        raise ValueError("trajectory needs two samples on each side of s = 0")
    h = traj.s[i + 1] - traj.s[i]
    c = np.array([psi.value(traj.x[i + k]) for k in (-2, -1, 0, 1, 2)])
    c1 = (c[0] - 8 * c[1] + 8 * c[3] - c[4]) / (12 * h)
    c2 = (-c[0] + 16 * c[1] - 30 * c[2] + 16 * c[3] - c[4]) / (12 * h * h)
    if abs(c1) > tol:
        kind = "transversal"
    elif c2 > tol:
        kind = "convex-tangent"
    elif c2 < -tol:
        kind = "concave-tangent"
    else:
        kind = "higher-order"
    return TangencyReport(float(c[2]), float(c1), float(c2), kind)
