"""Quadratic principal symbols, conjugation by a weight, and brackets.

A principal symbol is ``p2(x, xi) = sum_ij a^{ij}(x) xi_i xi_j`` with a real
symmetric coefficient matrix of scalar fields.  Conjugating by ``exp(tau*psi)``
shifts the covector to ``xi + i tau dpsi``.  All brackets needed by the
pseudoconvexity tests reduce to first derivatives of ``a^{ij}`` and second
derivatives of the weight, so 2-jets of the inputs are enough.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fieldlang import FieldError, ScalarField, variable_names

__all__ = [
    "SymbolError", "PrincipalSymbol", "LocalFrame", "BracketValues",
    "bracket_suite", "local_frame", "TAU_ZERO_RTOL",
]

# below tau < TAU_ZERO_RTOL*(|xi|+1) the tau -> 0 limit 2*b2 is used
TAU_ZERO_RTOL = 1e-6


class SymbolError(Exception):
    """Invalid symbol or weight data."""


class PrincipalSymbol:
    """``p2(x, xi) = xi . A(x) xi`` on ``R^n``.

    Parameters
    ----------
    coeffs : n x n nested sequence of ScalarField
        Coefficients ``a^{ij}``; must be structurally symmetric.
    names : sequence of str
        Coordinate names shared by all coefficients.
    """

    def __init__(self, coeffs, names: Sequence[str]):
        self.names = tuple(names)
        n = len(self.names)
        rows = [list(r) for r in coeffs]
        if len(rows) != n or any(len(r) != n for r in rows):
            raise SymbolError(f"coefficient matrix must be {n}x{n}")
        for i in range(n):
            for j in range(n):
                if rows[i][j].names != self.names:
                    raise SymbolError("coefficients use different coordinates")
                if rows[i][j] != rows[j][i]:
                    raise SymbolError(f"coefficients a[{i}][{j}] and a[{j}][{i}] differ")
        self.coeffs = rows
        self.n = n
        self._const = all(c.is_constant for r in rows for c in r)
        if self._const:
            self._A = np.array([[c.node.value for c in r] for r in rows], float)

    # constructors ---------------------------------------------------------

    @classmethod
    def from_strings(cls, rows, dim: int | None = None, time: bool = False,
                     names: Sequence[str] | None = None) -> "PrincipalSymbol":
        if names is None:
            names = variable_names(dim if dim is not None else len(rows), time)
        fields = [[ScalarField.parse(str(s), names=names) for s in r] for r in rows]
        return cls(fields, names)

    @classmethod
    def constant(cls, A, names: Sequence[str] | None = None, time: bool = False):
        A = np.asarray(A, float)
        if names is None:
            names = variable_names(A.shape[0], time)
        if not np.array_equal(A, A.T):
            raise SymbolError("constant coefficient matrix is not symmetric")
        rows = [[ScalarField.constant(A[i, j], names) for j in range(A.shape[1])]
                for i in range(A.shape[0])]
        return cls(rows, names)

    @classmethod
    def laplacian(cls, dim: int) -> "PrincipalSymbol":
        return cls.constant(np.eye(dim))

    @classmethod
    def minkowski(cls, space_dim: int) -> "PrincipalSymbol":
        """``-xi_t^2 + |xi_x|^2`` in coordinates ``(t, x1, ..)``."""
        A = np.eye(space_dim + 1)
        A[0, 0] = -1.0
        return cls.constant(A, time=True)

    @classmethod
    def wave(cls, cometric_rows, space_dim: int) -> "PrincipalSymbol":
        """``-xi_t^2 + g^{ij}(t, x) xi_i xi_j`` from spatial cometric strings."""
        names = variable_names(space_dim + 1, time=True)
        n = space_dim + 1
        rows = [[ScalarField.constant(0.0, names) for _ in range(n)] for _ in range(n)]
        rows[0][0] = ScalarField.constant(-1.0, names)
        for i in range(space_dim):
            for j in range(space_dim):
                rows[i + 1][j + 1] = ScalarField.parse(str(cometric_rows[i][j]), names=names)
        return cls(rows, names)

    # evaluation -----------------------------------------------------------

    @property
    def is_constant(self) -> bool:
        return self._const

    @property
    def has_time(self) -> bool:
        return self.names[0] == "t"

    def is_wave_type(self, x=None) -> bool:
        """True when ``a^{00} = -1`` and ``a^{0i} = 0`` with time coordinate first."""
        if not self.has_time:
            return False
        c0 = self.coeffs[0]
        if not (c0[0].is_constant and c0[0].node.value == -1.0):
            return False
        return all(c.is_constant and c.node.value == 0.0 for c in c0[1:])

    def coefficients(self, x) -> np.ndarray:
        if self._const:
            return self._A.copy()
        x = np.asarray(x, float)
        return np.array([[c.value(x) for c in r] for r in self.coeffs])

    def coefficient_jets(self, x):
        """``A`` and ``dA`` with ``dA[k, i, j] = d_k a^{ij}``."""
        n = self.n
        if self._const:
            return self._A.copy(), np.zeros((n, n, n))
        x = np.asarray(x, float)
        A = np.empty((n, n))
        dA = np.empty((n, n, n))
        for i in range(n):
            for j in range(i, n):
                v, g = self.coeffs[i][j].jet1(x)
                A[i, j] = A[j, i] = v
                dA[:, i, j] = g
                dA[:, j, i] = g
        return A, dA

    def p2(self, x, xi):
        A = self.coefficients(x)
        xi = np.asarray(xi)
        return xi @ A @ xi

    def polar(self, x, xi, eta):
        A = self.coefficients(x)
        return np.asarray(xi) @ A @ np.asarray(eta)

    def dxi(self, x, zeta):
        """``d p2 / d xi`` at a (possibly complex) covector."""
        return 2.0 * (self.coefficients(x) @ np.asarray(zeta))

    def dx(self, x, zeta):
        """``d p2 / d x`` at a (possibly complex) covector."""
        _, dA = self.coefficient_jets(x)
        zeta = np.asarray(zeta)
        return np.einsum("kij,i,j->k", dA, zeta, zeta)

    def __repr__(self):
        return f"PrincipalSymbol(n={self.n}, names={self.names})"


@dataclass
class LocalFrame:
    """Coefficient and weight jets frozen at one point.

    Every quantity is a quadratic or linear form in ``(xi, tau)``, so the
    batch methods accept arrays of shape ``(m, n)`` and ``(m,)``.
    """

    x: np.ndarray
    A: np.ndarray
    dA: np.ndarray
    psi: float
    dpsi: np.ndarray
    hpsi: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p_dpsi(self) -> float:
        d = self.dpsi
        return float(d @ self.A @ d)

    def p2(self, xi):
        return np.einsum("...i,ij,...j->...", xi, self.A, xi)

    def polar(self, xi, eta):
        return np.einsum("...i,ij,...j->...", xi, self.A, eta)

    def b1(self, xi):
        return 2.0 * self.polar(xi, self.dpsi)

    def _parts(self, xi):
        d = self.dpsi
        P = 2.0 * xi @ self.A
        Q = 2.0 * self.A @ d
        R = np.einsum("kij,...i,...j->...k", self.dA, xi, xi)
        S = np.einsum("kij,...i,j->...k", self.dA, xi, d)
        return P, Q, R, S

    def b2(self, xi):
        P, Q, R, S = self._parts(xi)
        HPP = np.einsum("...i,ij,...j->...", P, self.hpsi, P)
        return 2.0 * np.einsum("...k,...k->...", P, S) + HPP - R @ Q

    def c(self, xi, tau):
        """Conjugated bracket ``(1/(i tau)) {conj p_psi, p_psi}``, cancellation free."""
        tau = np.asarray(tau, float)
        d = self.dpsi
        Q = 2.0 * self.A @ d
        T = np.einsum("kij,i,j->k", self.dA, d, d)
        return 2.0 * self.b2(xi) + 2.0 * tau ** 2 * (Q @ T + Q @ self.hpsi @ Q)

    def conj_re(self, xi, tau):
        return self.p2(xi) - np.asarray(tau, float) ** 2 * self.p_dpsi

    def conj_im_over_tau(self, xi):
        return 2.0 * self.polar(xi, self.dpsi)

    def bracket_psi_psi(self, xi, tau):
        """``{p_psi, psi}`` as a complex number."""
        return self.b1(xi) + 2j * np.asarray(tau, float) * self.p_dpsi

    def c_expanded(self, xi, tau):
        """Same bracket from complex covector derivatives, for one covector."""
        xi = np.asarray(xi, float)
        tau = float(tau)
        if tau < TAU_ZERO_RTOL * (np.linalg.norm(xi) + 1.0):
            return 2.0 * float(self.b2(xi))
        zeta = xi + 1j * tau * self.dpsi
        a = 2.0 * (self.A @ zeta)
        b = np.einsum("kij,i,j->k", self.dA, zeta, zeta)
        val = (2.0 / tau) * np.imag(np.conj(a) @ b) + 2.0 * np.real(np.conj(a) @ self.hpsi @ a)
        return float(val)


def local_frame(p: PrincipalSymbol, psi: ScalarField, x) -> LocalFrame:
    """Freeze the jets of ``p`` and ``psi`` at ``x``."""
    if psi.names != p.names:
        raise SymbolError("weight and symbol use different coordinates")
    x = np.asarray(x, float)
    if x.shape != (p.n,):
        raise SymbolError(f"point must have {p.n} coordinates")
    try:
        A, dA = p.coefficient_jets(x)
        jet = psi.jet(x)
    except FieldError as exc:
        raise SymbolError(f"non-finite jet at {x.tolist()}: {exc}") from exc
    return LocalFrame(x, A, dA, jet.value, jet.grad, jet.hess)


@dataclass
class BracketValues:
    b1: float
    b2: float
    cPsi: float
    p_conj_re: float
    p_conj_im: float
    p_conj_im_over_tau: float
    b_psi_psi: complex

    def as_dict(self):
        return {
            "b1": self.b1, "b2": self.b2, "cPsi": self.cPsi,
            "p_conj_re": self.p_conj_re, "p_conj_im": self.p_conj_im,
            "p_conj_im_over_tau": self.p_conj_im_over_tau,
            "b_psi_psi": [self.b_psi_psi.real, self.b_psi_psi.imag],
        }


def bracket_suite(p: PrincipalSymbol, psi: ScalarField, x, xi, tau: float = 0.0) -> BracketValues:
    """All bracket quantities at one point of the cotangent bundle.

    Parameters
    ----------
    p : PrincipalSymbol
    psi : ScalarField
        Weight or defining function.
    x, xi : array_like
        Base point and real covector.
    tau : float
        Nonnegative conjugation parameter.

    Returns
    -------
    BracketValues
        ``b1 = {p, psi}``, ``b2 = {p, {p, psi}}``, the conjugated bracket
        ``cPsi`` and the real and imaginary parts of ``p(x, xi + i tau dpsi)``.
    """
    if tau < 0:
        raise SymbolError("tau must be nonnegative")
    fr = local_frame(p, psi, x)
    xi = np.asarray(xi, float)
    im_over_tau = float(fr.conj_im_over_tau(xi))
    return BracketValues(
        b1=float(fr.b1(xi)),
        b2=float(fr.b2(xi)),
        cPsi=fr.c_expanded(xi, tau),
        p_conj_re=float(fr.conj_re(xi, tau)),
        p_conj_im=tau * im_over_tau,
        p_conj_im_over_tau=im_over_tau,
        b_psi_psi=complex(fr.bracket_psi_psi(xi, tau)),
    )
