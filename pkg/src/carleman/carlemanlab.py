"""Discrete Carleman-ratio experiments.

For a grid operator ``P_h`` and a weight ``Phi`` the ratio

    [tau^3 ||e^{tau Phi} u||^2 + tau ||e^{tau Phi} grad_h u||^2] / ||e^{tau Phi} P_h u||^2

is evaluated over a family of compactly supported grid functions.  A weight
for which the weighted estimate holds gives a curve that stays bounded as
``tau`` grows; a bad weight makes it grow.  Only differences of ``Phi``
enter, so all exponentials are taken of ``tau (Phi - max Phi)`` and never
overflow.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .fieldlang import ScalarField, variable_names

__all__ = [
    "CarlemanError", "GridOperator", "RatioCurve", "bump_family", "carleman_ratio",
    "conjugated_apply", "conjugated_matrix", "TAU_H_MAX", "LOG_RANGE_MAX",
]

TAU_H_MAX = 0.5
LOG_RANGE_MAX = 600.0
SUPPORT_MARGIN = 3
UNDERFLOW_TOL = 1e-280


class CarlemanError(ValueError):
    """Invalid ratio experiment."""


def _second_diff(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1],
                    shape=(n, n), format="csr") / (h * h)


def _central(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], shape=(n, n), format="csr") / (2 * h)


def _forward(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr") / h


def _as_field(v, names):
    if v is None:
        return None
    if isinstance(v, ScalarField):
        return v
    if isinstance(v, (int, float)):
        return ScalarField.constant(float(v), names)
    return ScalarField.parse(str(v), names=names)


@dataclass
class GridOperator:
    """``P_h = -Laplacian_h + sum_k b_k D_k + c`` on a uniform box grid.

    Nodes include the boundary; functions are flattened in C order.  The
    gradient used in the ratio is the forward difference on cell faces,
    one sparse matrix per axis.

    Parameters
    ----------
    lower, upper, shape : sequences
        Box corners and nodes per axis (1D or 2D).
    b : sequence of expressions, optional
        First-order coefficients (central differences).
    c : expression, optional
        Zeroth-order coefficient.
    """

    lower: Sequence[float]
    upper: Sequence[float]
    shape: Sequence[int]
    b: Sequence | None = None
    c: object = None
    matrix: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        self.lower = tuple(float(v) for v in self.lower)
        self.upper = tuple(float(v) for v in self.upper)
        self.shape = tuple(int(v) for v in self.shape)
        d = len(self.shape)
        if d not in (1, 2) or len(self.lower) != d or len(self.upper) != d:
            raise CarlemanError("only 1D and 2D boxes are supported")
        if any(n < 2 * SUPPORT_MARGIN + 2 for n in self.shape):
            raise CarlemanError("grid too small")
        self.names = variable_names(d)
        h = self.spacing
        eyes = [sp.identity(n, format="csr") for n in self.shape]

        def lift(k, m):
            mats = [m if j == k else eyes[j] for j in range(d)]
            out = mats[0]
            for mm in mats[1:]:
                out = sp.kron(out, mm, format="csr")
            return out

        P = -sum(lift(k, _second_diff(n, h[k])) for k, n in enumerate(self.shape))
        X = [x.ravel() for x in self.coords()]
        if self.b is not None:
            if len(self.b) != d:
                raise CarlemanError(f"need {d} first-order coefficients")
            for k, bk in enumerate(self.b):
                bv = _as_field(bk, self.names)(*X) * np.ones(self.size)
                P = P + sp.diags(bv) @ lift(k, _central(self.shape[k], h[k]))
        if self.c is not None:
            cv = _as_field(self.c, self.names)(*X) * np.ones(self.size)
            P = P + sp.diags(cv)
        self.matrix = sp.csr_matrix(P)
        self.grad = [lift(k, _forward(n, h[k])) for k, n in enumerate(self.shape)]

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(u - l) / (n - 1) for l, u, n in zip(self.lower, self.upper, self.shape)])

    @property
    def h(self) -> float:
        return float(np.max(self.spacing))

    @property
    def cell(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def tau_max(self) -> float:
        """Largest admissible ``tau``: ``0.5 / h``."""
        return TAU_H_MAX / self.h

    def axes(self):
        return [np.linspace(l, u, n) for l, u, n in zip(self.lower, self.upper, self.shape)]

    def coords(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def face_coords(self, k: int):
        """Coordinates of the faces normal to axis ``k`` (midpoints)."""
        ax = self.axes()
        ax[k] = 0.5 * (ax[k][1:] + ax[k][:-1])
        return np.meshgrid(*ax, indexing="ij")

    def sample(self, phi) -> tuple[np.ndarray, list[np.ndarray]]:
        """``Phi`` at the nodes and at the faces of each axis (flattened)."""
        f = _as_field(phi, self.names)
        nodes = np.broadcast_to(f(*self.coords()), self.shape).ravel()
        faces = []
        for k in range(self.dim):
            F = self.face_coords(k)
            faces.append(np.broadcast_to(f(*F), F[0].shape).ravel())
        return nodes, faces

    def support_ok(self, u: np.ndarray) -> bool:
        """True when ``u`` vanishes on the outer ``SUPPORT_MARGIN`` layers."""
        U = np.asarray(u).reshape(self.shape)
        inner = np.zeros(self.shape, bool)
        inner[(slice(SUPPORT_MARGIN, -SUPPORT_MARGIN),) * self.dim] = True
        return not np.any(U[~inner] != 0)


def bump_family(op: GridOperator, n: int, seed: int = 0, center_range=(-0.15, 0.15),
                width_range=(0.05, 0.15)) -> np.ndarray:
    """``n`` radial bumps ``exp(-1/(1 - s^2))`` with random centres and widths.

    Widths are uniform in ``width_range``; centres are uniform in
    ``center_range`` per axis, clipped so every support stays
    ``SUPPORT_MARGIN`` cells inside the box.  Returns an array of shape
    ``(n, op.size)``.
    """
    rng = np.random.default_rng(seed)
    X = op.coords()
    pad = (SUPPORT_MARGIN + 1) * op.spacing
    out = np.zeros((n, op.size))
    for j in range(n):
        w = rng.uniform(*width_range)
        c = rng.uniform(*center_range, size=op.dim)
        c = np.clip(c, np.array(op.lower) + w + pad, np.array(op.upper) - w - pad)
        s2 = sum((Xk - ck) ** 2 for Xk, ck in zip(X, c)) / (w * w)
        v = np.zeros(op.shape)
        m = s2 < 1
        v[m] = np.exp(-1.0 / (1.0 - s2[m]))
        out[j] = v.ravel()
    return out


@dataclass
class RatioCurve:
    """Ratio of the weighted estimate as a function of ``tau``.

    ``ratios[i]`` is the maximum over the family at ``tau_grid[i]``;
    ``per_function`` keeps every member (NaN for skipped members).
    """

    tau_grid: np.ndarray
    ratios: np.ndarray
    test_family: str
    h: float
    tau_max_admissible: float
    per_function: np.ndarray
    skipped: list
    form: str = "weighted"

    @property
    def bounded_stat(self) -> float:
        """``max / median`` of the curve."""
        return float(np.max(self.ratios) / np.median(self.ratios))

    @property
    def growth(self) -> float:
        """``max / min`` of the curve."""
        return float(np.max(self.ratios) / np.min(self.ratios))

    def is_bounded(self, factor: float = 3.0) -> bool:
        return self.bounded_stat <= factor

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau", "ratio"])
        for t, r in zip(self.tau_grid, self.ratios):
            w.writerow([repr(float(t)), repr(float(r))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"tau": [float(t) for t in self.tau_grid],
                "ratio": [float(r) for r in self.ratios],
                "test_family": self.test_family, "h": self.h,
                "tau_max_admissible": self.tau_max_admissible,
                "bounded_stat": self.bounded_stat, "growth": self.growth,
                "skipped": list(self.skipped), "form": self.form}


def _check_tau(op: GridOperator, tau_grid, allow_inadmissible: bool) -> np.ndarray:
    tau = np.asarray(tau_grid, float).ravel()
    if tau.size == 0 or np.any(tau <= 0) or not np.all(np.isfinite(tau)):
        raise CarlemanError("tau grid must be positive and finite")
    if not allow_inadmissible and np.any(tau > op.tau_max * (1 + 1e-12)):
        raise CarlemanError(f"tau above the admissible bound 0.5/h = {op.tau_max:g}")
    return tau


def carleman_ratio(op: GridOperator, phi, test_fns, tau_grid, family: str = "custom",
                   form: str = "weighted", allow_inadmissible: bool = False) -> RatioCurve:
    """Maximum Carleman ratio over ``test_fns`` for each ``tau``.

    Parameters
    ----------
    op : GridOperator
    phi : ScalarField or str
        Weight.
    test_fns : array_like, shape (m, op.size)
        Grid functions vanishing on the outer three layers of nodes.
    tau_grid : array_like
        Values in ``(0, 0.5/h]`` unless ``allow_inadmissible``.
    form : {"weighted", "conjugated"}
        ``"weighted"`` uses ``e^{tau Phi} grad u`` in the numerator;
        ``"conjugated"`` uses ``grad (e^{tau Phi} u)``, the same estimate
        written for ``v = e^{tau Phi} u``.

    Members whose weighted ``P_h u`` underflows are skipped and listed.
    """
    tau = _check_tau(op, tau_grid, allow_inadmissible)
    U = np.atleast_2d(np.asarray(test_fns, float))
    if U.shape[1] != op.size:
        raise CarlemanError("test functions have the wrong size")
    for j, u in enumerate(U):
        if not op.support_ok(u):
            raise CarlemanError(f"test function {j} is not supported away from the boundary")
    if form not in ("weighted", "conjugated"):
        raise CarlemanError("form must be 'weighted' or 'conjugated'")
    pn, pf = op.sample(phi)
    top = max(float(pn.max()), max(float(f.max()) for f in pf))
    PU = (op.matrix @ U.T).T
    GU = [(g @ U.T).T for g in op.grad]
    per = np.full((tau.size, U.shape[0]), np.nan)
    skipped = set()
    for i, t in enumerate(tau):
        e = np.exp(t * (pn - top))
        num = t ** 3 * np.sum((e * U) ** 2, axis=1)
        if form == "weighted":
            for g, ef in zip(GU, pf):
                num += t * np.sum((np.exp(t * (ef - top)) * g) ** 2, axis=1)
        else:
            V = e * U
            for gm in op.grad:
                num += t * np.sum(((gm @ V.T).T) ** 2, axis=1)
        den = np.sum((e * PU) ** 2, axis=1)
        scale = np.sum((e * U) ** 2, axis=1)
        bad = ~(den > UNDERFLOW_TOL) | ~(den > 1e-26 * scale)
        skipped.update(np.flatnonzero(bad).tolist())
        with np.errstate(divide="ignore", invalid="ignore"):
            per[i] = np.where(bad, np.nan, num / den)
    keep = [j for j in range(U.shape[0]) if j not in skipped]
    if not keep:
        raise CarlemanError("every test function lies in the discrete kernel")
    ratios = np.max(per[:, keep], axis=1)
    if not np.all(np.isfinite(ratios)):
        raise CarlemanError("non-finite ratio")
    return RatioCurve(tau, ratios, family, op.h, op.tau_max, per, sorted(skipped), form)


def conjugated_matrix(op: GridOperator, phi, tau: float) -> sp.csr_matrix:
    """``e^{tau Phi} P_h e^{-tau Phi}`` as a sparse matrix.

    Entry ``(i, j)`` is ``P_ij exp(tau (Phi_i - Phi_j))``; only neighbouring
    differences appear, so nothing overflows for any weight range.
    """
    pn, _ = op.sample(phi)
    A = op.matrix.tocoo()
    vals = A.data * np.exp(tau * (pn[A.row] - pn[A.col]))
    return sp.csr_matrix((vals, (A.row, A.col)), shape=A.shape)


def conjugated_apply(op: GridOperator, phi, tau: float, u, method: str = "auto") -> np.ndarray:
    """Apply ``e^{tau Phi} P_h e^{-tau Phi}`` to ``u``.

    ``method="direct"`` multiplies by ``e^{-tau Phi}``, applies ``P_h`` and
    multiplies back, with ``Phi`` shifted to its mid-range; it raises when
    ``tau (max Phi - min Phi) > 600``.  ``method="local"`` uses
    :func:`conjugated_matrix`.  ``"auto"`` picks ``direct`` when the range
    allows and ``local`` otherwise.
    """
    if not np.isfinite(tau) or tau < 0:
        raise CarlemanError("tau must be finite and nonnegative")
    u = np.asarray(u, float).ravel()
    pn, _ = op.sample(phi)
    span = tau * float(pn.max() - pn.min())
    if method == "auto":
        method = "direct" if span <= LOG_RANGE_MAX else "local"
    if method == "direct":
        if span > LOG_RANGE_MAX:
            raise CarlemanError(f"weight range tau*(max-min) = {span:.3g} exceeds {LOG_RANGE_MAX:g}; "
                                "use method='local'")
        mid = 0.5 * float(pn.max() + pn.min())
        e = np.exp(tau * (pn - mid))
        return e * (op.matrix @ (u / e))
    if method == "local":
        return conjugated_matrix(op, phi, tau) @ u
    raise CarlemanError("method must be 'auto', 'direct' or 'local'")
