"""Pseudoconvexity verdicts for surfaces and weight functions.

Every bracket quantity at a fixed base point is a quadratic form in
``y = (xi, tau)``, and every feasibility constraint is either linear or a
single quadratic form.  A check therefore runs as follows:

1. eliminate the linear constraints exactly (orthonormal null space),
2. decide emptiness of the remaining quadric cone from its eigenvalues,
3. sample the reduced unit sphere on a golden-ratio lattice, project every
   sample onto the level set ``c(z) = s`` by Newton steps, and
4. polish the worst projected samples with Nelder-Mead.

The thickened feasible set ``|c| <= delta`` is handled exactly: a minimum of a
quadratic form over the slab is either the smallest eigenvalue (if its
eigenvector lies in the slab) or is attained on one of the levels
``c = +-delta``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtri

from .fieldlang import ScalarField
from .symbolcalc import LocalFrame, PrincipalSymbol, SymbolError, local_frame

__all__ = [
    "Hypersurface", "CheckReport", "SurfaceError", "sphere_lattice",
    "check_noncharacteristic", "check_surface_pseudoconvex",
    "check_function_pseudoconvex", "subellipticity_constants",
    "convexify_analytic", "convexification_identity_residual",
    "convexify_geometric",
]

DEFAULT_SAMPLES = 2 ** 14
DEFAULT_POLISH = 32
DELTA_FEAS = 1e-3
DELTA_SWEEP = (1e-2, 1e-3, 1e-4)
NONCHAR_TOL = 1e-8
# margins at or below this (relative to the objective scale) count as nonpositive
MARGIN_RTOL = 1e-12


class SurfaceError(ValueError):
    """Invalid hypersurface data."""


@dataclass
class Hypersurface:
    """Level set ``{psi = 0}`` through ``x0``, oriented by ``psi``."""

    psi: ScalarField
    x0: np.ndarray

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, float)
        jet = self.psi.jet(self.x0)
        scale = 1.0 + float(np.linalg.norm(jet.grad))
        if abs(jet.value) > 1e-10 * scale:
            raise SurfaceError(f"psi(x0) = {jet.value:g}; base point is not on the surface")
        if not np.any(jet.grad):
            raise SurfaceError("dpsi vanishes at x0")

    def flipped(self) -> "Hypersurface":
        return Hypersurface(-self.psi, self.x0)

    def rescaled(self, h: ScalarField) -> "Hypersurface":
        return Hypersurface(h * self.psi, self.x0)


@dataclass
class CheckReport:
    """Verdict of one check.

    ``verdict`` is ``"pass"``, ``"fail"`` or ``"vacuous"``.  ``margin`` is the
    minimum of the tested quantity over the searched set (``None`` when the set
    is empty) and ``witness`` locates a nonpositive value on failure.
    ``details`` carries per-branch diagnostics and is only serialized on
    request.
    """

    verdict: str
    margin: float | None
    witness: dict | None
    constants: dict
    details: dict = field(default_factory=dict)

    def to_dict(self, detailed: bool = False) -> dict:
        out = {"verdict": self.verdict, "margin": self.margin,
               "witness": self.witness, "constants": self.constants}
        if detailed:
            out["details"] = self.details
        return out

    def to_json(self, detailed: bool = False) -> str:
        return json.dumps(self.to_dict(detailed), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# sampling and projection

def sphere_lattice(n_points: int, k: int) -> np.ndarray:
    """Deterministic quasi-uniform points on the unit sphere of ``R^k``.

    ``k == 3`` uses the Fibonacci lattice.  Other dimensions use the
    generalized golden-ratio (Kronecker) sequence pushed through the inverse
    normal CDF and normalized.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if k == 1:
        return np.array([[1.0]])
    j = np.arange(n_points) + 0.5
    if k == 2:
        th = 2.0 * np.pi * j / n_points
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if k == 3:
        golden = (1.0 + 5.0 ** 0.5) / 2.0
        z = 1.0 - 2.0 * j / n_points
        r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        phi = 2.0 * np.pi * j / golden
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    # generalized golden ratio: unique positive root of x^(k+1) = x + 1
    g = 2.0
    for _ in range(60):
        g = (1.0 + g) ** (1.0 / (k + 1))
    alpha = (1.0 / g) ** np.arange(1, k + 1)
    u = np.mod(0.5 + np.outer(j, alpha), 1.0)
    pts = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _null_space(rows, m, tol=1e-12):
    if not rows:
        return np.eye(m)
    L = np.array(rows, float)
    L = L / np.maximum(np.linalg.norm(L, axis=1, keepdims=True), 1e-300)
    _, s, vt = np.linalg.svd(L)
    rank = int(np.sum(s > tol))
    return vt[rank:].T


def _project(z, M, s, scale, iters=80):
    """Newton projection of rows of ``z`` onto ``{z.Mz = s, |z| = 1}``."""
    z = z / np.linalg.norm(z, axis=1, keepdims=True)
    tol = 1e-14 * scale
    for _ in range(iters):
        Mz = z @ M
        c = np.einsum("ij,ij->i", z, Mz) - s
        if np.all(np.abs(c) <= tol):
            break
        g = 2.0 * Mz
        # tangential part of the gradient keeps the step on the sphere
        g = g - 2.0 * (c + s)[:, None] * z
        gg = np.einsum("ij,ij->i", g, g)
        step = np.where(gg > 0, c / np.where(gg > 0, gg, 1.0), 0.0)
        z = z - step[:, None] * g
        z = z / np.linalg.norm(z, axis=1, keepdims=True)
    c = np.einsum("ij,ij->i", z, z @ M) - s
    return z, np.abs(c) <= 1e-11 * scale


def _project_one(w, M, s, scale, iters=40):
    """Single-point version of :func:`_project`; ``None`` if it fails."""
    nrm = math.sqrt(float(w @ w))
    if nrm == 0.0:
        return None
    z = w / nrm
    tol = 1e-14 * scale
    for _ in range(iters):
        Mz = M @ z
        q = float(z @ Mz)
        c = q - s
        if abs(c) <= tol:
            return z
        g = 2.0 * (Mz - q * z)
        gg = float(g @ g)
        if gg == 0.0:
            return None
        z = z - (c / gg) * g
        z = z / math.sqrt(float(z @ z))
    c = float(z @ M @ z) - s
    return z if abs(c) <= 1e-11 * scale else None


@dataclass
class _LevelResult:
    value: float
    z: np.ndarray | None
    n_feasible: int


def _min_on_level(Q, M, s, lattice, n_polish, scale_m):
    k = Q.shape[0]
    scale_q = max(float(np.max(np.abs(Q))), 1e-300)
    ev = np.linalg.eigvalsh(M)
    if s < ev[0] - 1e-14 * scale_m or s > ev[-1] + 1e-14 * scale_m:
        return _LevelResult(math.inf, None, 0)
    if k == 1:
        z = np.array([[1.0]])
        if abs(M[0, 0] - s) <= 1e-11 * scale_m:
            return _LevelResult(float(Q[0, 0]), z[0], 1)
        return _LevelResult(math.inf, None, 0)
    z, ok = _project(lattice, M, s, scale_m)
    z = z[ok]
    if len(z) == 0:
        return _LevelResult(math.inf, None, 0)
    q = np.einsum("ij,jk,ik->i", z, Q, z)
    order = np.argsort(q)
    best_v, best_z = float(q[order[0]]), z[order[0]]

    if n_polish <= 0:
        return _LevelResult(best_v, best_z, int(len(z)))

    def objective(w):
        zz = _project_one(w, M, s, scale_m)
        if zz is None:
            return 1e300
        return float(zz @ Q @ zz)

    seen = []
    for idx in order:
        if len(seen) >= n_polish:
            break
        z0 = z[idx]
        if any(abs(abs(z0 @ w) - 1.0) < 1e-6 for w in seen):
            continue
        seen.append(z0)
        res = minimize(objective, z0, method="Nelder-Mead",
                       options={"xatol": 1e-9, "fatol": 1e-14 * scale_q, "maxiter": 150 * k})
        zz = _project_one(res.x, M, s, scale_m)
        if zz is not None:
            v = float(zz @ Q @ zz)
            if v < best_v:
                best_v, best_z = v, zz
    return _LevelResult(best_v, best_z, int(len(z)))


def _polarize(fun: Callable, m: int) -> np.ndarray:
    """Matrix of a quadratic form given as a batch function of ``(k, m)`` arrays."""
    E = np.eye(m)
    diag = fun(E)
    C = np.diag(diag).astype(float)
    for i in range(m):
        for j in range(i + 1, m):
            v = fun((E[i] + E[j])[None, :])[0]
            C[i, j] = C[j, i] = 0.5 * (v - diag[i] - diag[j])
    return C


@dataclass
class _Branch:
    name: str
    verdict: str
    margin: float | None
    witness_y: np.ndarray | None
    margins: dict
    n_feasible: int
    note: str = ""

    def summary(self):
        return {
            "verdict": self.verdict, "margin": self.margin,
            "witness": None if self.witness_y is None else self.witness_y.tolist(),
            "margins_by_delta": {f"{d:g}": v for d, v in self.margins.items()},
            "n_feasible": self.n_feasible, "note": self.note,
        }


def _solve_branch(name, m, lin_rows, M, objective, n_samples, n_polish,
                  delta, tau_index=None) -> _Branch:
    N = _null_space(lin_rows, m)
    k = N.shape[1]
    if k == 0:
        return _Branch(name, "vacuous", None, None, {}, 0, "linear constraints leave only 0")
    if tau_index is not None and np.linalg.norm(N[tau_index]) < 1e-12:
        return _Branch(name, "vacuous", None, None, {}, 0, "constraints force tau = 0")
    C = _polarize(objective, m)
    Qr = N.T @ C @ N
    Mr = N.T @ M @ N
    Qr = 0.5 * (Qr + Qr.T)
    Mr = 0.5 * (Mr + Mr.T)
    scale_m = max(float(np.max(np.abs(np.linalg.eigvalsh(Mr)))), 1e-300)
    scale_q = max(float(np.max(np.abs(np.linalg.eigvalsh(Qr)))), 1e-300)
    lattice = sphere_lattice(n_samples, k)
    wq, vq = np.linalg.eigh(Qr)
    zmin = vq[:, 0]
    c_min = float(zmin @ Mr @ zmin)

    cache = {}

    polished = {0.0, delta * scale_m, -delta * scale_m}

    def level(s):
        if s not in cache:
            npol = n_polish if s in polished else 0
            cache[s] = _min_on_level(Qr, Mr, s, lattice, npol, scale_m)
        return cache[s]

    def slab(d):
        # thickened constraint |c| <= d * scale_m
        best = level(0.0) if d == 0 else None
        cands = []
        if d > 0:
            if abs(c_min) <= d * scale_m:
                cands.append(_LevelResult(float(wq[0]), zmin, 1))
            cands += [level(d * scale_m), level(-d * scale_m)]
        else:
            cands.append(best)
        cands = [c for c in cands if c.z is not None]
        if not cands:
            return None
        return min(cands, key=lambda r: r.value)

    exact = slab(0.0)
    margins = {}
    for d in sorted(set(DELTA_SWEEP) | {delta}):
        r = slab(d)
        margins[d] = None if r is None else r.value
    main = slab(delta)
    if main is None:
        return _Branch(name, "vacuous", None, None, margins, 0, "feasible set is empty")
    z = main.z
    verdict = "pass" if main.value > MARGIN_RTOL * scale_q else "fail"
    y = N @ z
    if tau_index is not None and y[tau_index] < 0:
        y = -y
    nf = exact.n_feasible if exact is not None else 0
    note = "" if exact is not None else "only the thickened set is nonempty"
    return _Branch(name, verdict, main.value, y, margins, nf, note)


# ---------------------------------------------------------------------------
# condition assembly

def _time_row(p: PrincipalSymbol, m):
    if not p.has_time:
        raise SymbolError("mode 'xit0' needs a time coordinate named t")
    r = np.zeros(m)
    r[0] = 1.0
    return r


def _branches(p, fr: LocalFrame, surface: bool, mode: str, n_samples, n_polish, delta):
    if mode not in ("full", "xit0"):
        raise ValueError("mode must be 'full' or 'xit0'")
    n = fr.n
    d = fr.dpsi
    Ad = fr.A @ d
    # real branch: variables xi
    rows = []
    if surface:
        rows.append(2.0 * Ad)
    if mode == "xit0":
        rows.append(_time_row(p, n))
    real = _solve_branch("real", n, rows, fr.A, fr.b2, n_samples, n_polish, delta)
    # complex branch: variables (xi, tau), tau last
    m = n + 1
    rows = [np.append(2.0 * Ad, 0.0)]
    if surface:
        tau_row = np.zeros(m)
        tau_row[-1] = 2.0 * fr.p_dpsi
        rows.append(tau_row)
    if mode == "xit0":
        rows.append(_time_row(p, m))
    M = np.zeros((m, m))
    M[:n, :n] = fr.A
    M[n, n] = -fr.p_dpsi
    cplx = _solve_branch("complex", m, rows, M, lambda y: fr.c(y[:, :n], y[:, n]),
                         n_samples, n_polish, delta, tau_index=n)
    return real, cplx


def _combine(real: _Branch, cplx: _Branch, fr: LocalFrame, p, extra=None) -> CheckReport:
    n = fr.n
    fails = [b for b in (real, cplx) if b.verdict == "fail"]
    live = [b for b in (real, cplx) if b.verdict != "vacuous"]
    if fails:
        b = min(fails, key=lambda r: r.margin)
        verdict, margin = "fail", b.margin
        y = b.witness_y
        xi = y[:n]
        tau = 0.0 if b.name == "real" else float(y[n])
        witness = {"x": fr.x.tolist(), "xi": xi.tolist(), "tau": tau, "branch": b.name}
    elif live:
        verdict = "pass"
        margin = min(b.margin for b in live)
        witness = None
    else:
        verdict, margin, witness = "vacuous", None, None
    details = {"real": real.summary(), "complex": cplx.summary()}
    inconsistent = real.verdict == "pass" and cplx.verdict == "fail"
    details["numerical_inconsistency"] = inconsistent
    constants = {
        "p2_dpsi": fr.p_dpsi,
        "margins_by_delta": {
            f"{d:g}": _min_opt(real.margins.get(d), cplx.margins.get(d)) for d in DELTA_SWEEP
        },
    }
    if extra:
        constants.update(extra)
    return CheckReport(verdict, margin, witness, constants, details)


def _min_opt(a, b):
    vals = [v for v in (a, b) if v is not None and math.isfinite(v)]
    return min(vals) if vals else None


def _sampling_constants(n_samples, n_polish, delta, mode):
    return {"samples": n_samples, "polished": n_polish, "delta_feas": delta, "mode": mode,
            "method": f"sampled at {n_samples} lattice points with Newton projection "
                      f"and Nelder-Mead polish of the {n_polish} worst"}


def check_noncharacteristic(p: PrincipalSymbol, S: Hypersurface) -> CheckReport:
    """Whether ``p2(x0, dpsi(x0)) != 0`` (normalized by ``|dpsi|^2``)."""
    fr = local_frame(p, S.psi, S.x0)
    nd = float(np.dot(fr.dpsi, fr.dpsi))
    val = fr.p_dpsi / nd
    if abs(val) > NONCHAR_TOL:
        return CheckReport("pass", abs(val), None, {"p2_dpsi_normalized": val})
    w = {"x": fr.x.tolist(), "xi": (fr.dpsi / math.sqrt(nd)).tolist(), "tau": 0.0}
    return CheckReport("fail", abs(val), w, {"p2_dpsi_normalized": val})


def check_surface_pseudoconvex(p: PrincipalSymbol, S: Hypersurface, mode: str = "full",
                               n_samples: int = DEFAULT_SAMPLES,
                               n_polish: int = DEFAULT_POLISH,
                               delta_feas: float = DELTA_FEAS) -> CheckReport:
    """Test the real and complex surface conditions at ``S.x0``.

    The real condition asks ``{p,{p,psi}} > 0`` where ``p = {p,psi} = 0``;
    the complex one asks the conjugated bracket to be positive where
    ``p_psi = {p_psi, psi} = 0`` with ``tau > 0``.  In mode ``"xit0"`` both sets
    are intersected with ``{xi_t = 0}``.
    """
    fr = local_frame(p, S.psi, S.x0)
    real, cplx = _branches(p, fr, True, mode, n_samples, n_polish, delta_feas)
    rep = _combine(real, cplx, fr, p, _sampling_constants(n_samples, n_polish, delta_feas, mode))
    nonchar = abs(fr.p_dpsi) / float(fr.dpsi @ fr.dpsi) > NONCHAR_TOL
    rep.details["noncharacteristic"] = nonchar
    # a strict failure of the real condition at a noncharacteristic point
    rep.details["real_condition_violated"] = (
        real.verdict == "fail" and real.margin is not None and real.margin < 0 and nonchar)
    return rep


def check_function_pseudoconvex(p: PrincipalSymbol, phi: ScalarField, x0, mode: str = "full",
                                n_samples: int = DEFAULT_SAMPLES,
                                n_polish: int = DEFAULT_POLISH,
                                delta_feas: float = DELTA_FEAS) -> CheckReport:
    """Test ``{p,{p,phi}} > 0`` on ``{p = 0}`` and positivity of the conjugated
    bracket on ``{p_phi = 0, tau > 0}`` at ``x0``."""
    fr = local_frame(p, phi, x0)
    real, cplx = _branches(p, fr, False, mode, n_samples, n_polish, delta_feas)
    return _combine(real, cplx, fr, p, _sampling_constants(n_samples, n_polish, delta_feas, mode))


# ---------------------------------------------------------------------------
# subellipticity

def subellipticity_constants(p: PrincipalSymbol, phi: ScalarField, x0, mode: str = "full",
                             n_samples: int = DEFAULT_SAMPLES, n_polish: int = DEFAULT_POLISH,
                             max_log2: int = 20) -> CheckReport:
    """Find ``C1`` on ``1, 2, .., 2**max_log2`` with ``C1 f + g > 0`` on the half sphere.

    Here ``f = |p_phi|^2`` and ``g`` is half the conjugated bracket, both on
    ``|xi|^2 + tau^2 = 1, tau >= 0``.  ``C2`` is the minimum at the chosen
    ``C1``.
    """
    fr = local_frame(p, phi, x0)
    n = fr.n
    m = n + 1
    rows = [_time_row(p, m)] if mode == "xit0" else []
    N = _null_space(rows, m)
    k = N.shape[1]
    Cg = 0.5 * _polarize(lambda y: fr.c(y[:, :n], y[:, n]), m)
    Mre = np.zeros((m, m))
    Mre[:n, :n] = fr.A
    Mre[n, n] = -fr.p_dpsi
    # Im p_phi = tau * 2 xi.A dphi, a product of two linear forms
    u = np.append(2.0 * fr.A @ fr.dpsi, 0.0)
    e_tau = np.zeros(m)
    e_tau[n] = 1.0
    Gr, Mr, ur, er = N.T @ Cg @ N, N.T @ Mre @ N, N.T @ u, N.T @ e_tau

    def fg(z):
        re = np.einsum("...i,ij,...j->...", z, Mr, z)
        im = (z @ ur) * (z @ er)
        return re * re + im * im, np.einsum("...i,ij,...j->...", z, Gr, z)

    lattice = sphere_lattice(n_samples, k)
    f_s, g_s = fg(lattice)
    best = None
    history = []
    for e in range(max_log2 + 1):
        C1 = float(2 ** e)
        vals = C1 * f_s + g_s
        order = np.argsort(vals)
        vmin, zmin = float(vals[order[0]]), lattice[order[0]]

        def obj(w, C1=C1):
            z = w / np.linalg.norm(w)
            f, g = fg(z)
            return float(C1 * f + g)

        for idx in order[:n_polish]:
            res = minimize(obj, lattice[idx], method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 200 * k})
            if res.fun < vmin:
                vmin, zmin = float(res.fun), res.x / np.linalg.norm(res.x)
        history.append((C1, vmin))
        best = (C1, vmin, zmin)
        if vmin > 0:
            break
    C1, C2, z = best
    y = N @ z
    if y[n] < 0:
        y = -y
    consts = {"C1": C1, "C2": C2, "samples": n_samples, "polished": n_polish, "mode": mode,
              "history": [[c, v] for c, v in history]}
    if C2 > 0:
        return CheckReport("pass", C2, None, consts)
    w = {"x": fr.x.tolist(), "xi": y[:n].tolist(), "tau": float(y[n])}
    return CheckReport("fail", C2, w, consts)


# ---------------------------------------------------------------------------
# convexification

def _exp_weight(S: Hypersurface, lam: float) -> ScalarField:
    return (lam * S.psi).exp()


def convexification_identity_residual(p: PrincipalSymbol, S: Hypersurface, lam: float,
                                      n_points: int = 200, seed: int = 0) -> float:
    """Largest relative defect of the bracket identity for ``exp(lam psi)``.

    Compares the conjugated bracket of ``phi = exp(lam psi)`` with
    ``lam c_psi(xi, lam tau) + 2 lam^2 |{p_psi, psi}(xi, lam tau)|^2`` at random
    unit ``(xi, tau)``, using independent jets of ``phi`` and ``psi``.
    """
    fr_psi = local_frame(p, S.psi, S.x0)
    fr_phi = local_frame(p, _exp_weight(S, lam), S.x0)
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((n_points, fr_psi.n + 1))
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    xi, tau = y[:, :-1], np.abs(y[:, -1])
    lhs = fr_phi.c(xi, tau)
    bpp = fr_psi.bracket_psi_psi(xi, lam * tau)
    rhs = lam * fr_psi.c(xi, lam * tau) + 2.0 * lam ** 2 * np.abs(bpp) ** 2
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    scale = np.maximum(scale, 1e-300)
    return float(np.max(np.abs(lhs - rhs) / scale))


def convexify_analytic(p: PrincipalSymbol, S: Hypersurface, mode: str = "full",
                       max_log2: int = 20, n_samples: int = DEFAULT_SAMPLES,
                       n_polish: int = DEFAULT_POLISH):
    """Smallest ``lam`` on ``1, 2, .., 2**max_log2`` making ``exp(lam psi)`` pseudoconvex.

    Returns
    -------
    lam : float or None
        ``None`` when no value on the schedule works.
    phi : ScalarField or None
    report : CheckReport
        Report at ``lam`` (or at the best attempt).
    """
    best = None
    tried = []
    for e in range(max_log2 + 1):
        lam = float(2 ** e)
        phi = _exp_weight(S, lam)
        rep = check_function_pseudoconvex(p, phi, S.x0, mode, n_samples, n_polish)
        tried.append([lam, rep.verdict, rep.margin])
        if rep.verdict == "pass":
            rep.constants["lambda"] = lam
            rep.constants["schedule"] = tried
            rep.constants["identity_residual"] = convexification_identity_residual(p, S, lam)
            return lam, phi, rep
        if best is None or (rep.margin is not None and best[2].margin is not None
                            and rep.margin / lam ** 2 > best[2].margin / best[0] ** 2):
            best = (lam, phi, rep)
    lam, phi, rep = best
    rep.constants["lambda"] = None
    rep.constants["schedule"] = tried
    return None, None, rep


def _dist2(names, x0) -> ScalarField:
    out = ScalarField.constant(0.0, names)
    for k in range(len(names)):
        out = out + (ScalarField.coordinate(k, names) - float(x0[k])) ** 2
    return out


def _ball_points(x0, R, n_points, dim):
    s = sphere_lattice(n_points, dim) if dim > 1 else np.array([[1.0], [-1.0]] * (n_points // 2))
    j = np.arange(len(s)) + 0.5
    golden = (5.0 ** 0.5 - 1.0) / 2.0
    r = R * np.mod(0.5 + j * golden, 1.0) ** (1.0 / dim)
    return x0[None, :] + r[:, None] * s


def convexify_geometric(p: PrincipalSymbol, phi: ScalarField, x0, variant: str = "shift",
                        mode: str = "full", max_halvings: int = 30,
                        n_samples: int = DEFAULT_SAMPLES, n_polish: int = DEFAULT_POLISH,
                        n_check: int = 4000):
    """Strictly convexify a pseudoconvex weight near ``x0``.

    ``variant="shift"`` returns ``phi - eps |x - x0|^2`` with the largest
    ``eps = 2**-k`` that stays pseudoconvex.  ``variant="quadratic"`` returns
    the quadratic polynomial ``phi_T - eps |x - x0|^2`` built from the 2-jet of
    ``phi`` and certifies, on sampled points, a radius ``R0`` such that
    ``|phi_T - phi| <= eps |x-x0|^2 / 2`` on ``B(x0, R0)`` and the weight is
    at most ``-eps R^2 / 8`` on ``{phi <= 0}`` intersected with the ring
    ``R/2 <= |x - x0| <= R`` for ``R <= R0``.

    Returns
    -------
    field : ScalarField
    eps : float
    R0 : float
        ``inf`` for the shift variant.
    report : CheckReport
    """
    if variant not in ("shift", "quadratic"):
        raise ValueError("variant must be 'shift' or 'quadratic'")
    x0 = np.asarray(x0, float)
    names = phi.names
    jet = phi.jet(x0)
    phi0 = phi - jet.value
    r2 = _dist2(names, x0)
    if variant == "shift":
        base = phi0
    else:
        base = ScalarField.quadratic(0.0, jet.grad, jet.hess, x0, names)
    for k in range(max_halvings + 1):
        eps = 2.0 ** -k
        cand = base - eps * r2
        rep = check_function_pseudoconvex(p, cand, x0, mode, n_samples, n_polish)
        if rep.verdict == "pass":
            break
    else:
        rep.constants["eps"] = None
        return None, None, None, rep
    rep.constants["eps"] = eps
    if variant == "shift":
        rep.constants["R0"] = math.inf
        return cand, eps, math.inf, rep
    dim = len(names)
    R0 = None
    for k in range(0, 40):
        R = 2.0 ** -k
        pts = _ball_points(x0, R, n_check, dim)
        d2 = np.sum((pts - x0) ** 2, axis=1)
        err = np.abs(base(pts) - phi0(pts))
        if np.all(err <= 0.5 * eps * d2 + 1e-15):
            R0 = R
            break
    if R0 is None:
        rep.constants["R0"] = None
        return cand, eps, None, rep
    ring = []
    for R in (R0, R0 / 2, R0 / 4):
        pts = _ball_points(x0, R, n_check, dim)
        d2 = np.sum((pts - x0) ** 2, axis=1)
        sel = (d2 >= (R / 2) ** 2) & (phi0(pts) <= 0)
        worst = float(np.max(cand(pts[sel]))) if np.any(sel) else -math.inf
        ring.append({"R": R, "max_weight": worst, "bound": -eps * R * R / 8,
                     "ok": bool(worst <= -eps * R * R / 8)})
    rep.constants["R0"] = R0
    rep.constants["ring_checks"] = ring
    rep.constants["eta"] = eps * R0 * R0 / 8
    return cand, eps, R0, rep
