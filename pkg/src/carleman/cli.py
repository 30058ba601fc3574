"""Scenario-driven command line front end.

Usage::

    carleman <subcommand> --config scenario.toml [--out DIR] [--seed N] [--threads N]

Every run writes ``report.json`` to the output directory.  Exit codes: 0 on
success, 1 when the verdict contradicts ``expect``, 2 for an invalid
scenario and 3 for a failure while running it.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import jsonschema
import numpy as np

from . import __version__
from .fieldlang import FieldError, ScalarField

__all__ = ["main", "run_scenario", "load_scenario", "KINDS", "SCENARIO_DIR"]

KINDS = ("check-surface", "convexify", "flow", "distance", "sweep", "multiplier",
         "simulate", "carleman-ratio", "control")
SCENARIO_DIR = Path(__file__).with_name("scenarios")

EXIT_OK, EXIT_MISMATCH, EXIT_SCHEMA, EXIT_RUNTIME = 0, 1, 2, 3


class ScenarioError(Exception):
    """Invalid scenario (exit status 2)."""


# ---------------------------------------------------------------------------
# schema

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer"}
_expr = {"type": ["string", "number"]}
_vec = {"type": "array", "items": _num, "minItems": 1}
_ivec = {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1, "maxItems": 3}
_interval = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_box = {"type": "array", "items": _vec, "minItems": 2, "maxItems": 2}
_exprmat = {"type": "array", "items": {"type": "array", "items": _expr}}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


OPERATOR = _obj({
    "type": {"enum": ["minkowski", "wave", "laplacian", "constant", "general", "hamiltonian"]},
    "space_dim": {"type": "integer", "minimum": 1, "maximum": 3},
    "dim": {"type": "integer", "minimum": 1, "maximum": 6},
    "time": {"type": "boolean"},
    "matrix": {"type": "array", "items": {"type": "array", "items": _num}},
    "coefficients": _exprmat,
    "cometric": _exprmat,
    "symbol": {"type": "string"},
    "mode": {"enum": ["full", "xit0"]},
}, ["type"])

SAMPLING = _obj({
    "n_samples": {"type": "integer", "minimum": 16, "maximum": 2 ** 20},
    "n_polish": {"type": "integer", "minimum": 0, "maximum": 4096},
    "delta_feas": _pos,
})

SURFACE = _obj({"psi": _expr, "x0": _vec}, ["psi", "x0"])

GRID = _obj({"lower": _vec, "upper": _vec, "shape": _ivec, "metric": _exprmat},
            ["lower", "upper", "shape"])

SECTIONS = {
    "check-surface": ({
        "operator": OPERATOR, "surface": SURFACE, "sampling": SAMPLING,
        "check": _obj({"target": {"enum": ["surface", "function"]},
                       "rescale": _expr, "subellipticity": {"type": "boolean"}}),
    }, ["operator", "surface"]),
    "convexify": ({
        "operator": OPERATOR, "surface": SURFACE, "sampling": SAMPLING,
        "convexify": _obj({"method": {"enum": ["analytic", "geometric"]},
                           "variant": {"enum": ["shift", "quadratic"]},
                           "max_log2": {"type": "integer", "minimum": 0, "maximum": 40}}),
    }, ["operator", "surface"]),
    "flow": ({
        "operator": OPERATOR,
        "flow": _obj({"x0": _vec, "xi0": _vec, "s_max": _num, "step": _pos,
                      "box_lower": _vec, "box_upper": _vec, "psi": _expr,
                      "symmetric": {"type": "boolean"}}, ["x0", "xi0"]),
    }, ["operator", "flow"]),
    "distance": ({
        "grid": GRID,
        "distance": _obj({"sources_box": _box, "targets_box": _box,
                          "order": {"type": "integer", "minimum": 1, "maximum": 3},
                          "T": _pos}, ["sources_box"]),
    }, ["grid", "distance"]),
    "sweep": ({
        "sweep": _obj({"ell0": _pos, "t0": _pos, "alpha": _pos, "b": _pos,
                       "n_eps": {"type": "integer", "minimum": 2, "maximum": 1025},
                       "grid": {"type": "integer", "minimum": 8, "maximum": 512},
                       "width": _pos, "slope_factor": _pos, "kappa": {"type": "number", "minimum": 0},
                       "mprime": _expr, "allow_invalid": {"type": "boolean"}},
                      ["ell0", "t0", "alpha"]),
    }, ["sweep"]),
    "multiplier": ({
        "multiplier": _obj({"signal": _expr, "t_min": _num, "t_max": _num,
                            "n": {"type": "integer", "minimum": 16, "maximum": 2 ** 22},
                            "eps": _pos, "tau": _pos, "mode": {"enum": ["spectral", "convolution"]},
                            "powers": {"type": "array", "items": {"type": "integer", "minimum": 1,
                                                                   "maximum": 6}},
                            "chi1": _interval, "chi2": _interval, "lambdas": _vec,
                            "commutation_tol": _pos, "mode_tol": _pos},
                           ["signal", "t_min", "t_max", "n", "eps", "tau"]),
    }, ["multiplier"]),
    "simulate": ({
        "wave": _obj({"lower": _vec, "upper": _vec, "shape": _ivec, "cometric": {
            "type": "array", "items": _expr}, "q": _expr, "u0": _expr, "u1": _expr,
            "T": _pos, "cfl": _pos, "record_every": {"type": "integer", "minimum": 1},
            "energy_tol": _pos}, ["lower", "upper", "shape", "T"]),
    }, ["wave"]),
    "carleman-ratio": ({
        "ratio": _obj({"lower": _vec, "upper": _vec, "shape": _ivec, "phi": _expr,
                       "b": {"type": "array", "items": _expr}, "c": _expr,
                       "n_test": {"type": "integer", "minimum": 1, "maximum": 10000},
                       "center_range": _interval, "width_range": _interval,
                       "tau_min": _pos, "tau_max": _pos,
                       "n_tau": {"type": "integer", "minimum": 2, "maximum": 1000},
                       "form": {"enum": ["weighted", "conjugated"]},
                       "bound_factor": _pos}, ["lower", "upper", "shape", "phi"]),
    }, ["ratio"]),
    "control": ({
        "control": _obj({"lower": _vec, "upper": _vec, "shape": _ivec, "omega": _box,
                         "full_omega": {"type": "boolean"}, "T": _pos, "cfl": _pos,
                         "eps": _vec, "target_u": _expr, "target_v": _expr,
                         "target_u_box": _box, "target_v_box": _box,
                         "gram_spectrum": {"type": "boolean"}},
                        ["lower", "upper", "shape", "T", "eps"]),
    }, ["control"]),
}


def scenario_schema(kind: str) -> dict:
    props, required = SECTIONS[kind]
    base = {"kind": {"enum": list(KINDS)}, "name": {"type": "string"},
            "description": {"type": "string"}, "expect": {"enum": ["pass", "fail"]},
            "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1}}
    base.update(props)
    return _obj(base, ["kind"] + list(required))


def _resolve(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    bundled = SCENARIO_DIR / p.name
    if bundled.exists():
        return bundled
    raise ScenarioError(f"{path}: no such file")


def load_scenario(path, kind: str | None = None) -> dict:
    """Read and validate a scenario file; raises ScenarioError with a position."""
    p = _resolve(str(path))
    try:
        with open(p, "rb") as fh:
            cfg = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{p}: TOML syntax error: {exc}") from None
    k = cfg.get("kind")
    if k not in KINDS:
        raise ScenarioError(f"{p}: 'kind' must be one of {', '.join(KINDS)}")
    if kind is not None and k != kind:
        raise ScenarioError(f"{p}: scenario kind {k!r} does not match subcommand {kind!r}")
    try:
        jsonschema.validate(cfg, scenario_schema(k))
    except jsonschema.ValidationError as exc:
        where = ".".join(str(s) for s in exc.absolute_path) or "<top level>"
        raise ScenarioError(f"{p}: at {where}: {exc.message}") from None
    return cfg


# ---------------------------------------------------------------------------
# helpers

def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    return v


def _parse(src, names, where: str) -> ScalarField:
    try:
        return ScalarField.parse(str(src), names=names)
    except FieldError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _need(cond, msg):
    if not cond:
        raise ScenarioError(msg)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _box_mask(coords, box) -> np.ndarray:
    lo, hi = box
    _need(len(lo) == len(coords) and len(hi) == len(coords), "box dimension differs from grid")
    m = np.ones(coords[0].shape, bool)
    for X, a, b in zip(coords, lo, hi):
        m &= (X >= a) & (X <= b)
    return m


def _symbol(op: dict):
    from .bicharflow import HamiltonSymbol
    from .symbolcalc import PrincipalSymbol

    t = op["type"]
    if t == "minkowski":
        _need("space_dim" in op, "operator.space_dim is required for minkowski")
        return PrincipalSymbol.minkowski(op["space_dim"])
    if t == "wave":
        _need("space_dim" in op and "cometric" in op, "wave operator needs space_dim and cometric")
        return PrincipalSymbol.wave(op["cometric"], op["space_dim"])
    if t == "laplacian":
        _need("dim" in op, "operator.dim is required for laplacian")
        return PrincipalSymbol.laplacian(op["dim"])
    if t == "constant":
        _need("matrix" in op, "operator.matrix is required")
        return PrincipalSymbol.constant(op["matrix"], time=op.get("time", False))
    if t == "general":
        _need("coefficients" in op, "operator.coefficients is required")
        return PrincipalSymbol.from_strings(op["coefficients"], time=op.get("time", False))
    _need("symbol" in op and "dim" in op, "hamiltonian operator needs symbol and dim")
    return HamiltonSymbol(op["symbol"], op["dim"], op.get("time", False))


def _sampling(cfg) -> dict:
    s = cfg.get("sampling", {})
    from .convexity import DEFAULT_POLISH, DEFAULT_SAMPLES, DELTA_FEAS
    return {"n_samples": s.get("n_samples", DEFAULT_SAMPLES),
            "n_polish": s.get("n_polish", DEFAULT_POLISH),
            "delta_feas": s.get("delta_feas", DELTA_FEAS)}


def _surface(cfg, p):
    from .convexity import Hypersurface
    from .symbolcalc import PrincipalSymbol
    _need(isinstance(p, PrincipalSymbol), "this scenario needs a second-order principal symbol")
    s = cfg["surface"]
    _need(len(s["x0"]) == p.n, f"surface.x0 needs {p.n} coordinates")
    psi = _parse(s["psi"], p.names, "surface.psi")
    return psi, Hypersurface(psi, s["x0"])


def _margin_artifacts(ctx, constants: dict, stem: str = "margins") -> None:
    """``stem.csv`` and ``stem.svg`` of the sampled margin against the thickening delta."""
    by = constants.get("margins_by_delta") or {}
    if not by:
        return
    rows = sorted((float(d), m) for d, m in by.items())
    _write_csv(ctx["out"] / f"{stem}.csv", ["delta", "margin"],
               [[d, "" if m is None else m] for d, m in rows])
    ctx["artifacts"].append(f"{stem}.csv")
    from .svgplot import write_svg
    pts = [(d, m) for d, m in rows if m is not None]
    if pts:
        write_svg(ctx["out"] / f"{stem}.svg",
                  [(np.log10([d for d, _ in pts]), [m for _, m in pts], "margin")],
                  title="sampled margin", xlabel="log10 delta", ylabel="margin")
        ctx["artifacts"].append(f"{stem}.svg")


def _fit(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    A = np.polyfit(x, y, 1)
    res = y - np.polyval(A, x)
    tot = np.sum((y - y.mean()) ** 2)
    return float(A[0]), float(1.0 - np.sum(res ** 2) / tot) if tot > 0 else 1.0


# ---------------------------------------------------------------------------
# runners: each returns a prepared closure so that scenario errors surface
# before any work starts

def _prep_check_surface(cfg, ctx):
    from .convexity import (check_function_pseudoconvex, check_surface_pseudoconvex,
                            subellipticity_constants)
    p = _symbol(cfg["operator"])
    psi, S = _surface(cfg, p)
    chk = cfg.get("check", {})
    target = chk.get("target", "surface")
    mode = cfg["operator"].get("mode", "full")
    samp = _sampling(cfg)
    rescale = _parse(chk["rescale"], p.names, "check.rescale") if "rescale" in chk else None
    if rescale is not None:
        _need(rescale.value(S.x0) > 0, "check.rescale must be positive at x0")

    def run():
        if target == "surface":
            rep = check_surface_pseudoconvex(p, S, mode, **samp)
        else:
            rep = check_function_pseudoconvex(p, psi, S.x0, mode, **samp)
        out = rep.to_dict()
        _margin_artifacts(ctx, rep.constants)
        out["target"] = target
        out["mode"] = mode
        for key in ("noncharacteristic", "real_condition_violated"):
            if key in rep.details:
                out[key] = rep.details[key]
        if rescale is not None:
            if target == "surface":
                r2 = check_surface_pseudoconvex(p, S.rescaled(rescale), mode, **samp)
            else:
                r2 = check_function_pseudoconvex(p, rescale * psi, S.x0, mode, **samp)
            out["rescaled"] = {"verdict": r2.verdict, "margin": r2.margin}
        if chk.get("subellipticity", False):
            sub = subellipticity_constants(p, psi, S.x0, mode, samp["n_samples"], samp["n_polish"])
            out["subellipticity"] = sub.to_dict()
        return rep.verdict, out
    return run


def _prep_convexify(cfg, ctx):
    from .convexity import convexify_analytic, convexify_geometric
    from .fieldlang import pretty
    p = _symbol(cfg["operator"])
    psi, S = _surface(cfg, p)
    c = cfg.get("convexify", {})
    mode = cfg["operator"].get("mode", "full")
    samp = _sampling(cfg)

    def run():
        if c.get("method", "analytic") == "analytic":
            lam, phi, rep = convexify_analytic(p, S, mode, c.get("max_log2", 20),
                                               samp["n_samples"], samp["n_polish"])
            out = {"method": "analytic", "lambda": lam, "report": rep.to_dict(),
                   "weight": None if phi is None else pretty(phi.node)}
            _margin_artifacts(ctx, rep.constants)
            sched = rep.constants.get("schedule") or []
            _write_csv(ctx["out"] / "schedule.csv", ["lambda", "verdict", "margin"],
                       [[l, v, "" if m is None else m] for l, v, m in sched])
            ctx["artifacts"].append("schedule.csv")
            return ("pass" if lam is not None else "fail"), out
        field, eps, R0, rep = convexify_geometric(p, psi, S.x0, c.get("variant", "shift"), mode,
                                                  n_samples=samp["n_samples"],
                                                  n_polish=samp["n_polish"])
        out = {"method": "geometric", "variant": c.get("variant", "shift"), "eps": eps, "R0": R0,
               "report": rep.to_dict(), "weight": None if field is None else pretty(field.node)}
        _margin_artifacts(ctx, rep.constants)
        return ("pass" if eps is not None else "fail"), out
    return run


def _prep_flow(cfg, ctx):
    from .bicharflow import classify_tangency, flow_brackets, integrate
    p = _symbol(cfg["operator"])
    f = cfg["flow"]
    n = p.n
    _need(len(f["x0"]) == n and len(f["xi0"]) == n, f"flow.x0 and flow.xi0 need {n} entries")
    box = None
    if "box_lower" in f or "box_upper" in f:
        _need("box_lower" in f and "box_upper" in f, "give both box_lower and box_upper")
        box = (f["box_lower"], f["box_upper"])
    names = p.names if hasattr(p, "names") else p.x_names
    psi = _parse(f["psi"], names, "flow.psi") if "psi" in f else None

    def run():
        tr = integrate(p, f["x0"], f["xi0"], f.get("s_max", 1.0), f.get("step", 1e-3), box,
                       f.get("symmetric", True))
        out = {"steps": int(len(tr.s) - 1), "conservation_error": tr.conservation_error,
               "p_initial": float(tr.p[tr.i0])}
        tr.to_csv(ctx["out"] / "trajectory.csv")
        ctx["artifacts"].append("trajectory.csv")
        from .svgplot import write_svg
        write_svg(ctx["out"] / "trajectory.svg",
                  [(tr.s, tr.x[:, k], names[k]) for k in range(n)],
                  title="bicharacteristic", xlabel="s", ylabel="x")
        ctx["artifacts"].append("trajectory.svg")
        if psi is not None:
            b1, b2 = flow_brackets(p, psi, np.asarray(f["x0"], float), np.asarray(f["xi0"], float))
            tg = classify_tangency(tr, psi)
            out["brackets"] = {"b1": b1, "b2": b2}
            out["tangency"] = tg.as_dict()
        ok = out["conservation_error"] <= 1e-8 * max(1.0, abs(out["p_initial"]))
        return ("pass" if ok else "fail"), out
    return run


def _prep_distance(cfg, ctx):
    from .geodist import GridDomain, geodesic_distance, save_grid, save_grid_csv
    g = cfg["grid"]
    d = cfg["distance"]
    dom = GridDomain(g["lower"], g["upper"], g["shape"], g.get("metric"))
    X = dom.coords()
    src = _box_mask(X, d["sources_box"])
    _need(np.any(src), "distance.sources_box contains no grid node")
    tgt = _box_mask(X, d["targets_box"]) if "targets_box" in d else np.ones(dom.shape, bool)
    _need(np.any(tgt), "distance.targets_box contains no grid node")

    def run():
        dist = geodesic_distance(dom, src, d.get("order", 1))
        L = float(np.max(dist[tgt]))
        out = {"sup_distance": L, "twice_sup_distance": 2 * L,
               "shape": list(dom.shape), "order": d.get("order", 1)}
        if "T" in d:
            out["T"] = d["T"]
            out["T_exceeds_2L"] = bool(d["T"] > 2 * L)
        save_grid(ctx["out"] / "distance.cgrid", dist, dom.spacing, dom.lower, kind="distance",
                  axes=list(dom.names))
        save_grid_csv(ctx["out"] / "distance.csv", dom, dist)
        mid = tuple([slice(None)] + [n // 2 for n in dom.shape[1:]])
        from .svgplot import write_svg
        write_svg(ctx["out"] / "distance.svg", [(dom.axes()[0], dist[mid], "distance")],
                  title="distance to sources (first axis, mid-plane)", xlabel=dom.names[0])
        ctx["artifacts"] += ["distance.cgrid", "distance.csv", "distance.svg"]
        return ("pass" if math.isfinite(L) else "fail"), out
    return run


def _prep_sweep(cfg, ctx):
    from .geodist import build_sweep
    s = cfg["sweep"]
    kw = {k: s[k] for k in ("b", "n_eps", "width", "slope_factor", "kappa", "mprime",
                            "allow_invalid") if k in s}
    fam = build_sweep(s["ell0"], s["t0"], s["alpha"], **kw)

    def run():
        rep = fam.evaluate(s.get("grid", 64))
        out = rep.as_dict()
        out["invariants"] = fam.invariants()
        rows = [(e, v) for e, v in rep.per_eps]
        _write_csv(ctx["out"] / "sweep.csv", ["eps", "min_margin"], rows)
        from .svgplot import write_svg
        write_svg(ctx["out"] / "sweep.svg", [([r[0] for r in rows], [r[1] for r in rows], "margin")],
                  title="sweep margin", xlabel="eps", ylabel="min margin")
        ctx["artifacts"] += ["sweep.csv", "sweep.svg"]
        return ("pass" if rep.min_margin > 0 else "fail"), out
    return run


def _prep_multiplier(cfg, ctx):
    from .gaussmult import (TimeSignal, apply_multiplier, commutation_residual, decay_ratio)
    m = cfg["multiplier"]
    _need(m["t_max"] > m["t_min"], "multiplier.t_max must exceed t_min")
    sig = _parse(m["signal"], ("t",), "multiplier.signal")
    u = TimeSignal.sample(lambda t: sig(t) * np.ones_like(t), m["t_min"], m["t_max"], m["n"])
    eps, tau = m["eps"], m["tau"]
    decay = "chi1" in m or "chi2" in m
    if decay:
        _need("chi1" in m and "chi2" in m and "lambdas" in m, "decay needs chi1, chi2 and lambdas")

    def run():
        q = apply_multiplier(u, eps, tau, m.get("mode", "spectral"))
        qs = apply_multiplier(u, eps, tau, "spectral", check=False)
        qc = apply_multiplier(u, eps, tau, "convolution", check=False)
        scale = max(float(np.max(np.abs(qs.values))), 1e-300)
        out = {"mode_agreement": float(np.max(np.abs(qs.values - qc.values))) / scale,
               "commutation": {str(k): commutation_residual(u, eps, tau, k)
                               for k in m.get("powers", [1, 2])},
               "input_norm": u.norm(), "output_norm": q.norm()}
        ok = (out["mode_agreement"] <= m.get("mode_tol", 1e-8)
              and all(v <= m.get("commutation_tol", 1e-7) for v in out["commutation"].values()))
        if decay:
            t = u.t
            c1 = ((t >= m["chi1"][0]) & (t <= m["chi1"][1])).astype(float)
            c2 = ((t >= m["chi2"][0]) & (t <= m["chi2"][1])).astype(float)
            ratios, rate, d = decay_ratio(c1, c2, u, m["lambdas"])
            out["decay"] = {"ratios": ratios, "rate": rate, "distance": d,
                            "predicted_rate": d * d / 8.0, "rate_over_prediction": rate / (d * d / 8.0)}
            _write_csv(ctx["out"] / "decay.csv", ["lambda", "ratio"], zip(m["lambdas"], ratios))
            ctx["artifacts"].append("decay.csv")
        _write_csv(ctx["out"] / "signal.csv", ["t", "u", "Qu"], zip(u.t, u.values, q.values))
        from .svgplot import write_svg
        write_svg(ctx["out"] / "signal.svg", [(u.t, u.values, "u"), (u.t, q.values, "Q u")],
                  title="Gaussian multiplier", xlabel="t")
        ctx["artifacts"] += ["signal.csv", "signal.svg"]
        return ("pass" if ok else "fail"), out
    return run


def _prep_simulate(cfg, ctx):
    from .geodist import save_grid
    from .wavesolve import WaveProblem, WaveState, evolve, modified_energy
    w = cfg["wave"]
    P = WaveProblem(w["lower"], w["upper"], w["shape"], w.get("cometric"), w.get("q"))
    U0 = P.project(w.get("u0", 0))
    U1 = P.project(w.get("u1", 0))
    dt = P.dt_for(w.get("cfl", 0.5))
    nsteps = max(1, int(math.ceil(w["T"] / dt)))
    dt = w["T"] / nsteps
    every = min(w.get("record_every", max(1, nsteps // 200)), nsteps)

    def run():
        st = WaveState(U0, U1)
        rows = [(0, 0.0, modified_energy(P, st, dt))]
        done = 0
        while done < nsteps:
            k = min(every, nsteps - done)
            st, _ = evolve(P, st, dt, k)
            done += k
            rows.append((done, done * dt, modified_energy(P, st, dt)))
        E = np.array([r[2] for r in rows])
        drift = float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-300))
        out = {"nsteps": nsteps, "dt": dt, "cfl": P.cfl(dt), "energy": float(E[0]),
               "energy_drift": drift, "max_abs_u": float(np.max(np.abs(st.u)))}
        _write_csv(ctx["out"] / "energy.csv", ["step", "t", "modified_energy"], rows)
        save_grid(ctx["out"] / "u_final.cgrid", st.u, P.spacing, P.lower, kind="wave-u",
                  axes=list(P.names))
        from .svgplot import write_svg
        if P.dim == 1:
            write_svg(ctx["out"] / "u_final.svg", [(P.axes()[0], st.u, "u(T)")],
                      title="final displacement", xlabel="x1")
        else:
            mid = P.shape[1] // 2
            write_svg(ctx["out"] / "u_final.svg", [(P.axes()[0], st.u[:, mid], "u(T), mid row")],
                      title="final displacement", xlabel="x1")
        ctx["artifacts"] += ["energy.csv", "u_final.cgrid", "u_final.svg"]
        return ("pass" if drift <= w.get("energy_tol", 1e-10) else "fail"), out
    return run


def _prep_carleman(cfg, ctx):
    from .carlemanlab import GridOperator, bump_family, carleman_ratio
    r = cfg["ratio"]
    op = GridOperator(r["lower"], r["upper"], r["shape"], r.get("b"), r.get("c"))
    _parse(r["phi"], op.names, "ratio.phi")
    tmax = r.get("tau_max", op.tau_max)
    tmin = r.get("tau_min", 5.0)
    _need(tmax > tmin, "ratio.tau_max must exceed tau_min")
    _need(tmax <= op.tau_max * (1 + 1e-12), f"ratio.tau_max exceeds 0.5/h = {op.tau_max:g}")
    taus = np.geomspace(tmin, tmax, r.get("n_tau", 24))
    fam_kw = {k: tuple(r[k]) for k in ("center_range", "width_range") if k in r}
    U = bump_family(op, r.get("n_test", 50), seed=ctx["seed"], **fam_kw)
    factor = r.get("bound_factor", 3.0)

    def run():
        curve = carleman_ratio(op, str(r["phi"]), U, taus, family=f"bumps(seed={ctx['seed']})",
                               form=r.get("form", "weighted"))
        out = curve.to_dict()
        out["bound_factor"] = factor
        out["bounded"] = curve.is_bounded(factor)
        with open(ctx["out"] / "ratio.csv", "w") as fh:
            fh.write(curve.to_csv())
        from .svgplot import write_svg
        write_svg(ctx["out"] / "ratio.svg", [(np.log10(curve.tau_grid), curve.ratios, "max ratio")],
                  title="Carleman ratio", xlabel="log10 tau", ylabel="ratio", logy=True)
        ctx["artifacts"] += ["ratio.csv", "ratio.svg"]
        return ("pass" if out["bounded"] else "fail"), out
    return run


def _prep_control(cfg, ctx):
    from .geodist import GridDomain, save_grid, sup_distance
    from .hum import ControlProblem, compute_control, cost_curve_csv, gram_matrix, smooth_cutoff
    from .wavesolve import WaveProblem
    c = cfg["control"]
    P = WaveProblem(c["lower"], c["upper"], c["shape"])
    X = P.coords()
    if c.get("full_omega", False):
        chi = P.interior().astype(float)
    else:
        _need("omega" in c, "control.omega is required unless full_omega")
        chi = smooth_cutoff(P, *c["omega"])
    _need(np.any(chi > 0), "control region contains no interior node")

    def target(key):
        v = P.project(c.get(key, 0))
        if key + "_box" in c:
            v = v * _box_mask(X, c[key + "_box"])
        return v

    tg = (target("target_u"), target("target_v"))
    _need(any(np.any(t != 0) for t in tg), "target is zero")
    eps_list = [float(e) for e in c["eps"]]
    _need(all(e > 0 for e in eps_list), "control.eps entries must be positive")
    prob = ControlProblem(P, chi, c["T"], tg, eps_list[0], c.get("cfl", 0.5))

    def run():
        dom = GridDomain(c["lower"], c["upper"], c["shape"])
        L = sup_distance(dom, np.ones(dom.shape, bool), chi > 0)
        G = gram_matrix(prob)
        probs = [prob.with_target(tg, e) for e in eps_list]
        with ThreadPoolExecutor(max_workers=ctx["threads"]) as ex:
            res = list(ex.map(lambda pr: compute_control(pr, gram=G), probs))
        costs = np.array([r.cost for r in res])
        slope, r2 = _fit(1.0 / np.array(eps_list), np.log(costs))
        out = {"L": L, "T": c["T"], "T_over_2L": c["T"] / (2 * L), "nsteps": prob.nsteps,
               "dt": prob.dt, "curve": [r.summary() for r in res],
               "log_cost_fit": {"slope": slope, "r2": r2},
               "monotone": bool(np.all(np.diff(costs) >= -1e-12 * costs[:-1]))}
        if c.get("gram_spectrum", False):
            w = np.linalg.eigvalsh(G)
            out["gram"] = {"min": float(w[0]), "max": float(w[-1]),
                           "min_over_max": float(w[0] / w[-1])}
        ok = all(r.achieved_error <= 1.05 * r.eps * r.target_norm for r in res)
        with open(ctx["out"] / "cost.csv", "w") as fh:
            fh.write(cost_curve_csv(res))
        save_grid(ctx["out"] / "control.cgrid", res[-1].f, [prob.dt] + list(P.spacing),
                  [0.0] + list(P.lower), kind="control", axes=["t"] + list(P.names))
        from .svgplot import write_svg
        write_svg(ctx["out"] / "cost.svg", [(1.0 / np.array(eps_list), costs, "cost")],
                  title="control cost", xlabel="1/eps", ylabel="cost", logy=True)
        ctx["artifacts"] += ["cost.csv", "control.cgrid", "cost.svg"]
        return ("pass" if ok else "fail"), out
    return run


PREPARE = {
    "check-surface": _prep_check_surface, "convexify": _prep_convexify, "flow": _prep_flow,
    "distance": _prep_distance, "sweep": _prep_sweep, "multiplier": _prep_multiplier,
    "simulate": _prep_simulate, "carleman-ratio": _prep_carleman, "control": _prep_control,
}


# ---------------------------------------------------------------------------
# driver

def _write_report(out: Path, report: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        fh.write(json.dumps(_clean(report), sort_keys=True, indent=2) + "\n")


def run_scenario(kind: str, config, out, seed: int | None = None, threads: int = 1,
                 stream=None) -> int:
    """Run one scenario; returns the exit status and writes ``out/report.json``."""
    stream = sys.stderr if stream is None else stream
    out = Path(out)
    report = {"kind": kind, "version": __version__, "artifacts": []}
    try:
        cfg = load_scenario(config, kind)
        report.update({"name": cfg.get("name", Path(str(config)).stem), "expect": cfg.get("expect")})
        report["seed"] = seed if seed is not None else cfg.get("seed", 0)
        out.mkdir(parents=True, exist_ok=True)
        ctx = {"out": out, "seed": report["seed"], "threads": max(1, int(threads)),
               "artifacts": report["artifacts"]}
        run = PREPARE[kind](cfg, ctx)
    except (ScenarioError, FieldError, ValueError) as exc:
        report.update({"status": "schema-error", "error": str(exc), "verdict": None})
        _write_report(out, report)
        print(f"error: {exc}", file=stream)
        return EXIT_SCHEMA
    try:
        verdict, result = run()
    except Exception as exc:  # any failure while running is a runtime error
        report.update({"status": "runtime-error", "error": f"{type(exc).__name__}: {exc}",
                       "verdict": None})
        _write_report(out, report)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=stream)
        return EXIT_RUNTIME
    report["artifacts"] = sorted(report["artifacts"])
    report["verdict"] = verdict
    report["result"] = result
    expect = report.get("expect")
    effective = "pass" if verdict in ("pass", "vacuous") else "fail"
    mismatch = expect is not None and effective != expect
    report["status"] = "mismatch" if mismatch else "ok"
    _write_report(out, report)
    print(f"{kind}: verdict {verdict}" + (f" (expected {expect})" if expect else ""), file=stream)
    return EXIT_MISMATCH if mismatch else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="carleman", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="kind", required=True)
    for k in KINDS:
        sp = sub.add_parser(k, help=f"run a {k} scenario")
        sp.add_argument("--config", required=True,
                        help="scenario TOML file (bundled scenarios may be named directly)")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (default: 1)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_SCHEMA
    return run_scenario(args.kind, args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
