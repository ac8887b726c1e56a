"""Command-line front end.

Every command reads an optional JSON run configuration, applies command-line
overrides, validates the result against :data:`CONFIG_SCHEMA` and prints one
deterministic JSON document on stdout.  A short human-readable summary goes
to stderr.  With ``output_dir`` set, the JSON document, the summary and any
field files are also written there.

Exit codes: 0 success, 1 input or configuration error (the message names the
offending config key), 2 solver non-convergence.

The thread count of the BLAS/LAPACK pools can be capped with the
``MARGINBOUND_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import ast
import contextlib
import copy
import csv
import io as _io
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import jsonschema
import numpy as np

from . import __version__
from .counterexamples import (build_witness, certify_divergence, default_ladder, nonuniqueness_witness,
                              smirnov_violation_report)
from .densities import (DiagonalCounterexampleSpec, ProductMixtureSpec, assemble_diagonal,
                        assemble_product_mixture, check_weight_conditions, classify_smirnov,
                        correlated_gaussian, power_law_theta, tabulated_density, uniform_density)
from .errors import MarginBoundError, ShapeError
from .grid import GridSpec, MarginalSet, ScalarField, build_grid, integrate, weighted_marginals
from .io import config_hash, dumps, load_field, load_marginals, save_field, save_marginals
from .oracle import min_norm_direct, random_feasible
from .solver import INITS, SolveOptions, SolveReport, solve_newton, solve_p2

__all__ = ["CONFIG_SCHEMA", "CliError", "evaluate_expression", "generate_marginals", "run", "main"]

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2
THREADS_ENV = "MARGINBOUND_THREADS"
COMMANDS = ("solve", "bound", "oracle-compare", "check-weight", "counterexample", "demo-p2-hypercube", "sweep")

_number = {"type": "number"}
_GRID = {
    "type": "object",
    "required": ["bounds", "nodes"],
    "additionalProperties": False,
    "properties": {
        "bounds": {"type": "array", "minItems": 2,
                   "items": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}},
        "nodes": {"oneOf": [{"type": "integer", "minimum": 1},
                            {"type": "array", "items": {"type": "integer", "minimum": 1}}]},
        "scheme": {"enum": ["midpoint", "trapezoid"]},
        "truncated": {"type": "boolean"},
    },
}
_DENSITY = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["uniform", "product_mixture", "diagonal", "tabulated", "correlated_gaussian"]},
        "name": {"type": "string"},
        "weights": {"type": "array", "items": _number},
        "factors": {"type": "array", "items": {"type": "array"}},
        "alpha": _number,
        "K": {"type": "integer", "minimum": 1},
        "theta": {"oneOf": [{"enum": ["power_law"]}, {"type": "array", "items": _number}]},
        "nodes_per_unit": {"type": "integer", "minimum": 1},
        "study_mode": {"type": "boolean"},
        "expression": {"type": "string"},
        "path": {"type": "string"},
        "rho": _number,
    },
    "additionalProperties": False,
}
_MARGINALS = {
    "type": "object",
    "minProperties": 1,
    "maxProperties": 2,
    "properties": {
        "expression": {"type": "string"},
        "constant": _number,
        "path": {"type": "string"},
        "field": {"type": "string"},
        "random": {"type": "object", "properties": {"scale": _number}, "additionalProperties": False},
        "zero": {"type": "boolean"},
    },
    "additionalProperties": False,
}
CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "marginbound run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "grid": _GRID,
        "density": _DENSITY,
        "marginals": _MARGINALS,
        "p": {"type": "number", "exclusiveMinimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "samples": {"type": "integer", "minimum": 0},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "eps": {"type": "number", "minimum": 0},
                "init": {"enum": [i for i in INITS if i != "user"]},
                "homotopy_steps": {"type": "integer", "minimum": 0},
                "direct_p2": {"type": "boolean"},
            },
        },
        "counterexample": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["smirnov", "uniqueness"]},
                "q": {"type": "number", "exclusiveMinimum": 1},
                "K": {"type": "integer", "minimum": 2},
                "alpha": {"type": "number", "minimum": 0, "maximum": 1},
                "ladder": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "beta": _number,
            },
        },
        "demo": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n": {"type": "integer", "minimum": 2, "maximum": 4},
                           "N": {"type": "integer", "minimum": 2}},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"p_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 1}},
                           "densities": {"type": "array", "items": _DENSITY}},
        },
    },
}


class CliError(Exception):
    """Input error tied to a configuration key (exit code 1)."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@contextlib.contextmanager
def _key(name: str):
    """Re-raise library input errors under the config key being processed."""
    try:
        yield
    except CliError:
        raise
    except (MarginBoundError, ValueError, OSError, KeyError) as exc:
        raise CliError(name, str(exc)) from exc


# ---------------------------------------------------------------- expressions

_FUNCS: dict[str, Callable] = {
    "exp": np.exp,
    "abs": np.abs,
    "ind": lambda t, lo, hi: ((t >= lo) & (t < hi)).astype(float),
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide, ast.Pow: np.power}


def evaluate_expression(expr: str, coords: Sequence[np.ndarray],
                        names: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
    """Evaluate a closed-vocabulary expression at grid nodes.

    Variables are ``x0, x1, ...`` (aliases ``x, y, z`` for the first three
    axes), or the explicit ``names`` mapping when given.  Allowed: numbers,
    ``+ - * / **``, ``pi``, ``e``, ``exp``, ``abs`` and the indicator
    ``ind(t, lo, hi)`` of ``lo <= t < hi``.
    """
    if names is None:
        names = {f"x{i}": c for i, c in enumerate(coords)}
        names.update({a: c for a, c in zip("xyz", coords)})
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {expr!r}: {exc.msg}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in names:
                return names[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ValueError(f"unknown variable {node.id!r} in {expr!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS
                and not node.keywords):
            return _FUNCS[node.func.id](*(ev(a) for a in node.args))
        what = node.func.id if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) else type(node).__name__
        raise ValueError(f"unsupported construct {what!r} in {expr!r}")

    return np.asarray(ev(tree), dtype=float)


def generate_marginals(g_spec, w: ScalarField) -> MarginalSet:
    """Weighted marginals of ``g`` given as an expression, a number, a field or an array."""
    grid = w.grid
    if isinstance(g_spec, str):
        vals = np.broadcast_to(evaluate_expression(g_spec, grid.mesh()), grid.shape)
        return weighted_marginals(np.array(vals), w)
    if isinstance(g_spec, ScalarField) and g_spec.grid != grid:
        raise ShapeError("g field and density live on different grids")
    return weighted_marginals(g_spec, w)


# ---------------------------------------------------------------- builders

def _grid(cfg: Mapping[str, Any], ndim_hint: int | None = None) -> GridSpec:
    if "grid" not in cfg:
        raise CliError("grid", "missing grid section")
    gc = cfg["grid"]
    with _key("grid"):
        return build_grid([tuple(b) for b in gc["bounds"]], gc["nodes"], gc.get("scheme", "midpoint"),
                          gc.get("truncated", False))


def _factor(spec, axis: int, key: str):
    """One-axis factor: an expression in ``t`` (or the axis variable), a number or a node table."""
    if isinstance(spec, str):
        aliases = ["t", f"x{axis}"] + (["xyz"[axis]] if axis < 3 else [])
        return lambda t, s=spec: np.broadcast_to(evaluate_expression(s, [], {a: t for a in aliases}), t.shape)
    if isinstance(spec, (int, float)):
        return lambda t, c=float(spec): np.full(t.shape, c)
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    raise CliError(key, f"factor must be an expression, number or table, got {type(spec).__name__}")


def _density(dc: Mapping[str, Any], cfg: Mapping[str, Any], key: str = "density"):
    """Return ``(w, callable or None)``; the callable re-tabulates on other grids."""
    kind = dc["type"]
    with _key(key):
        if kind == "diagonal":
            if "alpha" not in dc or "K" not in dc:
                raise CliError(key, "diagonal density needs alpha and K")
            K = int(dc["K"])
            theta = power_law_theta(K) if dc.get("theta", "power_law") == "power_law" else dc["theta"]
            grid = _grid(cfg) if "grid" in cfg else build_grid([(1.0, K + 1.0)] * 2, K * dc.get("nodes_per_unit", 1))
            spec = DiagonalCounterexampleSpec(float(dc["alpha"]), theta,
                                              study_mode=dc.get("study_mode", dc["alpha"] == 0))
            return assemble_diagonal(spec, grid), None
        if kind == "tabulated" and "path" in dc:
            w = load_field(dc["path"])
            return tabulated_density(w.grid, w.values, {"source": Path(dc["path"]).name}), None
        grid = _grid(cfg)
        if kind == "uniform":
            return uniform_density(grid), (lambda *xs: np.ones(np.broadcast_shapes(*(x.shape for x in xs))))
        if kind == "product_mixture":
            if "factors" not in dc:
                raise CliError(key, "product_mixture needs factors")
            factors = tuple(tuple(_factor(f, i, f"{key}.factors") for i, f in enumerate(comp))
                            for comp in dc["factors"])
            weights = dc.get("weights", [1.0 / len(factors)] * len(factors))
            return assemble_product_mixture(ProductMixtureSpec(tuple(weights), factors), grid), None
        if kind == "correlated_gaussian":
            rho = float(dc.get("rho", 0.0))
            fn = lambda x, y: np.exp(-(x * x - 2 * rho * x * y + y * y) / (2 * (1 - rho * rho)))  # noqa: E731
            return correlated_gaussian(grid, rho), fn
        if kind == "tabulated":
            if "expression" not in dc:
                raise CliError(key, "tabulated density needs an expression or a path")
            fn = lambda *xs: np.broadcast_to(evaluate_expression(dc["expression"], xs),  # noqa: E731
                                             np.broadcast_shapes(*(x.shape for x in xs)))
            return tabulated_density(grid, fn, {"expression": dc["expression"]}), fn
    raise CliError(f"{key}.type", f"unknown density type {kind!r}")


def _marginals(cfg: Mapping[str, Any], w: ScalarField) -> MarginalSet:
    mc = cfg.get("marginals")
    if mc is None:
        raise CliError("marginals", "missing marginals section")
    with _key("marginals"):
        try:
            if "expression" in mc:
                g = generate_marginals(mc["expression"], w)
            elif "constant" in mc:
                g = generate_marginals(float(mc["constant"]), w)
            elif "field" in mc:
                g = generate_marginals(load_field(mc["field"]), w)
            elif "path" in mc:
                g = load_marginals(mc["path"])
                if g.grid != w.grid:
                    raise CliError("marginals.path", "marginal file grid differs from the density grid")
            elif "random" in mc:
                rng = np.random.default_rng(cfg.get("seed", 0))
                scale = float(mc["random"].get("scale", 1.0))
                g = generate_marginals(scale * rng.standard_normal(w.grid.shape), w)
            elif mc.get("zero"):
                g = MarginalSet(w.grid, tuple(np.zeros(n) for n in w.grid.shape))
            else:
                raise CliError("marginals", "give one of expression, constant, field, path, random, zero")
        except ValueError as exc:
            if isinstance(exc, MarginBoundError):
                raise
            raise CliError("marginals.expression", str(exc)) from exc
    if g.mass_mismatch() > 1e-8:
        raise CliError("marginals", f"marginal mass mismatch: masses {g.masses().tolist()}")
    return g


def _options(cfg: Mapping[str, Any]) -> SolveOptions:
    sc = cfg.get("solver", {})
    with _key("solver"):
        return SolveOptions(tol_residual=sc.get("tol", 1e-10), max_iter=sc.get("max_iter", 200),
                            smoothing_eps=sc.get("eps", 1e-12), init=sc.get("init", "from_p2"),
                            homotopy_steps=sc.get("homotopy_steps"))


def _solve(w: ScalarField, g: MarginalSet, p: float, cfg: Mapping[str, Any]):
    opts = _options(cfg)
    with _key("marginals"):
        if p == 2 and cfg.get("solver", {}).get("direct_p2", True):
            return solve_p2(w, g)
        return solve_newton(w, g, p, opts)


# ---------------------------------------------------------------- commands

def _envelope(cfg: Mapping[str, Any], grid: GridSpec | None = None) -> dict[str, Any]:
    hashed = {k: v for k, v in cfg.items() if k != "output_dir"}
    env = {"version": __version__, "config_hash": config_hash(hashed), "seed": cfg.get("seed", 0),
           "command": cfg["command"]}
    if grid is not None:
        env["truncated"] = list(grid.truncated)
    return env


def _report_summary(rep: SolveReport) -> str:
    rows = [("converged", rep.converged), ("iterations", rep.iterations), ("p", rep.p),
            ("bound_value", f"{rep.bound_value:.12g}"), ("final_residual_inf", f"{rep.final_residual_inf:.3e}"),
            ("singular", rep.singular)]
    return "\n".join(f"{k:<20} {v}" for k, v in rows) + "".join(f"\nwarning: {m}" for m in rep.warnings)


def _cmd_solve(cfg, out: Path | None, fields: bool):
    w, _ = _density(cfg.get("density", {"type": "uniform"}), cfg)
    g = _marginals(cfg, w)
    p = float(cfg.get("p", 2.0))
    phi, rep = _solve(w, g, p, cfg)
    doc = _envelope(cfg, w.grid)
    doc["report"] = rep.to_dict()
    if out is not None and fields:
        extra = {"config_hash": doc["config_hash"], "seed": doc["seed"], "truncated": doc["truncated"]}
        for i, arr in enumerate(phi.arrays):
            save_field(out / f"phi_{i}", ScalarField(GridSpec((w.grid.axes[i],)), arr), extra=extra)
        save_field(out / "minimizer", rep.minimizer, extra=extra)
        save_marginals(out / "marginals.json", g, extra=extra)
    code = EXIT_OK if rep.converged else EXIT_NONCONVERGED
    return doc, _report_summary(rep), code


def _cmd_bound(cfg, out):
    doc, summary, code = _cmd_solve(cfg, out, fields=False)
    rep = doc.pop("report")
    doc.update({k: rep[k] for k in ("bound_value", "converged", "p", "iterations", "final_residual_inf")})
    return doc, summary, code


def _cmd_oracle_compare(cfg, out):
    w, _ = _density(cfg.get("density", {"type": "uniform"}), cfg)
    g = _marginals(cfg, w)
    p = float(cfg.get("p", 2.0))
    _, rep = _solve(w, g, p, cfg)
    with _key("marginals"):
        orc = min_norm_direct(w, g, p)
    diff = abs(orc.value - rep.bound_value)
    doc = _envelope(cfg, w.grid)
    doc.update({"p": p, "oracle_value": orc.value, "solver_value": rep.bound_value, "abs_diff": diff,
                "rel_diff": diff / max(abs(orc.value), 1e-300), "converged": rep.converged,
                "oracle_method": orc.method, "oracle_marginal_residual": orc.marginal_residual})
    n = int(cfg.get("samples", 0))
    if n:
        hs = random_feasible(w, g, cfg.get("seed", 0), n, base=orc.h)
        norms = [integrate(np.abs(h.values) ** p, w) for h in hs]
        doc["feasible_samples"] = n
        doc["min_sample_gap"] = float(min(norms) - rep.bound_value)
    summary = f"oracle {orc.value:.12g}  solver {rep.bound_value:.12g}  abs diff {diff:.3e}"
    return doc, summary, EXIT_OK if rep.converged else EXIT_NONCONVERGED


def _cmd_check_weight(cfg, out):
    w, fn = _density(cfg.get("density", {"type": "uniform"}), cfg)
    p = float(cfg.get("p", 2.0))
    with _key("density"):
        rep = check_weight_conditions(w, p, density=fn) if np.all(w.values > 0) else None
        verdict = classify_smirnov(w, p=p, report=rep)
    doc = _envelope(cfg, w.grid)
    doc["weight_conditions"] = None if rep is None else rep.to_dict()
    doc["smirnov"] = verdict.to_dict()
    return doc, f"smirnov class: {verdict.kind.value}", EXIT_OK


def _cmd_counterexample(cfg, out):
    cc = cfg.get("counterexample")
    if cc is None:
        raise CliError("counterexample", "missing counterexample section")
    q, K = float(cc.get("q", 2.0)), int(cc.get("K", 512))
    with _key("counterexample"):
        ws = build_witness(q, K, beta=cc.get("beta"))
        ladder = cc.get("ladder") or default_ladder(K)
        doc = _envelope(cfg)
        if cc["kind"] == "smirnov":
            alpha = float(cc.get("alpha", 0.5))
            rep = smirnov_violation_report(ws, alpha, ladder=ladder)
            w = assemble_diagonal(DiagonalCounterexampleSpec(alpha, ws.theta, study_mode=alpha == 0),
                                  build_grid([(1.0, K + 1.0)] * 2, K))
            doc["report"] = rep.to_dict()
            doc["smirnov"] = classify_smirnov(w, witness=rep.certificate).to_dict()
            ok = rep.certificate.holds
            summary = f"divergence certificate holds: {ok}  (growth exponent {rep.certificate.growth_exponent:.3f})"
        else:
            nu = nonuniqueness_witness(ws, ladder=ladder)
            chk = nu.p2_check()
            doc["report"] = nu.to_dict()
            doc["p2_check"] = {k: v for k, v in chk.items() if k != "report"}
            doc["null_vector"] = chk["report"].to_dict()["null_vector"]
            summary = (f"eq residuals {nu.eq1_residual:.1e}/{nu.eq2_residual:.1e}/{nu.eq3_residual:.1e}  "
                       f"singular {chk['singular']} (ratio {chk['singular_value_ratio']:.1e})")
        doc["certificate"] = certify_divergence(ws, ladder).to_dict()
    return doc, summary, EXIT_OK


def hypercube_closed_form(n: int) -> float:
    """``sum_i int g_i^2 - (n-1) m^2`` for ``g = sum x_i`` on ``[0,1]^n``, ``m = n/2``."""
    shift = (n - 1) / 2
    gi2 = 1 / 3 + shift + shift * shift
    return n * gi2 - (n - 1) * (n / 2) ** 2


def _cmd_demo(cfg, out):
    dc = cfg.get("demo", {})
    n, N = int(dc.get("n", 2)), int(dc.get("N", 64))
    grid = build_grid([(0.0, 1.0)] * n, N)
    w = uniform_density(grid)
    g = generate_marginals("+".join(f"x{i}" for i in range(n)), w)
    _, rep = solve_p2(w, g)
    exact = hypercube_closed_form(n)
    doc = _envelope(cfg, grid)
    doc.update({"n": n, "N": N, "bound_value": rep.bound_value, "closed_form": exact,
                "difference": rep.bound_value - exact})
    return doc, f"bound {rep.bound_value:.12g}  closed form {exact:.12g}  difference {rep.bound_value - exact:.3e}", EXIT_OK


SWEEP_COLUMNS = ("p", "density", "bound", "oracle_value", "rel_diff", "iterations", "converged")


def _cmd_sweep(cfg, out):
    sc = cfg.get("sweep", {})
    p_values = sc.get("p_values", [1.5, 2.0, 3.0])
    dens = sc.get("densities") or [
        {"type": "uniform", "name": "uniform"},
        {"type": "product_mixture", "name": "mixture", "weights": [0.5, 0.5],
         "factors": [["1 + x", "1"], ["1", "exp(y)"]]},
    ]
    rows = []
    code = EXIT_OK
    for j, dc in enumerate(dens):
        w, _ = _density(dc, cfg, key=f"sweep.densities[{j}]")
        g = _marginals(cfg, w)
        for p in p_values:
            sub = dict(cfg, solver=dict(cfg.get("solver", {}), direct_p2=False))
            _, rep = _solve(w, g, float(p), sub)
            with _key("marginals"):
                orc = min_norm_direct(w, g, float(p))
            rows.append({"p": float(p), "density": dc.get("name", f"{dc['type']}{j}"), "bound": rep.bound_value,
                         "oracle_value": orc.value,
                         "rel_diff": abs(orc.value - rep.bound_value) / max(abs(orc.value), 1e-300),
                         "iterations": rep.iterations, "converged": rep.converged})
            if not rep.converged:
                code = EXIT_NONCONVERGED
    buf = _io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    wr.writeheader()
    for r in rows:
        wr.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})
    if out is not None:
        (out / "sweep.csv").write_text(buf.getvalue())
    doc = _envelope(cfg)
    doc["rows"] = rows
    return doc, buf.getvalue().rstrip("\n"), code


_DISPATCH = {
    "solve": lambda c, o: _cmd_solve(c, o, fields=True),
    "bound": _cmd_bound,
    "oracle-compare": _cmd_oracle_compare,
    "check-weight": _cmd_check_weight,
    "counterexample": _cmd_counterexample,
    "demo-p2-hypercube": _cmd_demo,
    "sweep": _cmd_sweep,
}


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise CliError(THREADS_ENV, f"expected an integer, got {raw!r}") from None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def validate_config(cfg: Mapping[str, Any]) -> None:
    errors = sorted(jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        key = ".".join(str(k) for k in e.path) or "<root>"
        raise CliError(key, e.message)


def run(config: Mapping[str, Any], stdout=None, stderr=None) -> int:
    """Execute one command described by ``config``; return the exit status."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    cfg = copy.deepcopy(dict(config))
    try:
        validate_config(cfg)
        if "command" not in cfg:
            raise CliError("command", "no command given")
        out = Path(cfg["output_dir"]) if cfg.get("output_dir") else None
        if out is not None:
            with _key("output_dir"):
                out.mkdir(parents=True, exist_ok=True)
        with _thread_limit():
            doc, summary, code = _DISPATCH[cfg["command"]](cfg, out)
    except CliError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INPUT
    text = dumps(doc)
    stdout.write(text)
    print(summary, file=stderr)
    if code == EXIT_NONCONVERGED:
        print("error: solver did not converge (solver.max_iter / solver.tol)", file=stderr)
    if out is not None:
        name = cfg["command"].replace("-", "_")
        (out / f"{name}.json").write_text(text)
        (out / "summary.txt").write_text(summary + "\n")
    return code


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="marginbound", description="Sharp lower bounds for weighted L^p norms "
                                 "under prescribed one-dimensional marginals.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("config", nargs=None if config_required else "?", help="JSON run configuration")
        sp.add_argument("-o", "--output-dir", help="directory for artifacts")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--p", type=float, help="norm exponent p > 1")

    def solver_flags(sp):
        sp.add_argument("--tol", type=float)
        sp.add_argument("--max-iter", type=int)
        sp.add_argument("--eps", type=float, help="Jacobian smoothing epsilon")
        sp.add_argument("--init", choices=[i for i in INITS if i != "user"])
        sp.add_argument("--homotopy-steps", type=int)

    for name in ("solve", "bound", "oracle-compare", "check-weight", "sweep"):
        sp = sub.add_parser(name)
        common(sp)
        if name != "check-weight":
            solver_flags(sp)
        if name == "oracle-compare":
            sp.add_argument("--samples", type=int, help="seeded feasible fields to test against the bound")
    ce = sub.add_parser("counterexample")
    ce.add_argument("kind", choices=["smirnov", "uniqueness"])
    ce.add_argument("config", nargs="?")
    ce.add_argument("-o", "--output-dir")
    ce.add_argument("--q", type=float)
    ce.add_argument("--K", type=int)
    ce.add_argument("--alpha", type=float)
    ce.add_argument("--ladder", type=lambda s: [int(v) for v in s.split(",")], help="comma-separated K values")
    demo = sub.add_parser("demo-p2-hypercube")
    demo.add_argument("config", nargs="?")
    demo.add_argument("-o", "--output-dir")
    demo.add_argument("--n", type=int)
    demo.add_argument("--N", type=int)
    return ap


def _merge(args: argparse.Namespace) -> dict[str, Any]:
    cfg: dict[str, Any] = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            cfg = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError("config", f"{path}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise CliError("config", "top level must be a JSON object")
    cfg["command"] = args.command
    a = vars(args)
    if a.get("output_dir"):
        cfg["output_dir"] = a["output_dir"]
    for k in ("seed", "p", "samples"):
        if a.get(k) is not None:
            cfg[k] = a[k]
    flags = {"tol": "tol", "max_iter": "max_iter", "eps": "eps", "init": "init", "homotopy_steps": "homotopy_steps"}
    for flag, key in flags.items():
        if a.get(flag) is not None:
            cfg.setdefault("solver", {})[key] = a[flag]
    if args.command == "counterexample":
        cc = cfg.setdefault("counterexample", {})
        cc["kind"] = args.kind
        for k in ("q", "K", "alpha", "ladder"):
            if a.get(k) is not None:
                cc[k] = a[k]
    if args.command == "demo-p2-hypercube":
        dc = cfg.setdefault("demo", {})
        for k in ("n", "N"):
            if a.get(k) is not None:
                dc[k] = a[k]
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _merge(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
