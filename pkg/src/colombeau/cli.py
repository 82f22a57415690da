"""Batch front-end: parse job specs, run pipelines, emit reports and plot data.

Job specs are TOML files selecting an operator (by preset or explicit
coefficient table in the scale-expression grammar) and an ordered task list.
Reports are JSON lines (one record per check, each with a stable check_id and
pass/fail), plot data are CSV files of (log2(1/eps), value) rows.  Exit codes:
0 all thresholds met, 1 threshold failure, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version dependent
    import tomli as tomllib

from colombeau.epsnet import (
    EpsGrid,
    GenNumber,
    INF_VALUATION,
    ScaleExpr,
    ScaleExprParseError,
    valuation,
)
from colombeau.genpoly import (
    GenPolynomial,
    ellipticity_class,
    elliptic_lower_bound,
    weight_inequalities,
    weight_values,
)
from colombeau.fourier import BumpFunction, CompactNet
from colombeau import fundsol as fs
from colombeau import analysis as an

__all__ = ["run_job", "emit_plot_data", "build_preset", "main"]

PRESETS = {
    "heat": {"dim": 2, "coeffs": {(2, 0): "1*eps^0", (0, 1): "0+1i*eps^0"}, "evolution": True},
    "schroedinger": {"dim": 2, "coeffs": {(2, 0): "0+1i*eps^0", (0, 1): "0+1i*eps^0"}, "evolution": True},
    "transport": {"dim": 2, "evolution": True},  # built from params a, b
    "cr": {"dim": 2, "evolution": False},  # params a, b
    "laplace2d": {"dim": 2, "evolution": False},  # params a1, a2
}


class InputError(Exception):
    pass


def _parse_gen(value, grid: EpsGrid) -> GenNumber:
    if isinstance(value, str):
        return GenNumber.symbolic(ScaleExpr.parse(value), grid)
    return GenNumber.constant(complex(value), grid)


def build_preset(name: str, grid: EpsGrid, params: Optional[dict] = None):
    """Operator (and evolution metadata) for a named preset."""
    params = params or {}
    if name not in PRESETS:
        raise InputError(f"unknown preset {name!r}")
    if name == "heat":
        coeffs = {(2, 0): GenNumber.constant(1.0, grid), (0, 1): GenNumber.constant(1j, grid)}
        P = GenPolynomial(2, 2, coeffs, grid)
        return P, {"evolution": True, "omega": GenNumber.constant(1.0, grid)}
    if name == "schroedinger":
        coeffs = {(2, 0): GenNumber.constant(1j, grid), (0, 1): GenNumber.constant(1j, grid)}
        P = GenPolynomial(2, 2, coeffs, grid)
        return P, {"evolution": True, "omega": GenNumber.constant(1.0, grid)}
    if name == "transport":
        a = _parse_gen(params.get("a", 1.0), grid)
        b = _parse_gen(params.get("b", 0.5), grid)
        coeffs = {
            (1, 0): GenNumber.constant(1j, grid) * a,
            (0, 1): GenNumber.constant(1j, grid),
            (0, 0): b,
        }
        P = GenPolynomial(2, 1, coeffs, grid)
        bav = np.abs(b.values().real) + np.abs(a.values().real)
        omega = GenNumber.from_values(np.maximum(bav, 1.0).astype(complex), grid)
        return P, {"evolution": True, "omega": omega}
    if name == "cr":
        a = _parse_gen(params.get("a", 1.0), grid)
        b = _parse_gen(params.get("b", 1.0), grid)
        P = fs.cr_operator(a, b)
        return P, {"evolution": False, "fundsol": lambda: fs.cr_fundsol(a, b)}
    a1 = _parse_gen(params.get("a1", 1.0), grid)
    a2 = _parse_gen(params.get("a2", 1.0), grid)
    P = fs.laplace2d_operator(a1, a2)
    return P, {"evolution": False, "fundsol": lambda: fs.laplace2d_fundsol(a1, a2)}


def _operator_from_spec(spec: dict, grid: EpsGrid):
    op = spec.get("operator", {})
    if "preset" in op:
        return build_preset(op["preset"], grid, op.get("params"))
    if "coeffs" in op:
        coeffs = {}
        for entry in op["coeffs"]:
            alpha = tuple(int(a) for a in entry["alpha"])
            coeffs[alpha] = _parse_gen(entry["coeff"], grid)
        dim = len(next(iter(coeffs)))
        deg = max(sum(a) for a in coeffs)
        P = GenPolynomial(dim, deg, coeffs, grid)
        meta = {"evolution": bool(op.get("evolution", False))}
        if meta["evolution"]:
            meta["omega"] = _parse_gen(op.get("omega", 1.0), grid)
        return P, meta
    raise InputError("spec needs operator.preset or operator.coeffs")


def _default_tests(grid: EpsGrid, dim: int, small: bool = False):
    if dim == 1:
        specs = [([0.0], 0.25), ([0.05], 0.2)] if small else [([0.0], 0.6), ([0.2], 0.4)]
    else:
        specs = [([0.0, 0.5], 0.4), ([0.3, 0.6], 0.3)]
    return [CompactNet.single(grid, c, r) for c, r in specs]


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, complex):
        return {"re": _jsonable(x.real), "im": _jsonable(x.imag)}
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def emit_plot_data(series: dict, out_dir: Path) -> list[Path]:
    """One CSV per series: header then (log2(1/eps), value) rows."""
    if not series:
        raise InputError("no series to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(series):
        log2inv, values = series[name]
        if len(values) == 0:
            raise InputError(f"series {name!r} is empty")
        path = out_dir / f"{name}.csv"
        with open(path, "w") as f:
            f.write("log2_inv_eps,value\n")
            for k, v in zip(log2inv, values):
                f.write(f"{float(k):.6g},{float(v):.12g}\n")
        paths.append(path)
    return paths


def run_job(
    spec: dict,
    out_dir,
    seed: int = 0,
    grid: Optional[EpsGrid] = None,
) -> int:
    """Execute the task list; write report.jsonl and CSV plot data.

    Returns the exit status (0 pass, 1 threshold failure, 2 input error).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    series = {}
    status = 0

    def emit(check_id: str, passed: Optional[bool], **data):
        nonlocal status
        rec = {"check_id": check_id, "passed": passed}
        rec.update(_jsonable(data))
        records.append(rec)
        if passed is False:
            status = max(status, 1)

    try:
        gspec = spec.get("grid", {})
        if grid is None:
            kmin = int(gspec.get("kmin", 4))
            kmax = int(gspec.get("kmax", 44))
            grid = EpsGrid.default(kmin, kmax)
        tol = spec.get("tolerances", {})
        P, meta = _operator_from_spec(spec, grid)
        tasks = spec.get("tasks", [])
        known = {"classify", "weight", "fundsol", "solve", "verify", "evolution", "zeros", "structure"}
        for t in tasks:
            if t not in known:
                raise InputError(f"unknown task {t!r}")
        ctx: dict = {}
        log2inv = grid.log_inv / math.log(2.0)
        for task in tasks:
            if task == "classify":
                ell = ellipticity_class(P)
                ctx["ellipticity"] = ell
                emit("ellipticity.class", ell.classification != "neither",
                     classification=ell.classification)
            elif task == "weight":
                xi0 = np.array(spec.get("weight", {}).get("xi0", [5.0] * P.dim))
                cert = weight_inequalities(P, xi0=xi0)
                ctx["weight_cert"] = cert
                emit("weight.constants", True, C=cert.C, N=cert.N)
                wt_vals = np.max(weight_values(P, np.atleast_2d(xi0)), axis=1)
                series["weight_at_xi0"] = (log2inv, wt_vals)
            elif task == "evolution":
                if not meta.get("evolution"):
                    raise InputError("evolution task on a non-evolution operator")
                c = float(tol.get("evolution_c", -1.0))
                evo = fs.evolution_check(P, meta["omega"], c=c)
                ctx["evo"] = evo
                emit("evolution.conditions", evo.passed, r1=evo.r1, k=evo.k,
                     scale=evo.scale_cert, witness=evo.witness)
            elif task == "fundsol":
                method = spec.get("fundsol", {}).get("method", "auto")
                if method == "auto":
                    if meta.get("evolution"):
                        method = "evolution"
                    elif "fundsol" in meta:
                        method = "kernel"
                    else:
                        method = "hormander"
                if method == "evolution":
                    evo = ctx.get("evo") or fs.evolution_check(
                        P, meta["omega"], c=float(tol.get("evolution_c", -1.0))
                    )
                    ctx["evo"] = evo
                    if not evo.passed:
                        emit("fundsol.construct", False, method=method)
                        break
                    cp = float(spec.get("fundsol", {}).get("c_prime", 4.0 * evo.c_threshold))
                    ctx["E"] = fs.evolution_fundsol(P, evo, c_prime=cp)
                elif method == "kernel":
                    ctx["E"] = meta["fundsol"]()
                elif method == "hormander":
                    cert = ctx.get("weight_cert") or weight_inequalities(
                        P, xi0=np.array([5.0] * P.dim)
                    )
                    sol, E = fs.hormander_fundsol(P, c=float(spec.get("fundsol", {}).get("c", 1.0)), cert=cert)
                    ctx["E"] = E
                    ctx["hsol"] = sol
                else:
                    raise InputError(f"unknown fundsol method {method!r}")
                emit("fundsol.construct", True, method=method)
            elif task == "verify":
                if "E" not in ctx:
                    raise InputError("verify before fundsol")
                threshold = float(tol.get("delta_valuation", 5.0))
                floor = float(tol.get("delta_floor", 1e-5))
                tests = _default_tests(grid, P.dim)
                rep = fs.verify_delta(ctx["E"], P, tests, threshold=threshold, floor=floor)
                emit("verify.delta", rep.passed,
                     valuation=rep.valuation.value, threshold=threshold, floor=floor,
                     max_residual=float(np.max(np.abs(rep.residual.values()))))
                series["delta_residual"] = (log2inv, np.abs(rep.residual.values()))
            elif task == "solve":
                if "E" not in ctx:
                    raise InputError("solve before fundsol")
                v = CompactNet.single(grid, [0.0] * P.dim if P.dim == 1 else [0.0, 0.5], 0.3)
                axes = [np.linspace(-1.2, 1.2, 17) for _ in range(P.dim)]
                sol = an.convolve_solve(P, v, ctx["E"], x_grid=axes, probe_eps_indices=[0])
                thr = float(tol.get("solve_residual", 1e-4))
                emit("solve.residual", sol.residual < thr, residual=sol.residual,
                     support_ok=sol.support_ok, support_max=sol.support_max)
            elif task == "zeros":
                zeros, rep = an.zero_search(P)
                emit("zeros.report", rep["uniform_condition_violations"] == 0
                     if spec.get("zeros", {}).get("expect_consistent", True) else True,
                     **rep)
            elif task == "structure":
                T = fs.DeltaFunctional(grid, dim=1, order=(0,))
                res = an.structure_decompose(T, k=2, points=1601,
                                             verify_test=BumpFunction([0.1], 0.3))
                thr = float(tol.get("structure_fd", 1e-3))
                emit("structure.verify", res.fd_error < thr, fd_error=res.fd_error,
                     N_prime=res.N_prime)
    except (InputError, ScaleExprParseError, KeyError, ValueError, TypeError) as exc:
        records.append({"check_id": "job.input", "passed": False, "error": str(exc)})
        status = 2
    report_path = out_dir / "report.jsonl"
    with open(report_path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    if series:
        emit_plot_data(series, out_dir)
    return status


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="colombeau",
        description="Classification and fundamental-solution pipelines for "
        "generalized-coefficient operators.",
    )
    parser.add_argument("--spec", type=str, help="TOML job spec path")
    parser.add_argument("--preset", type=str, help="run a named preset with default tasks")
    parser.add_argument("--out", type=str, default="out", help="output directory")
    parser.add_argument("--grid-kmin", type=int, default=None)
    parser.add_argument("--grid-kmax", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    threads = args.threads or int(os.environ.get("COLOMBEAU_THREADS", "0") or 0)
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(threads))

    if args.spec:
        try:
            with open(args.spec, "rb") as f:
                spec = tomllib.load(f)
        except FileNotFoundError:
            print(f"spec not found: {args.spec}", file=sys.stderr)
            return 2
        except tomllib.TOMLDecodeError as exc:
            print(f"spec parse error: {exc}", file=sys.stderr)
            return 2
    elif args.preset:
        evolution = PRESETS.get(args.preset, {}).get("evolution", False)
        tasks = (
            ["evolution", "fundsol", "verify"]
            if evolution
            else ["fundsol", "verify"]
        )
        spec = {"operator": {"preset": args.preset}, "tasks": tasks}
    else:
        parser.print_usage(file=sys.stderr)
        return 2

    grid = None
    if args.grid_kmin is not None or args.grid_kmax is not None:
        spec.setdefault("grid", {})
        if args.grid_kmin is not None:
            spec["grid"]["kmin"] = args.grid_kmin
        if args.grid_kmax is not None:
            spec["grid"]["kmax"] = args.grid_kmax
    return run_job(spec, args.out, seed=args.seed, grid=grid)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
