"""Command-line interface.

Exit codes: 0 success, 2 validation error (bad input, config or arguments),
3 stage failure (a computation that was set up correctly did not succeed).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_STAGE = 3

logger = logging.getLogger("estimator")


class ValidationError(Exception):
    pass


class StageError(Exception):
    pass


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


def _emit(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _default(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(type(obj).__name__)


def _load_ham(path: str):
    from .integrals import FCIDumpError, load_hamiltonian, read_fcidump

    try:
        with open(path, "rb") as f:
            magic = f.read(8)
        return load_hamiltonian(path) if magic == b"ESTHAM01" else read_fcidump(path)
    except (OSError, FCIDumpError, ValueError) as exc:
        raise ValidationError(f"cannot load Hamiltonian {path}: {exc}") from exc


# -- verbs -------------------------------------------------------------------


def cmd_ingest(args) -> dict:
    from .integrals import save_hamiltonian, validate_symmetry

    ham = _load_ham(args.fcidump)
    report = validate_symmetry(ham, args.tol)
    if not report.passed:
        raise ValidationError(f"8-fold symmetry violated: max deviation {report.max_deviation:.3g}")
    out = args.output or (Path(args.out or ".") / "hamiltonian.bin")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    save_hamiltonian(ham, out)
    return {"output": str(out), "n_orbitals": ham.n_orbitals, "n_alpha": ham.n_alpha,
            "n_beta": ham.n_beta, "max_symmetry_deviation": report.max_deviation}


def cmd_factorize(args) -> dict:
    from .factorize import (cholesky_sf, cp3_init, double_factorize, factorization_error,
                            save_factors, suggest_thc_rank, thc_optimize)

    ham = _load_ham(args.input)
    if args.rank is not None and args.rank < 1:
        raise ValidationError("--rank must be positive")
    try:
        if args.method == "sf":
            factors = cholesky_sf(ham, threshold=args.threshold, rank=args.rank)
        elif args.method == "df":
            factors = double_factorize(cholesky_sf(ham, threshold=args.threshold, rank=args.rank),
                                       args.eig_threshold)
        else:
            rank = args.rank or suggest_thc_rank(ham.n_orbitals)
            _, init = cp3_init(cholesky_sf(ham, threshold=args.threshold), rank,
                               sweeps=args.sweeps, seed=args.seed)
            factors = thc_optimize(ham, init, max_iter=args.max_iter)
    except (ValueError, ArithmeticError) as exc:
        raise StageError(f"factorization failed: {exc}") from exc
    out = args.output or (Path(args.out or ".") / f"factors_{args.method}")
    save_factors(factors, out, extra={"hamiltonian": str(args.input)})
    return {"output": str(out), "method": args.method, "rank": factors.rank,
            "eri_error": factorization_error(ham, factors)}


def cmd_lambda(args) -> dict:
    from .factorize import load_factors
    from .norms import compute_lambda

    ham = _load_ham(args.ham)
    try:
        factors = load_factors(args.factors)
    except (OSError, ValueError, KeyError) as exc:
        raise ValidationError(f"cannot load factors {args.factors}: {exc}") from exc
    if factors.n_orbitals != ham.n_orbitals:
        raise ValidationError("factor archive and Hamiltonian disagree on the orbital count")
    lam = compute_lambda(ham, factors)
    return lam.to_dict() | {"n_orbitals": ham.n_orbitals, "gamma": float(factors.gamma)}


def cmd_cost(args) -> dict:
    from .logical_cost import (CalibrationError, ErrorBudget, StepCostModel,
                               estimate_logical_cost)

    lam = _read_json(args.lambda_json)
    try:
        lam_total = float(lam["lambda_total"])
        method = lam.get("method", "thc")
        n = int(args.n_orbitals or lam["n_orbitals"])
        rank = int(args.rank or lam["rank"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"lambda file lacks a required field: {exc}") from exc
    if args.eps <= 0:
        raise ValidationError("--eps must be positive")
    model = None
    if args.model:
        try:
            model = StepCostModel.from_dict(_read_json(args.model))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"invalid step-cost model: {exc}") from exc
    try:
        cost = estimate_logical_cost(lam_total, n, rank, method, ErrorBudget(eps_pea=args.eps),
                                     step_model=model, gamma=lam.get("gamma"))
    except CalibrationError as exc:
        raise StageError(str(exc)) from exc
    return cost.to_dict()


def cmd_compile(args) -> dict:
    from .surface import PhysicalAssumptions, SurfaceError, search_optimal

    cost = _read_json(args.cost)
    try:
        counts = (int(cost["logical_qubits"]), float(cost["toffoli_count"]))
        phys = PhysicalAssumptions(args.p, args.cycle_us, args.reaction_us, args.factories)
    except (KeyError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc
    if args.p >= 0.01:
        raise ValidationError(f"p_gate={args.p} is not below the 1% surface-code threshold")
    try:
        plan = search_optimal(counts, phys)
    except SurfaceError as exc:
        raise StageError(str(exc)) from exc
    if plan.advisory:
        logger.warning("p_gate=%g is below the validated range; result is advisory", args.p)
    return plan.to_dict()


def _parse_mask(text: str) -> int:
    try:
        return int(text, 16)
    except ValueError as exc:
        raise ValidationError(f"occupation bitmask {text!r} is not hexadecimal") from exc


def cmd_fci(args) -> dict:
    from .oracle import OracleError, fci_ground_state, max_basis_overlap

    ham = _load_ham(args.ham)
    try:
        result = fci_ground_state(ham, args.na, args.nb, method=args.method, seed=args.seed)
    except OracleError as exc:
        raise ValidationError(str(exc)) from exc
    except (ArithmeticError, RuntimeError) as exc:
        raise StageError(f"diagonalization failed: {exc}") from exc
    overlap, (a, b) = max_basis_overlap(result)
    out = {"energy": result.energy, "dimension": result.basis.dimension, "method": result.method,
           "degenerate": result.degenerate, "max_overlap": overlap,
           "dominant_determinant": {"alpha": f"{a:#x}", "beta": f"{b:#x}"}}
    if args.det:
        a, b = (_parse_mask(t) for t in args.det.split(","))
        try:
            idx = result.basis.index(a, b)
        except ValueError as exc:
            raise ValidationError(f"determinant {args.det} is not in the basis") from exc
        out["determinant_weight"] = float(result.coefficients[idx] ** 2)
    return out


def _dmrg_point(d: dict):
    from .classical_cost import DMRGCostPoint

    try:
        return DMRGCostPoint(**d)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid DMRG cost point {d}: {exc}") from exc


def cmd_classical(args) -> dict:
    from .classical_cost import dmrg_extrapolate_energy, dmrg_scale

    out: dict = {}
    if args.baseline:
        base = _dmrg_point(_read_json(args.baseline))
        if args.target_k is None or args.target_m is None:
            raise ValidationError("--baseline needs --target-k and --target-m")
        out["scaled"] = dmrg_scale(base, args.target_k, args.target_m).to_dict()
    if args.extrapolate:
        pts = _read_json(args.extrapolate)
        try:
            res = dmrg_extrapolate_energy([(p["discarded_weight"], p["energy"]) for p in pts["points"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"invalid extrapolation input: {exc}") from exc
        out["extrapolation"] = {"energy": res.energy, "error_estimate": res.error_estimate,
                                "slope": res.slope}
    if not out:
        raise ValidationError("classical needs --baseline and/or --extrapolate")
    return out


def cmd_crossover(args) -> dict:
    from .pipeline import crossover_table, emit_plot_data

    qpu = _read_json(args.qpu)
    dmrg = _read_json(args.dmrg)
    try:
        table = crossover_table(qpu["reports"], [_dmrg_point(p) for p in dmrg["points"]],
                                factories=args.factories, threads=args.threads)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc
    if args.csv:
        emit_plot_data(table, "csv", args.csv)
    return json.loads(emit_plot_data(table, "json"))


def cmd_report(args) -> dict:
    from .pipeline import ConfigError, load_config, run_pipeline

    if not args.config:
        raise ValidationError("report needs --config")
    try:
        cfg = load_config(args.config, seed=args.seed_override, workers=args.workers_override,
                          out=args.out)
    except (ConfigError, OSError) as exc:
        raise ValidationError(str(exc)) from exc
    bundle = run_pipeline(cfg)
    failed = [c for c in bundle["cells"] if c["status"] != "ok"]
    summary = {"config_hash": bundle["config_hash"], "cells": len(bundle["cells"]),
               "failed": len(failed), "out": cfg.out}
    if failed and len(failed) == len(bundle["cells"]):
        raise StageError(f"all {len(failed)} cells failed; first: {failed[0].get('error')}")
    return summary if cfg.out else bundle


# -- parser ------------------------------------------------------------------


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # Sub-commands repeat the global flags with suppressed defaults so that a
    # flag given before the verb is not reset by the sub-parser.
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default(None), help="TOML run configuration")
    common.add_argument("--seed", type=int, default=default(None), help="RNG seed (default 0)")
    common.add_argument("--workers", type=int, default=default(None), help="parallel workers")
    common.add_argument("--out", default=default(None), help="output directory")
    common.add_argument("--json", dest="json_out", default=default(None), metavar="PATH",
                        help="write the result JSON here")
    common.add_argument("-v", "--verbose", action="store_true", default=default(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="estimator", parents=[_global_flags(suppress=False)],
                                     description="Factorize active-space Hamiltonians and estimate costs.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("ingest", parents=[common], help="validate an FCIDUMP and store it in binary form")
    p.add_argument("fcidump")
    p.add_argument("-o", "--output")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("factorize", parents=[common], help="SF, DF or THC factorization")
    p.add_argument("--method", choices=("sf", "df", "thc"), required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--rank", type=int)
    p.add_argument("--threshold", type=float, default=1e-8, help="Cholesky residual threshold")
    p.add_argument("--eig-threshold", type=float, default=0.0)
    p.add_argument("--sweeps", type=int, default=500)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("lambda", parents=[common], help="L1 norm of a factorized Hamiltonian")
    p.add_argument("--ham", required=True)
    p.add_argument("--factors", required=True)
    p.set_defaults(func=cmd_lambda)

    p = sub.add_parser("cost", parents=[common], help="logical Toffoli and qubit counts")
    p.add_argument("--lambda", dest="lambda_json", required=True)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--model", help="step-cost model JSON")
    p.add_argument("--n-orbitals", type=int)
    p.add_argument("--rank", type=int)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("compile", parents=[common], help="surface-code physical resources")
    p.add_argument("--cost", required=True)
    p.add_argument("--p", type=float, default=1e-3)
    p.add_argument("--factories", type=int, default=4)
    p.add_argument("--cycle-us", type=float, default=1.0)
    p.add_argument("--reaction-us", type=float, default=10.0)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("fci", parents=[common], help="exact ground state by determinant FCI")
    p.add_argument("--ham", required=True)
    p.add_argument("--na", type=int)
    p.add_argument("--nb", type=int)
    p.add_argument("--method", choices=("auto", "dense", "iterative"), default="auto")
    p.add_argument("--det", help="ALPHA,BETA hex bitmasks whose weight to report")
    p.set_defaults(func=cmd_fci)

    p = sub.add_parser("classical", parents=[common], help="DMRG cost scaling and extrapolation")
    p.add_argument("--baseline", help="DMRG cost point JSON")
    p.add_argument("--target-k", type=int)
    p.add_argument("--target-m", type=int)
    p.add_argument("--extrapolate", help="JSON with points of discarded_weight and energy")
    p.set_defaults(func=cmd_classical)

    p = sub.add_parser("crossover", parents=[common], help="QPU vs DMRG wall-time table")
    p.add_argument("--qpu", required=True)
    p.add_argument("--dmrg", required=True)
    p.add_argument("--factories", type=int, default=2)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_crossover)

    p = sub.add_parser("report", parents=[common], help="run the full pipeline from a config")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.seed_override, args.workers_override = args.seed, args.workers
    if args.seed is None:
        args.seed = 0
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        result = args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (StageError, Exception) as exc:  # noqa: BLE001 - any unexpected failure is a stage failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    _emit(result, args.json_out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
