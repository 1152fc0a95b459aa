"""Command-line entry points.

Five subcommands around one config-file format:

    model-pi    model-based policy iteration (needs the system block)
    adp-exact   data-driven iteration on exact-expectation data
    adp-mc      data-driven iteration on Monte Carlo data
    rank        data informativity diagnostic only
    import-eta  data-driven iteration on an imported eta bundle

Every run prints a one-line summary; with --out DIR it also writes
report.json (lossless JSON), trace.csv (fixed header) and PNG figures
(suppressed by --no-plot).  Exit codes: 0 success, 1 config problem,
2 rank-condition failure, 3 finished without converging, 4 instability
during simulation, 5 other numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .adp import ADPResult, check_rank, run_adp
from .config import ProblemConfig, load_config, with_seed
from .datagen import (
    collect_data_exact,
    collect_data_mc_streamed,
    propagate_moments,
)
from .errors import (
    ConfigError,
    MnlqrError,
    RankConditionError,
    SimulationBlowupError,
)
from .etaio import load_eta, save_eta
from .model_pi import eval_residual, run_model_pi, sare_residual
from .report import RunReport, render_figures, trace_row, write_trace_csv

MODE_EPS = {
    "model-pi": 1e-10,
    "adp-exact": 1e-8,
    "adp-mc": 1e-4,
    "import-eta": 1e-8,
}


def _finite(v):
    return None if v is None or not np.isfinite(v) else float(v)


def _check_seed(seed):
    if seed is None:
        return None
    if not (0 <= seed < 2**64):
        raise ConfigError(f"--seed must fit an unsigned 64-bit integer, got {seed}")
    return int(seed)


def _load(args, need_system: bool) -> tuple[ProblemConfig, dict]:
    config, raw = load_config(args.config)
    seed = _check_seed(getattr(args, "seed", None))
    if seed is not None:
        config = with_seed(config, seed)
        raw = dict(raw, rollout=dict(raw.get("rollout", {}), seed=seed))
    if need_system and config.system is None:
        raise ConfigError("system: this mode needs the model matrices, got null")
    return config, raw


def _rank_report_dict(report) -> dict:
    return {
        "rank": report.rank,
        "required": report.required,
        "threshold": report.threshold,
        "singular_values": [float(s) for s in report.singular_values],
        "passed": report.passed,
    }


def _adp_rows(result: ADPResult, config: ProblemConfig) -> list:
    rows = []
    for rec in result.iterations:
        r1 = r2 = None
        if config.system is not None:
            r1 = sare_residual(config.system, config.cost, rec.triple.P)
            r2 = eval_residual(config.system, config.cost, rec.triple.P, rec.K)
        rows.append(
            trace_row(
                rec.index,
                delta_P=_finite(rec.delta_P),
                residual_R1=_finite(r1),
                residual_R2=_finite(r2),
                cond_psi=_finite(rec.cond_psi),
                rank=rec.ls_rank,
            )
        )
    return rows


def _adp_final(result: ADPResult, config: ProblemConfig) -> dict:
    last = result.iterations[-1]
    final = {
        "P": result.P.tolist(),
        "K": result.K.tolist(),
        "M": last.triple.M.tolist(),
        "H": last.triple.H.tolist(),
        "iterations": len(result.iterations),
        "residual_R1": None,
        "residual_R2": None,
    }
    if config.system is not None:
        final["residual_R1"] = sare_residual(config.system, config.cost, result.P)
        # the residual of the final (P, improved K) pair
        final["residual_R2"] = eval_residual(
            config.system, config.cost, result.P, result.K
        )
    return final


def _write_outputs(args, report: RunReport, rows, rank_report=None) -> None:
    if not getattr(args, "out", None):
        return
    os.makedirs(args.out, exist_ok=True)
    report.save(os.path.join(args.out, "report.json"))
    write_trace_csv(os.path.join(args.out, "trace.csv"), rows)
    if not getattr(args, "no_plot", False):
        render_figures(args.out, rows, rank_report=rank_report, title=report.mode)


def _finish(args, report, rows, rank_report, summary, converged) -> int:
    _write_outputs(args, report, rows, rank_report=rank_report)
    if getattr(args, "out", None):
        summary += f" (outputs in {args.out})"
    print(summary)
    return 0 if converged else 3


def _cmd_model_pi(args) -> int:
    config, raw = _load(args, need_system=True)
    eps = config.eps if config.eps is not None else MODE_EPS["model-pi"]
    t0 = time.perf_counter()
    result = run_model_pi(
        config.system, config.cost, config.K0, eps=eps, max_iter=config.max_iter
    )
    elapsed = time.perf_counter() - t0
    rows = [
        trace_row(
            rec.index,
            delta_P=_finite(rec.delta_P),
            residual_R1=_finite(rec.sare_res),
            residual_R2=_finite(rec.eval_res),
        )
        for rec in result.iterations
    ]
    last = result.iterations[-1]
    final = {
        "P": result.P.tolist(),
        "K": result.K.tolist(),
        "M": last.triple.M.tolist(),
        "H": last.triple.H.tolist(),
        "iterations": len(result.iterations),
        "residual_R1": last.sare_res,
        "residual_R2": last.eval_res,
    }
    report = RunReport(
        mode="model-pi",
        status=result.status,
        seed=None,
        config=raw,
        timing={"total_s": elapsed},
        iterations=rows,
        final=final,
    )
    summary = (
        f"model-pi: {result.status} in {len(result.iterations)} iterations, "
        f"|R1(P)|_F = {last.sare_res:.3e}, {elapsed:.3f} s"
    )
    return _finish(args, report, rows, None, summary, result.converged)


def _run_adp_mode(args, mode: str, config: ProblemConfig, raw: dict, data,
                  collect_s: float, seed) -> int:
    eps = config.eps if config.eps is not None else MODE_EPS[mode]
    t0 = time.perf_counter()
    result = run_adp(data, config.cost, config.K0, eps=eps, max_iter=config.max_iter)
    solve_s = time.perf_counter() - t0
    rows = _adp_rows(result, config)
    rank_dict = _rank_report_dict(result.rank_report)
    report = RunReport(
        mode=mode,
        status=result.status,
        seed=seed,
        config=raw,
        timing={"collect_s": collect_s, "solve_s": solve_s,
                "total_s": collect_s + solve_s},
        iterations=rows,
        final=_adp_final(result, config),
        rank_report=rank_dict,
    )
    parts = [
        f"{mode}: {result.status} in {len(result.iterations)} iterations",
        f"rank {result.rank_report.rank}/{result.rank_report.required}",
    ]
    if report.final["residual_R1"] is not None:
        parts.append(f"|R1(P)|_F = {report.final['residual_R1']:.3e}")
    parts.append(f"{collect_s + solve_s:.3f} s")
    return _finish(args, report, rows, rank_dict, ", ".join(parts), result.converged)


def _cmd_adp_exact(args) -> int:
    config, raw = _load(args, need_system=True)
    t0 = time.perf_counter()
    trace = propagate_moments(
        config.system, config.K0, config.exploration, config.rollout
    )
    data = collect_data_exact(trace)
    collect_s = time.perf_counter() - t0
    if args.export_eta:
        save_eta(args.export_eta, data)
    return _run_adp_mode(
        args, "adp-exact", config, raw, data, collect_s, config.rollout.seed
    )


def _cmd_adp_mc(args) -> int:
    config, raw = _load(args, need_system=True)
    t0 = time.perf_counter()
    if args.dump_paths:
        with open(args.dump_paths, "w", encoding="utf-8", newline="") as fh:
            data = collect_data_mc_streamed(
                config.system, config.K0, config.exploration, config.rollout,
                dump_file=fh,
            )
    else:
        data = collect_data_mc_streamed(
            config.system, config.K0, config.exploration, config.rollout
        )
    collect_s = time.perf_counter() - t0
    if args.export_eta:
        save_eta(args.export_eta, data)
    return _run_adp_mode(
        args, "adp-mc", config, raw, data, collect_s, config.rollout.seed
    )


def _cmd_rank(args) -> int:
    config, raw = _load(args, need_system=True)
    t0 = time.perf_counter()
    if args.data == "mc":
        data = collect_data_mc_streamed(
            config.system, config.K0, config.exploration, config.rollout
        )
    else:
        data = propagate_moments(
            config.system, config.K0, config.exploration, config.rollout
        )
        data = collect_data_exact(data)
    elapsed = time.perf_counter() - t0
    rep = check_rank(data)
    rank_dict = _rank_report_dict(rep)
    report = RunReport(
        mode="rank",
        status="passed" if rep.passed else "failed",
        seed=config.rollout.seed if args.data == "mc" else None,
        config=raw,
        timing={"total_s": elapsed},
        iterations=[],
        final={},
        rank_report=rank_dict,
    )
    _write_outputs(args, report, [], rank_report=rank_dict)
    suffix = f" (outputs in {args.out})" if getattr(args, "out", None) else ""
    print(f"rank ({args.data} data): {rep}{suffix}")
    return 0 if rep.passed else 2


def _cmd_import_eta(args) -> int:
    config, raw = _load(args, need_system=False)
    data = load_eta(args.eta)
    if (data.n, data.m) != (config.n, config.m):
        raise ConfigError(
            f"eta bundle is sized for (n, m) = ({data.n}, {data.m}), "
            f"the config for ({config.n}, {config.m})"
        )
    return _run_adp_mode(args, "import-eta", config, raw, data, 0.0, None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mnlqr",
        description=(
            "Policy-iteration solvers for linear-quadratic control with "
            "multiplicative noise, model-based and data-driven."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False):
        p.add_argument("--config", required=True, help="problem config JSON")
        p.add_argument("--out", help="directory for report.json, trace.csv, figures")
        p.add_argument("--no-plot", action="store_true", help="skip PNG figures")
        if seed:
            p.add_argument("--seed", type=int, help="override rollout.seed (u64)")

    p = sub.add_parser("model-pi", help="model-based policy iteration")
    common(p)
    p.set_defaults(func=_cmd_model_pi)

    p = sub.add_parser("adp-exact", help="data-driven iteration, exact expectations")
    common(p)
    p.add_argument("--export-eta", metavar="FILE", help="save the data matrices")
    p.set_defaults(func=_cmd_adp_exact)

    p = sub.add_parser("adp-mc", help="data-driven iteration, Monte Carlo data")
    common(p, seed=True)
    p.add_argument("--export-eta", metavar="FILE", help="save the data matrices")
    p.add_argument("--dump-paths", metavar="FILE", help="dump simulated paths CSV")
    p.set_defaults(func=_cmd_adp_mc)

    p = sub.add_parser("rank", help="data informativity diagnostic")
    common(p, seed=True)
    p.add_argument("--data", choices=("exact", "mc"), default="exact",
                   help="which engine generates the diagnostic data")
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("import-eta", help="run the data-driven solver on a bundle")
    common(p)
    p.add_argument("--eta", required=True, help="eta bundle file")
    p.set_defaults(func=_cmd_import_eta)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that slot belongs to the
        # rank condition here, so fold usage problems into exit 1
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except RankConditionError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except SimulationBlowupError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except MnlqrError as err:
        print(f"error: {err}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    raise SystemExit(main())
