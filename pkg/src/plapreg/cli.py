"""Command line driver: solve, sweep, check, and tabulate-kernel.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 diagnostics failure.  All validation happens before any output file is
created, so an invalid run leaves no partial artifacts.  Output numbers are
written with full round-trip precision and runs are single threaded, so two
identical invocations produce byte-identical CSV files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, build_instance, load_config
from .diagnostics import lumped_norm, q_hat, run_diagnostics
from .kernel import (
    DEFAULT_TOLERANCES,
    RegularizationOrder,
    sqrt_squash_primitive,
    squash,
    squash_deriv,
    transform,
)
from .solver import continuation_run
from .system import DiscreteState, recover_b, recover_u, recover_v, with_eps

__all__ = ["main", "entrypoint", "run_solve", "run_sweep", "run_check", "run_tabulate"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_DIAGNOSTICS = 4


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_solution_csv(path: Path, mesh, u, v, b) -> None:
    lines = ["x,y,u,v,b"]
    for (x, y), uu, vv, bb in zip(mesh.nodes, u, v, b):
        lines.append(",".join((_fmt(x), _fmt(y), _fmt(uu), _fmt(vv), _fmt(bb))))
    path.write_text("\n".join(lines) + "\n")


def write_diagnostics_csv(path: Path, records: list) -> None:
    """One row per check per solve; ``records`` holds (eps, refinement, record)."""
    lines = ["eps,refinement,check,value,bound,slack,passed,detail"]
    for eps, refinement, record in records:
        for name, value, bound, slack, passed, detail in record.rows():
            lines.append(
                ",".join(
                    (_fmt(eps), str(refinement), name, _fmt(value), _fmt(bound), _fmt(slack), passed, f'"{detail}"')
                )
            )
    path.write_text("\n".join(lines) + "\n")


def write_summary_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n")


def _report_payload(eps: float, refinement: int, report) -> dict:
    return {
        "eps": eps,
        "refinement": refinement,
        "converged": report.converged,
        "strategy": report.strategy,
        "outer_iters": report.outer_iters,
        "total_inner_iters": report.total_inner_iters,
        "final_residual": report.residual_history[-1] if report.residual_history else None,
        "final_energy": report.energy_history[-1] if report.energy_history else None,
        "hint": report.hint,
        "flags": report.diagnostics.flags if report.diagnostics else {},
    }


def _exit_code(all_converged: bool, all_flags_ok: bool) -> int:
    if not all_converged:
        return EXIT_NONCONVERGED
    if not all_flags_ok:
        return EXIT_DIAGNOSTICS
    return EXIT_OK


def _sweep_row(cfg: RunConfig, eps, refinement, inst, state, report, prev_u):
    record = report.diagnostics
    u = recover_u(inst, state)
    diff_prev = 0.0
    if prev_u is not None:
        qh = q_hat(cfg.diagnostics.diff_norm_q)
        diff_prev = lumped_norm(inst.mesh, u - prev_u, qh)
    vanish_vals = [v for (_, v, _) in record.vanish_probe]
    vanish_bounds = [b for (_, _, b) in record.vanish_probe]
    idx = int(np.argmax(np.abs(vanish_vals))) if vanish_vals else 0
    chi_check = next(c for c in record.checks if c.name == "chi_energy")
    plap_check = next(c for c in record.checks if c.name == "weighted_plap")
    tk_slacks = [c.slack for c in record.checks if c.name.startswith("tk_gradient")]
    entropy_max = max((r for (_, _, r) in record.entropy_residuals), default=float("nan"))
    row = {
        "eps": eps,
        "refinement": refinement,
        "h_max": inst.mesh.h_max,
        "converged": report.converged,
        "outer_iters": report.outer_iters,
        "chi_energy": record.chi_energy,
        "chi_slack": chi_check.slack,
        "weighted_plap": record.weighted_plap,
        "plap_slack": plap_check.slack,
        "grad_norm_q1.5": record.wq_norms.get(1.5, float("nan")),
        "sol_norm_qhat3": record.lqhat_norms.get(1.5, float("nan")),
        "inv_weight_norm": record.inv_psi_norm,
        "tk_slack_max": max(tk_slacks, default=float("nan")),
        "vanish_max_value": vanish_vals[idx] if vanish_vals else float("nan"),
        "vanish_max_bound": vanish_bounds[idx] if vanish_bounds else float("nan"),
        "entropy_max": entropy_max,
        "minty_gap": record.minty_gap,
        "v_l1": record.v_l1,
        "apriori_slack": record.apriori_slack,
        "diff_prev": diff_prev,
        "all_passed": record.all_passed,
    }
    return row, u


def _write_sweep_csv(path: Path, rows: list[dict]) -> None:
    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    for row in rows:
        cells = []
        for c in cols:
            v = row[c]
            if isinstance(v, bool):
                cells.append(str(v).lower())
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(_fmt(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def run_solve(cfg: RunConfig) -> int:
    """Single problem (possibly continued over the eps schedule); writes
    solution.csv, diagnostics.csv, summary.json, and figures."""
    inst = build_instance(cfg)
    results = continuation_run(
        inst, cfg.eps_schedule, cfg.solver, cfg.diagnostics, on_failure=cfg.on_failure
    )
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    eps_final, state, report = results[-1]
    inst_final = with_eps(inst, eps_final)
    u = recover_u(inst_final, state)
    v = recover_v(inst_final, u)
    b = recover_b(inst_final, v)
    write_solution_csv(out / "solution.csv", inst.mesh, u, v, b)
    refinement = cfg.mesh_refinement if cfg.mesh_file is None else -1
    write_diagnostics_csv(out / "diagnostics.csv", [(e, refinement, r.diagnostics) for e, _, r in results])
    all_converged = all(r.converged for _, _, r in results)
    all_flags = all(r.diagnostics.all_passed for _, _, r in results)
    payload = {
        "command": "solve",
        "problem": cfg.problem,
        "p": cfg.p,
        "eps_schedule": cfg.eps_schedule,
        "mesh": {"nodes": inst.mesh.n_nodes, "triangles": inst.mesh.n_triangles, "h_max": inst.mesh.h_max},
        "measure_norm": inst.rhs_norm,
        "runs": [_report_payload(e, refinement, r) for e, _, r in results],
        "converged": all_converged,
        "diagnostics_passed": all_flags,
        "exit_code": _exit_code(all_converged, all_flags),
    }
    write_summary_json(out / "summary.json", payload)
    if cfg.figures:
        from . import plots

        fields = {"u": u} if inst.pair.is_linear else {"u": u, "v": v, "b": b}
        plots.save_solution_figure(out / "solution.png", inst.mesh, fields)
        plots.save_checks_figure(out / "diagnostics.png", report.diagnostics)
    return payload["exit_code"]


def run_sweep(cfg: RunConfig) -> int:
    """Refinement x eps study; one table row per (eps, h) plus study figures."""
    refinements = cfg.mesh_refinements or [cfg.mesh_refinement]
    rows: list[dict] = []
    diag_records = []
    final = None
    all_converged = True
    all_flags = True
    for refinement in refinements:
        inst = build_instance(cfg, refinement=refinement)
        results = continuation_run(
            inst, cfg.eps_schedule, cfg.solver, cfg.diagnostics, on_failure=cfg.on_failure
        )
        prev_u = None
        for eps, state, report in results:
            inst_eps = with_eps(inst, eps)
            row, prev_u = _sweep_row(cfg, eps, refinement, inst_eps, state, report, prev_u)
            rows.append(row)
            diag_records.append((eps, refinement, report.diagnostics))
            all_converged &= report.converged
            all_flags &= report.diagnostics.all_passed
        final = (inst, results[-1])
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    _write_sweep_csv(out / "sweep.csv", rows)
    write_diagnostics_csv(out / "diagnostics.csv", diag_records)
    inst, (eps_final, state, report) = final
    inst_final = with_eps(inst, eps_final)
    u = recover_u(inst_final, state)
    v = recover_v(inst_final, u)
    b = recover_b(inst_final, v)
    write_solution_csv(out / "solution.csv", inst.mesh, u, v, b)
    payload = {
        "command": "sweep",
        "problem": cfg.problem,
        "p": cfg.p,
        "eps_schedule": cfg.eps_schedule,
        "refinements": refinements,
        "rows": rows,
        "converged": all_converged,
        "diagnostics_passed": all_flags,
        "exit_code": _exit_code(all_converged, all_flags),
    }
    write_summary_json(out / "summary.json", payload)
    if cfg.figures:
        from . import plots

        plots.save_sweep_figure(out / "sweep.png", rows)
        plots.save_checks_figure(out / "diagnostics.png", report.diagnostics)
    return payload["exit_code"]


def _read_solution_csv(path: Path, mesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    try:
        raw = np.loadtxt(path, delimiter=",", skiprows=1)
    except OSError as exc:
        raise ConfigError(f"cannot read solution {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"malformed solution file {path}: {exc}") from exc
    if raw.ndim != 2 or raw.shape[1] != 5:
        raise ConfigError(f"solution file {path} must have columns x,y,u,v,b")
    if raw.shape[0] != mesh.n_nodes:
        raise ConfigError(
            f"solution file has {raw.shape[0]} rows but the mesh has {mesh.n_nodes} nodes"
        )
    if np.abs(raw[:, :2] - mesh.nodes).max() > 1e-9:
        raise ConfigError("solution file coordinates do not match the configured mesh")
    return raw[:, 2], raw[:, 3], raw[:, 4]


def run_check(cfg: RunConfig, solution_path: Path) -> int:
    """Re-run the diagnostics suite on a stored solution."""
    eps = cfg.eps_schedule[-1]
    inst = build_instance(cfg, eps=eps)
    u, v_stored, b_stored = _read_solution_csv(solution_path, inst.mesh)
    z = np.asarray(inst.table.forward(u), dtype=float)
    z[inst.mesh.boundary] = 0.0
    state = DiscreteState(z)
    record = run_diagnostics(inst, state, cfg.diagnostics)
    v = recover_v(inst, recover_u(inst, state))
    b = recover_b(inst, v)
    v_err = float(np.abs(v - v_stored).max(initial=0.0))
    b_err = float(np.abs(b - b_stored).max(initial=0.0))
    consistent = v_err <= 1e-6 and b_err <= 1e-6
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    refinement = cfg.mesh_refinement if cfg.mesh_file is None else -1
    write_diagnostics_csv(out / "check_diagnostics.csv", [(eps, refinement, record)])
    ok = record.all_passed and consistent
    payload = {
        "command": "check",
        "solution": str(solution_path),
        "eps": eps,
        "stored_vb_consistent": consistent,
        "stored_v_error": v_err,
        "stored_b_error": b_err,
        "flags": record.flags,
        "diagnostics_passed": record.all_passed,
        "exit_code": EXIT_OK if ok else EXIT_DIAGNOSTICS,
    }
    write_summary_json(out / "check_summary.json", payload)
    if cfg.figures:
        from . import plots

        plots.save_checks_figure(out / "check_diagnostics.png", record)
    return payload["exit_code"]


def run_tabulate(p: float, s_max: float, points: int, outdir: Path, figures: bool) -> int:
    """Dump the scalar kernel maps on a log grid for offline plotting."""
    order = RegularizationOrder(p)
    if s_max <= 0.0 or points < 2:
        raise ConfigError("tabulate-kernel requires s_max > 0 and points >= 2")
    grid = np.concatenate([[0.0], np.geomspace(min(1e-3, s_max / 10.0), s_max, points - 1)])
    table = {
        "s": grid,
        "squash": np.array([squash(s) for s in grid]),
        "squash_deriv": np.array([squash_deriv(s) for s in grid]),
        "transform": np.array([transform(s, order, DEFAULT_TOLERANCES) for s in grid]),
        "sqrt_primitive": np.array([sqrt_squash_primitive(s) for s in grid]),
    }
    outdir.mkdir(parents=True, exist_ok=True)
    cols = list(table)
    lines = [",".join(cols)]
    for i in range(grid.size):
        lines.append(",".join(_fmt(table[c][i]) for c in cols))
    (outdir / "kernel.csv").write_text("\n".join(lines) + "\n")
    if figures:
        from . import plots

        plots.save_kernel_figure(outdir / "kernel.png", table)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plapreg",
        description="Weighted p-Laplace regularization of elliptic problems with measure sources",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("config", type=Path, help="run configuration file")
        sp.add_argument("--output", type=Path, default=None, help="override the output directory")
        sp.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    add_common(sub.add_parser("solve", help="single solve with diagnostics"))
    add_common(sub.add_parser("sweep", help="eps and refinement study"))
    sp = sub.add_parser("check", help="re-run diagnostics on a stored solution")
    add_common(sp)
    sp.add_argument("solution", type=Path, help="solution.csv produced by a solve run")
    sp = sub.add_parser("tabulate-kernel", help="dump the scalar kernel maps")
    sp.add_argument("--p", type=float, required=True, help="regularization exponent (> 2)")
    sp.add_argument("--s-max", type=float, default=1e6)
    sp.add_argument("--points", type=int, default=200)
    sp.add_argument("--output", type=Path, default=Path("out"))
    sp.add_argument("--no-figures", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "tabulate-kernel":
            try:
                return run_tabulate(args.p, args.s_max, args.points, args.output, not args.no_figures)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        cfg = load_config(args.config)
        if args.output is not None:
            cfg.output = args.output
        if args.no_figures:
            cfg.figures = False
        if args.command == "solve":
            return run_solve(cfg)
        if args.command == "sweep":
            return run_sweep(cfg)
        if args.command == "check":
            return run_check(cfg, args.solution)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
