"""Command-line entry point: ``parahom <subcommand> --config study.toml``.

Exit codes: 0 success, 1 numerical failure (any :class:`ParahomError`),
2 missing or invalid configuration / usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import formats
from .cell import divergence_defect, solve_cell_problem
from .dual import divergence_error, solve_dual
from .errors import ConfigError, ParahomError
from .harness import (SCHEMA_VERSION, StudyConfig, StudyContext, load_config, read_report,
                      run_identity_check, run_rate_study)
from .solver import norm_l2_h2, norm_l2_spacetime

log = logging.getLogger("parahom")


def _eps_list(text: str) -> list[float]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "/" in item:
            num, den = item.split("/", 1)
            out.append(float(num) / float(den))
        else:
            out.append(float(item))
    if not out:
        raise argparse.ArgumentTypeError("empty eps list")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parahom",
                                     description="Periodic parabolic homogenization toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "cell-solve": "solve the space-time cell problem, write a_hat and coefficient samples",
        "dual-solve": "solve cell and dual correctors, write the dual corrector file",
        "solve": "solve the oscillating and homogenized problems at the first eps",
        "identity-check": "evaluate the weak error identity on seeded test fields",
        "rate-study": "run the eps ladder and write rates.csv and report.json",
        "report": "print the slopes and rows of an existing report.json",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, metavar="PATH", help="TOML study file")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides [output].dir)")
        p.add_argument("--eps-override", type=_eps_list, metavar="LIST",
                       help="comma-separated eps values, e.g. 1/8,1/16,1/32")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def _prepare(args) -> tuple[StudyConfig, Path]:
    cfg = load_config(args.config)
    if args.eps_override:
        cfg = cfg.with_epsilons(args.eps_override)
    if args.out:
        cfg = cfg.with_output(args.out)
    out = Path(cfg.output_dir)
    if not out.is_absolute() and not args.out:
        out = Path(cfg.base_dir) / out
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _dump_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_cell_solve(cfg: StudyConfig, out: Path) -> str:
    A = cfg.build_coefficient()
    grid = cfg.cell_grid(A)
    corr = solve_cell_problem(A, grid, tol=cfg.cell_tol)
    formats.write_coefficient(out / "coefficient.phcf", A.sample(grid))
    _dump_json(out / "cell.json", {
        "schema_version": SCHEMA_VERSION,
        "a_hat": np.asarray(corr.a_hat).tolist(),
        "residual": corr.residual,
        "iterations": corr.iterations,
        "divergence_defect": float(np.max(np.abs(divergence_defect(corr)))),
        "grid": [grid.n_space, grid.n_time],
    })
    return f"a_hat = {np.asarray(corr.a_hat).ravel().tolist()}  (residual {corr.residual:.2e})"


def cmd_dual_solve(cfg: StudyConfig, out: Path) -> str:
    A = cfg.build_coefficient()
    corr = solve_cell_problem(A, cfg.cell_grid(A), tol=cfg.cell_tol)
    dual = solve_dual(corr)
    formats.write_dual(out / "dual.phdc", dual.phi)
    err = float(np.max(divergence_error(dual, corr.b)))
    _dump_json(out / "dual.json", {"schema_version": SCHEMA_VERSION, "divergence_error": err,
                                   "skew_exact": bool(np.array_equal(dual.phi,
                                                                     -dual.phi.swapaxes(0, 1)))})
    return f"dual correctors written; divergence error {err:.2e}"


def cmd_solve(cfg: StudyConfig, out: Path) -> str:
    eps = cfg.epsilons[0]
    ctx = StudyContext.build(cfg)
    u_eps, u0, _, _ = ctx.solve_pair(eps)
    formats.write_grid_function(out / "u_eps.phgf", u_eps.values, u_eps.h, u_eps.tau)
    formats.write_grid_function(out / "u0.phgf", u0.values, u0.h, u0.tau)
    err = norm_l2_spacetime(u_eps - u0)
    _dump_json(out / "solve.json", {"schema_version": SCHEMA_VERSION, "eps": eps,
                                    "h": u0.h, "tau": u0.tau, "err_l2": err,
                                    "u0_h2": norm_l2_h2(u0)})
    return f"eps = {eps:g}: ||u_eps - u0||_L2 = {err:.6e}"


def cmd_identity_check(cfg: StudyConfig, out: Path) -> str:
    result = run_identity_check(cfg, eps=cfg.epsilons[0] if cfg.epsilons else None)
    _dump_json(out / "identity.json", result)
    return f"max relative identity residual {result['max_rel_residual']:.3e}"


def cmd_rate_study(cfg: StudyConfig, out: Path) -> str:
    report = run_rate_study(cfg)
    report.write(out)
    return _summary(report.to_json())


def cmd_report(cfg: StudyConfig, out: Path) -> str:
    return _summary(read_report(out / "report.json"))


def _summary(data: dict) -> str:
    lines = [f"status: {data['status']}"]
    for col, fit in data["slopes"].items():
        if fit.get("status") == "fitted":
            lines.append(f"{col}: slope {fit['slope']:.4f} (r2 {fit['r2']:.4f})")
        else:
            lines.append(f"{col}: {fit['status']}")
    for row in data["rows"]:
        lines.append(f"  eps={row['eps']:.6g} err_l2={row['err_l2']:.4e} "
                     f"grad_w_l2={row['grad_w_l2']:.4e}")
    return "\n".join(lines)


COMMANDS = {
    "cell-solve": cmd_cell_solve,
    "dual-solve": cmd_dual_solve,
    "solve": cmd_solve,
    "identity-check": cmd_identity_check,
    "rate-study": cmd_rate_study,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, out = _prepare(args)
    except FileNotFoundError as exc:
        print(f"parahom: config not found: {exc.filename}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"parahom: invalid config: {exc}", file=sys.stderr)
        return 2
    try:
        message = COMMANDS[args.command](cfg, out)
    except FileNotFoundError as exc:
        print(f"parahom: missing input: {exc.filename}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"parahom: invalid config: {exc}", file=sys.stderr)
        return 2
    except ParahomError as exc:
        print(f"parahom: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(message)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
