"""
Command-line harness for the PSWF Ewald solver and its benchmark sweeps.

Subcommands:
  plan              - Choose (c_s, c_w, m, P, alpha) for each tolerance
  solve             - Potential and forces of one system
  sweep-resolution  - Minimal grid size per tolerance (median over seeds)
  sweep-surface     - Far-field error over an (m, P) grid
  tolerance-check   - Parameter selection followed by a measured error, per tolerance
  gen-system        - Write a random neutral system to disk

Every subcommand accepts --config run.json; explicit flags override the file. Results go to
CSV files under --out, each starting with "# prolate-ewald v1" and "# config=<hash>".
Diagnostics go to stderr, summaries to stdout as JSON.

Exit codes:
  0  success
  1  numerical failure (for example a non-converging iteration)
  2  invalid configuration or arguments outside a function's domain
  3  a sweep point did not reach its tolerance within m_max / p_max
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import DEFAULTS, FORMAT_CHOICES, SPLIT_CHOICES, WINDOW_CHOICES, RunConfig, load_run_config
from .errors import ConfigurationError, DomainError, ProlateEwaldError
from .ewald_engine import FarField, forces, make_plan, rel_l2_error, rms_error, total_potential
from .kernel_split import SplitSpec
from .param_select import ErrorModelInput, plan_from_parameters, select_parameters
from .particles import FORMAT_TAG, ParticleSystem, load_system, save_system
from .reference import ReferenceSettings, cached_reference
from .sweeps import build_split, gen_system, sweep_error_surface, sweep_resolution, tolerance_check, window_shape
from .window_functions import make_window

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_UNCONVERGED = 3


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def write_rows(path: Path, rows: Sequence[Dict[str, Any]], config_hash: str) -> Path:
    """Write rows as a versioned CSV; every row carries the config hash."""
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# {FORMAT_TAG}\n")
        f.write(f"# config={config_hash}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns + ["config_hash"])
        for row in rows:
            writer.writerow([_format_value(row[c]) for c in columns] + [config_hash])
    logger.info("wrote %d rows to %s", len(rows), path)
    return path


def read_rows(path: Path) -> List[Dict[str, str]]:
    """Rows of a file written by write_rows, as strings."""
    with open(path, newline="", encoding="utf-8") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


def _print_json(payload: Any) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _load_or_generate(config: RunConfig) -> ParticleSystem:
    if config.input is not None:
        system = load_system(config.input)
        logger.info("loaded %d particles from %s (L=%g)", system.n, config.input, system.L)
        return system
    return gen_system(config.seed, config.n, config.box)


PLAN_COLUMNS = ("eps", "c_s", "c_w", "m", "P", "alpha", "predicted_err")


def format_plan_table(plans: Sequence[Dict[str, Any]]) -> str:
    """Aligned text table of plan rows, one line per tolerance."""
    cells = [list(PLAN_COLUMNS)]
    for plan in plans:
        cells.append([f"{plan[c]:.6g}" if isinstance(plan[c], float) else str(plan[c]) for c in PLAN_COLUMNS])
    widths = [max(len(row[i]) for row in cells) for i in range(len(PLAN_COLUMNS))]
    lines = ["  ".join(cell.rjust(width) for cell, width in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def cmd_plan(config: RunConfig, as_json: bool = False) -> int:
    system = _load_or_generate(config)
    plans = []
    for eps in config.eps:
        params = select_parameters(ErrorModelInput.for_system(system, eps, config.rc))
        plans.append({"eps": eps, **params.as_dict(), "predicted_err": params.predicted_err})
    if as_json:
        _print_json({"config_hash": config.config_hash, "n": system.n, "L": system.L, "rc": config.rc, "plans": plans})
    else:
        print(format_plan_table(plans))
    return EXIT_OK


def _solver_setup(config: RunConfig, system: ParticleSystem) -> Tuple[SplitSpec, FarField, Dict[str, Any]]:
    """Split and far-field evaluator for solve, plus a description of both."""
    eps = config.eps[0]
    automatic = config.split == "pswf" and config.window == "pswf" and config.m is None and not config.direct
    if automatic:
        inp = ErrorModelInput.for_system(system, eps, config.rc)
        params = select_parameters(inp)
        split, plan = plan_from_parameters(params, inp, config.threads)
        return split, plan, {"mode": "fast", **params.as_dict()}

    if config.m is None:
        raise ConfigurationError("solve needs 'm' unless both split and window are pswf")
    m = config.m[0]
    split = build_split(config, eps, config.rc, m)
    if config.direct:
        return split, m, {"mode": "direct", "m": m, "shape_s": split.shape}

    if config.support is None:
        raise ConfigurationError("solve with a fixed grid needs 'support'")
    window = make_window(config.window, m, system.L, config.support[0], shape=window_shape(config))
    plan = make_plan(split, window, config.threads)
    info = {"mode": "fast", "m": m, "P": window.P, "shape_s": split.shape, "shape_w": window.shape, "alpha": window.alpha}
    return split, plan, info


def cmd_solve(config: RunConfig) -> int:
    system = _load_or_generate(config)
    split, far, info = _solver_setup(config, system)
    phi = total_potential(system, split, far)
    force = forces(system, split, far)

    rows = [
        {"index": i, "q": system.charges[i], "phi": phi[i], "fx": force[i, 0], "fy": force[i, 1], "fz": force[i, 2]}
        for i in range(system.n)
    ]
    path = write_rows(Path(config.out) / "potential.csv", rows, config.config_hash)

    summary: Dict[str, Any] = {
        "config_hash": config.config_hash,
        "n": system.n,
        "L": system.L,
        "rc": config.rc,
        "split": config.split,
        "window": None if info["mode"] == "direct" else config.window,
        "energy": 0.5 * float(np.dot(system.charges, phi)),
        "output": str(path),
        **info,
    }
    if config.check:
        reference = cached_reference(system, config.seed, config.cache_dir, ReferenceSettings(m_ref=config.reference_m))
        summary["rms_error"] = rms_error(phi, reference)
        summary["rel_error"] = rel_l2_error(phi, reference)
    _print_json(summary)
    return EXIT_OK


def cmd_sweep_resolution(config: RunConfig) -> int:
    rows = sweep_resolution(config)
    path = write_rows(Path(config.out) / "resolution.csv", rows, config.config_hash)
    unconverged = [row for row in rows if not row["converged"]]
    _print_json({"config_hash": config.config_hash, "output": str(path), "rows": len(rows), "unconverged": len(unconverged)})
    if unconverged:
        for row in unconverged:
            print(f"{row['family']} eps={row['eps']:g} did not converge within m_max={config.m_max}", file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


def cmd_sweep_surface(config: RunConfig) -> int:
    rows = sweep_error_surface(config)
    path = write_rows(Path(config.out) / "surface.csv", rows, config.config_hash)
    _print_json({"config_hash": config.config_hash, "output": str(path), "rows": len(rows)})
    return EXIT_OK


def cmd_tolerance_check(config: RunConfig) -> int:
    rows = tolerance_check(config)
    path = write_rows(Path(config.out) / "tolerance.csv", rows, config.config_hash)
    slope = _loglog_slope([r["eps"] for r in rows], [r["measured"] for r in rows])
    _print_json({"config_hash": config.config_hash, "output": str(path), "rows": len(rows), "slope": slope})
    return EXIT_OK


def _loglog_slope(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    if len(set(x)) < 2 or min(y) <= 0:
        return None
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def cmd_gen_system(config: RunConfig) -> int:
    system = gen_system(config.seed, config.n, config.box)
    path = Path(config.out) / f"system_seed{config.seed}_n{config.n}.{config.format}"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_system(system, path)
    _print_json({"config_hash": config.config_hash, "output": str(path), "n": system.n, "L": system.L})
    return EXIT_OK


COMMANDS = {
    "plan": (cmd_plan, "choose Ewald parameters for each tolerance"),
    "solve": (cmd_solve, "potential and forces of one system"),
    "sweep-resolution": (cmd_sweep_resolution, "minimal grid size per tolerance"),
    "sweep-surface": (cmd_sweep_surface, "far-field error over an (m, P) grid"),
    "tolerance-check": (cmd_tolerance_check, "measured error of the parameter selection"),
    "gen-system": (cmd_gen_system, "write a random neutral system"),
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _common_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="JSON run configuration (a sibling .local.json overrides it)")
    parent.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")

    group = parent.add_argument_group("run configuration (overrides the config file)")
    group.add_argument("--seed", type=int)
    group.add_argument("--seeds", type=int, nargs="+")
    group.add_argument("--n", type=int)
    group.add_argument("--box", type=float)
    group.add_argument("--rc", type=float)
    group.add_argument("--split", choices=SPLIT_CHOICES)
    group.add_argument("--window", choices=WINDOW_CHOICES)
    group.add_argument("--direct", action="store_const", const=True, help="use the direct Fourier sum")
    group.add_argument("--check", action="store_const", const=True, help="compare solve against the reference")
    group.add_argument("--eps", type=float, nargs="+")
    group.add_argument("--m", type=int, nargs="+")
    group.add_argument("--support", type=int, nargs="+")
    group.add_argument("--c-s", type=float)
    group.add_argument("--c-w", type=float)
    group.add_argument("--c-g", type=float)
    group.add_argument("--m-max", type=int)
    group.add_argument("--p-max", type=int)
    group.add_argument("--n-values", type=int, nargs="+")
    group.add_argument("--rc-values", type=float, nargs="+")
    group.add_argument("--reference-m", type=int)
    group.add_argument("--input", help="particle file (.csv or .bin) for plan and solve")
    group.add_argument("--format", choices=FORMAT_CHOICES)
    group.add_argument("--out")
    group.add_argument("--cache-dir")
    group.add_argument("--threads", type=int)
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prolate-ewald",
        description="Fast Ewald summation with prolate spheroidal wave functions.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    parent = _common_options()
    for name, (_, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, parents=[parent], help=help_text)
        if name == "plan":
            sub.add_argument("--json", action="store_true", help="print the plans as JSON instead of a table")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: getattr(args, key) for key in DEFAULTS if hasattr(args, key)}


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)
    logging.captureWarnings(True)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run one subcommand and return its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)

    config_dict = load_run_config(args.config, _overrides(args))
    if config_dict.get("has_error"):
        print(f"prolate-ewald: {config_dict['error_message']}", file=sys.stderr)
        return EXIT_CONFIG

    handler, _ = COMMANDS[args.command]
    try:
        config = RunConfig.from_dict(config_dict)
        logger.debug("config %s: %s", config.config_hash, config)
        if args.command == "plan":
            return cmd_plan(config, as_json=args.json)
        return handler(config)
    except (ConfigurationError, DomainError) as exc:
        print(f"prolate-ewald: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProlateEwaldError as exc:
        print(f"prolate-ewald: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def main(argv: Optional[Sequence[str]] = None) -> None:
    """Main entry point."""
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
