"""Command-line front end.

Verbs: amplitude, report, scan, modes, reproduce <fig2|fig2c|fig3|fig3c|fig4>.
Exit codes: 0 ok, 2 config error, 3 numerical degeneracy, 4 resource budget.
"""
from __future__ import annotations

import argparse
import json
import sys

from .amplitude import (DegenerateAmplitudeError, EmptySliceError,
                        GridBudgetError, PoleOnGridError)
from .report import (RECIPES, ConfigError, cmd_amplitude, cmd_modes,
                     cmd_report, cmd_reproduce, cmd_scan, load_config)
from .schmidt import DecompositionError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_BUDGET = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="interemit",
        description="Joint momentum amplitude, variance-ratio and Schmidt-mode "
                    "entanglement analysis of an interfering two-path emitter.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True,
                           help="JSON config file (a run manifest also works)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--grid-scale", type=float, default=None,
                       help="resolution multiplier for auto-sized grids")
        p.add_argument("--format", default=None,
                       help="comma-separated output formats: csv,json,svg")

    common(sub.add_parser("amplitude", help="sample and export the joint amplitude grid"))
    common(sub.add_parser("report", help="headline R, K, PE report for one point"))
    common(sub.add_parser("scan", help="coherence-plane or splitting sweep"))
    p_modes = sub.add_parser("modes", help="Schmidt mode profiles and spectrum")
    common(p_modes)
    p_modes.add_argument("--n-modes", type=int, default=3)
    p_rep = sub.add_parser("reproduce", help="run a named figure recipe")
    p_rep.add_argument("recipe", choices=RECIPES)
    common(p_rep, needs_config=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reproduce":
            manifest = cmd_reproduce(args.recipe, args.out, fmt=args.format,
                                     grid_scale=args.grid_scale)
        else:
            cfg = load_config(args.config)
            if args.command == "amplitude":
                manifest = cmd_amplitude(cfg, args.out, fmt=args.format,
                                         grid_scale=args.grid_scale)
            elif args.command == "report":
                manifest = cmd_report(cfg, args.out, fmt=args.format,
                                      grid_scale=args.grid_scale)
            elif args.command == "scan":
                manifest = cmd_scan(cfg, args.out, fmt=args.format,
                                    grid_scale=args.grid_scale)
            elif args.command == "modes":
                manifest = cmd_modes(cfg, args.out, n_modes=args.n_modes,
                                     fmt=args.format, grid_scale=args.grid_scale)
            else:  # pragma: no cover - argparse enforces choices
                raise ConfigError(f"unknown command {args.command}")
    except (ConfigError, ValueError) as exc:
        _emit_error("config", str(exc))
        return EXIT_CONFIG
    except (DegenerateAmplitudeError, PoleOnGridError, EmptySliceError,
            DecompositionError) as exc:
        _emit_error("numerical-degeneracy", str(exc))
        return EXIT_DEGENERATE
    except GridBudgetError as exc:
        _emit_error("resource-budget", str(exc))
        return EXIT_BUDGET
    print(json.dumps({"status": "ok", "command": args.command,
                      "headline": manifest["headline"],
                      "outputs": sorted(manifest["outputs"])}, sort_keys=True))
    return EXIT_OK


def _emit_error(code: str, message: str) -> None:
    print(json.dumps({"status": "error", "code": code, "message": message},
                     sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
