"""Command-line front end.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .harness import (
    ConfigError,
    ScenarioConfig,
    load_config_file,
    run_calibrate,
    run_fig2_scan,
    run_fig3_shake,
    run_pmd_sweep,
    write_calibration_output,
    write_pmd_outputs,
    write_scan_outputs,
    write_shake_outputs,
)
from .polcore import DopsimError, NumericsError

_COMMAND_SCENARIO = {
    "scan": "fig2_scan",
    "shake": "fig3_shake",
    "pmd": "pmd_sweep",
    "calibrate": "calibrate",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dopsim",
        description="Degree-of-polarization measurement scenarios: great-circle scan, "
        "fiber-shaking comparison, PMD sweep and meter calibration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, scenario in _COMMAND_SCENARIO.items():
        sp = sub.add_parser(command, help=f"run the {scenario} scenario")
        sp.add_argument("--config", required=True, help="scenario config JSON")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="directory for output files")
        sp.add_argument(
            "--noise", choices=("on", "off"), default="on", help="force all noise terms off"
        )
    vp = sub.add_parser("validate-config", help="check a config file and exit")
    vp.add_argument("config_path", help="scenario config JSON")
    return parser


def _resolve_output(configured: str | None, default_name: str, out_dir: str | None) -> Path:
    path = Path(configured) if configured else Path(default_name)
    if out_dir is not None:
        directory = Path(out_dir)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / path.name
    return path


def _run_scenario(args: argparse.Namespace) -> int:
    cfg: ScenarioConfig = load_config_file(
        args.config, seed_override=args.seed, noise_off=(args.noise == "off")
    )
    expected = _COMMAND_SCENARIO[args.command]
    if cfg.scenario != expected:
        raise ConfigError(f"scenario: config declares {cfg.scenario!r}, command expects {expected!r}")

    out = cfg.output
    if args.command == "scan":
        result = run_fig2_scan(cfg)
        write_scan_outputs(
            result,
            _resolve_output(out.records_csv, "scan.csv", args.out),
            _resolve_output(out.summary_json, "scan_summary.json", args.out),
        )
    elif args.command == "shake":
        result = run_fig3_shake(cfg)
        trajectory = None
        if out.trajectory_csv is not None:
            trajectory = _resolve_output(out.trajectory_csv, "trajectory.csv", args.out)
        write_shake_outputs(
            result,
            _resolve_output(out.records_csv, "shake.csv", args.out),
            _resolve_output(out.summary_json, "shake_summary.json", args.out),
            trajectory,
        )
    elif args.command == "pmd":
        result = run_pmd_sweep(cfg)
        write_pmd_outputs(
            result,
            _resolve_output(out.records_csv, "pmd.csv", args.out),
            _resolve_output(out.summary_json, "pmd_summary.json", args.out),
        )
    else:
        record = run_calibrate(cfg)
        write_calibration_output(
            record, _resolve_output(out.calibration_json, "calibration.json", args.out)
        )
    return 0


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors itself
        return 2 if exc.code not in (0, None) else 0

    try:
        if args.command == "validate-config":
            cfg = load_config_file(args.config_path)
            print(f"OK: {args.config_path} ({cfg.scenario}, seed {cfg.seed})")
            return 0
        return _run_scenario(args)
    except (NumericsError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except DopsimError as exc:
        # ConfigError and any domain invariant tripped by config-derived values
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
