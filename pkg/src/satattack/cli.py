"""Command-line interface.

    satattack simulate --config run.json [--seed N] [--out DIR]
    satattack reproduce-figure {2,3,4,5,6}
    satattack attack --distance-km D --delta X (--gain G | --strategy {1,2})
    satattack keyrate --distance-km D --xi X
    satattack postselect --input data.csv
    satattack acceptance

The default output directory comes from $SATATTACK_OUT (else ./satattack_out).
Errors are printed to stderr as a JSON object; exit status 2 marks a usage
error, 1 a failed run.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import OUT_ENV, ConfigError, ScenarioConfig, default_out_dir, reproduce_figure, run_scenario
from .reporting import to_jsonable
from .units import load_config

__all__ = ["main", "build_parser"]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    p.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or ./satattack_out)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="satattack", description="CV-QKD detector saturation attack simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario described by a JSON config")
    p.add_argument("--config", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("reproduce-figure", help="write the datasets behind one figure")
    p.add_argument("figure", type=int, choices=[2, 3, 4, 5, 6])
    _add_common(p)

    p = sub.add_parser("attack", help="Monte Carlo run of one attack configuration")
    p.add_argument("--distance-km", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--gain", type=float)
    g.add_argument("--strategy", type=int, choices=[1, 2])
    p.add_argument("-n", "--samples", type=int, default=1_000_000)
    p.add_argument("--no-saturation", action="store_true", help="disable the detector clamp")
    p.add_argument("--write-block", action="store_true", help="also write the (x_a, x_b) samples")
    _add_common(p)

    p = sub.add_parser("keyrate", help="key rate at one distance and excess noise")
    p.add_argument("--distance-km", type=float, required=True)
    p.add_argument("--xi", type=float, required=True)
    p.add_argument("--v-a", type=float, default=None, help="fixed modulation variance (default: SNR schedule)")
    _add_common(p)

    p = sub.add_parser("postselect", help="Gaussian post-selection of a CSV column x_b")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--bin-width", type=float, default=0.1)
    _add_common(p)

    p = sub.add_parser("acceptance", help="run the acceptance suite")
    _add_common(p)
    return parser


def _config_from_args(args) -> ScenarioConfig:
    common = {"seed": args.seed, "out_dir": args.out, "threads": args.threads}
    if args.command == "simulate":
        system, seed, rest = load_config(args.config)
        data = {**rest, "system": system.to_dict(), "seed": seed}
        return ScenarioConfig.from_mapping(data, **common)
    if args.command == "attack":
        attack = {"delta": args.delta, "saturation": not args.no_saturation}
        if args.gain is not None:
            attack["gain"] = args.gain
        else:
            attack["strategy"] = args.strategy
        return ScenarioConfig.from_mapping(
            {"scenario": "attack-run", "distances": [args.distance_km], "attack": attack, "n": args.samples,
             "options": {"write_block": args.write_block}},
            **common,
        )
    if args.command == "keyrate":
        options = {"xi": args.xi, "schedule": args.v_a is None}
        data = {"scenario": "keyrate-sweep", "distances": [args.distance_km], "options": options}
        if args.v_a is not None:
            data["system"] = {"v_a": args.v_a}
        return ScenarioConfig.from_mapping(data, **common)
    if args.command == "postselect":
        options = {"input": str(args.input), "bin_width": args.bin_width}
        if args.alpha is not None:
            options["alpha"] = args.alpha
        return ScenarioConfig.from_mapping({"scenario": "postselect", "options": options}, **common)
    if args.command == "acceptance":
        return ScenarioConfig.from_mapping({"scenario": "acceptance"}, **common)
    raise ConfigError(f"unknown command {args.command}")


def _fail(code: int, kind: str, exc: Exception) -> int:
    print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reproduce-figure":
            out = args.out if args.out is not None else default_out_dir()
            paths = reproduce_figure(args.figure, args.seed or 0, out, args.threads)
            print(json.dumps(to_jsonable(paths), indent=2))
            return 0
        cfg = _config_from_args(args)
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        return _fail(2, "usage", exc)

    try:
        report = run_scenario(cfg)
    except (ConfigError, OSError) as exc:
        return _fail(2, "usage", exc)
    except ValueError as exc:
        return _fail(1, "run", exc)

    if cfg.scenario == "acceptance":
        for c in report.summary["criteria"]:
            print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['number']:>2}. {c['name']} ({c['seconds']:.1f} s)")
        print(f"{report.summary['passed']}/{report.summary['total']} criteria passed")
    else:
        print(json.dumps(to_jsonable({"ok": report.ok, "paths": report.paths}), indent=2))
    if not report.ok and "error" in report.summary:
        print(json.dumps({"error": "run", "message": report.summary["error"]}), file=sys.stderr)
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
