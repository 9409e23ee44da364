"""Command-line entry point: ``crabchip <subcommand> [--config FILE] --out DIR``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from crabchip.experiments.config import FIGURE_TAGS, ConfigError, ExperimentConfig
from crabchip.experiments.runner import run
from crabchip.pulse import PulseParseError

SUBCOMMANDS = {
    "simulate": "simulate",
    "optimize": "optimize",
    "sweep-time": "sweep-time",
    "baseline": "constant-baseline",
    "hold-test": "hold-test",
    "envelope": "envelope",
    "interferometer": "interferometer",
    "breit-rabi": "breit-rabi",
    "reproduce": "reproduce",
}

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


def _parse_set(items):
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError([f"--set {item!r}: expected KEY=VALUE"])
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crabchip",
        description="Optimal RF state preparation in the F=2 manifold of 87Rb.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        if name == "reproduce":
            p.add_argument("tag", choices=FIGURE_TAGS)
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override rng_seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a top-level config field (JSON value)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    kind = SUBCOMMANDS[args.command]
    try:
        if args.config:
            try:
                raw = json.loads(args.config.read_text())
            except FileNotFoundError:
                raise ConfigError([f"config file {args.config} does not exist"]) from None
            except json.JSONDecodeError as err:
                raise ConfigError([f"{args.config}: line {err.lineno}: {err.msg}"]) from None
            base_dir = args.config.parent
        else:
            raw, base_dir = {}, Path.cwd()
        if not isinstance(raw, dict):
            raise ConfigError(["config must be a JSON object"])
        raw["kind"] = kind
        if kind == "reproduce":
            raw["tag"] = args.tag
        raw.update(_parse_set(args.set))
        if args.seed is not None:
            raw["rng_seed"] = args.seed
        config = ExperimentConfig.from_dict(raw, base_dir)
    except (ConfigError, PulseParseError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    try:
        manifest = run(config, args.out, threads=max(1, args.threads))
    except (ConfigError, PulseParseError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as err:
        logging.getLogger("crabchip").exception("run failed")
        print(f"error: run failed: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(manifest.summary, indent=2, default=str))
    print(f"wrote {len(manifest.outputs)} files to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
