"""Command-line entry point: `wgfh <kind> --config path [--out dir] [--threads k]`.

Exit codes: 0 all invariants pass, 1 invariant failure, 2 configuration
error, 3 numerical failure.
"""

import argparse
import os
import sys

from .experiments import KINDS, ConfigError, NumericalFailure, load_config, report, run


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="wgfh",
        description="Run experiments on gradient flows in oscillatory periodic media",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind!r} experiment from a JSON config")
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for sweep entries (or WGFH_THREADS)")
    p = sub.add_parser("report", help="re-validate a finished run from its manifest")
    p.add_argument("manifest", help="path to manifest.json")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            result = report(args.manifest)
            print(result.text)
            return 0 if result.ok else 1
        cfg = load_config(args.config)
        if cfg["kind"] != args.command:
            raise ConfigError(
                f"config kind {cfg['kind']!r} does not match subcommand {args.command!r}"
            )
        manifest = run(cfg, out_dir=args.out, threads=args.threads)
        out_dir = os.path.dirname(manifest.path) or "."
        print(f"wrote {len(manifest.entries)} artifacts to {out_dir}")
        for name, _, _ in manifest.entries:
            print(f"  {name}")
        print("verdicts: " + ("all pass" if manifest.ok else "FAILURES (see verdicts.csv)"))
        return 0 if manifest.ok else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
