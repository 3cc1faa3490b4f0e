"""Command-line entry point.

Exit codes: 0 ok, 1 configuration error, 2 numeric error, 3 resource limit.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import PRESETS, load_config
from .errors import BecError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_RESOURCE = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bec-kinetics",
        description="Condensate number statistics from a collision-driven master equation.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("source", help=f"preset ({', '.join(PRESETS)}) or path to a key = value file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config value (repeatable)")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        p.add_argument("--threads", type=int, help="worker threads for the rate sums")
        p.add_argument("--no-cache", action="store_true", help="ignore and do not write the cache")

    common(sub.add_parser("run", help="run the full pipeline and write all artifacts"))
    common(sub.add_parser("compare-steady", help="compare steady states, and runs at a and a/2"))
    sub.add_parser("oracle-suite", help="run the enumeration and quadrature oracles")
    return parser


def _cmd_run(args) -> int:
    from .runner import run

    cfg = load_config(args.source, args.overrides)
    manifest = run(cfg, args.out, use_cache=False if args.no_cache else None, threads=args.threads)
    tv = manifest["steady_states"]["total_variation"]
    print(f"wrote {args.out or cfg.output_dir}: {manifest['spectrum']['n_modes']} modes, "
          f"final sigma0 {manifest['trajectory']['final_sigma0']:.6f}, "
          f"TV(asymptotic, gibbs) {tv['asymptotic_vs_gibbs']:.3e}")
    for r in manifest["oracles"] or []:
        print(f"oracle {r['name']}: {'PASS' if r['passed'] else 'FAIL'} ({r['error']:.2e})")
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .runner import compare_steady_states

    cfg = load_config(args.source, args.overrides)
    report = compare_steady_states(cfg, args.out, use_cache=False if args.no_cache else None, threads=args.threads)
    print(json.dumps({k: report[k] for k in ("runs", "a_vs_a_half")}, indent=2))
    return EXIT_OK


def _cmd_oracles(args) -> int:
    from .oracles import run_oracle_suite

    results = run_oracle_suite()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: error {r.error:.3e} (tol {r.tolerance:.0e}, {r.seconds:.2f} s)")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {"run": _cmd_run, "compare-steady": _cmd_compare, "oracle-suite": _cmd_oracles}
    try:
        return handlers[args.command](args)
    except BecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except MemoryError as exc:
        print(f"error: out of memory: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
