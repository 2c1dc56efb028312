"""Command line: ``dearfsim run`` for sweeps and ``dearfsim compare`` for savings tables."""

from __future__ import annotations

import argparse
import logging
import sys
import time

from .config import ConfigError, load_config, render
from .engine import SimulationError
from . import sweep

EXIT_OK, EXIT_CONFIG, EXIT_SIM = 0, 2, 3

log = logging.getLogger("dearfsim")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dearfsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log every finished run")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the scheme x n_dsmd x X x seed matrix")
    run.add_argument("--config", metavar="PATH", help="key = value file; defaults apply to missing keys")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="override one key (repeatable, applied after --config)")
    run.add_argument("--out", metavar="DIR", help="output directory (default: out_dir key)")
    run.add_argument("--seeds", type=int, metavar="N", help="number of seeds per sweep point")
    run.add_argument("--workers", type=int, metavar="N", help="worker processes")
    run.add_argument("--print-config", action="store_true",
                     help="print the effective configuration and exit")

    cmp_ = sub.add_parser("compare", help="per-point savings of DEARF over the basic scheme")
    cmp_.add_argument("csv", help="results.csv written by 'run'")
    cmp_.add_argument("-o", "--output", metavar="PATH", help="write the table here instead of stdout")
    return p


def _run(args) -> int:
    overrides = list(args.overrides)
    if args.seeds is not None:
        overrides.append(f"seeds = {args.seeds}")
    if args.workers is not None:
        overrides.append(f"workers = {args.workers}")
    if args.out is not None:
        overrides.append(f"out_dir = {args.out}")
    cfg = load_config(args.config, overrides)
    if args.print_config:
        sys.stdout.write(render(cfg))
        return EXIT_OK

    n = len(sweep.sweep_points(cfg))
    log.info("running %d simulations with %d worker(s)", n, cfg.workers)

    def progress(s, dt):
        log.debug("%s n=%d x=%d seed=%d: pdr=%s %.2fs", s.scheme, s.n_dsmd, s.x_dtims, s.seed,
                  s.pdr_within_deadline_pct, dt)

    t = time.perf_counter()
    results = sweep.run_sweep(cfg, progress=progress)
    elapsed = time.perf_counter() - t
    csv_path, man_path = sweep.write_results(cfg.out_dir, cfg, results, elapsed)
    print(f"{len(results)} runs in {elapsed:.1f}s -> {csv_path} ({man_path.name})")
    return EXIT_OK


def _compare(args) -> int:
    try:
        rows = sweep.read_rows(args.csv)
    except OSError as exc:
        print(f"error: {args.csv}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    text = sweep.format_comparison(sweep.compare_rows(rows))
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _run(args)
        return _compare(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        trace = getattr(exc, "trace", None)
        if trace:
            print("last events:", file=sys.stderr)
            for line in trace:
                print(f"  {line}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
