"""Command-line entry point.

    dmra run <config>       simulate every configured policy and seed
    dmra sweep <config>     DMRA over sweep.k plus the non-DMRA baselines
    dmra verify <config>    bounds reports only
    dmra plot <summary.csv> write a gnuplot script next to the summary
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import OUTPUT_ROOT_ENV, load_config
from .errors import DMRAError
from .experiment import gnuplot_script, run_experiment


def _seeds(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("no seeds given")
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dmra", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep", "verify"):
        p = sub.add_parser(name)
        p.add_argument("config", type=Path)
        p.add_argument("--seed-override", type=_seeds, metavar="SEEDS",
                       help="replace configured seeds, e.g. '7' or '1-20' or '1,5,9'")
        p.add_argument("--horizon", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--output-dir", type=Path,
                       help=f"defaults to run.output_dir, else ${OUTPUT_ROOT_ENV}, else ./dmra-results")
    p = sub.add_parser("plot")
    p.add_argument("summary", type=Path)
    p.add_argument("-o", "--output", type=Path, help="script path (default: plot.gp beside summary)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plot":
            target = args.output or args.summary.parent / "plot.gp"
            target.write_text(gnuplot_script(args.summary))
            print(target)
            return 0
        config = load_config(args.config).with_overrides(
            seeds=args.seed_override, horizon=args.horizon,
            workers=args.workers, output_dir=args.output_dir)
        result = run_experiment(config, mode=args.command)
    except (DMRAError, OSError) as exc:
        print(f"dmra: error: {exc}", file=sys.stderr)
        return 2

    for rep in result.bounds:
        print(f"[DMRA k={rep.k:g}] cost {rep.empirical_cost:.4f} <= {rep.cost_bound:.4f}: "
              f"{'ok' if rep.cost_ok else 'VIOLATED'}; queue {rep.empirical_queue:.4f} <= "
              f"{rep.queue_bound:.4f}: "
              f"{'n/a' if rep.queue_ok is None else 'ok' if rep.queue_ok else 'VIOLATED'}")
    for rep in result.varying:
        print(f"[DMRAVaryingK k0={rep.k0:g}] cost {rep.empirical_cost:.4f} vs p* {rep.p_star:.4f} "
              f"(gap {rep.gap:+.4f}, tol {rep.tolerance:.4f}): "
              f"{'converged' if rep.converged else 'NOT converged'}")
    for f in result.files:
        print(f)
    for cell in result.failures:
        print(f"dmra: cell {cell.policy} seed {cell.seed} aborted: {cell.error}", file=sys.stderr)
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
