"""Command line entry point.

    ekimf <subcommand> [--config PATH] [--preset NAME] [--out DIR] [--seed N]
                       [--threads N] [--check]

Exit status: 0 on success, 2 when ``--check`` is given and a check fails,
1 on any error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from ..errors import EkimfError
from .config import ExperimentConfig, load_config
from .experiments import EXPERIMENTS, write_outputs
from .presets import PRESET_KIND, PRESETS, preset

log = logging.getLogger("ekimf")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ekimf", description="Ensemble Kalman inversion mean-field experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=(EXPERIMENTS[name].__doc__ or "").split("\n")[0])
        sp.add_argument("--config", help="YAML/JSON experiment config (default: built-in preset)")
        sp.add_argument("--preset", help=f"built-in config name, one of {sorted(PRESETS)}")
        sp.add_argument("--out", default=None, help="output directory (default: config output or ./results/<cmd>)")
        sp.add_argument("--seed", type=int, default=None, help="override the master seed")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for trials")
        sp.add_argument("--check", action="store_true", help="exit with status 2 if a check fails")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _load(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise EkimfError("give at most one of --config and --preset")
    if args.config:
        cfg = load_config(args.config)
    else:
        name = args.preset or args.command
        if name not in PRESETS:
            raise EkimfError(f"no preset named {name!r}")
        if PRESET_KIND[name] != args.command:
            raise EkimfError(f"preset {name!r} belongs to subcommand {PRESET_KIND[name]!r}")
        cfg = ExperimentConfig.from_dict(preset(name))
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise EkimfError("--seed must be an unsigned 64-bit integer")
        cfg = cfg.with_overrides(master_seed=args.seed)
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        start = time.perf_counter()
        result = EXPERIMENTS[args.command](cfg, threads=max(1, args.threads))
        out = args.out or cfg.output or f"results/{args.command}"
        write_outputs(result, out)
    except (EkimfError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    elapsed = time.perf_counter() - start
    if result.fit is not None:
        f = result.fit
        print(f"{result.experiment}: slope {f.slope:.4f} +/- {f.stderr:.4f}")
    for name, ok in result.checks.items():
        print(f"  {'PASS' if ok else 'FAIL'} {name}")
    print(f"wrote {out} ({elapsed:.1f} s)")
    if args.check and not result.passed:
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
