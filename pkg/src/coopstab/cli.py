"""Command-line entry point.

Exit status: 0 on success, 1 on a configuration error, 2 when ``validate``
finds a point where simulation and bounds disagree.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .experiments import (EXIT_CONFIG, MODES, ConfigError, build_config,
                          load_config, run_experiment)

log = logging.getLogger("coopstab")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="coopstab",
        description="Stability-region bounds and MAC simulation for an "
                    "energy-harvesting cooperative secondary user.")
    p.add_argument("--config", help="flat YAML key-value file")
    p.add_argument("--mode", help=f"one of {', '.join(MODES)}; overrides the config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--f-step", dest="f_step", type=float, help="f grid spacing")
    p.add_argument("--horizon", type=int, help="simulated slots per run")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad flags; 2 is reserved for validation
        return EXIT_CONFIG if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        raw = load_config(args.config) if args.config else {}
        for key in ("mode", "seed", "out", "f_step", "horizon"):
            val = getattr(args, key)
            if val is not None:
                raw[key] = val
        # shorten the default burn-in along with a short --horizon
        if args.horizon is not None and "burn_in" not in raw:
            raw["burn_in"] = min(10**5, args.horizon // 10)
        cfg = build_config(raw)
        result = run_experiment(cfg)
    except ConfigError as exc:
        print(f"coopstab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in result.files:
        log.info("wrote %s", f)
    print(f"{cfg.mode}: {len(result.files)} files in {cfg.out} (status {result.status})")
    return result.status


if __name__ == "__main__":
    sys.exit(main())
