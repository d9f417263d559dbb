#!/usr/bin/env python3
"""Run one of the bundled benchmark configs and print a run summary.

Usage:
    python3 scripts/run_benchmark.py configs/global_xi_128.cfg --out out/global
    python3 scripts/run_benchmark.py configs/field_xi_amr.cfg --steps 20

Outputs (VTK snapshots, energy and xi history CSVs, manifest) land in the
--out directory; the summary table goes to stdout.
"""

import argparse
import logging
import time
from pathlib import Path

from xifrac import driver
from xifrac.config import parse_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", type=Path)
    ap.add_argument("--out", type=Path, default=None,
                    help="output directory (default: out/<config-stem>)")
    ap.add_argument("--steps", type=int, default=None,
                    help="override loading.n_max")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")

    overrides = {}
    if args.steps is not None:
        overrides["loading.n_max"] = str(args.steps)
    config = parse_config(args.config.read_text(), overrides)
    out_dir = args.out or Path("out") / args.config.stem

    t0 = time.time()
    history, state = driver.run(config, out_dir=out_dir)
    wall = time.time() - t0

    print(f"\n{args.config.name}: {len(history)} steps in {wall:.0f}s, "
          f"final mesh {state.mesh.n_cells} cells "
          f"(levels {state.mesh.cell_levels.min()}-"
          f"{state.mesh.cell_levels.max()})")
    print(f"{'t':>6} {'strain':>10} {'surface':>10} {'total':>10} "
          f"{'xi_min':>8} {'xi_max':>8} {'cells':>7} {'iters':>5}")
    for rec in history:
        print(f"{rec.t:>6.2f} {rec.strain:>10.4g} {rec.surface:>10.4g} "
              f"{rec.total:>10.4g} {rec.xi_min:>8.4f} {rec.xi_max:>8.4f} "
              f"{rec.cells:>7d} {rec.stag_iters:>5d}")
    if driver.crack_reached_bottom(state):
        print("run stopped early: crack reached the bottom boundary")
    print(f"outputs written to {out_dir}")


if __name__ == "__main__":
    main()
