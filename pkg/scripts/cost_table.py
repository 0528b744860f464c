#!/usr/bin/env python3
"""Print the hardware cost table for the benchmark networks.

For every registered network this prints modeled latency, energy, EDP,
tile/ADC counts and area next to the published platform figures, plus an
optional per-layer breakdown. Pure cost-model arithmetic; no training or
dataset involved.

    python3 scripts/cost_table.py
    python3 scripts/cost_table.py --layers --adc-mode per_column
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from xbar_bench import costmod
from xbar_bench.memsim import PER_COLUMN, PER_PAIR_DIFFERENTIAL
from xbar_bench.networks import REGISTRY
from xbar_bench.published import PUBLISHED


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--layers", action="store_true",
                    help="also print the per-layer breakdown per network")
    ap.add_argument("--adc-mode", default=PER_PAIR_DIFFERENTIAL,
                    choices=[PER_PAIR_DIFFERENTIAL, PER_COLUMN],
                    help="column-readout style used by the cost model")
    ap.add_argument("--utilization", type=float, default=1.0,
                    help="fraction of mapped cells active per cycle")
    args = ap.parse_args(argv)

    params = dataclasses.replace(costmod.CostParams(),
                                 adc_mode=args.adc_mode,
                                 array_utilization=args.utilization)

    head = (f"{'network':<10} {'arch':<38} {'latency':>9} {'published':>9} "
            f"{'energy uJ':>10} {'published':>9} {'ratio':>6} {'flag':>12}")
    print(head)
    print("-" * len(head))
    for row in costmod.published_comparison(params):
        arch = REGISTRY[row.network].arch
        print(f"{row.network:<10} {arch:<38} "
              f"{row.model_latency_s * 1e6:>7.2f}us {row.published_time_s * 1e6:>7.2f}us "
              f"{row.model_energy_j * 1e6:>10.4f} {row.published_energy_j * 1e6:>9.4f} "
              f"{row.energy_ratio:>6.2f} {row.latency_flag}/{row.energy_flag}")

    print()
    print(f"{'network':<10} {'tiles':>6} {'ADCs':>6} {'area mm^2':>10} "
          f"{'MACs':>10} {'EDP uJ*s':>12}")
    for name in sorted(PUBLISHED):
        rep = costmod.benchmark_cost_report(name, params)
        print(f"{name:<10} {rep.tiles_total:>6} {rep.adc_count:>6} "
              f"{rep.area_mm2:>10.4f} {rep.macs:>10} {rep.edp_js * 1e6:>12.3e}")
        if args.layers:
            for lc in rep.layers:
                stem = "head" if lc.branch < 0 else f"b{lc.branch}.l{lc.index}"
                print(f"    {stem:<8} {lc.kind:<6} rows {lc.rows:>4} "
                      f"cols {lc.cols:>4} dup {lc.dup:>3} tiles {lc.tiles:>4} "
                      f"adc {lc.adc_count:>5} E {lc.energy_j:.3e} J")
    return 0


if __name__ == "__main__":
    sys.exit(main())
