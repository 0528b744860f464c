#!/usr/bin/env python3
"""Run the full variability-sweep pipeline in one go.

Chains the CLI stages gen-data -> train -> convert -> sweep -> cost ->
report against one config file and one output directory, stopping at the
first stage that fails. Equivalent to invoking `xbar-bench <stage> ...`
six times by hand; handy for fresh checkouts and smoke runs.

    python3 scripts/sigma_sweep.py --config scripts/demo_config.yaml \
        --out-dir runs/demo --threads 4
"""

from __future__ import annotations

import argparse
import sys
import time

from xbar_bench import cli

STAGES = ["gen-data", "train", "convert", "sweep", "cost", "report"]


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--out-dir", default=None,
                    help="artifact directory (default: out_dir from the config)")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker threads for the sweep stage")
    ap.add_argument("--skip", action="append", default=[], choices=STAGES,
                    help="stage to skip (repeatable), e.g. --skip gen-data "
                         "to reuse an existing dataset")
    args = ap.parse_args(argv)

    for stage in STAGES:
        if stage in args.skip:
            print(f"[{stage}] skipped")
            continue
        cmd = [stage, "--config", args.config]
        if args.out_dir:
            cmd += ["--out-dir", args.out_dir]
        if stage == "sweep":
            cmd += ["--threads", str(args.threads)]
        t0 = time.perf_counter()
        rc = cli.main(cmd)
        dt = time.perf_counter() - t0
        print(f"[{stage}] exit {rc} in {dt:.1f}s")
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
