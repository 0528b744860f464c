#!/usr/bin/env python3
"""Fixed-point word-length study on a trained benchmark network.

Trains one network on the synthetic dataset (first CV fold), then sweeps
fixed-point formats and reports float vs quantized test accuracy per
format — the digital-accelerator side of the story, complementing the
crossbar sweep in scripts/sigma_sweep.py.

    python3 scripts/fixed_point_report.py --network mlp_emg_b
    python3 scripts/fixed_point_report.py --network cnn_aps --epochs 20
"""

from __future__ import annotations

import argparse
import sys

from xbar_bench import benchdata, fxpquant, networks, nncore

# (word_length, fraction_length) grid, coarse to fine
FORMATS = [(4, 2), (6, 4), (8, 6), (10, 8), (12, 10), (16, 13), (24, 20)]


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--network", default="mlp_emg_b",
                    choices=sorted(networks.REGISTRY))
    ap.add_argument("--n-per-class-session", type=int, default=24)
    ap.add_argument("--data-seed", type=int, default=7)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--learning-rate", type=float, default=0.1)
    args = ap.parse_args(argv)

    ds = benchdata.gen_synthetic(args.n_per_class_session, seed=args.data_seed)
    train_idx, test_idx = benchdata.cv_folds_by_session(ds)[0]

    net = networks.build_network(args.network, seed=1)
    train_xs = networks.branch_inputs(
        args.network, ds.emg_features[train_idx], ds.images[train_idx])
    cfg = nncore.TrainConfig(learning_rate=args.learning_rate,
                             epochs=args.epochs, batch_size=32, seed=1)
    net = nncore.train_sgd(net, (train_xs, ds.labels[train_idx]), cfg)

    test_xs = networks.branch_inputs(
        args.network, ds.emg_features[test_idx], ds.images[test_idx])
    test = (test_xs, ds.labels[test_idx])

    print(f"network {args.network}  ({len(test_idx)} test samples, fold 0)")
    print(f"{'format':>8} {'float acc':>10} {'fixed acc':>10} {'delta':>8}")
    for wl, fl in FORMATS:
        fmt = fxpquant.FixedPointFormat(word_length=wl, fraction_length=fl)
        qnet = fxpquant.quantize_network(net, fmt)
        acc_f, acc_q, delta = fxpquant.fx_accuracy_delta(net, qnet, test)
        print(f"  Q{wl}.{fl:<4} {acc_f:>10.4f} {acc_q:>10.4f} {delta:>+8.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
