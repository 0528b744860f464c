"""Command-line pipeline: gen-data | train | convert | sweep | cost | report.

Every command reads one YAML config (see :mod:`xbar_bench.config`) and
writes artifacts under the run's output directory:

    dataset.ntc / dataset.bin / dataset.csv      gen-data
    models/{net}.fold{k}.ntc, train_log.json     train
    convert_summary.json                         convert
    sweep.csv, sweep.json                        sweep
    cost.csv, cost.json                          cost
    report.txt, plot/{net}.tsv                   report

Exit codes: 0 success, 2 config error, 3 missing artifact, 4 numeric
fault.  Sweep trials run in a thread pool (--threads, else the
XBAR_BENCH_THREADS environment variable, else 1); rows are sorted by
(network, sigma, seed, fold) before writing so output never depends on
scheduling.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import benchdata, costmod, memsim
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    MissingArtifactError,
    NtcFormatError,
    NumericFault,
    XbarError,
)
from .networks import REGISTRY, branch_inputs, build_network
from .nncore import forward, train_sgd
from .published import PUBLISHED

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# artifact paths


def dataset_path(out_dir: Path) -> Path:
    return out_dir / "dataset.ntc"


def model_path(out_dir: Path, network: str, fold: int) -> Path:
    return out_dir / "models" / f"{network}.fold{fold}.ntc"


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"expected {path} — {hint}")
    return path


def _load_dataset(out_dir: Path) -> benchdata.Dataset:
    return benchdata.load_dataset_ntc(
        _require(dataset_path(out_dir), "run `gen-data` first")
    )


def _load_model(out_dir: Path, network: str, fold: int):
    path = _require(model_path(out_dir, network, fold), "run `train` first")
    net, _ = benchdata.load_model_ntc(path)
    return net


# --------------------------------------------------------------------------
# report rows


@dataclass(frozen=True)
class ReportRow:
    """One sweep trial: accuracy plus the network's hardware cost."""

    network: str
    modality: str
    sigma: float
    n_states: str  # integer as text, or "unbounded"
    fold: int
    seed: int
    accuracy: float
    energy_j: float
    latency_s: float
    edp_js: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise NumericFault(f"accuracy {self.accuracy} outside [0, 1]")
        if self.edp_js != self.energy_j * self.latency_s:
            raise NumericFault("edp_js must equal energy_j * latency_s")


ROW_FIELDS = [f.name for f in dataclasses.fields(ReportRow)]


def trial_device_seed(base_seed: int, network: str, sigma_idx: int, fold: int) -> int:
    """Derive one device-sampling seed per trial, order-independent."""
    net_idx = sorted(REGISTRY).index(network)
    ss = np.random.SeedSequence([int(base_seed), net_idx, int(sigma_idx), int(fold)])
    return int(ss.generate_state(1)[0])


def _write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_value(row[k]) for k in fieldnames})


def _csv_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# commands


def cmd_gen_data(cfg: RunConfig, out_dir: Path) -> int:
    ds = benchdata.gen_synthetic(
        cfg.data.n_per_class_session,
        cfg.data.seed,
        emg_std=cfg.data.emg_std,
        session_std=cfg.data.session_std,
        pixel_std=cfg.data.pixel_std,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    benchdata.save_dataset_ntc(
        ds,
        dataset_path(out_dir),
        extra_meta={
            "seed": cfg.data.seed,
            "n_per_class_session": cfg.data.n_per_class_session,
        },
    )
    benchdata.dataset_to_csv(ds, out_dir / "dataset.csv")
    print(f"wrote {dataset_path(out_dir)} ({len(ds)} samples)")
    return 0


def _train_inputs(name: str, ds: benchdata.Dataset, idx: np.ndarray):
    return branch_inputs(name, ds.emg_features[idx], ds.images[idx])


def cmd_train(cfg: RunConfig, out_dir: Path) -> int:
    ds = _load_dataset(out_dir)
    folds = benchdata.cv_folds_by_session(ds)
    train_log: dict[str, dict] = {}
    for name in cfg.networks:
        per_fold = {}
        for k, (train_idx, test_idx) in enumerate(folds):
            history: list[float] = []
            net = train_sgd(
                build_network(name, seed=cfg.train.seed),
                (_train_inputs(name, ds, train_idx), ds.labels[train_idx]),
                cfg.train,
                history=history,
            )
            path = model_path(out_dir, name, k)
            benchdata.save_model_ntc(
                net,
                REGISTRY[name].arch,
                path,
                extra_meta={"network": name, "fold": k, "seed": cfg.train.seed},
            )
            test_pred = np.argmax(
                forward(net, _train_inputs(name, ds, test_idx)), axis=1
            )
            acc = float(np.mean(test_pred == ds.labels[test_idx]))
            per_fold[str(k)] = {
                "model": str(path),
                "final_loss": history[-1] if history else None,
                "test_accuracy": acc,
            }
            log.info("trained %s fold %d: test acc %.3f", name, k, acc)
        train_log[name] = per_fold
    _write_json(out_dir / "train_log.json", train_log)
    print(f"wrote {out_dir / 'train_log.json'}")
    return 0


def cmd_convert(cfg: RunConfig, out_dir: Path) -> int:
    """Map fold-0 models at every sweep sigma and summarize the layouts."""
    ds = _load_dataset(out_dir)
    train_idx, _ = benchdata.cv_folds_by_session(ds)[0]
    calib_idx = train_idx[: cfg.sweep.calib_samples]
    summary = []
    for name in cfg.networks:
        net = _load_model(out_dir, name, 0)
        calib = _train_inputs(name, ds, calib_idx)
        for sigma_idx, sigma in enumerate(cfg.sweep.sigmas):
            device = cfg.device.instantiate(
                sigma,
                trial_device_seed(cfg.sweep.seeds[0], name, sigma_idx, 0),
            )
            mapped = memsim.convert_network(
                net, device, calib, adc_bits=cfg.sweep.adc_bits
            )
            layers = [
                {
                    "kind": ml.kind,
                    "rows": int(sum(ml.row_sizes)),
                    "cols": int(ml.col_size),
                    "tiles": ml.tile_count,
                    "clipped_weights": int(ml.clip_count),
                }
                for ml in mapped.mapped_layers()
            ]
            summary.append(
                {
                    "network": name,
                    "sigma": sigma,
                    "tiles_total": sum(l["tiles"] for l in layers),
                    "clip_total": int(mapped.clip_total),
                    "layers": layers,
                }
            )
            log.info(
                "converted %s at sigma=%g: %d tiles, %d clipped weights",
                name,
                sigma,
                summary[-1]["tiles_total"],
                summary[-1]["clip_total"],
            )
    _write_json(out_dir / "convert_summary.json", summary)
    print(f"wrote {out_dir / 'convert_summary.json'}")
    return 0


def _n_states_text(n_states) -> str:
    return "unbounded" if n_states in (None, "unbounded") else str(int(n_states))


def _sweep_trial(args) -> ReportRow:
    (name, sigma_idx, sigma, seed, fold, net, calib, test_xs, test_labels,
     cfg, cost_rep) = args
    device = cfg.device.instantiate(
        sigma, trial_device_seed(seed, name, sigma_idx, fold)
    )
    mapped = memsim.convert_network(net, device, calib, adc_bits=cfg.sweep.adc_bits)
    pred = np.argmax(memsim.mapped_forward(mapped, test_xs), axis=1)
    return ReportRow(
        network=name,
        modality=PUBLISHED[name].modality,
        sigma=float(sigma),
        n_states=_n_states_text(cfg.device.n_states),
        fold=fold,
        seed=seed,
        accuracy=float(np.mean(pred == test_labels)),
        energy_j=cost_rep.energy_j,
        latency_s=cost_rep.latency_s,
        edp_js=cost_rep.edp_js,
    )


def cmd_sweep(cfg: RunConfig, out_dir: Path, threads: int = 1) -> int:
    ds = _load_dataset(out_dir)
    folds = benchdata.cv_folds_by_session(ds)
    trials = []
    for name in cfg.networks:
        cost_rep = costmod.benchmark_cost_report(name, cfg.cost)
        for fold, (train_idx, test_idx) in enumerate(folds):
            net = _load_model(out_dir, name, fold)
            calib = _train_inputs(name, ds, train_idx[: cfg.sweep.calib_samples])
            test_xs = _train_inputs(name, ds, test_idx)
            test_labels = ds.labels[test_idx]
            for sigma_idx, sigma in enumerate(cfg.sweep.sigmas):
                for seed in cfg.sweep.seeds:
                    trials.append(
                        (name, sigma_idx, sigma, seed, fold, net, calib,
                         test_xs, test_labels, cfg, cost_rep)
                    )
    log.info("sweep: %d trials on %d thread(s)", len(trials), threads)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_trial, trials))
    else:
        rows = [_sweep_trial(t) for t in trials]
    rows.sort(key=lambda r: (r.network, r.sigma, r.seed, r.fold))
    dict_rows = [dataclasses.asdict(r) for r in rows]
    _write_csv(out_dir / "sweep.csv", ROW_FIELDS, dict_rows)
    _write_json(out_dir / "sweep.json", dict_rows)
    print(f"wrote {out_dir / 'sweep.csv'} ({len(rows)} rows)")
    return 0


COST_FIELDS = [
    "network",
    "latency_s",
    "published_time_s",
    "latency_flag",
    "energy_j",
    "published_energy_j",
    "energy_ratio",
    "energy_flag",
    "edp_js",
    "published_edp_js",
    "tiles_total",
    "adc_count",
    "area_mm2",
    "macs",
    "source",
]


def cmd_cost(cfg: RunConfig, out_dir: Path) -> int:
    comparisons = costmod.published_comparison(cfg.cost)
    rows = []
    breakdown = {}
    for comp in comparisons:
        rep = costmod.benchmark_cost_report(comp.network, cfg.cost)
        rows.append(
            {
                "network": comp.network,
                "latency_s": rep.latency_s,
                "published_time_s": comp.published_time_s,
                "latency_flag": comp.latency_flag,
                "energy_j": rep.energy_j,
                "published_energy_j": comp.published_energy_j,
                "energy_ratio": comp.energy_ratio,
                "energy_flag": comp.energy_flag,
                "edp_js": rep.edp_js,
                "published_edp_js": comp.published_edp_js,
                "tiles_total": rep.tiles_total,
                "adc_count": rep.adc_count,
                "area_mm2": rep.area_mm2,
                "macs": rep.macs,
                "source": PUBLISHED[comp.network].source,
            }
        )
        breakdown[comp.network] = [dataclasses.asdict(lc) for lc in rep.layers]
    _write_csv(out_dir / "cost.csv", COST_FIELDS, rows)
    _write_json(
        out_dir / "cost.json", {"rows": rows, "layer_breakdown": breakdown}
    )
    for row in rows:
        print(
            f"{row['network']:<10} latency {row['latency_s']:.1e} s "
            f"[{row['latency_flag']}]  energy {row['energy_j']:.3e} J "
            f"(model/published {row['energy_ratio']:.2f}) [{row['energy_flag']}]"
        )
    print(f"wrote {out_dir / 'cost.csv'}")
    return 0


def _read_sweep_rows(out_dir: Path) -> list[dict]:
    path = _require(out_dir / "sweep.csv", "run `sweep` first")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise MissingArtifactError(f"{path} contains no rows")
    return rows


def trend_verdict(means: list[float], ses: list[float]) -> str:
    """Degradation-trend check: accuracy should not climb as sigma grows.

    Each step may rise by at most one standard error of the step mean
    before the series is called non-monotone.
    """
    for i in range(1, len(means)):
        if means[i] > means[i - 1] + ses[i]:
            return "NON-MONOTONE"
    return "DEGRADES-MONOTONICALLY"


def cmd_report(cfg: RunConfig, out_dir: Path) -> int:
    rows = _read_sweep_rows(out_dir)
    by_net: dict[str, dict[float, list[float]]] = {}
    for row in rows:
        by_net.setdefault(row["network"], {}).setdefault(
            float(row["sigma"]), []
        ).append(float(row["accuracy"]))

    lines = ["variability sweep summary", "=" * 25, ""]
    plot_dir = out_dir / "plot"
    plot_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(by_net):
        sigmas = sorted(by_net[name])
        means, stds, ses = [], [], []
        for s in sigmas:
            accs = np.array(by_net[name][s])
            means.append(float(accs.mean()))
            std = float(accs.std(ddof=1)) if len(accs) > 1 else 0.0
            stds.append(std)
            ses.append(std / np.sqrt(len(accs)) if len(accs) > 1 else 0.0)
        verdict = trend_verdict(means, ses)
        lines.append(f"{name}  [{verdict}]")
        for s, m, sd in zip(sigmas, means, stds):
            lines.append(f"  sigma {s:>6.0f}  accuracy {m:.4f} +/- {sd:.4f}")
        lines.append("")
        tsv = ["sigma\tmean_accuracy\tstd_accuracy"]
        tsv += [
            f"{s:g}\t{m!r}\t{sd!r}" for s, m, sd in zip(sigmas, means, stds)
        ]
        (plot_dir / f"{name}.tsv").write_text("\n".join(tsv) + "\n", "utf-8")
    text = "\n".join(lines)
    (out_dir / "report.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


# --------------------------------------------------------------------------
# argument parsing and dispatch


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(
            f"--seeds expects comma-separated integers: {text!r}"
        ) from exc


def _resolve_threads(arg: int | None) -> int:
    if arg is not None:
        value = arg
    else:
        env = os.environ.get("XBAR_BENCH_THREADS", "")
        try:
            value = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"XBAR_BENCH_THREADS must be an integer: {env!r}")
    if value < 1:
        raise ConfigError("thread count must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xbar-bench",
        description="Crossbar inference benchmark pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("gen-data", "generate the synthetic dataset"),
        ("train", "train float networks per CV fold"),
        ("convert", "map trained networks onto crossbar tiles"),
        ("sweep", "run the device-variability accuracy sweep"),
        ("cost", "hardware cost reports and published comparison"),
        ("report", "summarize sweep results and emit plot data"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out-dir", help="override the config's out_dir")
        if name == "sweep":
            p.add_argument(
                "--seeds", help="comma-separated device seeds (overrides config)"
            )
            p.add_argument(
                "--threads",
                type=int,
                help="worker threads (else XBAR_BENCH_THREADS, else 1)",
            )
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out_dir:
            cfg.out_dir = args.out_dir
        out_dir = Path(cfg.out_dir)
        if args.command == "gen-data":
            return cmd_gen_data(cfg, out_dir)
        if args.command == "train":
            return cmd_train(cfg, out_dir)
        if args.command == "convert":
            return cmd_convert(cfg, out_dir)
        if args.command == "sweep":
            if args.seeds:
                cfg.sweep = dataclasses.replace(
                    cfg.sweep, seeds=_parse_seeds(args.seeds)
                )
            return cmd_sweep(cfg, out_dir, threads=_resolve_threads(args.threads))
        if args.command == "cost":
            return cmd_cost(cfg, out_dir)
        if args.command == "report":
            return cmd_report(cfg, out_dir)
        raise ConfigError(f"unknown command {args.command!r}")
    except NumericFault as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (MissingArtifactError, NtcFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except XbarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
