"""Session-scoped fixtures shared across the test suite.

The default synthetic dataset and per-fold trained networks are expensive
(the CNN takes ~20 s to train across folds), so they are built once per
pytest session and reused by every test that needs them.
"""

from __future__ import annotations

import numpy as np
import pytest

from xbar_bench import benchdata, networks, nncore

DEFAULT_N_PER_CLASS_SESSION = 24
DEFAULT_DATA_SEED = 7


def train_folds(name: str, ds: benchdata.Dataset, folds) -> tuple:
    """Train one network per CV fold with the benchmark defaults."""
    cfg = nncore.TrainConfig(learning_rate=0.1, epochs=40, batch_size=32, seed=1)
    trained = []
    for train_idx, _ in folds:
        net = networks.build_network(name, seed=cfg.seed)
        xs = networks.branch_inputs(
            name, ds.emg_features[train_idx], ds.images[train_idx])
        trained.append(nncore.train_sgd(net, (xs, ds.labels[train_idx]), cfg))
    return tuple(trained)


def fold_accuracy(name: str, net, ds: benchdata.Dataset, test_idx) -> float:
    """Float-forward test accuracy of one trained fold model."""
    xs = networks.branch_inputs(
        name, ds.emg_features[test_idx], ds.images[test_idx])
    pred = np.argmax(nncore.forward(net, xs), axis=1)
    return float(np.mean(pred == ds.labels[test_idx]))


@pytest.fixture(scope="session")
def default_dataset() -> benchdata.Dataset:
    return benchdata.gen_synthetic(
        DEFAULT_N_PER_CLASS_SESSION, seed=DEFAULT_DATA_SEED)


@pytest.fixture(scope="session")
def session_folds(default_dataset):
    return benchdata.cv_folds_by_session(default_dataset)


@pytest.fixture(scope="session")
def trained_mlp_folds(default_dataset, session_folds):
    return train_folds("mlp_emg_b", default_dataset, session_folds)


@pytest.fixture(scope="session")
def trained_cnn_folds(default_dataset, session_folds):
    return train_folds("cnn_aps", default_dataset, session_folds)
