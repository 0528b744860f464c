"""Published hardware measurements used as regression targets.

Each row records the accuracy, energy, inference time, and
energy-delay product reported for one benchmark network on the
memristive crossbar platform.  These are measurement inputs, never
model outputs: the cost model is checked against them — inference time
must match exactly, the energy-delay identity must hold, and modeled
energy must land within an order-of-magnitude band (the published
energies include peripheral overheads the model does not itemize).
"""

from __future__ import annotations

from dataclasses import dataclass

SOURCE = "memristive crossbar platform comparison table"


@dataclass(frozen=True)
class PublishedRow:
    """One platform-comparison row (energies in µJ, EDP in µJ·s)."""

    network: str
    modality: str
    arch: str
    accuracy_mean: float  # percent
    accuracy_std: float  # percent, sample std over 3 folds
    energy_uj: float
    time_ms: float
    time_s: float  # exact float the latency model must reproduce
    edp_uj_s: float
    source: str


def _row(network, modality, arch, acc, std, e_uj, t_ms, t_s, edp):
    return PublishedRow(
        network=network,
        modality=modality,
        arch=arch,
        accuracy_mean=acc,
        accuracy_std=std,
        energy_uj=e_uj,
        time_ms=t_ms,
        time_s=t_s,
        edp_uj_s=edp,
        source=f"{SOURCE}, {modality} row, {arch}",
    )


PUBLISHED: dict[str, PublishedRow] = {
    "mlp_emg_a": _row(
        "mlp_emg_a", "EMG", "16-128-128-5", 64.6, 2.2, 0.038, 6.0e-4, 6.0e-7, 2.38e-8
    ),
    "mlp_emg_b": _row(
        "mlp_emg_b", "EMG", "16-230-5", 63.8, 1.4, 0.026, 4.0e-4, 4.0e-7, 1.04e-8
    ),
    "cnn_aps": _row(
        "cnn_aps",
        "APS",
        "8c3-2p-16c3-2p-32c3-512-5",
        96.2,
        3.3,
        4.83,
        1.0e-3,
        1.0e-6,
        4.83e-6,
    ),
    "mlp_aps": _row(
        "mlp_aps", "APS", "4x 400-210-5", 82.4, 8.5, 0.18, 4.0e-4, 4.0e-7, 7.2e-8
    ),
    "cnn_fused": _row(
        "cnn_fused",
        "EMG+APS",
        "16-128-128-5 + 8c3-2p-16c3-2p-32c3-512-5, 5-neuron fusion",
        94.8,
        2.0,
        4.90,
        1.2e-3,
        1.2e-6,
        5.88e-6,
    ),
    "mlp_fused": _row(
        "mlp_fused",
        "EMG+APS",
        "16-230-5 + 4x 400-210-5, 5-neuron fusion",
        83.4,
        2.8,
        0.33,
        6.0e-4,
        6.0e-7,
        1.98e-7,
    ),
}
