"""Fixed-point quantization of network weights with accuracy-delta reporting.

Models the numeric core of a fixed-point compilation flow: weights and
biases are rounded to a signed two's-complement grid (round-half-to-even,
symmetric saturation) and the quantized network is evaluated with the
same protocol as the float one so the accuracy cost of a given word
length is directly measurable.  Activations can be quantized at layer
boundaries with the same format family via :func:`fx_forward`.

Default format is WL=16 / FL=13 — a common inference choice, exposed
rather than asserted; per-layer formats are accepted everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nncore
from .errors import ConfigError
from .nncore import NetworkSpec, Tensor, WEIGHTED_KINDS, copy_network, forward

DEFAULT_WORD_LENGTH = 16
DEFAULT_FRACTION_LENGTH = 13


@dataclass(frozen=True)
class FixedPointFormat:
    """Signed fixed-point format: WL total bits, FL fraction bits."""

    word_length: int = DEFAULT_WORD_LENGTH
    fraction_length: int = DEFAULT_FRACTION_LENGTH
    signed: bool = True

    def __post_init__(self) -> None:
        if not self.signed:
            raise ConfigError("only signed fixed-point formats are supported")
        if not 1 <= self.fraction_length < self.word_length <= 32:
            raise ConfigError(
                "need 1 <= fraction_length < word_length <= 32, got "
                f"WL={self.word_length} FL={self.fraction_length}"
            )

    @property
    def scale(self) -> float:
        return float(2**self.fraction_length)

    @property
    def min_value(self) -> float:
        return -(2 ** (self.word_length - 1)) / self.scale

    @property
    def max_value(self) -> float:
        return (2 ** (self.word_length - 1) - 1) / self.scale


def fx_quantize(w, fmt: FixedPointFormat):
    """Round to the fmt grid (half-to-even) and saturate symmetrically.

    Accepts scalars or arrays; returns the same shape in float64.
    """
    arr = np.asarray(w, dtype=np.float64)
    lo = -(2 ** (fmt.word_length - 1))
    hi = 2 ** (fmt.word_length - 1) - 1
    codes = np.clip(np.rint(arr * fmt.scale), lo, hi)
    out = codes / fmt.scale
    return float(out) if np.isscalar(w) or out.ndim == 0 else out


def _formats_for(net: NetworkSpec, fmt_per_layer) -> list[FixedPointFormat]:
    n_weighted = sum(
        1
        for branch in net.branches + ([net.fusion_head] if net.fusion_head else [])
        for layer in branch
        if layer.kind in WEIGHTED_KINDS
    )
    if isinstance(fmt_per_layer, FixedPointFormat):
        return [fmt_per_layer] * n_weighted
    fmts = list(fmt_per_layer)
    if len(fmts) != n_weighted:
        raise ConfigError(
            f"got {len(fmts)} formats for {n_weighted} weighted layers"
        )
    if not all(isinstance(f, FixedPointFormat) for f in fmts):
        raise ConfigError("fmt_per_layer must contain FixedPointFormat entries")
    return fmts


def quantize_network(
    net: NetworkSpec,
    fmt_per_layer: FixedPointFormat | Sequence[FixedPointFormat],
) -> NetworkSpec:
    """Quantize every weight and bias; structure is unchanged.

    ``fmt_per_layer`` is either one format for all weighted layers or a
    sequence with one format per weighted layer, in branch order with
    the fusion head last.
    """
    fmts = _formats_for(net, fmt_per_layer)
    qnet = copy_network(net)
    it = iter(fmts)
    for branch in qnet.branches + ([qnet.fusion_head] if qnet.fusion_head else []):
        for layer in branch:
            if layer.kind in WEIGHTED_KINDS:
                fmt = next(it)
                layer.weights = fx_quantize(layer.weights, fmt)
                layer.bias = fx_quantize(layer.bias, fmt)
    return qnet


def fx_forward(
    net: NetworkSpec, xs, fmt: FixedPointFormat | None = None
) -> Tensor:
    """Forward pass quantizing activations at every layer boundary.

    Inputs and each layer's output are snapped to ``fmt`` (weights are
    used as stored — quantize them first with :func:`quantize_network`).
    """
    fmt = fmt or FixedPointFormat()
    batched, single = nncore._as_branch_batches(net, xs)
    branch_outs = []
    for branch, x in zip(net.branches, batched):
        x = fx_quantize(x, fmt)
        for layer in branch:
            x = fx_quantize(nncore._apply_layer(layer, x), fmt)
        branch_outs.append(x.reshape(x.shape[0], -1))
    y = np.concatenate(branch_outs, axis=1)
    if net.fusion_head:
        for layer in net.fusion_head:
            y = fx_quantize(nncore._apply_layer(layer, y), fmt)
    return y[0] if single else y


def _accuracy(net: NetworkSpec, xs, labels: np.ndarray) -> float:
    probs = forward(net, xs)
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def fx_accuracy_delta(
    net: NetworkSpec, qnet: NetworkSpec, data
) -> tuple[float, float, float]:
    """Evaluate float and quantized networks on the same samples.

    ``data`` is ``(xs, labels)`` in the training convention: ``xs`` is a
    batch (or list of per-branch batches), ``labels`` integer classes.
    Returns (acc_float, acc_fixed, delta) with delta = float − fixed.
    """
    xs, labels = data
    labels = np.asarray(labels)
    acc_float = _accuracy(net, xs, labels)
    acc_fixed = _accuracy(qnet, xs, labels)
    return acc_float, acc_fixed, acc_float - acc_fixed
