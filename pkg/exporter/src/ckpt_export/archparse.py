"""Architecture-string grammar and the parameter shapes it implies.

Grammar (dash-separated tokens):

- ``N``     dense layer of output width N; in a dense-only chain the first
            integer is the input width, not a layer;
- ``NcK``   conv layer, N output channels, K x K kernels (valid padding,
            stride 1);
- ``Np``    N x N max-pool (floor semantics: trailing rows/cols drop);
- ``a+b>W`` two-branch fused network whose concatenated branch outputs
            feed one dense fusion head of width W.

Conv branches consume IMAGE_SHAPE inputs; that shape is fixed at
1 x 32 x 32 because the NTC model container records only the architecture
string, and its consumers rebuild conv networks under the same assumption.

``expected_params`` turns a string into the ordered list of (name, shapes)
the matching checkpoint must provide, using the container's tensor naming:
``layer{i}`` per branch (prefixed ``branch{b}.`` when fused) and ``head``
for the fusion layer.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import ExportError

IMAGE_SHAPE = (1, 32, 32)

_CONV_RE = re.compile(r"^(\d+)c(\d+)$")
_POOL_RE = re.compile(r"^(\d+)p$")
_DENSE_RE = re.compile(r"^(\d+)$")


@dataclass(frozen=True)
class ParamSpec:
    """One weighted layer the checkpoint must supply."""

    name: str  # NTC tensor stem, e.g. "layer0" or "branch1.layer2" or "head"
    kind: str  # "dense" | "conv"
    weight_shape: tuple[int, ...]
    bias_shape: tuple[int, ...]


def _parse_tokens(branch: str) -> list[tuple[str, int, int]]:
    """Token list [(kind, value, kernel)] for one branch string."""
    if not branch:
        raise ExportError("empty architecture branch")
    tokens = []
    for tok in branch.split("-"):
        if m := _CONV_RE.match(tok):
            tokens.append(("conv", int(m.group(1)), int(m.group(2))))
        elif m := _POOL_RE.match(tok):
            tokens.append(("pool", int(m.group(1)), 0))
        elif m := _DENSE_RE.match(tok):
            tokens.append(("dense", int(m.group(1)), 0))
        else:
            raise ExportError(f"unrecognized architecture token {tok!r}")
    for kind, value, kernel in tokens:
        if value <= 0 or (kind == "conv" and kernel <= 0):
            raise ExportError(f"non-positive size in architecture {branch!r}")
    seen_dense = False
    for kind, _, _ in tokens:
        if kind == "dense":
            seen_dense = True
        elif seen_dense:
            raise ExportError(
                f"{branch!r}: conv/pool tokens cannot follow a dense layer")
    if tokens[-1][0] != "dense":
        raise ExportError(f"{branch!r}: architecture must end in a dense layer")
    return tokens


def _branch_params(branch: str, stem_prefix: str) -> tuple[list[ParamSpec], int]:
    """ParamSpecs for one branch plus its output width."""
    tokens = _parse_tokens(branch)
    is_conv = tokens[0][0] != "dense"
    if is_conv:
        shape: tuple[int, ...] = IMAGE_SHAPE
        start = 0
    else:
        if len(tokens) < 2:
            raise ExportError(
                f"{branch!r}: dense chain needs an input width and at "
                "least one layer")
        shape = (tokens[0][1],)
        start = 1

    params: list[ParamSpec] = []
    idx = 0
    for kind, value, kernel in tokens[start:]:
        if kind == "conv":
            c, h, w = shape
            if h < kernel or w < kernel:
                raise ExportError(
                    f"{branch!r}: {kernel}x{kernel} kernel exceeds "
                    f"{h}x{w} input")
            params.append(ParamSpec(f"{stem_prefix}layer{idx}", "conv",
                                    (value, c, kernel, kernel), (value,)))
            shape = (value, h - kernel + 1, w - kernel + 1)
            idx += 1
        elif kind == "pool":
            c, h, w = shape
            if h < value or w < value:
                raise ExportError(f"{branch!r}: {value}x{value} pool exceeds "
                                  f"{h}x{w} input")
            shape = (c, h // value, w // value)
        else:
            fan_in = math.prod(shape)
            params.append(ParamSpec(f"{stem_prefix}layer{idx}", "dense",
                                    (value, fan_in), (value,)))
            shape = (value,)
            idx += 1
    return params, shape[0]


def expected_params(arch: str) -> list[ParamSpec]:
    """Ordered weighted-layer shapes implied by an architecture string."""
    arch = arch.strip()
    if arch.count(">") > 1:
        raise ExportError(f"{arch!r}: at most one fusion head")
    if ">" not in arch:
        if "+" in arch:
            raise ExportError(f"{arch!r}: fused branches need a '>W' head")
        params, _ = _branch_params(arch, "")
        return params

    body, _, head = arch.partition(">")
    if not _DENSE_RE.match(head):
        raise ExportError(f"{arch!r}: fusion head must be a single width")
    branches = body.split("+")
    if len(branches) != 2:
        raise ExportError(f"{arch!r}: fused networks take exactly two branches")
    params: list[ParamSpec] = []
    widths = []
    for b, branch in enumerate(branches):
        branch_params, width = _branch_params(branch, f"branch{b}.")
        params.extend(branch_params)
        widths.append(width)
    head_width = int(head)
    if head_width <= 0:
        raise ExportError(f"{arch!r}: non-positive fusion width")
    params.append(ParamSpec("head", "dense",
                            (head_width, sum(widths)), (head_width,)))
    return params
