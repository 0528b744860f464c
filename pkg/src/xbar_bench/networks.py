"""Benchmark network registry and architecture-string parsing.

Six fixed networks are benchmarked: two EMG MLPs, two image networks
(one CNN, one patch MLP), and two sensor-fusion networks that join an
EMG branch with an image branch through a small dense head.

Architecture strings use a compact grammar, e.g. ``16-128-128-5`` for a
dense chain (first token is the input width) and ``8c3-2p-16c3-2p-32c3-512-5``
for a conv net (``NcK`` = N output channels with a K x K kernel, ``Np`` =
non-overlapping N x N max pool).  Fused networks are written
``<emg arch>+<image arch>>5``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .nncore import (
    LayerSpec,
    NetworkSpec,
    conv2d,
    dense,
    layer_output_shape,
    maxpool,
    relu,
    softmax_layer,
)

IMAGE_SHAPE = (1, 32, 32)
EMG_WIDTH = 16
N_CLASSES = 5

# Patch-MLP preprocessing: the 32x32 frame is reduced to its central
# 20x20 window before flattening to the 400-wide input.
PATCH_SIDE = 20


@dataclass(frozen=True)
class BenchmarkNet:
    """Registry entry for one benchmark network.

    ``replicas`` lists, per branch, how many parallel hardware copies the
    platform lays out (the patch MLP runs four copies side by side).
    Replication affects hardware cost only, never the functional model.
    """

    name: str
    arch: str
    modality: str  # "emg", "image", or "fused"
    input_widths: tuple[int, ...]
    replicas: tuple[int, ...] = (1,)


REGISTRY: dict[str, BenchmarkNet] = {
    "mlp_emg_a": BenchmarkNet("mlp_emg_a", "16-128-128-5", "emg", (16,)),
    "mlp_emg_b": BenchmarkNet("mlp_emg_b", "16-230-5", "emg", (16,)),
    "cnn_aps": BenchmarkNet(
        "cnn_aps", "8c3-2p-16c3-2p-32c3-512-5", "image", (1024,)
    ),
    "mlp_aps": BenchmarkNet("mlp_aps", "400-210-5", "image", (400,), replicas=(4,)),
    "cnn_fused": BenchmarkNet(
        "cnn_fused",
        "16-128-128-5+8c3-2p-16c3-2p-32c3-512-5>5",
        "fused",
        (16, 1024),
        replicas=(1, 1),
    ),
    "mlp_fused": BenchmarkNet(
        "mlp_fused", "16-230-5+400-210-5>5", "fused", (16, 400), replicas=(1, 4)
    ),
}

_CONV_RE = re.compile(r"^(\d+)c(\d+)$")
_POOL_RE = re.compile(r"^(\d+)p$")
_DENSE_RE = re.compile(r"^(\d+)$")


@dataclass
class ParsedArch:
    """Structured form of a single-branch architecture string."""

    tokens: list[tuple[str, int, int]] = field(default_factory=list)
    # tokens are ("dense", width, 0) | ("conv", channels, kernel) | ("pool", size, 0)

    @property
    def is_conv(self) -> bool:
        return any(kind != "dense" for kind, _, _ in self.tokens)

    @property
    def dense_input_width(self) -> int:
        if self.is_conv:
            raise ConfigError("conv architectures have no leading dense width")
        return self.tokens[0][1]

    @property
    def output_width(self) -> int:
        kind, value, _ = self.tokens[-1]
        if kind != "dense":
            raise ConfigError("architecture must end with a dense layer")
        return value


def parse_arch(arch: str) -> ParsedArch:
    """Parse a single-branch architecture string into typed tokens.

    Dense chains list widths (the first being the input width); conv
    chains list conv/pool stages followed by dense widths.
    """
    if not arch or not arch.strip():
        raise ConfigError("empty architecture string")
    parsed = ParsedArch()
    for token in arch.strip().split("-"):
        m = _CONV_RE.match(token)
        if m:
            parsed.tokens.append(("conv", int(m.group(1)), int(m.group(2))))
            continue
        m = _POOL_RE.match(token)
        if m:
            parsed.tokens.append(("pool", int(m.group(1)), 0))
            continue
        m = _DENSE_RE.match(token)
        if m:
            parsed.tokens.append(("dense", int(m.group(1)), 0))
            continue
        raise ConfigError(f"cannot parse architecture token {token!r} in {arch!r}")
    if not parsed.tokens:
        raise ConfigError(f"architecture {arch!r} has no layers")
    if parsed.tokens[-1][0] != "dense":
        raise ConfigError(f"architecture {arch!r} must end with a dense width")
    for kind, value, kernel in parsed.tokens:
        if value <= 0 or (kind == "conv" and kernel <= 0):
            raise ConfigError(f"non-positive size in architecture {arch!r}")
    # Conv/pool stages may not follow a dense stage.
    seen_dense = False
    for kind, _, _ in parsed.tokens:
        if kind == "dense":
            seen_dense = True
        elif seen_dense:
            raise ConfigError(f"conv/pool after dense in architecture {arch!r}")
    return parsed


def _he_dense(rng: np.random.Generator, n_in: int, n_out: int) -> LayerSpec:
    w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
    return dense(w, np.zeros(n_out))


def _he_conv(
    rng: np.random.Generator, c_in: int, c_out: int, k: int
) -> LayerSpec:
    fan_in = c_in * k * k
    w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in, k, k))
    return conv2d(w, np.zeros(c_out))


def _build_branch(
    parsed: ParsedArch,
    rng: np.random.Generator,
    image_shape: tuple[int, int, int],
    *,
    terminal: bool,
) -> tuple[list[LayerSpec], tuple[int, ...]]:
    """Build one branch; ReLU follows every weighted layer except a terminal output."""
    layers: list[LayerSpec] = []
    if parsed.is_conv:
        shape: tuple[int, ...] = image_shape
    else:
        shape = (parsed.dense_input_width,)
    input_shape = shape

    weighted = [i for i, (kind, _, _) in enumerate(parsed.tokens) if kind != "pool"]
    last_weighted = weighted[-1]

    start = 0 if parsed.is_conv else 1  # dense chains: first token is input width
    for i in range(start, len(parsed.tokens)):
        kind, value, kernel = parsed.tokens[i]
        if kind == "conv":
            c_in = shape[0]
            layer = _he_conv(rng, c_in, value, kernel)
        elif kind == "pool":
            layer = maxpool(value)
        else:  # dense
            n_in = int(np.prod(shape))
            layer = _he_dense(rng, n_in, value)
        layers.append(layer)
        shape = layer_output_shape(layer, shape)
        if kind != "pool" and not (terminal and i == last_weighted):
            layers.append(relu())
    return layers, input_shape


def build_from_arch(
    arch: str,
    rng: np.random.Generator,
    image_shape: tuple[int, int, int] = IMAGE_SHAPE,
) -> NetworkSpec:
    """Instantiate any architecture string with He-scaled random weights.

    Handles both single-branch strings and fused ``a+b>head`` strings.
    """
    if ">" not in arch:
        parsed = parse_arch(arch)
        layers, input_shape = _build_branch(
            parsed, rng, image_shape, terminal=True
        )
        layers.append(softmax_layer())
        return NetworkSpec(branches=[layers], input_shapes=[input_shape])

    branch_archs, head_width = _split_fused_arch(arch)
    branches: list[list[LayerSpec]] = []
    input_shapes: list[tuple[int, ...]] = []
    widths: list[int] = []
    for branch_arch in branch_archs:
        parsed = parse_arch(branch_arch)
        layers, input_shape = _build_branch(
            parsed, rng, image_shape, terminal=False
        )
        branches.append(layers)
        input_shapes.append(input_shape)
        widths.append(parsed.output_width)
    head_in = sum(widths)
    fusion_head = [_he_dense(rng, head_in, head_width), softmax_layer()]
    return NetworkSpec(
        branches=branches, input_shapes=input_shapes, fusion_head=fusion_head
    )


def build_network(
    name: str,
    seed: int = 0,
    image_shape: tuple[int, int, int] = IMAGE_SHAPE,
) -> NetworkSpec:
    """Instantiate a registry network with He-scaled random weights."""
    netdef = REGISTRY.get(name)
    if netdef is None:
        raise ConfigError(
            f"unknown network {name!r}; choose from {sorted(REGISTRY)}"
        )
    rng = np.random.default_rng([seed, _name_index(name)])
    return build_from_arch(netdef.arch, rng, image_shape)


def _split_fused_arch(arch: str) -> tuple[list[str], int]:
    if ">" not in arch:
        raise ConfigError(f"fused architecture {arch!r} missing '>head' suffix")
    body, head = arch.rsplit(">", 1)
    try:
        head_width = int(head)
    except ValueError as exc:
        raise ConfigError(f"bad fusion head width in {arch!r}") from exc
    branch_archs = body.split("+")
    if len(branch_archs) < 2:
        raise ConfigError(f"fused architecture {arch!r} needs two branches")
    return branch_archs, head_width


def _name_index(name: str) -> int:
    return sorted(REGISTRY).index(name)


def center_patch(images: np.ndarray, side: int = PATCH_SIDE) -> np.ndarray:
    """Crop the central ``side x side`` window and flatten.

    Accepts (c, h, w) or (n, c, h, w); returns (side*side,) or (n, side*side)
    for single-channel inputs.
    """
    arr = np.asarray(images, dtype=np.float64)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1] != 1:
        raise ConfigError(
            f"center_patch expects single-channel images, got shape {arr.shape}"
        )
    _, _, h, w = arr.shape
    if h < side or w < side:
        raise ConfigError(f"images {h}x{w} smaller than patch {side}x{side}")
    top = (h - side) // 2
    left = (w - side) // 2
    out = arr[:, 0, top : top + side, left : left + side].reshape(arr.shape[0], -1)
    return out[0] if single else out


def branch_inputs(
    name: str, emg: np.ndarray | None, images: np.ndarray | None
) -> list[np.ndarray]:
    """Assemble the per-branch input list for a registry network.

    EMG networks take the 16-d feature vector; image networks take the
    (1, 32, 32) frame (the patch MLP sees the flattened central 20x20
    window); fused networks take both in (emg, image) order.
    """
    netdef = REGISTRY.get(name)
    if netdef is None:
        raise ConfigError(f"unknown network {name!r}")

    def need_emg() -> np.ndarray:
        if emg is None:
            raise ConfigError(f"network {name!r} needs EMG features")
        return np.asarray(emg, dtype=np.float64)

    def need_images() -> np.ndarray:
        if images is None:
            raise ConfigError(f"network {name!r} needs image frames")
        return np.asarray(images, dtype=np.float64)

    if netdef.modality == "emg":
        return [need_emg()]
    if name == "cnn_aps":
        return [need_images()]
    if name == "mlp_aps":
        return [center_patch(need_images())]
    if name == "cnn_fused":
        return [need_emg(), need_images()]
    if name == "mlp_fused":
        return [need_emg(), center_patch(need_images())]
    raise ConfigError(f"no input recipe for network {name!r}")
