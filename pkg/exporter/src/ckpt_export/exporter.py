"""Convert a torch checkpoint into an NTC model container.

The checkpoint must be a saved ``state_dict`` (or a dict wrapping one
under a ``"state_dict"`` key) whose parameter groups line up, in
registration order, with the weighted layers of the declared architecture
string. torch's native layouts — dense ``(out, in)``, conv
``(c_out, c_in, k, k)`` — already coincide with the container's canonical
layouts, so the conversion is a verified cast to float32, not a
re-ordering. Sources with other layouts would need a transpose step here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .archparse import ParamSpec, expected_params
from .errors import (
    CheckpointFormatError,
    ExportError,
    MissingCheckpointError,
    ShapeMismatchError,
    UnmatchedParameterError,
)
from .ntc import write_ntc

MODEL_FILE = "model.ntc"


@dataclass(frozen=True)
class ExportManifest:
    """What an export did: source-to-container name map, arch, dtype."""

    arch: str
    mapping: dict[str, str] = field(default_factory=dict)  # source key -> tensor name
    dtype: str = "f32"


def _load_state_dict(in_path: Path) -> dict[str, torch.Tensor]:
    try:
        obj = torch.load(in_path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointFormatError(f"cannot read checkpoint {in_path}: {exc}") from exc
    if isinstance(obj, dict) and isinstance(obj.get("state_dict"), dict):
        obj = obj["state_dict"]
    if not isinstance(obj, dict) or not obj:
        raise CheckpointFormatError(
            f"{in_path}: expected a non-empty state_dict, got {type(obj).__name__}")
    bad = [k for k, v in obj.items() if not isinstance(v, torch.Tensor)]
    if bad:
        raise CheckpointFormatError(
            f"{in_path}: non-tensor entries in state_dict: {sorted(bad)}")
    return obj


def _group_parameters(state: dict[str, torch.Tensor]) -> list[tuple[str, dict]]:
    """[(base, {"weight": array, "bias": array})] in registration order."""
    groups: dict[str, dict[str, np.ndarray]] = {}
    order: list[str] = []
    stray: list[str] = []
    for key, tensor in state.items():
        base, _, leaf = key.rpartition(".")
        if leaf not in ("weight", "bias"):
            stray.append(key)
            continue
        if base not in groups:
            groups[base] = {}
            order.append(base)
        groups[base][leaf] = tensor.detach().cpu().numpy()
    if stray:
        raise UnmatchedParameterError(
            f"checkpoint entries with no place in the architecture: {sorted(stray)}")
    for base in order:
        missing = {"weight", "bias"} - set(groups[base])
        if missing:
            raise CheckpointFormatError(
                f"parameter group {base or '<root>'!r} lacks {sorted(missing)}")
    return [(base, groups[base]) for base in order]


def _match(groups: list[tuple[str, dict]], params: list[ParamSpec]) -> dict[str, str]:
    """Verify group shapes against the architecture; return the name map.

    Shapes are checked before counts so a depth disagreement surfaces as a
    shape mismatch at the first diverging layer rather than a bare tally.
    """
    mapping: dict[str, str] = {}
    for (base, tensors), spec in zip(groups, params):
        for leaf, want in (("weight", spec.weight_shape), ("bias", spec.bias_shape)):
            got = tuple(tensors[leaf].shape)
            if got != want:
                source = f"{base}.{leaf}" if base else leaf
                raise ShapeMismatchError(
                    f"layer {spec.name!r} ({spec.kind}): checkpoint tensor "
                    f"{source!r} has shape {got}, architecture requires {want}")
        suffix = {"weight": "weights", "bias": "bias"}
        for leaf in ("weight", "bias"):
            source = f"{base}.{leaf}" if base else leaf
            mapping[source] = f"{spec.name}.{suffix[leaf]}"
    if len(groups) > len(params):
        extras = [base or "<root>" for base, _ in groups[len(params):]]
        raise UnmatchedParameterError(
            f"checkpoint has {len(groups)} parameter groups but the "
            f"architecture takes {len(params)}; unmatched: {extras}")
    if len(groups) < len(params):
        raise ExportError(
            f"checkpoint has {len(groups)} parameter groups but the "
            f"architecture needs {len(params)}; first unfilled layer: "
            f"{params[len(groups)].name!r}")
    return mapping


def export_checkpoint(in_path, arch_string: str, out_path) -> Path:
    """Export a checkpoint as an NTC model container; returns the manifest path.

    ``out_path`` may be a directory (the container is written as
    ``model.ntc`` + ``model.bin`` inside it) or an explicit ``.ntc`` path.
    Exporting the same checkpoint twice yields byte-identical files.
    """
    in_path = Path(in_path)
    if not in_path.exists():
        raise MissingCheckpointError(f"checkpoint not found: {in_path}")
    params = expected_params(arch_string)
    groups = _group_parameters(_load_state_dict(in_path))
    mapping = _match(groups, params)
    manifest = ExportManifest(arch=arch_string.strip(), mapping=mapping)

    tensors: dict[str, np.ndarray] = {}
    for (base, group), spec in zip(groups, params):
        tensors[f"{spec.name}.weights"] = group["weight"].astype(np.float32)
        tensors[f"{spec.name}.bias"] = group["bias"].astype(np.float32)

    out_path = Path(out_path)
    target = out_path if out_path.suffix == ".ntc" else out_path / MODEL_FILE
    meta = {
        "kind": "model",
        "arch": manifest.arch,
        "source": {"checkpoint": in_path.name, "mapping": manifest.mapping},
    }
    return write_ntc(tensors, target, meta=meta)
