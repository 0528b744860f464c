"""Synthetic benchmark data, tensor-container I/O, and the 3-fold harness.

The synthetic dataset stands in for a 5-gesture, two-modality recording
campaign taken over three sessions: EMG feature vectors are Gaussian
clusters around class centroids with a per-session additive shift, and
camera frames are class-indexed geometric patterns (bars and crosses)
under pixel noise.  Everything is deterministic per seed so the whole
pipeline reruns bit-identically without network access.

Tensors travel in the NTC container: a UTF-8 JSON manifest naming each
tensor's dtype/shape/offset plus one raw little-endian float32 blob,
offsets 8-byte aligned and non-overlapping.  Model profiles are NTC
files whose manifest carries the architecture string; weights use the
canonical layouts (dense out x in, conv c_out x c_in x k x k).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, MissingArtifactError, NtcFormatError
from .networks import IMAGE_SHAPE, build_from_arch
from .nncore import NetworkSpec, Tensor, WEIGHTED_KINDS

N_CLASSES = 5
N_SESSIONS = 3
EMG_DIM = 16

NTC_FORMAT = "ntc"
NTC_VERSION = 1
NTC_ALIGN = 8


# --------------------------------------------------------------------------
# dataset


@dataclass(frozen=True)
class Dataset:
    """One synthetic recording campaign; arrays are read-only after init."""

    emg_features: Tensor  # (n, 16) float64
    images: Tensor  # (n, 1, 32, 32) float64
    labels: Tensor  # (n,) int64 in [0, 5)
    session: Tensor  # (n,) int64 in {0, 1, 2}

    def __post_init__(self) -> None:
        n = self.emg_features.shape[0]
        if self.emg_features.shape != (n, EMG_DIM):
            raise ConfigError(f"emg_features must be (n, {EMG_DIM})")
        if self.images.shape != (n,) + IMAGE_SHAPE:
            raise ConfigError(f"images must be (n,) + {IMAGE_SHAPE}")
        if self.labels.shape != (n,) or self.session.shape != (n,):
            raise ConfigError("labels and session must be length n")
        if n and (self.labels.min() < 0 or self.labels.max() >= N_CLASSES):
            raise ConfigError(f"labels must lie in [0, {N_CLASSES})")
        if n and (self.session.min() < 0 or self.session.max() >= N_SESSIONS):
            raise ConfigError(f"session must lie in [0, {N_SESSIONS})")
        for arr in (self.emg_features, self.images, self.labels, self.session):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return self.emg_features.shape[0]


def class_centroids(scale: float = 2.0) -> np.ndarray:
    """EMG class centroids: the first 5 basis vectors of R^16, scaled."""
    c = np.zeros((N_CLASSES, EMG_DIM))
    c[np.arange(N_CLASSES), np.arange(N_CLASSES)] = scale
    return c


def class_pattern(label: int) -> np.ndarray:
    """Noise-free 32x32 frame for one class: bars/crosses at class positions.

    All strokes live inside the central 20x20 window (rows/cols 6..25) so
    the patch classifier sees them too.
    """
    if not 0 <= label < N_CLASSES:
        raise ConfigError(f"label must lie in [0, {N_CLASSES})")
    img = np.zeros((1, 32, 32))
    if label == 0:
        img[0, 8:10, 6:26] = 1.0  # high horizontal bar
    elif label == 1:
        img[0, 6:26, 8:10] = 1.0  # left vertical bar
    elif label == 2:
        img[0, 15:17, 6:26] = 1.0  # centered cross
        img[0, 6:26, 15:17] = 1.0
    elif label == 3:
        img[0, 22:24, 6:26] = 1.0  # low horizontal bar
    else:
        img[0, 6:26, 22:24] = 1.0  # right vertical bar
    return img


def gen_synthetic(
    n_per_class_session: int,
    seed: int,
    *,
    emg_std: float = 0.6,
    session_std: float = 0.3,
    pixel_std: float = 0.1,
    centroid_scale: float = 2.0,
) -> Dataset:
    """Generate a balanced 5-class, 3-session dataset, deterministic per seed."""
    if n_per_class_session < 1:
        raise ConfigError("n_per_class_session must be >= 1")
    rng = np.random.default_rng([seed, 0])
    centroids = class_centroids(centroid_scale)
    session_shift = rng.normal(0.0, session_std, size=(N_SESSIONS, EMG_DIM))

    emg, images, labels, session = [], [], [], []
    for s in range(N_SESSIONS):
        for c in range(N_CLASSES):
            n = n_per_class_session
            emg.append(
                centroids[c]
                + session_shift[s]
                + rng.normal(0.0, emg_std, size=(n, EMG_DIM))
            )
            images.append(
                class_pattern(c)
                + rng.normal(0.0, pixel_std, size=(n,) + IMAGE_SHAPE)
            )
            labels.append(np.full(n, c, dtype=np.int64))
            session.append(np.full(n, s, dtype=np.int64))
    return Dataset(
        emg_features=np.concatenate(emg),
        images=np.concatenate(images),
        labels=np.concatenate(labels),
        session=np.concatenate(session),
    )


def subset(ds: Dataset, idx: np.ndarray) -> Dataset:
    """View of a dataset at the given sample indices."""
    return Dataset(
        emg_features=ds.emg_features[idx].copy(),
        images=ds.images[idx].copy(),
        labels=ds.labels[idx].copy(),
        session=ds.session[idx].copy(),
    )


def cv_folds_by_session(ds: Dataset) -> list[tuple[np.ndarray, np.ndarray]]:
    """Session-grouped 3-fold CV: fold k tests on session k.

    Returns (train_idx, test_idx) pairs; the test sets partition the data.
    """
    present = np.unique(ds.session)
    if len(present) != N_SESSIONS:
        raise ConfigError(
            f"need all {N_SESSIONS} sessions present, got {present.tolist()}"
        )
    folds = []
    for s in range(N_SESSIONS):
        test = np.flatnonzero(ds.session == s)
        train = np.flatnonzero(ds.session != s)
        folds.append((train, test))
    return folds


@dataclass(frozen=True)
class FoldResult:
    """Per-fold accuracies with mean and sample (n-1) standard deviation."""

    accuracies: tuple[float, ...]
    mean: float
    std: float

    @classmethod
    def from_accuracies(cls, accs) -> "FoldResult":
        accs = tuple(float(a) for a in accs)
        if len(accs) != N_SESSIONS:
            raise ConfigError(f"expected {N_SESSIONS} fold accuracies")
        if any(not 0.0 <= a <= 1.0 for a in accs):
            raise ConfigError("accuracies must lie in [0, 1]")
        arr = np.array(accs)
        return cls(accuracies=accs, mean=float(arr.mean()), std=float(arr.std(ddof=1)))


def evaluate(model_runner, ds: Dataset) -> FoldResult:
    """Score a fixed predictor on each fold's held-out session.

    ``model_runner(emg, images) -> predicted labels`` is applied to the
    test split of each fold; training (if any) is the caller's business.
    """
    accs = []
    for _, test_idx in cv_folds_by_session(ds):
        pred = np.asarray(
            model_runner(ds.emg_features[test_idx], ds.images[test_idx])
        )
        accs.append(float(np.mean(pred == ds.labels[test_idx])))
    return FoldResult.from_accuracies(accs)


def dataset_to_csv(ds: Dataset, path) -> None:
    """Inspection CSV: sample_id, session, label, then the 16 EMG features."""
    path = Path(path)
    header = ["sample_id", "session", "label"] + [
        f"emg_{i}" for i in range(EMG_DIM)
    ]
    lines = [",".join(header)]
    for i in range(len(ds)):
        row = [str(i), str(int(ds.session[i])), str(int(ds.labels[i]))]
        row += [repr(float(v)) for v in ds.emg_features[i]]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# NTC container


def _blob_path(manifest_path: Path) -> Path:
    return manifest_path.with_suffix(".bin")


def save_ntc(tensors: dict[str, np.ndarray], path, meta: dict | None = None) -> None:
    """Write a tensor set as manifest (JSON, UTF-8) + raw float32 blob.

    Values are stored little-endian float32; offsets are 8-byte aligned.
    """
    path = Path(path)
    if not isinstance(tensors, dict):
        raise ConfigError("tensors must be a name -> array mapping")
    entries = []
    chunks = []
    cursor = 0
    for name, arr in tensors.items():
        if not name or not isinstance(name, str):
            raise ConfigError(f"bad tensor name {name!r}")
        data = np.ascontiguousarray(arr, dtype="<f4")
        pad = (-cursor) % NTC_ALIGN
        if pad:
            chunks.append(b"\x00" * pad)
            cursor += pad
        entries.append(
            {
                "name": name,
                "dtype": "f32",
                "shape": list(data.shape),
                "byte_offset": cursor,
                "byte_length": data.nbytes,
            }
        )
        chunks.append(data.tobytes())
        cursor += data.nbytes
    manifest = {
        "format": NTC_FORMAT,
        "version": NTC_VERSION,
        "blob": _blob_path(path).name,
        "meta": meta or {},
        "tensors": entries,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    _blob_path(path).write_bytes(b"".join(chunks))


def _manifest_error(msg: str) -> NtcFormatError:
    return NtcFormatError(f"malformed NTC manifest: {msg}")


def load_ntc(path, with_meta: bool = False):
    """Load an NTC container; returns {name: float32 array}.

    With ``with_meta=True`` returns ``(tensors, meta)``.  Any manifest
    inconsistency rejects the whole container, naming the offending
    tensor — nothing is partially applied.
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"NTC manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise _manifest_error(f"{path}: {exc}") from exc
    if not isinstance(manifest, dict):
        raise _manifest_error(f"{path}: top level must be an object")
    for key in ("format", "version", "blob", "tensors"):
        if key not in manifest:
            raise _manifest_error(f"{path}: missing key {key!r}")
    if manifest["format"] != NTC_FORMAT:
        raise _manifest_error(f"{path}: format {manifest['format']!r}")
    if manifest["version"] != NTC_VERSION:
        raise _manifest_error(f"{path}: unsupported version {manifest['version']!r}")
    blob_path = path.parent / manifest["blob"]
    if not blob_path.exists():
        raise MissingArtifactError(f"NTC blob not found: {blob_path}")
    blob = blob_path.read_bytes()

    entries = manifest["tensors"]
    if not isinstance(entries, list):
        raise _manifest_error(f"{path}: tensors must be a list")
    tensors: dict[str, np.ndarray] = {}
    spans: list[tuple[int, int, str]] = []
    for entry in entries:
        if not isinstance(entry, dict):
            raise _manifest_error(f"{path}: tensor entry must be an object")
        try:
            name = entry["name"]
            dtype = entry["dtype"]
            shape = tuple(int(v) for v in entry["shape"])
            offset = int(entry["byte_offset"])
            length = int(entry["byte_length"])
        except (KeyError, TypeError, ValueError) as exc:
            raise _manifest_error(f"{path}: bad tensor entry {entry!r}") from exc
        if not isinstance(name, str) or not name:
            raise _manifest_error(f"{path}: bad tensor name {name!r}")
        if name in tensors:
            raise NtcFormatError(f"duplicate tensor {name!r} in {path}")
        if dtype != "f32":
            raise NtcFormatError(
                f"tensor {name!r}: unsupported dtype {dtype!r} (only f32)"
            )
        if any(v < 0 for v in shape):
            raise NtcFormatError(f"tensor {name!r}: negative dimension in {shape}")
        expect = 4 * int(np.prod(shape, dtype=np.int64))
        if length != expect:
            raise NtcFormatError(
                f"tensor {name!r}: byte_length {length} != 4*prod{shape} = {expect}"
            )
        if offset < 0 or offset % NTC_ALIGN:
            raise NtcFormatError(
                f"tensor {name!r}: byte_offset {offset} not {NTC_ALIGN}-byte aligned"
            )
        if offset + length > len(blob):
            raise NtcFormatError(
                f"tensor {name!r}: needs bytes [{offset}, {offset + length}) "
                f"but blob {blob_path.name} holds {len(blob)} bytes"
            )
        spans.append((offset, offset + length, name))
        tensors[name] = np.frombuffer(
            blob, dtype="<f4", count=length // 4, offset=offset
        ).reshape(shape)
    spans.sort()
    for (_, prev_end, prev_name), (start, _, name) in zip(spans, spans[1:]):
        if start < prev_end:
            raise NtcFormatError(
                f"tensor {name!r} overlaps tensor {prev_name!r} in {path}"
            )
    meta = manifest.get("meta", {})
    if not isinstance(meta, dict):
        raise _manifest_error(f"{path}: meta must be an object")
    return (tensors, meta) if with_meta else tensors


# --------------------------------------------------------------------------
# dataset and model profiles over NTC


def save_dataset_ntc(ds: Dataset, path, extra_meta: dict | None = None) -> None:
    """Store a dataset; integer fields ride as exact small floats."""
    meta = {"kind": "dataset", "n": len(ds)}
    meta.update(extra_meta or {})
    save_ntc(
        {
            "emg_features": ds.emg_features,
            "images": ds.images,
            "labels": ds.labels,
            "session": ds.session,
        },
        path,
        meta=meta,
    )


def load_dataset_ntc(path) -> Dataset:
    tensors, meta = load_ntc(path, with_meta=True)
    if meta.get("kind") != "dataset":
        raise NtcFormatError(f"{path} is not a dataset container: meta={meta}")
    missing = {"emg_features", "images", "labels", "session"} - set(tensors)
    if missing:
        raise NtcFormatError(f"dataset container missing tensors {sorted(missing)}")
    return Dataset(
        emg_features=tensors["emg_features"].astype(np.float64),
        images=tensors["images"].astype(np.float64),
        labels=np.rint(tensors["labels"]).astype(np.int64),
        session=np.rint(tensors["session"]).astype(np.int64),
    )


def _weighted_layers(net: NetworkSpec):
    """(tensor name stem, layer) pairs in canonical order."""
    out = []
    for b, branch in enumerate(net.branches):
        idx = 0
        for layer in branch:
            if layer.kind in WEIGHTED_KINDS:
                stem = f"layer{idx}" if len(net.branches) == 1 else f"branch{b}.layer{idx}"
                out.append((stem, layer))
                idx += 1
    if net.fusion_head:
        idx = 0
        for layer in net.fusion_head:
            if layer.kind in WEIGHTED_KINDS:
                stem = "head" if idx == 0 else f"head{idx}"
                out.append((stem, layer))
                idx += 1
    return out


def save_model_ntc(
    net: NetworkSpec, arch: str, path, extra_meta: dict | None = None
) -> None:
    """Store a trained network as NTC: arch string in meta, canonical weights."""
    meta = {"kind": "model", "arch": arch}
    meta.update(extra_meta or {})
    tensors: dict[str, np.ndarray] = {}
    for stem, layer in _weighted_layers(net):
        tensors[f"{stem}.weights"] = layer.weights
        tensors[f"{stem}.bias"] = layer.bias
    save_ntc(tensors, path, meta=meta)


def load_model_ntc(path) -> tuple[NetworkSpec, dict]:
    """Rebuild a network from a model container.

    The skeleton comes from the manifest's architecture string; every
    weighted layer must find its tensors, with matching shapes.
    """
    tensors, meta = load_ntc(path, with_meta=True)
    if meta.get("kind") != "model" or "arch" not in meta:
        raise NtcFormatError(f"{path} is not a model container: meta={meta}")
    net = build_from_arch(meta["arch"], np.random.default_rng(0))
    for stem, layer in _weighted_layers(net):
        for attr, suffix in (("weights", "weights"), ("bias", "bias")):
            name = f"{stem}.{suffix}"
            if name not in tensors:
                raise NtcFormatError(f"model container missing tensor {name!r}")
            value = tensors[name].astype(np.float64)
            if value.shape != getattr(layer, attr).shape:
                raise NtcFormatError(
                    f"tensor {name!r}: shape {value.shape} does not match "
                    f"architecture {meta['arch']!r} "
                    f"(expected {getattr(layer, attr).shape})"
                )
            setattr(layer, attr, value)
    return net, meta
