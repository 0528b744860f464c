"""1T1R crossbar mapping with device nonidealities and analog inference.

A trained network is converted layer by layer onto pairs of crossbar
column sets: positive weights program the "pos" column of a differential
pair toward high conductance, negative weights the "neg" column, and the
(digitally or analog) subtracted column currents recover the signed
vector-matrix product through Ohm's law. Nonidealities modeled here:

* per-device R_ON/R_OFF sampled from normal distributions (R_OFF gets
  twice the spread), clamped positive and order-enforced;
* a finite number of programmable conductance states; targets are chosen
  on the nominal state grid and then projected onto each device's own
  grid, mirroring program-then-verify flows;
* an ADC with a fixed per-column full-scale (the maximum possible column
  current) and a finite bit depth, saturating at the range ends;
* per-layer affine correction (a, b) fitted by least squares against the
  float pipeline on a calibration batch.

Wire resistance, sneak paths, and programming dynamics are out of scope;
with sigma = 0, unbounded states, and the ADC bypassed the mapped network
reproduces the float network to rounding error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import nncore
from .errors import NumericFault, ShapeMismatch
from .nncore import DENSE, LayerSpec, NetworkSpec, Tensor, WEIGHTED_KINDS

log = logging.getLogger(__name__)

PER_PAIR_DIFFERENTIAL = "per_pair_differential"
PER_COLUMN = "per_column"
ADC_MODES = (PER_PAIR_DIFFERENTIAL, PER_COLUMN)

TILE_ROWS = 256
TILE_COLS = 64  # one differential pair per ADC, so 32 logical columns


@dataclass
class DeviceConfig:
    """Distribution parameters for sampled device resistances.

    sigma is the sweep parameter: R_OFF ~ N(r_off_mean, (2*sigma)^2) and
    R_ON ~ N(r_on_mean, sigma^2) per device. n_states is the number of
    programmable conductance levels (None = continuum). positivity_floor
    is the lowest admissible resistance after clamping.
    """

    r_on_mean: float = 100.0
    r_off_mean: float = 2500.0
    sigma: float = 0.0
    n_states: int | None = 256
    seed: int = 0
    positivity_floor: float = 1.0

    def __post_init__(self):
        if self.n_states == "unbounded":
            self.n_states = None
        if self.n_states is not None:
            self.n_states = int(self.n_states)
            if self.n_states < 2:
                raise ShapeMismatch("n_states must be >= 2 or unbounded")
        if self.r_on_mean <= 0:
            raise ShapeMismatch("r_on_mean must be positive")
        if not self.r_on_mean < self.r_off_mean:
            raise ShapeMismatch("r_on_mean must be < r_off_mean")
        if self.sigma < 0:
            raise ShapeMismatch("sigma must be >= 0")
        if self.positivity_floor <= 0:
            raise ShapeMismatch("positivity_floor must be > 0")

    @property
    def g_on_nominal(self) -> float:
        return 1.0 / self.r_on_mean

    @property
    def g_off_nominal(self) -> float:
        return 1.0 / self.r_off_mean


@dataclass
class AdcConfig:
    """Column ADC: bits and fixed full-scale current.

    i_fullscale is rows_used * i_cell_max, the largest current a fully-on
    column can carry, so the converter never needs signal statistics. In
    per_pair_differential mode the subtracted pair current is digitized
    over [-i_fullscale, +i_fullscale]; in per_column mode each unipolar
    column is digitized over [0, i_fullscale] and subtracted digitally.
    """

    bits: int = 8
    i_fullscale: float = 1.0
    mode: str = PER_PAIR_DIFFERENTIAL

    def __post_init__(self):
        if self.bits < 1:
            raise ShapeMismatch("adc bits must be >= 1")
        if self.i_fullscale <= 0:
            raise ShapeMismatch("adc i_fullscale must be > 0")
        if self.mode not in ADC_MODES:
            raise ShapeMismatch(f"unknown adc mode {self.mode!r}")


@dataclass
class CrossbarTile:
    """One physical tile fragment: conductances plus per-device bounds."""

    conductance: Tensor
    g_on: Tensor
    g_off: Tensor

    def __post_init__(self):
        if not (self.conductance.shape == self.g_on.shape == self.g_off.shape):
            raise ShapeMismatch("tile matrices must share one shape")
        if self.conductance.ndim != 2:
            raise ShapeMismatch("tile matrices must be 2-d")
        if self.rows > TILE_ROWS or self.cols > TILE_COLS:
            raise ShapeMismatch(
                f"tile {self.conductance.shape} exceeds {TILE_ROWS}x{TILE_COLS}")
        if not np.all(self.g_off > 0):
            raise ShapeMismatch("g_off must be positive")
        if not np.all(self.g_on > self.g_off):
            raise ShapeMismatch("g_on must exceed g_off")
        if np.any(self.conductance < self.g_off) or np.any(self.conductance > self.g_on):
            raise ShapeMismatch("conductance outside its device bounds")

    @property
    def rows(self) -> int:
        return self.conductance.shape[0]

    @property
    def cols(self) -> int:
        return self.conductance.shape[1]


@dataclass
class MappedLayer:
    """A weighted layer realized as differential crossbar column sets.

    pos_tiles/neg_tiles hold identical geometries, chunked at 256 rows
    and 32 logical columns so one pos chunk plus its neg twin fill one
    physical 256x64 tile. scale_k converts differential siemens back to
    weight units; x_scale is the calibration maximum |input| used by the
    voltage encoding; (tuning_a, tuning_b) is the fitted affine
    correction. adc None means the ADC is bypassed (ideal readout).
    """

    kind: str
    pos_tiles: list[CrossbarTile]
    neg_tiles: list[CrossbarTile]
    row_sizes: list[int]
    col_size: int
    scale_k: float
    x_scale: float
    tuning_a: float
    tuning_b: float
    adc: AdcConfig | None
    bias: Tensor
    weight_shape: tuple
    clip_count: int = 0
    pos_blocks: list = field(default_factory=list, repr=False)
    neg_blocks: list = field(default_factory=list, repr=False)

    @property
    def tile_count(self) -> int:
        # pos and neg chunks pair up into physical tiles
        return len(self.pos_tiles)


@dataclass
class MappedNetwork:
    """Structural mirror of a NetworkSpec with weighted layers mapped."""

    branches: list[list]
    input_shapes: list[tuple]
    fusion_head: list | None
    v_read: float
    device: DeviceConfig
    clip_total: int = 0

    def mapped_layers(self):
        for layers in self.branches + ([self.fusion_head] if self.fusion_head else []):
            for layer in layers:
                if isinstance(layer, MappedLayer):
                    yield layer


# ---------------------------------------------------------------------------
# device sampling


def draw_resistance_pairs(cfg: DeviceConfig, rng, size=None):
    """Raw normal draws, before positivity handling: (r_on, r_off).

    R_OFF is drawn first with spread 2*sigma, then R_ON with spread
    sigma. Kept separate from the bounded sampler so distribution
    statistics can be tested on the untouched draws.
    """
    r_off = rng.normal(cfg.r_off_mean, 2.0 * cfg.sigma, size)
    r_on = rng.normal(cfg.r_on_mean, cfg.sigma, size)
    return r_on, r_off


def _bound_and_order(r_on, r_off, floor: float):
    """Clamp to the positivity floor, then enforce r_on < r_off strictly."""
    r_on = np.maximum(r_on, floor)
    r_off = np.maximum(r_off, floor)
    swap = r_on >= r_off
    r_on, r_off = np.where(swap, r_off, r_on), np.where(swap, r_on, r_off)
    # equal values (both clamped) would collapse the conductance window
    r_off = np.where(r_off <= r_on, r_on + floor, r_off)
    return r_on, r_off


def sample_device_pair(cfg: DeviceConfig, rng) -> tuple[float, float]:
    """One device's (r_on, r_off) in ohms, bounded and order-enforced."""
    r_on, r_off = draw_resistance_pairs(cfg, rng)
    r_on, r_off = _bound_and_order(np.asarray(r_on), np.asarray(r_off),
                                   cfg.positivity_floor)
    return float(r_on), float(r_off)


# ---------------------------------------------------------------------------
# weight <-> conductance mapping


def map_weight(w: float, w_max: float, g_on: float, g_off: float):
    """Differential mapping of one weight onto a (g_pos, g_neg) pair.

    The column matching the weight's sign is programmed to
    g_off + (|w|/w_max)*(g_on - g_off); the opposite column stays at
    g_off, so g_pos - g_neg is proportional to w. |w| above w_max is
    clipped.
    """
    if w_max <= 0:
        raise ShapeMismatch("w_max must be > 0")
    mag = min(abs(w), w_max)
    g = g_off + (mag / w_max) * (g_on - g_off)
    return (g, g_off) if w >= 0 else (g_off, g)


def _map_weight_matrix(w: Tensor, w_max: float, g_on: float, g_off: float):
    """Vectorized map_weight; returns (g_pos, g_neg, clip_count)."""
    clip_count = int(np.count_nonzero(np.abs(w) > w_max))
    mag = np.minimum(np.abs(w), w_max)
    g = g_off + (mag / w_max) * (g_on - g_off)
    g_pos = np.where(w >= 0, g, g_off)
    g_neg = np.where(w >= 0, g_off, g)
    return g_pos, g_neg, clip_count


def quantize_state(g, n_states, g_off, g_on):
    """Project conductance onto n_states evenly spaced levels.

    Levels span [g_off, g_on] inclusive; ties round toward g_off (the
    lower-current level); out-of-range inputs clamp first; None or
    "unbounded" returns g unchanged. Bounds may be arrays for per-device
    grids.
    """
    if n_states in (None, "unbounded"):
        return g
    n = int(n_states)
    if n < 2:
        raise ShapeMismatch("n_states must be >= 2 or unbounded")
    g = np.asarray(g, dtype=float)
    g_off = np.asarray(g_off, dtype=float)
    g_on = np.asarray(g_on, dtype=float)
    step = (g_on - g_off) / (n - 1)
    t = (np.clip(g, g_off, g_on) - g_off) / step
    idx = np.clip(np.ceil(t - 0.5), 0, n - 1)
    out = np.minimum(g_off + idx * step, g_on)  # guard the top level's ulp
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# analog arithmetic


def crossbar_vmm(v: Tensor, tile: CrossbarTile) -> Tensor:
    """Column currents of one tile for row voltages v: i = v @ G."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != tile.rows:
        raise ShapeMismatch(
            f"voltage vector length {v.shape[-1]} != tile rows {tile.rows}")
    return v @ tile.conductance


def adc_read(i_diff, adc: AdcConfig):
    """Quantize a current to the ADC's code grid; saturates at range ends.

    Uniform step i_fullscale / (2^bits - 1). per_pair_differential
    digitizes signed currents symmetrically (sign-magnitude, ties toward
    zero); per_column digitizes unipolar currents over [0, i_fullscale].
    """
    i = np.asarray(i_diff, dtype=float)
    top = 2 ** adc.bits - 1
    step = adc.i_fullscale / top
    if adc.mode == PER_COLUMN:
        code = np.clip(np.ceil(np.maximum(i, 0.0) / step - 0.5), 0, top)
        out = code * step
    else:
        code = np.clip(np.ceil(np.abs(i) / step - 0.5), 0, top)
        out = np.sign(i) * code * step
    return out if out.ndim else float(out)


def fit_affine_tuning(ideal, raw) -> tuple[float, float]:
    """Least-squares (a, b) minimizing sum((ideal - (a*raw + b))^2).

    Constant raw input is degenerate: returns (0, mean(ideal)) and logs a
    warning.
    """
    ideal = np.asarray(ideal, dtype=float).ravel()
    raw = np.asarray(raw, dtype=float).ravel()
    if ideal.size != raw.size:
        raise ShapeMismatch("ideal and raw must have equal element counts")
    if ideal.size < 2:
        raise ShapeMismatch("affine fit needs at least 2 points")
    raw_mean = raw.mean()
    centered = raw - raw_mean
    denom = float(centered @ centered)
    if denom == 0.0:
        log.warning("affine tuning fit is degenerate: raw output is constant")
        return 0.0, float(ideal.mean())
    a = float(centered @ (ideal - ideal.mean())) / denom
    b = float(ideal.mean() - a * raw_mean)
    return a, b


# ---------------------------------------------------------------------------
# network conversion


def convert_network(net: NetworkSpec, cfg: DeviceConfig, calib,
                    v_read: float = 0.3,
                    adc_bits: int | None = 8,
                    adc_mode: str = PER_PAIR_DIFFERENTIAL) -> MappedNetwork:
    """Map every weighted layer of a trained network onto crossbar tiles.

    calib is a nonempty input batch (same layout as forward inputs); it
    sets each layer's voltage-encoding scale and feeds the affine tuning
    fit, with activations propagated through the mapped pipeline so each
    layer is tuned under the conditions it will actually see. adc_bits
    None bypasses the ADC entirely (ideal readout).
    """
    nncore.validate_network(net)
    batched, _ = nncore._as_branch_batches(net, calib)
    if batched[0].shape[0] < 1:
        raise ShapeMismatch("calibration batch must be nonempty")
    if v_read <= 0:
        raise ShapeMismatch("v_read must be > 0")

    counter = 0
    clip_total = 0
    new_branches = []
    outs = []
    for layers, x in zip(net.branches, batched):
        mapped_layers = []
        for layer in layers:
            if layer.kind in WEIGHTED_KINDS:
                ml, x = _map_layer(layer, x, cfg, counter, v_read,
                                   adc_bits, adc_mode)
                counter += 1
                clip_total += ml.clip_count
                mapped_layers.append(ml)
            else:
                x = nncore._apply_layer(layer, x)
                mapped_layers.append(layer)
        new_branches.append(mapped_layers)
        outs.append(x.reshape(x.shape[0], -1))

    new_head = None
    if net.fusion_head:
        y = outs[0] if len(outs) == 1 else np.concatenate(outs, axis=1)
        new_head = []
        for layer in net.fusion_head:
            if layer.kind in WEIGHTED_KINDS:
                ml, y = _map_layer(layer, y, cfg, counter, v_read,
                                   adc_bits, adc_mode)
                counter += 1
                clip_total += ml.clip_count
                new_head.append(ml)
            else:
                y = nncore._apply_layer(layer, y)
                new_head.append(layer)

    return MappedNetwork(new_branches, list(net.input_shapes), new_head,
                         v_read, cfg, clip_total)


def _logical_matrix(layer: LayerSpec) -> Tensor:
    """Weights as a (rows=fan_in, cols=fan_out) crossbar-layout matrix."""
    if layer.kind == DENSE:
        return layer.weights.T
    c_out = layer.weights.shape[0]
    return layer.weights.reshape(c_out, -1).T


def _map_layer(layer, x_batch, cfg, layer_index, v_read, adc_bits, adc_mode):
    """Map one weighted layer; returns (MappedLayer, its calib outputs)."""
    w2 = _logical_matrix(layer)
    rows, cols = w2.shape
    w_max = float(np.max(np.abs(w2)))
    if w_max == 0.0:
        w_max = 1.0  # all-zero layer: any grid works, differential stays 0
    g_on_nom, g_off_nom = cfg.g_on_nominal, cfg.g_off_nominal

    # one stream per layer, fixed draw order: pos R_OFF, pos R_ON,
    # neg R_OFF, neg R_ON; stable addressing for any trial ordering
    rng = np.random.default_rng([cfg.seed, layer_index])
    bounds = []
    for _side in ("pos", "neg"):
        r_on, r_off = draw_resistance_pairs(cfg, rng, w2.shape)
        r_on, r_off = _bound_and_order(r_on, r_off, cfg.positivity_floor)
        bounds.append((1.0 / r_off, 1.0 / r_on))  # (g_off_dev, g_on_dev)

    targets = _map_weight_matrix(w2, w_max, g_on_nom, g_off_nom)
    g_pos_t, g_neg_t, clip_count = targets
    programmed = []
    for target, (g_off_dev, g_on_dev) in zip((g_pos_t, g_neg_t), bounds):
        # choose the level on the nominal grid, then program the nearest
        # level the actual device can hold
        nom = quantize_state(target, cfg.n_states, g_off_nom, g_on_nom)
        if cfg.n_states is None:
            dev = np.clip(nom, g_off_dev, g_on_dev)
        else:
            dev = quantize_state(nom, cfg.n_states, g_off_dev, g_on_dev)
        programmed.append(dev)
    g_pos, g_neg = programmed

    row_sizes = _chunk_sizes(rows, TILE_ROWS)
    pos_blocks, pos_tiles = _carve(g_pos, bounds[0], row_sizes)
    neg_blocks, neg_tiles = _carve(g_neg, bounds[1], row_sizes)

    adc = None
    if adc_bits is not None:
        i_cell_max = v_read * g_on_nom
        adc = AdcConfig(bits=adc_bits,
                        i_fullscale=max(row_sizes) * i_cell_max,
                        mode=adc_mode)

    flat, restore = _as_rows(layer, x_batch)
    x_scale = float(np.max(np.abs(flat))) if flat.size else 0.0
    if x_scale == 0.0:
        x_scale = 1.0
    scale_k = w_max / (g_on_nom - g_off_nom)

    ml = MappedLayer(
        kind=layer.kind, pos_tiles=pos_tiles, neg_tiles=neg_tiles,
        row_sizes=row_sizes, col_size=cols, scale_k=scale_k, x_scale=x_scale,
        tuning_a=1.0, tuning_b=0.0, adc=adc, bias=layer.bias.copy(),
        weight_shape=layer.weights.shape, clip_count=clip_count,
        pos_blocks=pos_blocks, neg_blocks=neg_blocks)

    raw = _read_linear(ml, flat, v_read)
    ideal = flat @ w2
    ml.tuning_a, ml.tuning_b = fit_affine_tuning(ideal, raw)
    z = ml.tuning_a * raw + ml.tuning_b + layer.bias
    return ml, restore(z)


def _chunk_sizes(total: int, chunk: int) -> list[int]:
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


def _carve(g: Tensor, dev_bounds, row_sizes):
    """Split a programmed matrix into row-partition blocks and tiles.

    Blocks are per row partition (compute units); tiles additionally
    chunk columns at 32 so each pos/neg twin pair fills one 256x64 tile.
    Tiles hold views into the blocks, not copies.
    """
    g_off_dev, g_on_dev = dev_bounds
    blocks, tiles = [], []
    r0 = 0
    for rsize in row_sizes:
        block = g[r0:r0 + rsize]
        blocks.append(block)
        for c0 in range(0, g.shape[1], TILE_COLS // 2):
            c1 = min(c0 + TILE_COLS // 2, g.shape[1])
            tiles.append(CrossbarTile(
                conductance=block[:, c0:c1],
                g_on=g_on_dev[r0:r0 + rsize, c0:c1],
                g_off=g_off_dev[r0:r0 + rsize, c0:c1]))
        r0 += rsize
    return blocks, tiles


def _as_rows(layer, x_batch):
    """Flatten a batch into VMM row vectors plus an inverse reshaper."""
    if layer.kind == DENSE:
        flat = x_batch.reshape(x_batch.shape[0], -1)
        return flat, lambda z: z
    c_out, c_in, k, _ = layer.weights.shape
    b, _, h, w = x_batch.shape
    oh, ow = h - k + 1, w - k + 1
    cols = nncore._im2col4(x_batch, k)          # (b, P, c_in*k*k)
    flat = cols.reshape(b * oh * ow, c_in * k * k)

    def restore(z):
        return z.reshape(b, oh * ow, c_out).transpose(0, 2, 1).reshape(
            b, c_out, oh, ow)

    return flat, restore


def _read_linear(ml: MappedLayer, flat: Tensor, v_read: float) -> Tensor:
    """Analog read of one mapped layer on flattened row inputs.

    Encodes inputs as voltages, runs each row partition through its pos
    and neg blocks, digitizes (unless bypassed), sums partitions
    digitally, and rescales currents back to weight-domain outputs.
    """
    v = flat * (v_read / ml.x_scale)
    total = np.zeros((flat.shape[0], ml.col_size))
    r0 = 0
    for p, rsize in enumerate(ml.row_sizes):
        vp = v[:, r0:r0 + rsize]
        i_pos = vp @ ml.pos_blocks[p]
        i_neg = vp @ ml.neg_blocks[p]
        if ml.adc is None:
            q = i_pos - i_neg
        elif ml.adc.mode == PER_PAIR_DIFFERENTIAL:
            q = adc_read(i_pos - i_neg, ml.adc)
        else:
            q = adc_read(i_pos, ml.adc) - adc_read(i_neg, ml.adc)
        total += q
        r0 += rsize
    return total * (ml.scale_k * ml.x_scale / v_read)


def mapped_forward(mnet: MappedNetwork, xs) -> Tensor:
    """Analog-pipeline inference; mirrors nncore.forward's conventions."""
    batched, single = _mapped_inputs(mnet, xs)
    outs = []
    for layers, x in zip(mnet.branches, batched):
        for layer in layers:
            x = _apply_any(layer, x, mnet.v_read)
        outs.append(x.reshape(x.shape[0], -1))
    y = outs[0] if len(outs) == 1 else np.concatenate(outs, axis=1)
    if mnet.fusion_head:
        for layer in mnet.fusion_head:
            y = _apply_any(layer, y, mnet.v_read)
    if not np.all(np.isfinite(y)):
        raise NumericFault("non-finite activation in mapped forward pass")
    return y[0] if single else y


def _mapped_inputs(mnet, xs):
    if isinstance(xs, np.ndarray):
        xs = [xs]
    xs = [np.asarray(x, dtype=float) for x in xs]
    if len(xs) != len(mnet.branches):
        raise ShapeMismatch(
            f"expected {len(mnet.branches)} input tensors, got {len(xs)}")
    batched, singles = [], []
    for x, shape in zip(xs, mnet.input_shapes):
        if x.shape == tuple(shape):
            batched.append(x[None])
            singles.append(True)
        elif x.shape[1:] == tuple(shape):
            batched.append(x)
            singles.append(False)
        else:
            raise ShapeMismatch(
                f"input shape {x.shape} does not match branch shape {shape}")
    if len(set(singles)) > 1:
        raise ShapeMismatch("mix of single-sample and batched branch inputs")
    return batched, singles[0]


def _apply_any(layer, x, v_read):
    if isinstance(layer, MappedLayer):
        return _apply_mapped(layer, x, v_read)
    return nncore._apply_layer(layer, x)


def _apply_mapped(ml: MappedLayer, x: Tensor, v_read: float) -> Tensor:
    if ml.kind == DENSE:
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != sum(ml.row_sizes):
            raise ShapeMismatch(
                f"mapped dense layer expects {sum(ml.row_sizes)} inputs, "
                f"got {flat.shape[1]}")
        raw = _read_linear(ml, flat, v_read)
        return ml.tuning_a * raw + ml.tuning_b + ml.bias
    c_out, c_in, k, _ = ml.weight_shape
    b, _, h, w = x.shape
    oh, ow = h - k + 1, w - k + 1
    cols = nncore._im2col4(x, k).reshape(b * oh * ow, c_in * k * k)
    raw = _read_linear(ml, cols, v_read)
    z = ml.tuning_a * raw + ml.tuning_b + ml.bias
    return z.reshape(b, oh * ow, c_out).transpose(0, 2, 1).reshape(
        b, c_out, oh, ow)
