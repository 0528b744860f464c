"""Tiled-crossbar hardware cost model: latency, energy, EDP, and area.

The model lays every weighted layer out on 256x64 1T1R tiles with
differential column pairs.  Convolution kernels are fully duplicated —
one logical column set per output spatial position — so each layer
finishes in a single bit-serial ADC conversion cycle (200 ns at 5 MHz),
and per-inference latency is simply the weighted-layer depth times that
cycle.  Energy counts active ADC conversions plus the worst-case read
current through every mapped cell; digital partial-sum addition is
treated as free in both time and energy.

Branches of a fusion network run on disjoint tile sets concurrently, so
fused latency is the deepest branch plus one cycle for the fusion head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .memsim import ADC_MODES, PER_PAIR_DIFFERENTIAL
from .networks import REGISTRY, build_network
from .nncore import CONV2D, DENSE, LayerSpec, NetworkSpec, layer_output_shape
from .published import PUBLISHED, PublishedRow


@dataclass(frozen=True)
class CostParams:
    """Physical constants of the crossbar platform (defaults as published)."""

    v_read: float = 0.3  # V
    i_cell_max: float = 3e-6  # A, worst-case cell read current
    tile_rows: int = 256
    tile_cols: int = 64
    cell_bits: int = 8
    resistance_ratio: float = 100.0
    p_adc: float = 2e-4  # W per active ADC
    f_adc_nominal: float = 40e6  # Hz
    f_adc_bitserial: float = 5e6  # Hz, full 8-bit codes in bit-serial mode
    a_adc: float = 3e-3  # mm^2 per ADC
    a_cell: float = 1.69e-7  # mm^2 per 1T1R cell
    adc_mode: str = PER_PAIR_DIFFERENTIAL
    array_utilization: float = 1.0  # fraction of i_cell_max drawn on average

    def __post_init__(self) -> None:
        for name in (
            "v_read",
            "i_cell_max",
            "tile_rows",
            "tile_cols",
            "cell_bits",
            "resistance_ratio",
            "p_adc",
            "f_adc_nominal",
            "f_adc_bitserial",
            "a_adc",
            "a_cell",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"CostParams.{name} must be positive")
        if self.adc_mode not in ADC_MODES:
            raise ConfigError(
                f"adc_mode must be one of {sorted(ADC_MODES)}, got {self.adc_mode!r}"
            )
        if not 0.0 < self.array_utilization <= 1.0:
            raise ConfigError("array_utilization must lie in (0, 1]")

    @property
    def t_conv(self) -> float:
        """Seconds per layer cycle: one full bit-serial ADC conversion."""
        return 1.0 / self.f_adc_bitserial


@dataclass(frozen=True)
class LayerCost:
    """Cost accounting for one weighted layer (one row per hardware copy set)."""

    branch: int  # branch index; -1 marks the fusion head
    index: int  # weighted-layer position within its branch
    kind: str
    rows: int  # logical rows = fan-in of the mapped matrix
    cols: int  # logical output columns (pre sign-doubling, pre duplication)
    dup: int  # kernel duplication factor (output spatial positions)
    row_partitions: int
    tiles: int
    adc_count: int
    n_cells: int  # mapped cells incl. sign doubling and duplication
    replicas: int
    macs: int
    energy_j: float


@dataclass(frozen=True)
class CostReport:
    """Whole-network cost summary with per-layer breakdown."""

    network: str
    latency_s: float
    energy_j: float
    edp_js: float
    tiles_total: int
    adc_count: int
    area_mm2: float
    macs: int
    layers: tuple[LayerCost, ...] = field(repr=False)

    def __post_init__(self) -> None:
        for name in ("latency_s", "energy_j", "edp_js", "area_mm2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"CostReport.{name} must be nonnegative")


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _layer_geometry(
    layer: LayerSpec, input_shape: tuple[int, ...]
) -> tuple[int, int, int]:
    """Return (rows, logical_cols, dup) for a dense or conv layer."""
    if layer.kind == DENSE:
        n_out, n_in = layer.weights.shape
        if int(np.prod(input_shape)) != n_in:
            raise ConfigError(
                f"dense fan-in {n_in} does not match input shape {input_shape}"
            )
        return n_in, n_out, 1
    if layer.kind == CONV2D:
        c_out, c_in, k, _ = layer.weights.shape
        if len(input_shape) != 3 or input_shape[0] != c_in:
            raise ConfigError(
                f"conv expects ({c_in}, h, w) input, got {input_shape}"
            )
        oh, ow = input_shape[1] - k + 1, input_shape[2] - k + 1
        if oh <= 0 or ow <= 0:
            raise ConfigError(f"kernel {k} too large for input {input_shape}")
        return c_in * k * k, c_out, oh * ow
    raise ConfigError(f"tile_layout needs a dense or conv layer, got {layer.kind!r}")


def tile_layout(
    layer: LayerSpec,
    input_shape: tuple[int, ...],
    params: CostParams | None = None,
) -> tuple[int, int, int]:
    """Lay one weighted layer out on tiles.

    Returns (tiles, dup_factor, adc_count).  Dense layers map with dup=1;
    conv layers duplicate the kernel once per output spatial position so
    the whole layer converts in a single ADC cycle.  Each logical column
    becomes a differential pair, read by one ADC per row partition
    (per-pair mode) or two (per-column mode).
    """
    params = params or CostParams()
    rows, cols, dup = _layer_geometry(layer, input_shape)
    physical_cols = 2 * cols * dup
    partitions = _ceil_div(rows, params.tile_rows)
    tiles = partitions * _ceil_div(physical_cols, params.tile_cols)
    converters = cols * dup if params.adc_mode == PER_PAIR_DIFFERENTIAL else physical_cols
    adc_count = converters * partitions
    return tiles, dup, adc_count


def _iter_weighted(
    net: NetworkSpec,
    input_shapes: list[tuple[int, ...]],
) -> list[tuple[int, int, LayerSpec, tuple[int, ...]]]:
    """List (branch, index_in_branch, layer, input_shape) for weighted layers.

    The fusion head is reported with branch = -1.
    """
    out: list[tuple[int, int, LayerSpec, tuple[int, ...]]] = []
    widths = []
    for b, (branch, shape) in enumerate(zip(net.branches, input_shapes)):
        cur: tuple[int, ...] = tuple(shape)
        idx = 0
        for layer in branch:
            if layer.kind in (DENSE, CONV2D):
                out.append((b, idx, layer, cur))
                idx += 1
            cur = layer_output_shape(layer, cur)
        widths.append(int(np.prod(cur)))
    if net.fusion_head:
        cur = (sum(widths),)
        idx = 0
        for layer in net.fusion_head:
            if layer.kind in (DENSE, CONV2D):
                out.append((-1, idx, layer, cur))
                idx += 1
            cur = layer_output_shape(layer, cur)
    return out


def _resolve_input_shapes(
    net: NetworkSpec, input_shape
) -> list[tuple[int, ...]]:
    if input_shape is None:
        return [tuple(s) for s in net.input_shapes]
    if isinstance(input_shape, tuple) and all(isinstance(v, int) for v in input_shape):
        shapes = [input_shape]
    else:
        shapes = [tuple(s) for s in input_shape]
    if len(shapes) != len(net.branches):
        raise ConfigError(
            f"got {len(shapes)} input shapes for {len(net.branches)} branches"
        )
    return shapes


def _resolve_replicas(net: NetworkSpec, branch_replicas) -> list[int]:
    if branch_replicas is None:
        return [1] * len(net.branches)
    replicas = [int(r) for r in branch_replicas]
    if len(replicas) != len(net.branches):
        raise ConfigError(
            f"got {len(replicas)} replica counts for {len(net.branches)} branches"
        )
    if any(r < 1 for r in replicas):
        raise ConfigError("replica counts must be >= 1")
    return replicas


def _layer_costs(
    net: NetworkSpec,
    input_shape,
    params: CostParams,
    branch_replicas,
) -> list[LayerCost]:
    shapes = _resolve_input_shapes(net, input_shape)
    replicas = _resolve_replicas(net, branch_replicas)
    t_conv = params.t_conv
    out: list[LayerCost] = []
    for branch, idx, layer, in_shape in _iter_weighted(net, shapes):
        rows, cols, dup = _layer_geometry(layer, in_shape)
        tiles, _, adc_count = tile_layout(layer, in_shape, params)
        rep = 1 if branch < 0 else replicas[branch]
        n_cells = 2 * rows * cols * dup
        e = (
            adc_count * params.p_adc * t_conv
            + n_cells
            * params.i_cell_max
            * params.v_read
            * t_conv
            * params.array_utilization
        ) * rep
        out.append(
            LayerCost(
                branch=branch,
                index=idx,
                kind=layer.kind,
                rows=rows,
                cols=cols,
                dup=dup,
                row_partitions=_ceil_div(rows, params.tile_rows),
                tiles=tiles * rep,
                adc_count=adc_count * rep,
                n_cells=n_cells * rep,
                replicas=rep,
                macs=rows * cols * dup * rep,
                energy_j=e,
            )
        )
    return out


def latency(net: NetworkSpec, params: CostParams | None = None) -> float:
    """Per-inference latency in seconds.

    One weighted layer costs one bit-serial conversion cycle; branches
    run concurrently, and a fusion head adds one more cycle.  The
    division is done once so the result is the correctly rounded float.
    """
    params = params or CostParams()
    depths = []
    for branch in net.branches:
        depths.append(sum(1 for l in branch if l.kind in (DENSE, CONV2D)))
    depth = max(depths, default=0)
    if net.fusion_head:
        depth += sum(1 for l in net.fusion_head if l.kind in (DENSE, CONV2D))
    return depth / params.f_adc_bitserial


def energy(
    net: NetworkSpec,
    input_shape=None,
    params: CostParams | None = None,
    *,
    branch_replicas=None,
) -> float:
    """Per-inference energy in joules.

    Sums, over weighted layers, the ADC conversion energy plus the
    worst-case read current through every mapped cell for one cycle.
    """
    params = params or CostParams()
    return sum(
        lc.energy_j for lc in _layer_costs(net, input_shape, params, branch_replicas)
    )


def edp(energy_j: float, latency_s: float) -> float:
    """Energy-delay product in joule-seconds."""
    if energy_j < 0 or latency_s < 0:
        raise ConfigError("edp needs nonnegative energy and latency")
    return energy_j * latency_s


def area(
    net: NetworkSpec,
    input_shape=None,
    params: CostParams | None = None,
    *,
    branch_replicas=None,
) -> float:
    """Silicon area in mm^2: full tiles of cells plus one block per ADC."""
    params = params or CostParams()
    costs = _layer_costs(net, input_shape, params, branch_replicas)
    tiles_total = sum(lc.tiles for lc in costs)
    adc_total = sum(lc.adc_count for lc in costs)
    cell_area = tiles_total * params.tile_rows * params.tile_cols * params.a_cell
    return cell_area + adc_total * params.a_adc


def cost_report(
    net: NetworkSpec,
    input_shape=None,
    params: CostParams | None = None,
    *,
    branch_replicas=None,
    network: str = "",
) -> CostReport:
    """Full cost accounting for one network."""
    params = params or CostParams()
    costs = _layer_costs(net, input_shape, params, branch_replicas)
    lat = latency(net, params)
    e = sum(lc.energy_j for lc in costs)
    tiles_total = sum(lc.tiles for lc in costs)
    adc_total = sum(lc.adc_count for lc in costs)
    cell_area = tiles_total * params.tile_rows * params.tile_cols * params.a_cell
    return CostReport(
        network=network,
        latency_s=lat,
        energy_j=e,
        edp_js=edp(e, lat),
        tiles_total=tiles_total,
        adc_count=adc_total,
        area_mm2=cell_area + adc_total * params.a_adc,
        macs=sum(lc.macs for lc in costs),
        layers=tuple(costs),
    )


def benchmark_cost_report(
    name: str, params: CostParams | None = None, seed: int = 0
) -> CostReport:
    """Cost report for a registry network, applying its replica layout."""
    netdef = REGISTRY.get(name)
    if netdef is None:
        raise ConfigError(f"unknown network {name!r}; choose from {sorted(REGISTRY)}")
    net = build_network(name, seed=seed)
    return cost_report(
        net, None, params, branch_replicas=netdef.replicas, network=name
    )


@dataclass(frozen=True)
class ComparisonRow:
    """Model-vs-published juxtaposition for one benchmark network."""

    network: str
    model_latency_s: float
    published_time_s: float
    latency_flag: str  # "MATCH" or "MISMATCH"
    model_energy_j: float
    published_energy_j: float
    energy_ratio: float  # model / published
    energy_band: float  # acceptance band half-width as a multiplicative factor
    energy_flag: str  # "WITHIN_BAND" or "OUT_OF_BAND"
    model_edp_js: float
    published_edp_js: float


def energy_band_factor(name: str) -> float:
    """Multiplicative tolerance on modeled energy vs the published figure.

    CNNs get a wider band: the published CNN energy depends on an input
    resolution that is not pinned down, so only the order of magnitude
    is meaningful there.
    """
    return 10.0 if name.startswith("cnn") else 5.0


def published_comparison(
    params: CostParams | None = None, seed: int = 0
) -> list[ComparisonRow]:
    """Compare the cost model against every published benchmark row."""
    rows = []
    for name in sorted(PUBLISHED):
        pub: PublishedRow = PUBLISHED[name]
        rep = benchmark_cost_report(name, params, seed=seed)
        pub_energy_j = pub.energy_uj * 1e-6
        ratio = rep.energy_j / pub_energy_j
        band = energy_band_factor(name)
        rows.append(
            ComparisonRow(
                network=name,
                model_latency_s=rep.latency_s,
                published_time_s=pub.time_s,
                latency_flag="MATCH" if rep.latency_s == pub.time_s else "MISMATCH",
                model_energy_j=rep.energy_j,
                published_energy_j=pub_energy_j,
                energy_ratio=ratio,
                energy_band=band,
                energy_flag=(
                    "WITHIN_BAND" if 1.0 / band <= ratio <= band else "OUT_OF_BAND"
                ),
                model_edp_js=rep.edp_js,
                published_edp_js=pub.edp_uj_s * 1e-6,
            )
        )
    return rows
