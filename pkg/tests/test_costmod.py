"""Cost-model tests: tile geometry, latency, energy, EDP, and area.

Closed-form oracles are evaluated inline from the physical constants so
every check here is an independent hand computation, not a replay of
the implementation.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xbar_bench import costmod
from xbar_bench.costmod import (
    ComparisonRow,
    CostParams,
    benchmark_cost_report,
    cost_report,
    edp,
    energy,
    energy_band_factor,
    latency,
    published_comparison,
    tile_layout,
)
from xbar_bench.errors import ConfigError
from xbar_bench.memsim import PER_COLUMN
from xbar_bench.networks import REGISTRY, build_network
from xbar_bench.nncore import (
    NetworkSpec,
    conv2d,
    count_macs,
    dense,
    maxpool,
    relu,
    softmax_layer,
)
from xbar_bench.published import PUBLISHED

T_CONV = 2e-7  # one 8-bit bit-serial conversion at 5 MHz
E_ADC = 2e-4 * T_CONV  # J per conversion
E_CELL = 3e-6 * 0.3 * T_CONV  # J per mapped cell per cycle


def dense_layer(n_in, n_out):
    return dense(np.zeros((n_out, n_in)), np.zeros(n_out))


def conv_layer(c_in, c_out, k):
    return conv2d(np.zeros((c_out, c_in, k, k)), np.zeros(c_out))


def chain(*layers, input_shape):
    return NetworkSpec(branches=[list(layers)], input_shapes=[input_shape])


class TestCostParams:
    def test_defaults_are_platform_constants(self):
        p = CostParams()
        assert p.v_read == 0.3
        assert p.i_cell_max == 3e-6
        assert (p.tile_rows, p.tile_cols) == (256, 64)
        assert p.cell_bits == 8
        assert p.resistance_ratio == 100.0
        assert p.p_adc == 2e-4
        assert p.f_adc_nominal == 40e6
        assert p.f_adc_bitserial == 5e6
        assert p.a_adc == 3e-3
        assert p.a_cell == 1.69e-7
        assert p.array_utilization == 1.0

    def test_t_conv_is_200ns(self):
        assert CostParams().t_conv == 2e-7

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(v_read=0.0),
            dict(i_cell_max=-1e-6),
            dict(array_utilization=0.0),
            dict(array_utilization=1.5),
            dict(adc_mode="per_row"),
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            CostParams(**kwargs)


class TestTileLayout:
    def test_dense_16_230(self):
        tiles, dup, adc = tile_layout(dense_layer(16, 230), (16,))
        assert dup == 1
        # 460 physical columns across 64-wide tiles, one row partition
        assert tiles == 8
        assert adc == 230

    def test_dense_230_5(self):
        tiles, dup, adc = tile_layout(dense_layer(230, 5), (230,))
        assert (tiles, dup, adc) == (1, 1, 5)

    def test_conv_8c3_full_duplication(self):
        tiles, dup, adc = tile_layout(conv_layer(1, 8, 3), (1, 32, 32))
        assert dup == 900  # 30 x 30 output positions
        # 2*8*900 = 14400 physical cols -> ceil(14400/64) = 225 tiles
        assert tiles == 225
        assert adc == 7200

    def test_row_partitioning(self):
        tiles, dup, adc = tile_layout(dense_layer(512, 512), (512,))
        assert dup == 1
        assert tiles == 2 * 16  # ceil(512/256) * ceil(1024/64)
        assert adc == 512 * 2  # each partition converts every pair

    def test_per_column_doubles_adc(self):
        layer = dense_layer(300, 7)
        _, _, pair = tile_layout(layer, (300,))
        _, _, col = tile_layout(layer, (300,), CostParams(adc_mode=PER_COLUMN))
        assert col == 2 * pair

    def test_rejects_pool(self):
        with pytest.raises(ConfigError):
            tile_layout(maxpool(2), (4, 8, 8))

    def test_rejects_mismatched_input(self):
        with pytest.raises(ConfigError):
            tile_layout(dense_layer(16, 8), (17,))

    @given(
        n_in=st.integers(1, 600),
        n_out=st.integers(1, 600),
    )
    @settings(max_examples=50, deadline=None)
    def test_dense_tile_formula(self, n_in, n_out):
        tiles, dup, adc = tile_layout(dense_layer(n_in, n_out), (n_in,))
        partitions = -(-n_in // 256)
        assert dup == 1
        assert tiles == partitions * -(-2 * n_out // 64)
        assert adc == n_out * partitions


class TestLatency:
    @pytest.mark.parametrize(
        "name,expect",
        [
            ("mlp_emg_a", 6.0e-7),
            ("mlp_emg_b", 4.0e-7),
            ("cnn_aps", 1.0e-6),
            ("mlp_aps", 4.0e-7),
            ("cnn_fused", 1.2e-6),
            ("mlp_fused", 6.0e-7),
        ],
    )
    def test_benchmark_latencies_exact(self, name, expect):
        assert latency(build_network(name)) == expect

    def test_matches_published_seconds_exactly(self):
        for name, row in PUBLISHED.items():
            assert latency(build_network(name)) == row.time_s, name

    def test_width_independent(self):
        narrow = chain(
            dense_layer(16, 8), relu(), dense_layer(8, 5), softmax_layer(),
            input_shape=(16,),
        )
        wide = chain(
            dense_layer(16, 800), relu(), dense_layer(800, 5), softmax_layer(),
            input_shape=(16,),
        )
        assert latency(narrow) == latency(wide) == 2 / 5e6

    def test_pool_and_relu_are_free(self):
        with_pool = chain(
            conv_layer(1, 4, 3), relu(), maxpool(2),
            dense_layer(4 * 15 * 15, 5), softmax_layer(),
            input_shape=(1, 32, 32),
        )
        assert latency(with_pool) == 2 / 5e6

    def test_fusion_head_adds_one_cycle(self):
        b0 = [dense_layer(16, 4), relu()]
        b1 = [dense_layer(8, 4), relu(), dense_layer(4, 4), relu()]
        net = NetworkSpec(
            branches=[b0, b1],
            input_shapes=[(16,), (8,)],
            fusion_head=[dense_layer(8, 5), softmax_layer()],
        )
        assert latency(net) == 3 / 5e6  # max(1, 2) + 1


class TestEnergy:
    def test_mlp_emg_b_closed_form(self):
        net = build_network("mlp_emg_b")
        # ADC conversions: 230 + 5; cells: 2*(16*230 + 230*5) = 9660
        expect = (230 + 5) * E_ADC + 9660 * E_CELL
        assert energy(net) == pytest.approx(expect, rel=1e-12)
        assert expect == pytest.approx(1.11e-8, rel=0.01)

    def test_mlp_emg_a_closed_form(self):
        net = build_network("mlp_emg_a")
        adc = 128 + 128 + 5
        cells = 2 * (16 * 128 + 128 * 128 + 128 * 5)
        assert energy(net) == pytest.approx(adc * E_ADC + cells * E_CELL, rel=1e-12)

    def test_cnn_aps_closed_form(self):
        net = build_network("cnn_aps")
        # conv1 dup 900, conv2 dup 169, conv3 dup 16; dense rows 512 split in 2
        adc = 8 * 900 + 16 * 169 + 32 * 16 + 512 * 2 + 5 * 2
        cells = 2 * (
            9 * 8 * 900 + 72 * 16 * 169 + 144 * 32 * 16 + 512 * 512 + 512 * 5
        )
        expect = adc * E_ADC + cells * E_CELL
        assert energy(net) == pytest.approx(expect, rel=1e-12)
        assert expect == pytest.approx(6.7325e-7, rel=1e-4)

    def test_zero_layer_net_is_zero(self):
        net = chain(softmax_layer(), input_shape=(5,))
        assert energy(net) == 0.0
        assert costmod.area(net) == 0.0

    def test_per_column_doubles_adc_term_exactly(self):
        net = build_network("mlp_emg_b")
        base = energy(net)
        doubled = energy(net, params=CostParams(adc_mode=PER_COLUMN))
        adc_term = (230 + 5) * E_ADC
        assert doubled - base == pytest.approx(adc_term, rel=1e-9)

    def test_utilization_scales_cell_term(self):
        net = build_network("mlp_emg_b")
        half = energy(net, params=CostParams(array_utilization=0.5))
        cells_term = 9660 * E_CELL
        assert energy(net) - half == pytest.approx(cells_term / 2, rel=1e-9)

    def test_replicas_multiply_energy(self):
        net = build_network("mlp_aps")
        assert energy(net, branch_replicas=(4,)) == pytest.approx(
            4 * energy(net), rel=1e-12
        )

    @given(width=st.integers(1, 400), wider=st.integers(1, 400))
    @settings(max_examples=30, deadline=None)
    def test_monotone_in_width(self, width, wider):
        lo, hi = sorted((width, wider))
        net_lo = chain(dense_layer(32, lo), softmax_layer(), input_shape=(32,))
        net_hi = chain(dense_layer(32, hi), softmax_layer(), input_shape=(32,))
        assert energy(net_lo) <= energy(net_hi)

    def test_energy_scales_linearly_with_dup(self):
        # Same kernel on larger input -> dup grows; energy/dup constant.
        small = chain(conv_layer(1, 4, 3), softmax_layer(), input_shape=(1, 8, 8))
        large = chain(conv_layer(1, 4, 3), softmax_layer(), input_shape=(1, 20, 20))
        e_small, e_large = energy(small), energy(large)
        assert e_small / 36 == pytest.approx(e_large / 324, rel=1e-12)


class TestEdpAndArea:
    def test_published_products(self):
        assert edp(0.026, 4.0e-7) == pytest.approx(1.04e-8, rel=1e-12)
        assert edp(0.18, 4.0e-7) == pytest.approx(7.2e-8, rel=1e-12)

    def test_zero_energy_zero_edp(self):
        assert edp(0.0, 1e-3) == 0.0

    def test_rejects_negative(self):
        with pytest.raises(ConfigError):
            edp(-1.0, 1.0)

    def test_single_tile_cell_area(self):
        p = CostParams()
        assert 256 * 64 * p.a_cell == pytest.approx(2.769e-3, rel=1e-3)

    def test_adc_area_dominates_tile(self):
        p = CostParams()
        assert 32 * p.a_adc == pytest.approx(0.096, rel=1e-12)
        assert 32 * p.a_adc > 30 * (256 * 64 * p.a_cell)

    def test_area_closed_form_mlp_emg_b(self):
        net = build_network("mlp_emg_b")
        p = CostParams()
        tiles = 8 + 1
        adc = 235
        expect = tiles * 256 * 64 * p.a_cell + adc * p.a_adc
        assert costmod.area(net) == pytest.approx(expect, rel=1e-12)


class TestCostReport:
    @pytest.mark.parametrize("name", sorted(REGISTRY))
    def test_edp_identity_exact(self, name):
        rep = benchmark_cost_report(name)
        assert rep.edp_js == rep.energy_j * rep.latency_s

    @pytest.mark.parametrize("name", sorted(REGISTRY))
    def test_fields_nonnegative_and_consistent(self, name):
        rep = benchmark_cost_report(name)
        assert rep.network == name
        assert rep.tiles_total >= 1
        assert rep.adc_count >= 1
        assert rep.area_mm2 > 0
        assert rep.tiles_total == sum(lc.tiles for lc in rep.layers)
        assert rep.adc_count == sum(lc.adc_count for lc in rep.layers)
        assert rep.energy_j == pytest.approx(
            sum(lc.energy_j for lc in rep.layers), rel=1e-12
        )

    def test_macs_match_functional_count_without_replicas(self):
        for name in ("mlp_emg_a", "mlp_emg_b", "cnn_aps", "cnn_fused"):
            net = build_network(name)
            rep = cost_report(net, network=name)
            assert rep.macs == count_macs(net), name

    def test_replicas_multiply_macs_and_tiles(self):
        single = cost_report(build_network("mlp_aps"))
        rep = benchmark_cost_report("mlp_aps")
        assert rep.macs == 4 * single.macs
        assert rep.tiles_total == 4 * single.tiles_total
        assert rep.energy_j == pytest.approx(4 * single.energy_j, rel=1e-12)
        assert rep.latency_s == single.latency_s  # replicas run in parallel

    def test_fused_replicas_hit_image_branch_only(self):
        rep = benchmark_cost_report("mlp_fused")
        emg = [lc for lc in rep.layers if lc.branch == 0]
        img = [lc for lc in rep.layers if lc.branch == 1]
        head = [lc for lc in rep.layers if lc.branch == -1]
        assert all(lc.replicas == 1 for lc in emg + head)
        assert all(lc.replicas == 4 for lc in img)
        assert len(head) == 1 and head[0].rows == 10 and head[0].cols == 5


class TestPublishedComparison:
    def test_all_latencies_flagged_match(self):
        rows = published_comparison()
        assert len(rows) == 6
        assert all(r.latency_flag == "MATCH" for r in rows)
        assert all(r.model_latency_s == r.published_time_s for r in rows)

    def test_all_energies_within_band(self):
        for row in published_comparison():
            assert row.energy_flag == "WITHIN_BAND", (
                row.network,
                row.energy_ratio,
            )
            assert 1.0 / row.energy_band <= row.energy_ratio <= row.energy_band

    def test_band_factors(self):
        assert energy_band_factor("cnn_aps") == 10.0
        assert energy_band_factor("mlp_emg_a") == 5.0

    def test_mlp_energy_ratios_tighter_than_band(self):
        ratios = {r.network: r.energy_ratio for r in published_comparison()}
        # model lands below published but well inside [0.2, 5]
        assert 0.2 < ratios["mlp_emg_a"] < 1.0
        assert 0.2 < ratios["mlp_emg_b"] < 1.0
        assert 0.2 < ratios["mlp_fused"] < 5.0

    def test_rows_are_frozen_records(self):
        row = published_comparison()[0]
        assert isinstance(row, ComparisonRow)
        with pytest.raises(AttributeError):
            row.energy_ratio = 0.0
