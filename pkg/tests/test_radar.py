import numpy as np
import pytest
from hypothesis import given, strategies as st

from radioflow.radar import (C_LIGHT, RATE_PRESETS, ArrayLayout, ChirpConfig, FrameConfig, RadarCube,
                             build_virtual_array, default_chirp, default_frame, derive_metrics,
                             doppler_hz, linear_layout, ods_layout, select_axis_samples)


def test_default_chirp_v_max():
    m = derive_metrics(default_chirp(), default_frame())
    assert m.v_max_mps == pytest.approx(2.0, rel=1e-12)
    assert m.v_res_mps == pytest.approx(0.125, rel=1e-12)


def test_range_resolution_4ghz():
    m = derive_metrics(default_chirp(), default_frame())
    assert m.r_res_m == pytest.approx(C_LIGHT / 8e9, rel=1e-12)
    assert m.r_res_m == pytest.approx(0.0375, abs=1e-4)


def test_doubling_chirps_halves_resolution():
    ch = default_chirp()
    a = derive_metrics(ch, FrameConfig(32)).v_res_mps
    b = derive_metrics(ch, FrameConfig(64)).v_res_mps
    assert b == a / 2


def test_doppler_two_way_factor():
    assert doppler_hz(1.0, 5e-3) == pytest.approx(400.0)
    assert doppler_hz(1.0, 5e-3, two_way=False) == pytest.approx(200.0)


@pytest.mark.parametrize("kw", [dict(carrier_wavelength_m=0), dict(chirp_duration_s=-1),
                                dict(samples_per_chirp=1), dict(sample_rate_hz=1.0)])
def test_chirp_rejects_bad_values(kw):
    base = dict(carrier_wavelength_m=5e-3, chirp_duration_s=6.25e-4, bandwidth_hz=4e9,
                samples_per_chirp=64, sample_rate_hz=64 / 6.25e-4)
    base.update(kw)
    with pytest.raises(ValueError):
        ChirpConfig(**base)


@pytest.mark.parametrize("nc", [0, 1, 3, 48])
def test_frame_requires_power_of_two(nc):
    with pytest.raises(ValueError):
        FrameConfig(nc)


def test_ods_has_twelve_elements():
    lay = ods_layout()
    assert lay.count == 12
    assert lay.axis_spacing("x") != 0 and lay.axis_spacing("y") != 0


def test_single_tx_is_rx_array():
    rx = [(0, 0), (1, 0), (2, 0), (3, 0)]
    assert build_virtual_array([(0, 0)], rx).element_positions == tuple(rx)


def test_virtual_positions_enumerated():
    lay = build_virtual_array([(0, 0), (2, 0)], [(0, 0), (1, 0)])
    assert lay.element_positions == ((0, 0), (1, 0), (2, 0), (3, 0))


def test_overlapping_coarray_named():
    with pytest.raises(ValueError, match="overlapping co-array"):
        build_virtual_array([(0, 0), (1, 0)], [(0, 0), (1, 0)])


@given(st.integers(1, 4), st.integers(1, 6))
def test_virtual_count_is_product(n_tx, n_rx):
    assert linear_layout(n_tx, n_rx).count == n_tx * n_rx


def test_bad_axis_group_rejected():
    pos = tuple((i, 0) for i in range(8))
    with pytest.raises(ValueError):
        ArrayLayout(pos, axis_groups_x=((1, 2, 3, 5), (4, 5, 6, 7)))


def _cube(samples):
    return RadarCube(samples, default_chirp(), default_frame())


def test_axis_selection_sparse_identity():
    s = np.zeros((32, 12, 64), complex)
    lay = ods_layout()
    first = lay.groups("x")[0][0]
    s[:, first, :] = np.random.default_rng(0).standard_normal((32, 64))
    out = select_axis_samples(_cube(s), lay, "x")
    np.testing.assert_array_equal(out[:, 0], s[:, first])
    assert not out[:, 1:].any()


def test_axis_selection_group_order_irrelevant():
    lay = ods_layout()
    g1, g2 = lay.axis_groups_x
    swapped = ArrayLayout(lay.element_positions, (g2, g1), lay.axis_groups_y)
    s = np.random.default_rng(1).standard_normal((32, 12, 64)) + 0j
    np.testing.assert_array_equal(select_axis_samples(_cube(s), lay, "x"),
                                  select_axis_samples(_cube(s), swapped, "x"))


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2 ** 16))
def test_axis_selection_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((32, 12, 64)) + 1j * rng.standard_normal((32, 12, 64))
    B = rng.standard_normal((32, 12, 64)) + 1j * rng.standard_normal((32, 12, 64))
    lay = ods_layout()
    for axis in ("x", "y"):
        lhs = select_axis_samples(_cube(a * A + b * B), lay, axis)
        rhs = a * select_axis_samples(_cube(A), lay, axis) + b * select_axis_samples(_cube(B), lay, axis)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_cube_shape_checked():
    with pytest.raises(ValueError):
        _cube(np.zeros((32, 12, 63), complex))


@pytest.mark.parametrize("rate", sorted(RATE_PRESETS))
def test_rate_presets_integration_time(rate):
    p = RATE_PRESETS[rate]
    ch, fr = p.chirp_config(), p.frame_config()
    m = derive_metrics(ch, fr)
    assert m.integration_time_s == pytest.approx(p.integration_time_s, rel=1e-12)
    assert p.batch_chirps * ch.chirp_duration_s == pytest.approx(1 / rate, rel=0.05)
