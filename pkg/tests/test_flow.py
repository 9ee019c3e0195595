import numpy as np
import pytest
from hypothesis import given, strategies as st

from radioflow.flow import (ChirpBatch, CorpusConfig, DegenerateHeatmap, FlowPipeline, SimTrace,
                            build_flow_dataset, curvefit_estimate, curvefit_velocity, dataset_size,
                            infer_velocity, nearest_state, oracle_estimator, ridge_scores,
                            run_flow_pipeline, simulate_batches, split_by_surface, synthesize_corpus,
                            to_angular_flow)
from radioflow.nn import Network, architecture
from radioflow.preprocess import PreprocessParams, angle_grid, heatmap_from_cube
from radioflow.radar import RATE_PRESETS, default_chirp, default_frame, derive_metrics, ods_layout
from radioflow.scene import SensorState, make_ground_scene, simulate_cube

CH, FR, LAY = default_chirp(), default_frame(), ods_layout()
M = derive_metrics(CH, FR)
ANG = angle_grid(60, 6)


def ridge_map(v, nc=32):
    """Synthetic heatmap: one unit pixel per column on the ideal ridge."""
    h = np.zeros((nc, len(ANG)))
    rows = nc // 2 + np.round(v * np.sin(np.deg2rad(ANG)) / M.v_res_mps).astype(int)
    h[rows, np.arange(len(ANG))] = 1.0
    return h


@pytest.mark.parametrize("v", [-1.5, -0.5, 0.0, 0.25, 1.0, 1.75])
def test_curvefit_recovers_synthetic_ridge(v):
    assert abs(curvefit_estimate(ridge_map(v), ANG, M.v_max_mps, M.v_res_mps) - v) <= M.v_res_mps / 2


def test_ridge_scores_count_window_mass():
    h = ridge_map(1.0)
    s = ridge_scores(h, ANG, M.v_res_mps, np.array([1.0, -1.0]))
    assert s[0] == pytest.approx(len(ANG))
    assert s[1] < s[0]


@given(st.integers(0, 2 ** 16))
def test_mirrored_heatmap_negates_estimate(seed):
    h = np.random.default_rng(seed).random((32, len(ANG)))
    # doppler row r maps to 2*(N_c/2) - r; row 0 has no partner and is cleared
    h[0] = 0
    mirrored = np.zeros_like(h)
    mirrored[1:] = h[1:][::-1]
    a = curvefit_estimate(h, ANG, M.v_max_mps, M.v_res_mps)
    b = curvefit_estimate(mirrored, ANG, M.v_max_mps, M.v_res_mps)
    assert a == pytest.approx(-b, abs=1e-12)


def test_degenerate_heatmap_raises():
    with pytest.raises(DegenerateHeatmap):
        curvefit_estimate(np.zeros((32, 20)), ANG, M.v_max_mps, M.v_res_mps)
    assert oracle_estimator(heatmap_from_cube(
        simulate_cube(make_ground_scene(1.0, 0, 4.0), SensorState((0, 0, -1)), CH, FR, LAY),
        LAY, PreprocessParams())) == (0.0, 0.0)


def _heatmap(v, seed=0):
    sc = make_ground_scene(1.0, 100, 5.0, seed=seed)
    return heatmap_from_cube(simulate_cube(sc, SensorState((0, 0, -1), (v[0], v[1], 0)), CH, FR, LAY),
                             LAY, PreprocessParams())


def test_oracle_pure_x_round_trip():
    vx, vy = curvefit_velocity(_heatmap((1.0, 0.0)))
    assert abs(vx - 1.0) <= M.v_res_mps


def test_oracle_rest():
    vx, vy = curvefit_velocity(_heatmap((0.0, 0.0)))
    assert abs(vx) <= M.v_res_mps and abs(vy) <= M.v_res_mps


def test_oracle_sign_equivariance():
    a = np.array(curvefit_velocity(_heatmap((0.8, -0.6), seed=2)))
    b = np.array(curvefit_velocity(_heatmap((-0.8, 0.6), seed=2)))
    assert np.all(np.sign(a) == -np.sign(b))
    assert np.all(np.abs(a + b) <= 2 * M.v_res_mps)


@pytest.mark.parametrize("v,h,omega", [((0.5, 0.0), 0.5, (1.0, 0.0)), ((0.0, 0.0), 3.0, (0.0, 0.0))])
def test_angular_flow_examples(v, h, omega):
    assert to_angular_flow(*v, h) == pytest.approx(omega)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 10))
def test_angular_flow_round_trip_and_scaling(vx, vy, h):
    wx, wy = to_angular_flow(vx, vy, h)
    assert wx * h == pytest.approx(vx, abs=1e-12) and wy * h == pytest.approx(vy, abs=1e-12)
    wx2, wy2 = to_angular_flow(vx, vy, 2 * h)
    assert wx2 == pytest.approx(wx / 2) and wy2 == pytest.approx(wy / 2)


def test_angular_flow_rejects_nonpositive_altitude():
    with pytest.raises(ValueError):
        to_angular_flow(1.0, 0.0, 0.0)


def test_model_zero_heatmap_finite_and_batching():
    w = Network(architecture("micro", 2, widths=(4, 8, 8, 8)), (2, 24, 24)).init_weights(0)
    z = infer_velocity(w, np.zeros((24, 24, 2)), 2.0)
    assert np.all(np.isfinite(z))
    batch = np.random.default_rng(0).random((5, 24, 24, 2))
    joint = infer_velocity(w, batch, 2.0)
    single = np.concatenate([infer_velocity(w, b, 2.0) for b in batch])
    np.testing.assert_allclose(joint, single, rtol=1e-5, atol=1e-6)
    assert np.all(np.abs(joint) <= 2.0)


def test_dataset_size_examples():
    assert dataset_size(25, 100, 50) == 125_000
    assert dataset_size(1, 0.02, 50) == 1


def test_nearest_state_tie_goes_earlier():
    s = [(0.0, "a"), (1.0, "b"), (2.0, "c")]
    assert nearest_state(s, 0.5) == "a"
    assert nearest_state(s, 0.51) == "b"
    assert nearest_state(s, -4) == "a" and nearest_state(s, 9) == "c"


@given(st.floats(-0.49, 0.49))
def test_label_offset_below_half_period_same_label(offset):
    period = 0.02
    states = [(i * period, i) for i in range(10)]
    for i in range(10):
        assert nearest_state(states, i * period + offset * period) == i


@given(st.lists(st.sampled_from("abcdefghij"), min_size=2, max_size=60), st.integers(0, 99))
def test_split_keeps_surfaces_disjoint(ids, seed):
    tr, va = split_by_surface(ids, 0.6, seed)
    assert not {ids[i] for i in tr} & {ids[i] for i in va}
    assert sorted(np.concatenate([tr, va]).tolist()) == list(range(len(ids)))


def test_single_frame_trace_exact_label():
    sc = make_ground_scene(1.0, 30, 4.0, seed=1)
    st_ = SensorState((0, 0, -1.2), (0.3, -0.4, 0))
    trace = SimTrace("s", ((0.0, simulate_cube(sc, st_, CH, FR, LAY)),), ((0.0, st_),))
    ds = build_flow_dataset([trace], LAY, PreprocessParams())
    assert len(ds) == 1
    np.testing.assert_array_equal(ds.velocity[0], (0.3, -0.4))
    np.testing.assert_allclose(ds.omega[0], (0.25, -1 / 3))


def test_corpus_deterministic_and_split():
    cfg = CorpusConfig(n_surfaces=5, frames_per_surface=2, seed=3)
    a = build_flow_dataset(synthesize_corpus(cfg, CH, FR, LAY), LAY, PreprocessParams())
    b = build_flow_dataset(synthesize_corpus(cfg, CH, FR, LAY), LAY, PreprocessParams())
    assert a.pixels.tobytes() == b.pixels.tobytes()
    assert not {a.surface_ids[i] for i in a.train_idx} & {a.surface_ids[i] for i in a.val_idx}
    assert len(set(a.surface_ids[i] for i in a.train_idx)) == 3


def _stream(rate, n_batches, processing_time):
    p = RATE_PRESETS[rate]
    ch, fr = p.chirp_config(), p.frame_config()
    sc = make_ground_scene(1.0, 30, 4.0, seed=2, noise_std=0.02)
    batches = simulate_batches(sc, SensorState((0, 0, -1), (0.6, 0.0, 0)), ch, LAY, p.batch_chirps,
                               n_batches)
    return p, run_flow_pipeline(batches, ch, fr, LAY, PreprocessParams.from_preset(p), oracle_estimator,
                                processing_time)


def test_pipeline_steady_state_rate():
    p, run = _stream(40, 14, 0.005)
    ts = np.array([e.timestamp_s for e in run.estimates])
    first = p.integration_time_s
    assert ts[0] == pytest.approx(first, rel=0.05)
    np.testing.assert_allclose(np.diff(ts), 1 / 40, rtol=0.05)
    assert run.dropped == 0


def test_pipeline_overload_drops():
    _, run = _stream(40, 14, 0.06)
    assert run.dropped > 0 and run.processed + run.dropped == 14 - 2


def test_pipeline_matches_frame_oracle():
    p, run = _stream(40, 14, 0.005)
    ch, fr = p.chirp_config(), p.frame_config()
    m = derive_metrics(ch, fr)
    assert all(abs(e.v_x_mps - 0.6) <= 2 * m.v_res_mps for e in run.estimates)


def test_pipeline_rejects_wrong_batch_shape():
    pipe = FlowPipeline(CH, FR, LAY, PreprocessParams(), oracle_estimator, 0.0)
    with pytest.raises(ValueError):
        pipe.push(ChirpBatch(0.0, np.zeros((4, 8, 64), complex)))
