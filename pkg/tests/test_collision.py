import numpy as np
import pytest
from hypothesis import given, strategies as st

from radioflow.collision import (ANGLES_DEG, CENTER, FEATURE_SHAPE, LEFT, RIGHT, RangeAngleHeatmap,
                                 CollisionDataset, capon_heatmap, capon_spectrum, classify_crops,
                                 crop3, crop_features, crop_labels, crop_of_bearing, obstacle_report,
                                 pole, steer, steering_vectors, train_collision)
from radioflow.nn import TrainConfig
from radioflow.records import Decision, ObstacleReport
from radioflow.scene import Scatterer, Scene, SensorState, simulate_cube

probs = st.floats(0, 1)


def point_cube(radar, bearing_deg, range_m=1.2, noise=0.01, seed=1):
    chirp, frame, layout = radar
    t = np.deg2rad(bearing_deg)
    sc = Scene((Scatterer((range_m * np.sin(t), 0, range_m * np.cos(t)), 1.0),), noise_std=noise, seed=seed)
    return simulate_cube(sc, SensorState((0, 0, 0)), chirp, frame, layout)


def test_point_target_lands_on_range_and_column(forward_radar):
    chirp, _, layout = forward_radar
    hm = capon_heatmap(point_cube(forward_radar, 20.0), layout)
    r, c = np.unravel_index(hm.pixels.argmax(), hm.pixels.shape)
    assert abs(r - round(1.2 / chirp.range_bin_m)) <= 1
    assert abs(c - 65) <= 1


def test_white_noise_flat_spectrum(forward_radar):
    layout = forward_radar[2]
    a = steering_vectors(layout)
    means = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((64, 32, 8)) + 1j * rng.standard_normal((64, 32, 8))
        means.append(capon_spectrum(x, a).mean(axis=0))
    m = np.mean(means, axis=0)
    assert 10 * np.log10(m.max() / m.min()) < 3.0


def test_crop_partition():
    cols = np.concatenate([np.arange(91)[s] for s in (LEFT, CENTER, RIGHT)])
    assert cols.tolist() == list(range(91))
    assert [len(np.arange(91)[s]) for s in (LEFT, CENTER, RIGHT)] == [30, 31, 30]
    assert ANGLES_DEG[CENTER][0] == -15 and ANGLES_DEG[CENTER][-1] == 15


def test_crops_of_constant_and_boresight_heatmaps():
    rng_m = np.linspace(0, 2, 16)
    const = crop3(RangeAngleHeatmap(np.full((16, 91), 2.0), rng_m, ANGLES_DEG))
    assert {(c.mean(), c.std()) for c in const} == {(2.0, 0.0)}
    pix = np.zeros((16, 91))
    pix[:, 45] = 1.0
    left, center, right = crop3(RangeAngleHeatmap(pix, rng_m, ANGLES_DEG))
    assert not left.any() and not right.any() and center.any()


@pytest.mark.parametrize("bearing,crop", [(-45, 0), (-15.01, 0), (-15, 1), (0, 1), (15, 1), (15.01, 2),
                                          (44, 2)])
def test_crop_of_bearing_boundaries(bearing, crop):
    assert crop_of_bearing(bearing) == crop


@pytest.mark.parametrize("p,decision", [((0.1, 0.05, 0.2), Decision.FORWARD),
                                        ((0.2, 0.9, 0.8), Decision.TURN_LEFT),
                                        ((0.9, 0.9, 0.9), Decision.STOP),
                                        ((0.9, 0.9, 0.2), Decision.TURN_RIGHT),
                                        ((0.3, 0.9, 0.3), Decision.TURN_LEFT)])
def test_steer_examples(p, decision):
    assert steer(*p, 0.5) == decision


@given(probs, probs, probs, st.floats(0.01, 0.99))
def test_steer_pure_and_report_consistent(pl, pc, pr, th):
    d = steer(pl, pc, pr, th)
    assert d == steer(pl, pc, pr, th)
    assert ObstacleReport(pl, pc, pr, d).decision is d
    if d is Decision.FORWARD:
        assert pc < th
    elif d is Decision.STOP:
        assert min(pl, pc, pr) >= th


def test_report_rejects_out_of_range():
    with pytest.raises(ValueError):
        ObstacleReport(1.2, 0.1, 0.1, Decision.FORWARD)


def test_labels_by_sector_and_range():
    rng = np.random.default_rng(0)
    sc = Scene(tuple(pole(-0.4, 0.6, 0.05, rng)) + tuple(pole(0.0, 1.8, 0.05, rng)))
    labels = crop_labels(sc, SensorState((0, 0, 0)))
    assert labels.tolist() == [1, 0, 0]


def test_noise_only_features_dark(forward_radar):
    chirp, frame, layout = forward_radar
    cube = simulate_cube(Scene((), noise_std=0.05, seed=2), SensorState((0, 0, 0)), chirp, frame, layout)
    f = crop_features(capon_heatmap(cube, layout))
    assert f.shape == (3, 1) + FEATURE_SHAPE
    assert f.max() < 0.3


def test_near_target_lights_its_crop(forward_radar):
    layout = forward_radar[2]
    f = crop_features(capon_heatmap(point_cube(forward_radar, -30, range_m=0.6), layout))
    energy = f.reshape(3, -1).mean(axis=1)
    assert np.argmax(energy) == 0


def test_zero_epoch_budget_returns_init(collision_bundle):
    ds = collision_bundle["dataset"]
    small = CollisionDataset(ds.features[:60], ds.labels[:60], ds.scene_index[:60])
    res, _, _ = train_collision(small, TrainConfig(max_epochs=0, loss="cross-entropy"))
    assert res.best_epoch == 0 and res.history == ()


def test_trained_classifier_examples(collision_bundle, forward_radar):
    chirp, frame, layout = forward_radar
    w = collision_bundle["result"].weights
    rng = np.random.default_rng(11)
    wall = Scene(tuple(pole(0.0, 0.5, 0.6, rng)), noise_std=0.05, seed=3)
    st_ = SensorState((0, 0, 0), (0, 0, 0.5))
    near = obstacle_report(simulate_cube(wall, st_, chirp, frame, layout), layout, w)
    assert near.p_center > 0.5 and near.decision is not Decision.FORWARD
    empty = obstacle_report(simulate_cube(Scene((), noise_std=0.05, seed=4), st_, chirp, frame, layout),
                            layout, w)
    assert max(empty.p_left, empty.p_center, empty.p_right) < 0.5
    assert empty.decision is Decision.FORWARD
    f = collision_bundle["dataset"].features[:1]
    p = classify_crops(w, np.concatenate([f] * 4))
    assert np.all(p == p[0])
