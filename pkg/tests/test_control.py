import numpy as np
import pytest

from radioflow.control import (ControllerConfig, Feedback, Outcome, VehicleState, Wall, always_clear,
                               corridor_experiment, heading_axes, hover_experiment, in_range_scene,
                               make_corridor, model_detector, step_dynamics)
from radioflow.radar import derive_metrics
from radioflow.records import Decision


def test_zero_command_keeps_velocity():
    s = VehicleState((0.2, -0.1), (0.3, 0.4))
    for _ in range(50):
        s = step_dynamics(s, (0, 0), 0.01)
    np.testing.assert_allclose(s.velocity_mps, (0.3, 0.4))
    np.testing.assert_allclose(s.position_m, (0.2 + 0.15, -0.1 + 0.2))


def test_constant_accel_kinematics():
    s = step_dynamics(VehicleState((0, 0), (0, 0)), (2.0, -1.0), 1.5)
    np.testing.assert_allclose(s.position_m, (0.5 * 2.0 * 2.25, -0.5 * 2.25))


def test_random_walk_drift_grows_as_t_to_three_halves():
    sigma, dt, n_steps, n_runs = 0.5, 0.01, 200, 400
    rng = np.random.default_rng(0)
    quarter, full = [], []
    for _ in range(n_runs):
        s = VehicleState((0, 0), (0, 0))
        for k in range(n_steps):
            s = step_dynamics(s, (0, 0), dt, rng, sigma)
            if k == n_steps // 4 - 1:
                quarter.append(s.position_m)
        full.append(s.position_m)
    rms_q = np.sqrt(np.mean(np.square(quarter)))
    rms_f = np.sqrt(np.mean(np.square(full)))
    t = n_steps * dt
    assert rms_f == pytest.approx(sigma * np.sqrt(t ** 3 / 3), rel=0.1)
    assert rms_f / rms_q == pytest.approx(4 ** 1.5, rel=0.15)


def test_noise_requires_generator():
    with pytest.raises(ValueError):
        step_dynamics(VehicleState((0, 0), (0, 0)), (0, 0), 0.1, None, 0.3)


def test_state_must_be_finite():
    with pytest.raises(ValueError):
        VehicleState((np.nan, 0), (0, 0))


def test_config_validation():
    with pytest.raises(ValueError):
        ControllerConfig(update_rate_hz=25)
    with pytest.raises(ValueError):
        ControllerConfig(drop_probability=1.5)


def test_noiseless_pid_settles_exponentially():
    cfg = ControllerConfig(disturbance_std=0.0)
    v0 = np.array([0.5, -0.3])
    r = hover_experiment(None, cfg, 40.0, 0, feedback=Feedback.TRUTH, initial_velocity_mps=v0)
    t = r.times_s[1:]
    speed = np.hypot(*(np.diff(r.positions_m, axis=0) / np.diff(r.times_s)[:, None]).T)
    assert not r.crashed
    late = speed[t > 35].max()
    assert late < 1e-4 * np.linalg.norm(v0)
    # slowest closed-loop pole is about -ki/kp
    assert late < np.exp(-0.1 * 33) * speed[(t > 1) & (t < 2)].max()
    # velocity-only feedback cannot see the drift before its first estimate
    unobserved = np.linalg.norm(v0) * (cfg.preset.integration_time_s + cfg.processing_time_s)
    assert np.linalg.norm(r.positions_m[-1]) < unobserved


def test_hover_deterministic():
    cfg = ControllerConfig(update_rate_hz=30)
    a = hover_experiment(None, cfg, 3.0, 5, feedback=Feedback.TRUTH)
    b = hover_experiment(None, cfg, 3.0, 5, feedback=Feedback.TRUTH)
    assert a.positions_m.tobytes() == b.positions_m.tobytes()


def test_truth_feedback_at_40hz_holds_tightly():
    runs = [hover_experiment(None, ControllerConfig(update_rate_hz=40), 10.0, s, feedback=Feedback.TRUTH)
            for s in range(10)]
    assert np.median([r.median_deviation_m for r in runs]) < 0.05


def test_open_loop_crashes_within_a_minute():
    r = hover_experiment(None, ControllerConfig(), 60.0, 0, feedback=Feedback.NONE)
    assert r.crashed and r.times_s[-1] < 60.0


def test_radar_feedback_requires_scene():
    with pytest.raises(ValueError):
        hover_experiment(None, ControllerConfig(), 1.0, 0, feedback=Feedback.RADAR)


def test_wall_distance_and_heading():
    w = Wall((-1.0, 2.0), (1.0, 2.0))
    assert w.distance((0.0, 0.5)) == pytest.approx(1.5)
    assert w.distance((3.0, 2.0)) == pytest.approx(2.0)
    np.testing.assert_allclose(heading_axes(0.0), np.eye(3))
    # a left turn points the nose at -x
    np.testing.assert_allclose(heading_axes(-np.pi / 2)[2], (-1, 0, 0), atol=1e-12)


def test_in_range_scene_culls(forward_radar):
    chirp, frame, _ = forward_radar
    cor = make_corridor(seed=1)
    r_max = derive_metrics(chirp, frame).r_max_m
    near = in_range_scene(cor.scene, (0, 0, 0), r_max)
    assert 0 < len(near.scatterers) < len(cor.scene.scatterers)
    assert all(np.linalg.norm(s.position_m) < r_max for s in near.scatterers)


@pytest.fixture(scope="module")
def detector(collision_bundle, forward_radar):
    return model_detector(collision_bundle["result"].weights, forward_radar[2])


def test_empty_corridor_completed(detector, forward_radar):
    r = corridor_experiment(make_corridor(seed=1), detector, *forward_radar)
    assert r.outcome is Outcome.COMPLETED


def test_frontal_wall_avoided(detector, forward_radar):
    cor = make_corridor(frontal_wall_m=3.0, seed=2)
    r = corridor_experiment(cor, detector, *forward_radar)
    assert r.outcome is Outcome.STOPPED
    first = next(i for i, rep in enumerate(r.reports) if rep.decision is not Decision.FORWARD)
    x, z = r.positions_m[first]
    assert cor.frontal.distance((x, z)) >= 1.0
    assert r.frontal_clearance_m > 0.15


def test_always_clear_stub_collides(forward_radar):
    r = corridor_experiment(make_corridor(frontal_wall_m=3.0, seed=2), always_clear, *forward_radar)
    assert r.outcome is Outcome.COLLIDED
