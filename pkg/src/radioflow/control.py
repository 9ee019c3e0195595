"""Closed-loop simulation: point-mass hover on flow feedback and corridor flight on obstacle reports."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from radioflow.collision import obstacle_report, steer
from radioflow.flow import ChirpBatch, Estimator, FlowPipeline, oracle_estimator
from radioflow.preprocess import PreprocessParams
from radioflow.radar import (ArrayLayout, ChirpConfig, FrameConfig, RadarCube, RATE_PRESETS,
                             RatePreset, derive_metrics, ods_layout)
from radioflow.records import Decision, ObstacleReport
from radioflow.scene import (Scene, SensorState, make_ground_scene, planar_patch, simulate_chirps,
                             simulate_cube)

ARENA_HALF_WIDTH_M = 3.0
PHYSICS_DT_S = 5e-3  # upper bound on the integration step


@dataclass(frozen=True, eq=False)
class VehicleState:
    position_m: np.ndarray      # (2,)
    velocity_mps: np.ndarray    # (2,)
    altitude_m: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.position_m, dtype=np.float64).reshape(2)
        v = np.asarray(self.velocity_mps, dtype=np.float64).reshape(2)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v)) and math.isfinite(self.altitude_m)):
            raise ValueError("vehicle state must be finite")
        object.__setattr__(self, "position_m", p)
        object.__setattr__(self, "velocity_mps", v)

    def sensor_state(self) -> SensorState:
        """Downward radar at ``z = -altitude`` moving in the horizontal plane."""
        x, y = self.position_m
        vx, vy = self.velocity_mps
        return SensorState((x, y, -self.altitude_m), (vx, vy, 0.0))


@dataclass(frozen=True)
class PIDGains:
    kp: float
    ki: float
    kd: float

    def __post_init__(self):
        if not all(math.isfinite(g) for g in (self.kp, self.ki, self.kd)):
            raise ValueError("gains must be finite")


# tuned once on ground-truth feedback at 40 Hz, then frozen
HOVER_GAINS = PIDGains(kp=25.0, ki=3.0, kd=7.5)


@dataclass(frozen=True)
class ControllerConfig:
    gains: tuple = (HOVER_GAINS, HOVER_GAINS)   # per axis
    update_rate_hz: int = 40
    drop_probability: float = 0.0
    disturbance_std: float = 0.5                # white acceleration density, m/s^1.5
    accel_limit_mps2: float = 10.0
    processing_time_s: float = 0.01

    def __post_init__(self):
        if self.update_rate_hz not in RATE_PRESETS:
            raise ValueError(f"update rate must be one of {sorted(RATE_PRESETS)}")
        if len(self.gains) != 2:
            raise ValueError("one PIDGains per axis")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop_probability must lie in [0, 1]")
        if self.disturbance_std < 0 or self.accel_limit_mps2 <= 0 or self.processing_time_s < 0:
            raise ValueError("disturbance, accel limit and processing time must be non-negative")

    @property
    def preset(self) -> RatePreset:
        return RATE_PRESETS[self.update_rate_hz]


def step_dynamics(state: VehicleState, accel, dt: float, rng: Optional[np.random.Generator] = None,
                  disturbance_std: float = 0.0) -> VehicleState:
    """Double integrator under constant ``accel`` plus white acceleration noise.

    The noise is integrated exactly over ``dt``: velocity gains variance
    ``s^2 dt``, position ``s^2 dt^3 / 3``, with covariance ``s^2 dt^2 / 2``.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    a = np.asarray(accel, dtype=np.float64).reshape(2)
    p = state.position_m + state.velocity_mps * dt + 0.5 * a * dt * dt
    v = state.velocity_mps + a * dt
    if disturbance_std > 0 and dt > 0:
        if rng is None:
            raise ValueError("a random generator is required when disturbance_std > 0")
        z = rng.standard_normal((2, 2))
        s = disturbance_std
        # Cholesky factor of [[dt^3/3, dt^2/2], [dt^2/2, dt]]
        l11 = math.sqrt(dt ** 3 / 3.0)
        l21 = (dt ** 2 / 2.0) / l11
        l22 = math.sqrt(dt - l21 * l21)
        p = p + s * l11 * z[0]
        v = v + s * (l21 * z[0] + l22 * z[1])
    return VehicleState(p, v, state.altitude_m)


class Feedback(str, enum.Enum):
    RADAR = "radar"   # simulated chirps through the flow pipeline
    TRUTH = "truth"   # mean true velocity over the integration window
    NONE = "none"     # open loop


@dataclass(frozen=True, eq=False)
class HoverResult:
    median_deviation_m: float
    max_deviation_m: float
    crashed: bool
    times_s: np.ndarray
    positions_m: np.ndarray     # (T, 2) true positions
    updates: int
    dropped: int

    def __post_init__(self):
        if self.median_deviation_m > self.max_deviation_m:
            raise ValueError("median deviation exceeds the maximum")


@dataclass
class _Pid:
    gains: Sequence[PIDGains]
    limit: float
    p_hat: np.ndarray = field(default_factory=lambda: np.zeros(2))
    v_hat: np.ndarray = field(default_factory=lambda: np.zeros(2))
    integral: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def command(self, dt: float) -> np.ndarray:
        """Dead-reckon the position estimate on the held velocity and return an acceleration."""
        self.p_hat = self.p_hat + self.v_hat * dt
        self.integral = self.integral + self.p_hat * dt
        a = np.array([-(g.kp * self.p_hat[i] + g.ki * self.integral[i] + g.kd * self.v_hat[i])
                      for i, g in enumerate(self.gains)])
        return np.clip(a, -self.limit, self.limit)


def hover_experiment(scene: Optional[Scene], config: ControllerConfig, duration_s: float, seed: int,
                     estimator: Optional[Estimator] = None, feedback: Feedback = Feedback.RADAR,
                     params: Optional[PreprocessParams] = None, layout: Optional[ArrayLayout] = None,
                     altitude_m: float = 1.0, initial_velocity_mps=(0.0, 0.0)) -> HoverResult:
    """Hold the origin for ``duration_s`` using velocity feedback at the configured rate.

    Chirps arrive in batches of ``preset.batch_chirps``; each estimate
    leaves the pipeline at batch arrival and reaches the controller after
    ``processing_time_s``. A surviving estimate is then discarded with
    probability ``drop_probability``. The run ends early with
    ``crashed=True`` once the vehicle leaves the arena. The vehicle starts at
    the origin moving at ``initial_velocity_mps``.
    """
    feedback = Feedback(feedback)
    preset = config.preset
    chirp = preset.chirp_config()
    frame = preset.frame_config()
    layout = layout if layout is not None else ods_layout()
    if feedback is Feedback.RADAR:
        if scene is None or estimator is None:
            raise ValueError("radar feedback needs a scene and an estimator")
        params = params if params is not None else PreprocessParams.from_preset(preset)
        pipe = FlowPipeline(chirp, frame, layout, params, estimator, config.processing_time_s)
    t_int = frame.chirps_per_frame * chirp.chirp_duration_s
    v_max = derive_metrics(chirp, frame).v_max_mps

    root = np.random.default_rng(seed)
    dist_rng, drop_rng = root.spawn(2)
    batch = preset.batch_chirps
    batch_t = batch * chirp.chirp_duration_s
    n_sub = max(1, math.ceil(batch_t / PHYSICS_DT_S))
    dt = batch_t / n_sub
    n_batches = max(1, math.ceil(duration_s / batch_t))

    pid = _Pid(config.gains, config.accel_limit_mps2)
    state = VehicleState(np.zeros(2), initial_velocity_mps, altitude_m)
    pending: list = []                       # (apply_time, velocity)
    times = [0.0]
    pos = [state.position_m]
    vel = [state.velocity_mps]
    updates = dropped = 0
    crashed = False
    t = 0.0
    for b in range(n_batches):
        t_b = b * batch_t
        samples = None
        if feedback is Feedback.RADAR:
            samples = simulate_chirps(scene, state.sensor_state(), chirp, layout, batch, time_s=t_b)
        for k in range(n_sub):
            t = t_b + k * dt
            while pending and pending[0][0] <= t + 1e-12:
                pid.v_hat = pending.pop(0)[1]
            state = step_dynamics(state, pid.command(dt), dt, dist_rng, config.disturbance_std)
            times.append(t + dt)
            pos.append(state.position_m)
            vel.append(state.velocity_mps)
            if np.hypot(*state.position_m) > ARENA_HALF_WIDTH_M:
                crashed = True
                break
        if crashed:
            break
        t_arr = t_b + batch_t
        v_est = None
        if feedback is Feedback.RADAR:
            est = pipe.push(ChirpBatch(t_arr, samples))
            if est is not None:
                v_est = np.array([est.v_x_mps, est.v_y_mps])
        elif feedback is Feedback.TRUTH and t_arr >= t_int - 1e-12:
            tt = np.asarray(times)
            sel = tt > t_arr - t_int - 1e-12
            v_est = np.clip(np.mean(np.asarray(vel)[sel], axis=0), -v_max, v_max)
        if v_est is None:
            continue
        if drop_rng.random() < config.drop_probability:
            dropped += 1
            continue
        updates += 1
        pending.append((t_arr + config.processing_time_s, v_est))

    if feedback is Feedback.RADAR:
        dropped += pipe.dropped
    positions = np.asarray(pos)
    dev = np.hypot(positions[:, 0], positions[:, 1])
    if crashed:
        # a lost vehicle stays lost for the rest of the run
        missing = max(0, n_batches * n_sub + 1 - len(dev))
        dev = np.concatenate([dev, np.full(missing, dev[-1])])
    return HoverResult(float(np.median(dev)), float(dev.max()), crashed, np.asarray(times), positions,
                       updates, dropped)


# chosen so that 50 Hz overload loses to 40 Hz; a knob, not a measured constant
OVERLOAD_DROP_PROBABILITY = 0.5


def hover_scene(seed: int, roughness: float = 0.7, noise_std: float = 0.05) -> Scene:
    """Sparse rough floor wide enough for the beam at 1 m over a few decimetres of drift."""
    return make_ground_scene(roughness, 10.0, 5.0, noise_std=noise_std, seed=100 + seed)


def hover_battery(rate_hz: int, seeds: Sequence[int], duration_s: float = 10.0,
                  estimator: Optional[Estimator] = oracle_estimator, feedback: Feedback = Feedback.RADAR,
                  drop_probability: float = 0.0, **config_kw) -> list:
    """One hover run per seed, each over its own floor."""
    cfg = ControllerConfig(update_rate_hz=rate_hz, drop_probability=drop_probability, **config_kw)
    return [hover_experiment(hover_scene(s) if feedback is Feedback.RADAR else None, cfg, duration_s, s,
                             estimator=estimator, feedback=feedback) for s in seeds]


def battery_median(results: Sequence[HoverResult]) -> float:
    return float(np.median([r.median_deviation_m for r in results]))


# ---------------------------------------------------------------------------
# corridor flight with a forward radar
#
# The flight plane is the scene's x-z plane with y vertical. A heading of
# psi points along (sin psi, 0, cos psi); the sensor's lateral axis points
# to the right of the heading, so negative angles are on the left.

class Outcome(str, enum.Enum):
    COMPLETED = "completed"
    COLLIDED = "collided"
    STOPPED = "stopped"


@dataclass(frozen=True)
class Wall:
    start: tuple   # (x, z)
    end: tuple

    def distance(self, point) -> float:
        a = np.asarray(self.start, dtype=np.float64)
        b = np.asarray(self.end, dtype=np.float64)
        p = np.asarray(point, dtype=np.float64)
        ab = b - a
        s = float(np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0))
        return float(np.linalg.norm(p - (a + s * ab)))


@dataclass(frozen=True, eq=False)
class Corridor:
    scene: Scene
    walls: tuple
    goal_z_m: float
    frontal: Optional[Wall] = None


def make_corridor(length_m: float = 5.0, half_width_m: float = 1.2, frontal_wall_m: Optional[float] = None,
                  density_per_m2: float = 150.0, wall_height_m: float = 0.8, noise_std: float = 0.05,
                  seed: int = 0) -> Corridor:
    """Straight corridor along +z with diffuse side walls and an optional wall across it."""
    rng = np.random.default_rng(seed)
    side = []
    walls = []
    for x in (-half_width_m, half_width_m):
        side += planar_patch((x, 0.0, length_m / 2), (0, 0, 1), (0, 1, 0), length_m + 1.0, wall_height_m,
                             density_per_m2, rng)
        walls.append(Wall((x, -0.5), (x, length_m + 0.5)))
    frontal = None
    if frontal_wall_m is not None:
        side += planar_patch((0.0, 0.0, frontal_wall_m), (1, 0, 0), (0, 1, 0), 2 * half_width_m, wall_height_m,
                             density_per_m2, rng)
        frontal = Wall((-half_width_m, frontal_wall_m), (half_width_m, frontal_wall_m))
        walls.append(frontal)
    scene = Scene(tuple(side), 1.0, (), (), noise_std, seed, surface_id=f"corridor seed={seed}")
    return Corridor(scene, tuple(walls), length_m, frontal)


def heading_axes(psi_rad: float) -> np.ndarray:
    """Rows: sensor right, up, forward in world coordinates."""
    c, s = math.cos(psi_rad), math.sin(psi_rad)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def in_range_scene(scene: Scene, position, max_range_m: float) -> Scene:
    """Scatterers within the unaliased range; the IF filter removes the rest."""
    p = np.asarray(position)
    keep = tuple(s for s in scene.scatterers if np.linalg.norm(np.asarray(s.position_m) - p) < max_range_m)
    return Scene(keep, scene.roughness, (), (), scene.noise_std, scene.seed, surface_id=scene.surface_id)


Detector = Callable[[RadarCube, float], ObstacleReport]


def model_detector(weights, layout: ArrayLayout, threshold: float = 0.5) -> Detector:
    def detect(cube: RadarCube, t: float) -> ObstacleReport:
        return obstacle_report(cube, layout, weights, threshold, t)
    return detect


def always_clear(cube: RadarCube, t: float) -> ObstacleReport:
    return ObstacleReport(0.0, 0.0, 0.0, steer(0.0, 0.0, 0.0), t)


@dataclass(frozen=True, eq=False)
class CorridorResult:
    outcome: Outcome
    positions_m: np.ndarray     # (T, 2) as (x, z)
    reports: tuple
    min_clearance_m: float      # closest approach to any wall
    frontal_clearance_m: float  # closest approach to the frontal wall (inf without one)


def corridor_experiment(corridor: Corridor, detector: Detector, chirp: ChirpConfig, frame: FrameConfig,
                        layout: ArrayLayout, forward_speed_mps: float = 0.5, duration_s: float = 12.0,
                        update_rate_hz: float = 10.0, vehicle_radius_m: float = 0.15) -> CorridorResult:
    """Fly forward at constant speed and obey one steering decision per update.

    Stop holds position. A turn halts the vehicle and rotates the heading
    by 90 degrees toward the chosen side. The run is ``collided`` once the
    vehicle body touches a wall, ``completed`` once it passes the goal
    depth and ``stopped`` otherwise.
    """
    r_max = derive_metrics(chirp, frame).r_max_m
    dt = 1.0 / update_rate_hz
    pos = np.zeros(2)
    psi = 0.0
    track = [pos.copy()]
    reports = []
    outcome = Outcome.STOPPED
    min_clear = min(w.distance(pos) for w in corridor.walls)
    front_clear = corridor.frontal.distance(pos) if corridor.frontal else math.inf
    for i in range(int(round(duration_s * update_rate_hz))):
        t = i * dt
        axes = heading_axes(psi)
        heading = np.array([axes[2, 0], axes[2, 2]])
        world = (pos[0], 0.0, pos[1])
        vel = forward_speed_mps * axes[2]
        cube = simulate_cube(in_range_scene(corridor.scene, world, r_max), SensorState(world, vel), chirp, frame,
                             layout, time_s=t, orientation=axes)
        report = detector(cube, t)
        reports.append(report)
        if report.decision is Decision.FORWARD:
            pos = pos + forward_speed_mps * dt * heading
        elif report.decision is Decision.TURN_LEFT:
            psi -= math.pi / 2
        elif report.decision is Decision.TURN_RIGHT:
            psi += math.pi / 2
        track.append(pos.copy())
        clear = min(w.distance(pos) for w in corridor.walls)
        min_clear = min(min_clear, clear)
        if corridor.frontal is not None:
            front_clear = min(front_clear, corridor.frontal.distance(pos))
        if clear < vehicle_radius_m:
            outcome = Outcome.COLLIDED
            break
        if pos[1] >= corridor.goal_z_m:
            outcome = Outcome.COMPLETED
            break
    return CorridorResult(outcome, np.asarray(track), tuple(reports), float(min_clear), float(front_clear))
