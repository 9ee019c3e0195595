"""Forward-radar obstacle detection: Capon range-azimuth maps, three-way crops,
a small CNN crop classifier and the steering rule.

Forward-radar frame: +Z is boresight, +X is to the right, so a negative
bearing lies to the left.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from radioflow.nn import ModelWeights, Network, TrainConfig, architecture, predict, softmax, train
from radioflow.preprocess import resize_bilinear
from radioflow.radar import ArrayLayout, ChirpConfig, FrameConfig, RadarCube
from radioflow.records import Decision, ObstacleReport
from radioflow.scene import Scatterer, Scene, SensorState, Mirror, planar_patch, simulate_cube

ANGLES_DEG = np.arange(-45, 46, dtype=np.float64)   # 91 columns, 1 degree apart
LEFT = slice(0, 30)      # [-45, -15)
CENTER = slice(30, 61)   # [-15, +15]; owns both boundary columns
RIGHT = slice(61, 91)    # (+15, +45]
OBSTACLE_RANGE_M = 1.0   # a crop is positive when a reflector lies this close
FEATURE_SHAPE = (32, 16)
FEATURE_SPAN_DB = 40.0
FEATURE_RANGE_M = 1.25   # crops keep range bins up to here
FLOOR_MARGIN_DB = 50.0


@dataclass(frozen=True, eq=False)
class RangeAngleHeatmap:
    pixels: np.ndarray       # (n_range, 91) nonnegative power
    range_m: np.ndarray      # (n_range,) bin centers
    angles_deg: np.ndarray   # (91,)

    def __post_init__(self):
        if self.pixels.ndim != 2 or self.pixels.shape[1] != len(ANGLES_DEG):
            raise ValueError(f"expected (n_range, {len(ANGLES_DEG)}) pixels, got {self.pixels.shape}")
        if np.any(self.pixels < 0):
            raise ValueError("heatmap pixels must be nonnegative")


def steering_vectors(layout: ArrayLayout, angles_deg=ANGLES_DEG) -> np.ndarray:
    """``(N_a, n_angles)`` azimuth steering vectors for element x-positions."""
    x = layout.positions[:, 0]
    return np.exp(1j * np.pi * x[:, None] * np.sin(np.deg2rad(angles_deg))[None, :])


def capon_spectrum(snapshots: np.ndarray, steering: np.ndarray, loading: float = 1e-2) -> np.ndarray:
    """Capon power for batched snapshots ``(..., n_snap, N_a)``.

    Diagonal loading of ``loading * trace(R) / N_a`` keeps the inverse defined
    for any snapshot count.
    """
    x = np.asarray(snapshots)
    n_snap, n_a = x.shape[-2:]
    r = np.einsum("...si,...sj->...ij", x, x.conj()) / n_snap
    tr = np.real(np.trace(r, axis1=-2, axis2=-1))
    load = loading * tr / n_a
    load = np.where(load > 0, load, 1e-30)
    r = r + load[..., None, None] * np.eye(n_a)
    r_inv_a = np.linalg.solve(r, np.broadcast_to(steering, r.shape[:-2] + steering.shape))
    denom = np.real(np.einsum("ik,...ik->...k", steering.conj(), r_inv_a))
    return 1.0 / np.maximum(denom, 1e-300)


def capon_heatmap(cube: RadarCube, layout: ArrayLayout, loading: float = 1e-2) -> RangeAngleHeatmap:
    """Range FFT per chirp, then a Capon spectrum per range bin over chirp snapshots."""
    if layout.count != cube.shape[1]:
        raise ValueError(f"layout has {layout.count} elements, cube has {cube.shape[1]}")
    ns = cube.shape[2]
    spec = np.fft.fft(cube.samples * np.hanning(ns + 2)[1:-1], axis=-1)  # (N_c, N_a, N_s)
    snaps = spec.transpose(2, 0, 1)                                      # (N_s, N_c, N_a)
    power = capon_spectrum(snaps, steering_vectors(layout), loading)
    rng_m = np.arange(ns) * cube.chirp.range_bin_m
    return RangeAngleHeatmap(power, rng_m, ANGLES_DEG.copy())


def crop3(heatmap: RangeAngleHeatmap) -> tuple:
    """Left, center and right column blocks; the center owns the +/-15 degree columns."""
    p = heatmap.pixels
    return p[:, LEFT], p[:, CENTER], p[:, RIGHT]


def crop_features(heatmap: RangeAngleHeatmap, max_range_m: float = FEATURE_RANGE_M) -> np.ndarray:
    """Classifier inputs ``(3, 1, *FEATURE_SHAPE)`` for the left/center/right crops.

    Only range bins up to ``max_range_m`` are kept: the classifier pools
    over position, so anything it sees must be close enough to matter.
    Power is expressed in dB below a reference, clipped to a fixed span and
    mapped to [0, 1]. The reference is the heatmap peak, but never less
    than ``FLOOR_MARGIN_DB`` above the median floor, so a scene holding only
    noise stays dark.
    """
    pix = heatmap.pixels
    floor = float(np.median(pix))
    ref = max(float(pix.max()), floor * 10 ** (FLOOR_MARGIN_DB / 10))
    if not ref > 0:
        return np.zeros((3, 1) + FEATURE_SHAPE, dtype=np.float32)
    near = heatmap.range_m <= max_range_m
    db = 10.0 * np.log10(np.maximum(pix[near], ref * 1e-30) / ref)
    scaled = np.clip(1.0 + db / FEATURE_SPAN_DB, 0.0, 1.0)
    crops = (scaled[:, LEFT], scaled[:, CENTER], scaled[:, RIGHT])
    return np.stack([resize_bilinear(c, *FEATURE_SHAPE)[None] for c in crops]).astype(np.float32)


def classify_crops(weights: ModelWeights, features) -> np.ndarray:
    """Obstacle probability per crop from ``(n, 1, H, W)`` features."""
    logits = predict(weights, np.asarray(features, dtype=np.float32))
    return softmax(logits.astype(np.float64))[:, 1]


def steer(p_left: float, p_center: float, p_right: float, threshold: float = 0.5) -> Decision:
    if p_center < threshold:
        return Decision.FORWARD
    if min(p_left, p_right) < threshold:
        return Decision.TURN_LEFT if p_left <= p_right else Decision.TURN_RIGHT
    return Decision.STOP


def obstacle_report(cube: RadarCube, layout: ArrayLayout, weights: ModelWeights,
                    threshold: float = 0.5, timestamp_s: float = 0.0) -> ObstacleReport:
    p = classify_crops(weights, crop_features(capon_heatmap(cube, layout)))
    pl, pc, pr = (float(np.clip(v, 0.0, 1.0)) for v in p)
    return ObstacleReport(pl, pc, pr, steer(pl, pc, pr, threshold), timestamp_s)


def collision_network(widths=None) -> Network:
    kw = {} if widths is None else {"widths": widths}
    return Network(architecture("micro", 2, **kw), (1,) + FEATURE_SHAPE)


# ---------------------------------------------------------------------------
# synthetic forward scenes

def pole(lateral_m, depth_m, width_m, rng, height_m=0.8, density=600.0, amplitude=1.0):
    """Narrow vertical diffuse object at lateral offset ``x`` and forward distance ``z``."""
    return planar_patch((lateral_m, 0.0, depth_m), (1, 0, 0), (0, 1, 0), width_m, height_m,
                        density, rng, amplitude)


def crop_of_bearing(bearing_deg: float) -> int:
    """0 = left, 1 = center, 2 = right."""
    if bearing_deg < -15.0:
        return 0
    if bearing_deg <= 15.0:
        return 1
    return 2


def crop_labels(scene: Scene, state: SensorState, max_range_m: float = OBSTACLE_RANGE_M) -> np.ndarray:
    """Per-crop truth: any direct reflector within ``max_range_m`` inside the crop's sector."""
    labels = np.zeros(3, dtype=np.int64)
    p0 = np.asarray(state.position_m)
    for s in scene.scatterers + scene.clutter:
        d = np.asarray(s.position_m) - p0
        r = float(np.linalg.norm(d))
        if r == 0 or r > max_range_m or d[2] <= 0:
            continue
        bearing = float(np.degrees(np.arcsin(np.clip(d[0] / r, -1, 1))))
        if abs(bearing) <= 45.0:
            labels[crop_of_bearing(bearing)] = 1
    return labels


_CROP_CENTERS = (-30.0, 0.0, 30.0)


def random_forward_scene(rng, noise_std: float = 0.05, p_obstacle: float = 0.5):
    """Near objects (<= 0.9 m) in randomly chosen crops plus far clutter beyond 1.3 m.

    Far clutter is drawn wider and up to ~20 dB brighter than the near
    objects, so the brightest return is often not the one that matters.
    """
    scat = []
    for c in range(3):
        if rng.uniform() < p_obstacle:
            bearing = np.deg2rad(_CROP_CENTERS[c] + rng.uniform(-7.0, 7.0))
            r = rng.uniform(0.35, 0.9)
            scat += pole(r * np.sin(bearing), r * np.cos(bearing), rng.uniform(0.05, 0.3), rng,
                         amplitude=rng.uniform(0.5, 1.5))
    for _ in range(rng.integers(0, 5)):
        bearing = np.deg2rad(rng.uniform(-60, 60))
        r = rng.uniform(1.3, 2.3)
        scat += pole(r * np.sin(bearing), r * np.cos(bearing), rng.uniform(0.1, 1.0), rng,
                     amplitude=10 ** rng.uniform(-0.3, 1.0))
    return Scene(tuple(scat), 1.0, noise_std=noise_std, seed=int(rng.integers(0, 2 ** 31 - 1)))


def specular_obstacle_scene(distance_m: float = 0.6, tilt_deg: float = 45.0, noise_std: float = 0.05,
                            seed: int = 0) -> Scene:
    """Smooth panel straight ahead, tilted away from boresight, plus one far reflector.

    The panel contributes no direct return; it only mirrors the far
    reflector into an image source beyond the panel.
    """
    rng = np.random.default_rng(seed)
    tilt = np.deg2rad(tilt_deg)
    normal = (-np.sin(tilt), 0.0, -np.cos(tilt))
    mirror = Mirror((0.0, 0.0, distance_m), normal, reflectivity=0.9)
    far = pole(-1.2, 1.6, 0.3, rng)
    return Scene(tuple(far), 0.0, mirrors=(mirror,), noise_std=noise_std, seed=seed)


@dataclass(frozen=True, eq=False)
class CollisionDataset:
    features: np.ndarray   # (n, 1, H, W) float32
    labels: np.ndarray     # (n,) int64
    scene_index: np.ndarray


def synthesize_collision_corpus(n_scenes: int, chirp: ChirpConfig, frame: FrameConfig,
                                layout: ArrayLayout, seed: int = 0, noise_std: float = 0.05,
                                speed_mps: float = 0.5) -> CollisionDataset:
    """Three labeled crops per random forward scene."""
    rng = np.random.default_rng(seed)
    feats, labels, idx = [], [], []
    for i in range(n_scenes):
        scene = random_forward_scene(rng, noise_std)
        state = SensorState((0.0, 0.0, 0.0), (0.0, 0.0, speed_mps))
        cube = simulate_cube(scene, state, chirp, frame, layout, time_s=float(i))
        feats.append(crop_features(capon_heatmap(cube, layout)))
        labels.append(crop_labels(scene, state))
        idx += [i] * 3
    return CollisionDataset(np.concatenate(feats), np.concatenate(labels), np.array(idx))


MAX_COLLISION_EPOCHS = 20


def train_collision(dataset: CollisionDataset, config: TrainConfig = TrainConfig(loss="cross-entropy"),
                    val_fraction: float = 0.2, split_seed: int = 0, init_seed: int = 0, widths=None):
    """Cross-entropy training on an 80/20 split, capped at 20 epochs.

    Warns when the positive share falls outside 40-60 %.
    """
    labels = np.asarray(dataset.labels)
    if len(labels) == 0:
        raise ValueError("empty collision dataset")
    share = labels.mean()
    if not 0.4 <= share <= 0.6:
        warnings.warn(f"class imbalance: {share:.0%} positive crops", stacklevel=2)
    if config.loss != "cross-entropy" or config.max_epochs > MAX_COLLISION_EPOCHS:
        config = TrainConfig(config.batch_size, config.learning_rate,
                             min(config.max_epochs, MAX_COLLISION_EPOCHS), "cross-entropy",
                             config.seed, config.adam)
    order = np.random.default_rng(split_seed).permutation(len(labels))
    n_val = int(round(val_fraction * len(labels)))
    va, tr = order[:n_val], order[n_val:]
    w0 = collision_network(widths).init_weights(init_seed)
    result = train(w0, dataset.features[tr], labels[tr], config, dataset.features[va], labels[va])
    return result, tr, va


def accuracy(weights: ModelWeights, features, labels, threshold: float = 0.5) -> float:
    p = classify_crops(weights, features)
    return float(np.mean((p >= threshold).astype(int) == np.asarray(labels)))
