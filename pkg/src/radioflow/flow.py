"""Ground-parallel velocity from doppler-angle heatmaps.

Two estimators share one interface (``StackedHeatmap -> (v_x, v_y)``):
a grid-search fit of the ``v * sin(theta)`` ridge, and a learned CNN
regressor. Velocities convert to angular flow with the altitude estimate.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from radioflow.nn import ModelWeights, Network, TrainConfig, architecture, predict, train
from radioflow.preprocess import PreprocessParams, StackedHeatmap, preprocess
from radioflow.radar import ArrayLayout, ChirpConfig, FrameConfig, RadarCube, derive_metrics
from radioflow.records import FlowEstimate
from radioflow.scene import (SensorState, ground_truth_flow, make_ground_scene, noise_std_for_snr,
                             simulate_chirps, simulate_cube)


class DegenerateHeatmap(ValueError):
    """Heatmap carries too little energy to fit a ridge."""


def ridge_scores(channel: np.ndarray, angles_deg, v_res: float, candidates: np.ndarray) -> np.ndarray:
    """Energy within one doppler bin of ``v * sin(theta)`` for each candidate ``v``.

    ``channel`` is ``(N_c, n_angles)`` with zero doppler at row ``N_c // 2``.
    Row ``r`` covers ``[r - 0.5, r + 0.5)``; the window is the 3-bin span
    centered on the curve, with partially covered rows counted fractionally
    so every candidate integrates the same width.
    """
    nc, na = channel.shape
    sin_t = np.sin(np.deg2rad(np.asarray(angles_deg)))
    csum = np.vstack([np.zeros((1, na)), np.cumsum(channel, axis=0)])
    padded = np.vstack([channel, np.zeros((1, na))])
    cols = np.arange(na)[None, :]

    def cumulative(y):
        # mass of rows below continuous coordinate y
        y = np.clip(y + 0.5, 0.0, nc)
        i = np.floor(y).astype(int)
        return csum[i, cols] + (y - i) * padded[i, cols]

    center = nc // 2 + candidates[:, None] * sin_t[None, :] / v_res
    return (cumulative(center + 1.5) - cumulative(center - 1.5)).sum(axis=1)


def curvefit_estimate(channel, angles_deg, v_max: float, v_res: float,
                      min_energy: float = 1e-9) -> float:
    """Velocity whose ridge captures the most heatmap energy.

    Candidates span ``[-v_max, v_max]`` in steps of ``v_res / 2``. Exact ties
    resolve to their mean so mirrored inputs give negated outputs.
    """
    channel = np.asarray(channel, dtype=np.float64)
    if channel.ndim != 2 or channel.shape[1] != len(angles_deg):
        raise ValueError(f"channel shape {channel.shape} does not match {len(angles_deg)} angles")
    if not np.all(np.isfinite(channel)) or channel.sum() < min_energy:
        raise DegenerateHeatmap("heatmap energy below threshold")
    n = int(np.floor(v_max / (v_res / 2) + 1e-9))
    candidates = np.arange(-n, n + 1) * (v_res / 2)
    scores = ridge_scores(channel, angles_deg, v_res, candidates)
    best = scores.max()
    tied = candidates[scores >= best - 1e-9 * max(abs(best), 1.0)]
    return float(tied.mean())


def curvefit_velocity(heatmap: StackedHeatmap) -> tuple:
    """Oracle ``(v_x, v_y)`` from the native-resolution maps of a heatmap."""
    return tuple(curvefit_estimate(heatmap.native[..., ch], heatmap.angles_deg,
                                   heatmap.v_max_mps, heatmap.v_res_mps) for ch in (0, 1))


def to_angular_flow(v_x, v_y, altitude_m) -> tuple:
    if not altitude_m > 0:
        raise ValueError(f"altitude must be > 0, got {altitude_m}")
    return v_x / altitude_m, v_y / altitude_m


def model_input(pixels) -> np.ndarray:
    """``(M, N, 2)`` or ``(B, M, N, 2)`` heatmap pixels to an NCHW batch."""
    x = np.asarray(pixels, dtype=np.float32)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[-1] != 2:
        raise ValueError(f"expected (B, M, N, 2) heatmaps, got {x.shape}")
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2))


def infer_velocity(weights: ModelWeights, heatmaps, v_max: float) -> np.ndarray:
    """Model velocities ``(B, 2)`` in m/s, clamped to ``[-v_max, v_max]``.

    ``heatmaps`` is a :class:`StackedHeatmap`, an ``(M, N, 2)`` array or a batch.
    """
    pixels = heatmaps.pixels if isinstance(heatmaps, StackedHeatmap) else heatmaps
    out = predict(weights, model_input(pixels)).astype(np.float64)
    return np.clip(np.nan_to_num(out), -v_max, v_max)


def flow_network(arch: str, params: PreprocessParams, widths=None) -> Network:
    kw = {} if widths is None else {"widths": widths}
    return Network(architecture(arch, 2, **kw), (2, params.resize_m, params.resize_n))


# ---------------------------------------------------------------------------
# datasets

@dataclass(frozen=True, eq=False)
class SimTrace:
    """One recording: cubes with capture times plus the ground-truth states."""

    surface_id: str
    frames: tuple   # ((timestamp_s, RadarCube), ...)
    states: tuple   # ((timestamp_s, SensorState), ...)
    tags: tuple = ()


@dataclass(frozen=True, eq=False)
class FlowDataset:
    pixels: np.ndarray       # (n, M, N, 2) float32
    velocity: np.ndarray     # (n, 2) ground truth m/s
    omega: np.ndarray        # (n, 2) ground truth rad/s
    altitude: np.ndarray     # (n,) ground truth m
    altitude_est: np.ndarray  # (n,) radar estimate m
    oracle: np.ndarray       # (n, 2) curve-fit velocity, NaN when degenerate
    surface_ids: tuple
    tags: tuple
    train_idx: np.ndarray
    val_idx: np.ndarray
    v_max_mps: float
    v_res_mps: float

    def __len__(self):
        return len(self.pixels)

    def subset(self, idx):
        idx = np.asarray(idx)
        return (self.pixels[idx], self.velocity[idx])


def dataset_size(n_traces: int, duration_s: float, rate_hz: float) -> int:
    """Datapoints from ``n_traces`` recordings of ``duration_s`` at ``rate_hz``."""
    return int(n_traces) * int(round(duration_s * rate_hz))


def nearest_state(states: Sequence, t: float):
    """State whose timestamp is closest to ``t``; the earlier one wins a tie."""
    if not states:
        raise ValueError("trace has no state records")
    times = np.array([s[0] for s in states])
    i = int(np.searchsorted(times, t))
    if i == 0:
        return states[0][1]
    if i == len(times):
        return states[-1][1]
    return states[i - 1][1] if t - times[i - 1] <= times[i] - t else states[i][1]


def split_by_surface(surface_ids: Sequence, train_fraction: float = 0.6, seed: int = 0):
    """Index arrays ``(train, val)`` with every surface wholly on one side."""
    ids = np.asarray(surface_ids)
    unique = sorted(set(surface_ids))
    order = np.random.default_rng(seed).permutation(len(unique))
    n_train = int(round(train_fraction * len(unique)))
    if len(unique) >= 2:
        n_train = min(max(n_train, 1), len(unique) - 1)
    train_ids = {unique[i] for i in order[:n_train]}
    mask = np.array([s in train_ids for s in ids], dtype=bool)
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def build_flow_dataset(traces: Iterable[SimTrace], layout: ArrayLayout, params: PreprocessParams,
                       train_fraction: float = 0.6, split_seed: int = 0,
                       with_oracle: bool = True) -> FlowDataset:
    pixels, vel, omega, alt, alt_est, oracle, sids, tags = [], [], [], [], [], [], [], []
    metrics = None
    for trace in traces:
        if not trace.states:
            raise ValueError(f"trace {trace.surface_id!r} has no state records")
        for t, cube in trace.frames:
            hm, a = preprocess(cube, layout, params)
            metrics = metrics or derive_metrics(cube.chirp, cube.frame)
            truth = ground_truth_flow(nearest_state(trace.states, t), t)
            pixels.append(hm.pixels.astype(np.float32))
            vel.append((truth.v_x_mps, truth.v_y_mps))
            omega.append((truth.omega_x_radps, truth.omega_y_radps))
            alt.append(truth.altitude_m)
            alt_est.append(a.altitude_m)
            if with_oracle:
                try:
                    oracle.append(curvefit_velocity(hm))
                except DegenerateHeatmap:
                    oracle.append((np.nan, np.nan))
            else:
                oracle.append((np.nan, np.nan))
            sids.append(trace.surface_id)
            tags.append(trace.tags)
    if not pixels:
        raise ValueError("no frames in traces")
    tr, va = split_by_surface(sids, train_fraction, split_seed)
    return FlowDataset(np.stack(pixels), np.array(vel), np.array(omega), np.array(alt),
                       np.array(alt_est), np.array(oracle, dtype=np.float64), tuple(sids),
                       tuple(tags), tr, va, metrics.v_max_mps, metrics.v_res_mps)


@dataclass(frozen=True)
class CorpusConfig:
    """Random-frame corpus: each frame draws a fresh velocity, altitude and offset."""

    n_surfaces: int = 20
    frames_per_surface: int = 100
    roughness: tuple = (0.4, 1.0)     # uniform range per surface
    specular_gain: float = 4.0
    density_per_m2: float = 30.0
    extent_m: float = 4.0
    altitude_m: tuple = (0.8, 1.5)
    speed_fraction: float = 0.9       # |v| <= fraction * v_max
    snr_db: tuple = (10.0, 30.0)
    clutter_count: int = 0
    mirror_count: int = 0
    seed: int = 0


def synthesize_corpus(cfg: CorpusConfig, chirp: ChirpConfig, frame: FrameConfig,
                      layout: ArrayLayout) -> list:
    """Simulated traces for flow training and evaluation, one per surface."""
    metrics = derive_metrics(chirp, frame)
    rng = np.random.default_rng(cfg.seed)
    traces = []
    for s in range(cfg.n_surfaces):
        surf_seed = int(rng.integers(0, 2 ** 31 - 1))
        rough = float(rng.uniform(*cfg.roughness))
        scene = make_ground_scene(rough, cfg.density_per_m2, cfg.extent_m, cfg.clutter_count,
                                  cfg.mirror_count, 0.0, surf_seed, cfg.specular_gain)
        h0 = float(np.mean(cfg.altitude_m))
        ref = simulate_cube(scene, SensorState((0, 0, -h0)), chirp, frame, layout)
        snr = float(rng.uniform(*cfg.snr_db))
        scene = scene.with_noise(noise_std_for_snr(ref, snr))
        frames, states = [], []
        for i in range(cfg.frames_per_surface):
            t = i * 1.0
            # uniform over the disk |v| <= speed_fraction * v_max
            speed = cfg.speed_fraction * metrics.v_max_mps * np.sqrt(rng.uniform())
            heading = rng.uniform(0.0, 2.0 * np.pi)
            v = speed * np.array([np.cos(heading), np.sin(heading)])
            h = rng.uniform(*cfg.altitude_m)
            xy = rng.uniform(-0.3, 0.3, size=2)
            st = SensorState((xy[0], xy[1], -h), (v[0], v[1], 0.0))
            frames.append((t, simulate_cube(scene, st, chirp, frame, layout, time_s=t)))
            states.append((t, st))
        traces.append(SimTrace(scene.surface_id, tuple(frames), tuple(states),
                               (("roughness", rough), ("snr_db", snr))))
    return traces


def train_flow_model(dataset: FlowDataset, arch: str = "micro", config: TrainConfig = TrainConfig(),
                     init_seed: int = 0, widths=None, on_epoch=None):
    """Regress ``(v_x, v_y)`` in m/s on the training surfaces; validation picks the checkpoint."""
    m, n = dataset.pixels.shape[1:3]
    kw = {} if widths is None else {"widths": widths}
    net = Network(architecture(arch, 2, **kw), (2, m, n))
    w0 = net.init_weights(init_seed)
    xt, yt = dataset.subset(dataset.train_idx)
    xv, yv = dataset.subset(dataset.val_idx)
    return train(w0, model_input(xt), yt.astype(np.float32), config, model_input(xv),
                 yv.astype(np.float32), on_epoch=on_epoch)


def angular_rmse(weights: ModelWeights, dataset: FlowDataset, idx=None, use_estimated_altitude=True) -> float:
    """RMSE in rad/s of model angular flow against ground truth."""
    idx = dataset.val_idx if idx is None else np.asarray(idx)
    v = infer_velocity(weights, dataset.pixels[idx], dataset.v_max_mps)
    h = dataset.altitude_est[idx] if use_estimated_altitude else dataset.altitude[idx]
    w_pred = v / h[:, None]
    return float(np.sqrt(np.mean((w_pred - dataset.omega[idx]) ** 2)))


# ---------------------------------------------------------------------------
# streaming

Estimator = Callable[[StackedHeatmap], tuple]


def oracle_estimator(heatmap: StackedHeatmap) -> tuple:
    try:
        return curvefit_velocity(heatmap)
    except DegenerateHeatmap:
        return 0.0, 0.0


def model_estimator(weights: ModelWeights) -> Estimator:
    def estimate(heatmap: StackedHeatmap) -> tuple:
        v = infer_velocity(weights, heatmap, heatmap.v_max_mps)[0]
        return float(v[0]), float(v[1])
    return estimate


@dataclass(frozen=True, eq=False)
class ChirpBatch:
    timestamp_s: float     # arrival time of the last chirp in the batch
    samples: np.ndarray    # (n_chirps, N_a, N_s)


class FlowPipeline:
    """FIFO of the last ``N_c`` chirps feeding one estimate per arriving batch.

    A batch that lands while the previous estimate is still being computed
    is recorded in the buffer but triggers no computation; ``dropped``
    counts those. ``processing_time_s`` fixes the modeled compute time;
    ``None`` measures wall-clock time instead.
    """

    def __init__(self, chirp: ChirpConfig, frame: FrameConfig, layout: ArrayLayout,
                 params: PreprocessParams, estimator: Estimator,
                 processing_time_s: Optional[float] = None):
        self.chirp, self.frame, self.layout, self.params = chirp, frame, layout, params
        self.estimator = estimator
        self.processing_time_s = processing_time_s
        self.metrics = derive_metrics(chirp, frame)
        self._fifo = deque(maxlen=frame.chirps_per_frame)
        self._busy_until = -np.inf
        self.dropped = 0
        self.processed = 0
        self.last_processing_s = 0.0

    def push(self, batch: ChirpBatch) -> Optional[FlowEstimate]:
        samples = np.asarray(batch.samples)
        if samples.ndim != 3 or samples.shape[1:] != (self.frame.virtual_count, self.chirp.samples_per_chirp):
            raise ValueError(f"batch shape {samples.shape} does not match the radar configuration")
        self._fifo.extend(samples)
        if len(self._fifo) < self.frame.chirps_per_frame:
            return None
        if batch.timestamp_s < self._busy_until:
            self.dropped += 1
            return None
        cube = RadarCube(np.stack(self._fifo), self.chirp, self.frame)
        t0 = time.perf_counter()
        hm, alt = preprocess(cube, self.layout, self.params)
        vx, vy = self.estimator(hm)
        elapsed = time.perf_counter() - t0
        proc = elapsed if self.processing_time_s is None else self.processing_time_s
        self.last_processing_s = proc
        self._busy_until = batch.timestamp_s + proc
        self.processed += 1
        vmax = self.metrics.v_max_mps
        vx, vy = float(np.clip(vx, -vmax, vmax)), float(np.clip(vy, -vmax, vmax))
        wx, wy = to_angular_flow(vx, vy, alt.altitude_m)
        return FlowEstimate(vx, vy, wx, wy, alt.altitude_m, batch.timestamp_s)


@dataclass(frozen=True, eq=False)
class PipelineRun:
    estimates: tuple
    dropped: int
    processed: int


def run_flow_pipeline(batches: Iterable[ChirpBatch], chirp: ChirpConfig, frame: FrameConfig,
                      layout: ArrayLayout, params: PreprocessParams, estimator: Estimator,
                      processing_time_s: Optional[float] = None) -> PipelineRun:
    pipe = FlowPipeline(chirp, frame, layout, params, estimator, processing_time_s)
    out = []
    for b in batches:
        est = pipe.push(b)
        if est is not None:
            out.append(est)
    return PipelineRun(tuple(out), pipe.dropped, pipe.processed)


def simulate_batches(scene, start: SensorState, chirp: ChirpConfig, layout: ArrayLayout,
                     batch_chirps: int, n_batches: int, t0: float = 0.0):
    """Constant-velocity chirp batches from a moving sensor."""
    tc = chirp.chirp_duration_s
    for b in range(n_batches):
        t = t0 + b * batch_chirps * tc
        st = start.advanced(t - t0)
        samples = simulate_chirps(scene, st, chirp, layout, batch_chirps, time_s=t)
        yield ChirpBatch(t + batch_chirps * tc, samples)
