"""Doppler-angle preprocessing and altitude estimation for the downward radar."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from radioflow.radar import ArrayLayout, RadarCube, derive_metrics, select_axis_samples


class NoReturnDetected(RuntimeError):
    """The range profile has no peak standing above the floor."""


@dataclass(frozen=True)
class PreprocessParams:
    theta_max_deg: float = 60.0
    theta_res_deg: float = 6.0
    range_subsample: int = 1
    resize_m: int = 24
    resize_n: int = 24
    window: str = "hann"           # doppler window: "hann" | "rect"
    normalize_mode: str = "channel"  # "channel" | "joint"
    magnitude: str = "abs"         # "abs" | "power"

    def __post_init__(self):
        if not 0 < self.theta_res_deg <= self.theta_max_deg <= 90:
            raise ValueError("need 0 < theta_res_deg <= theta_max_deg <= 90")
        if int(self.range_subsample) != self.range_subsample or self.range_subsample < 1:
            raise ValueError("range_subsample must be an integer >= 1")
        if self.resize_m < 4 or self.resize_n < 4:
            raise ValueError("resize shape must be at least 4x4")
        if self.window not in ("hann", "rect"):
            raise ValueError(f"unknown window {self.window!r}")
        if self.normalize_mode not in ("channel", "joint"):
            raise ValueError(f"unknown normalize mode {self.normalize_mode!r}")
        if self.magnitude not in ("abs", "power"):
            raise ValueError(f"unknown magnitude mode {self.magnitude!r}")

    @classmethod
    def from_preset(cls, preset, **overrides):
        kw = dict(theta_max_deg=preset.theta_max_deg, theta_res_deg=preset.theta_res_deg,
                  range_subsample=preset.range_subsample, resize_m=preset.resize[0],
                  resize_n=preset.resize[1])
        kw.update(overrides)
        return cls(**kw)

    def angle_grid_deg(self) -> np.ndarray:
        return angle_grid(self.theta_max_deg, self.theta_res_deg)


@dataclass(frozen=True, eq=False)
class StackedHeatmap:
    """Resized 2-channel doppler-angle image plus its full-resolution source.

    ``pixels`` is ``M x N x 2`` (rows = doppler, columns = angle, channel 0
    = X axis, 1 = Y axis). ``native`` keeps the un-resized normalized maps
    with calibrated axes ``doppler_mps`` and ``angles_deg``.
    """

    pixels: np.ndarray
    native: np.ndarray
    doppler_mps: np.ndarray
    angles_deg: np.ndarray
    v_max_mps: float
    v_res_mps: float


@dataclass(frozen=True)
class AltitudeEstimate:
    altitude_m: float
    peak_snr_db: float


def angle_grid(theta_max_deg, theta_res_deg) -> np.ndarray:
    """``{-theta, -theta + d, ..., theta - d}`` in degrees."""
    n = int(round(2 * theta_max_deg / theta_res_deg))
    return -theta_max_deg + theta_res_deg * np.arange(n)


def estimate_altitude(cube: RadarCube, min_snr_db: float = 6.0) -> AltitudeEstimate:
    """Nearest strong return in the range profile of the chirp- and antenna-averaged samples.

    Averaging before the FFT keeps only the return common to every antenna
    and chirp, which is the ground directly below; oblique diffuse returns
    decorrelate across the array and average out.
    """
    s = cube.samples.mean(axis=(0, 1))
    ns = s.shape[-1]
    profile = np.abs(np.fft.fft(s * np.hanning(ns + 2)[1:-1])) ** 2
    search = profile[1:]  # DC excluded
    k = int(np.argmax(search)) + 1
    peak = profile[k]
    floor = float(np.median(profile))
    if not peak > 0:
        raise NoReturnDetected("range profile is empty")
    snr_db = np.inf if floor <= 0 else 10.0 * np.log10(peak / floor)
    if snr_db < min_snr_db:
        raise NoReturnDetected(f"peak SNR {snr_db:.1f} dB below {min_snr_db} dB")
    delta = 0.0
    if 1 <= k < ns - 1:
        a, b, c = np.log(np.maximum(profile[k - 1:k + 2], peak * 1e-30))
        den = a - 2 * b + c
        if den < 0:
            delta = float(np.clip(0.5 * (a - c) / den, -0.5, 0.5))
    altitude = (k + delta) * cube.chirp.range_bin_m
    return AltitudeEstimate(float(altitude), float(snr_db))


def subsample_range(axis_cube: np.ndarray, k: int) -> np.ndarray:
    """Keep every ``k``-th fast-time sample; a ragged tail is dropped."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = (axis_cube.shape[-1] // k) * k
    return axis_cube[..., :n:k]


def steering_matrix(n_elements: int, angles_deg, spacing: float = 1.0) -> np.ndarray:
    """``(n_elements, n_angles)`` steering vectors, element spacing in half-wavelengths."""
    k = np.arange(n_elements)[:, None]
    return np.exp(1j * np.pi * spacing * k * np.sin(np.deg2rad(np.asarray(angles_deg)))[None, :])


def doppler_angle_fft(axis_cube: np.ndarray, theta_res_deg: float, theta_max_deg: float,
                      spacing: float = 1.0, window: str = "hann", magnitude: str = "abs") -> np.ndarray:
    """Per-range-bin doppler-angle magnitudes, shape ``(N_c, n_angles, n_range)``.

    Doppler is FFT-shifted so row ``N_c // 2`` is zero velocity.
    """
    nc, na, _ = axis_cube.shape
    if na != 4:
        raise ValueError(f"expected a 4-antenna axis cube, got {na}")
    w = np.hanning(nc + 2)[1:-1] if window == "hann" else np.ones(nc)
    dop = np.fft.fftshift(np.fft.fft(axis_cube * w[:, None, None], axis=0), axes=0)
    steer = steering_matrix(na, angle_grid(theta_max_deg, theta_res_deg), spacing)
    spec = np.einsum("cas,ak->cks", dop, steer.conj(), optimize=True)
    mag = np.abs(spec)
    return mag ** 2 if magnitude == "power" else mag


def sum_over_range(tensor: np.ndarray) -> np.ndarray:
    return tensor.sum(axis=-1)


def normalize(heatmap: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; constant input maps to zeros."""
    h = np.asarray(heatmap, dtype=np.float64)
    lo, hi = h.min(), h.max()
    if hi - lo <= 0 or not np.isfinite(hi - lo):
        return np.zeros_like(h)
    return np.clip((h - lo) / (hi - lo), 0.0, 1.0)


def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation weights (half-pixel centers), rows sum to one."""
    if n_in == n_out:
        return np.eye(n_in)
    x = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    x = np.clip(x, 0, n_in - 1)
    i0 = np.floor(x).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = x - i0
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), i0] += 1 - f
    m[np.arange(n_out), i1] += f
    return m


def resize_bilinear(image: np.ndarray, m: int, n: int) -> np.ndarray:
    """Bilinear resize of ``H x W [x C]`` to ``m x n [x C]``."""
    rows = _interp_matrix(image.shape[0], m)
    cols = _interp_matrix(image.shape[1], n)
    img = np.asarray(image, dtype=np.float64)
    tail = img.shape[2:]
    flat = img.reshape(img.shape[0], img.shape[1], -1)
    out = np.einsum("lk,jkc->jlc", cols, flat)
    out = np.tensordot(rows, out, axes=(1, 0))
    return out.reshape((m, n) + tail)


def stack_and_resize(hx: np.ndarray, hy: np.ndarray, m: int, n: int) -> np.ndarray:
    stacked = np.stack([hx, hy], axis=-1)
    return np.clip(resize_bilinear(stacked, m, n), 0.0, 1.0)


def doppler_angle_maps(cube: RadarCube, layout: ArrayLayout, params: PreprocessParams) -> tuple:
    """Normalized native-resolution X and Y heatmaps (Algorithm lines 1-6)."""
    maps = []
    for axis in ("x", "y"):
        s = select_axis_samples(cube, layout, axis)
        s = subsample_range(s, params.range_subsample)
        t = doppler_angle_fft(s, params.theta_res_deg, params.theta_max_deg,
                              layout.axis_spacing(axis), params.window, params.magnitude)
        maps.append(sum_over_range(t))
    if params.normalize_mode == "joint":
        both = normalize(np.stack(maps, axis=-1))
        return both[..., 0], both[..., 1]
    return normalize(maps[0]), normalize(maps[1])


def heatmap_from_cube(cube: RadarCube, layout: ArrayLayout, params: PreprocessParams) -> StackedHeatmap:
    hx, hy = doppler_angle_maps(cube, layout, params)
    metrics = derive_metrics(cube.chirp, cube.frame)
    nc = cube.shape[0]
    pixels = stack_and_resize(hx, hy, params.resize_m, params.resize_n)
    return StackedHeatmap(
        pixels=pixels,
        native=np.stack([hx, hy], axis=-1),
        doppler_mps=(np.arange(nc) - nc // 2) * metrics.v_res_mps,
        angles_deg=params.angle_grid_deg(),
        v_max_mps=metrics.v_max_mps,
        v_res_mps=metrics.v_res_mps,
    )


def preprocess(cube: RadarCube, layout: ArrayLayout, params: PreprocessParams) -> tuple:
    """Altitude, then the stacked doppler-angle heatmap."""
    altitude = estimate_altitude(cube)
    return heatmap_from_cube(cube, layout, params), altitude
