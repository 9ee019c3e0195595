"""FMCW waveform and array configuration, the radar cube, and derived metrics.

Conventions
-----------
* Virtual element positions are integer grid coordinates in units of half
  a carrier wavelength.
* Axis-group antenna indices are 1-based (as printed on the board's
  virtual-array diagram) in configs and 0-based everywhere else;
  :class:`ArrayLayout` owns the conversion.
* Doppler velocity is positive for a closing (approaching) reflector.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

C_LIGHT = 2.99792458e8  # m/s

AXES = ("x", "y")


@dataclass(frozen=True)
class ChirpConfig:
    carrier_wavelength_m: float
    chirp_duration_s: float
    bandwidth_hz: float
    samples_per_chirp: int
    sample_rate_hz: float

    def __post_init__(self):
        for name in ("carrier_wavelength_m", "chirp_duration_s", "bandwidth_hz",
                     "samples_per_chirp", "sample_rate_hz"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        if int(self.samples_per_chirp) != self.samples_per_chirp or self.samples_per_chirp < 2:
            raise ValueError("samples_per_chirp must be an integer >= 2")
        # relative slack: fs*Tc is often an exact integer that rounds just below
        if self.sample_rate_hz * self.chirp_duration_s < self.samples_per_chirp * (1 - 1e-9):
            raise ValueError("sample_rate_hz * chirp_duration_s must be >= samples_per_chirp")

    @property
    def slope_hz_per_s(self) -> float:
        return self.bandwidth_hz / self.chirp_duration_s

    @property
    def range_bin_m(self) -> float:
        """Range spacing of one fast-time FFT bin for the actual sampling."""
        return C_LIGHT * self.sample_rate_hz / (2.0 * self.slope_hz_per_s * self.samples_per_chirp)


@dataclass(frozen=True)
class FrameConfig:
    chirps_per_frame: int
    tx_count: int = 3
    rx_count: int = 4
    tdm_enabled: bool = True

    def __post_init__(self):
        nc = self.chirps_per_frame
        if int(nc) != nc or nc < 2 or (nc & (nc - 1)) != 0:
            raise ValueError(f"chirps_per_frame must be a power of two >= 2, got {nc!r}")
        if self.tx_count < 1 or self.rx_count < 1:
            raise ValueError("tx_count and rx_count must be >= 1")

    @property
    def virtual_count(self) -> int:
        return self.tx_count * self.rx_count if self.tdm_enabled else self.rx_count


@dataclass(frozen=True)
class ArrayLayout:
    """Virtual array geometry plus the two per-axis antenna groupings.

    ``axis_groups_x`` / ``axis_groups_y`` hold 1-based indices; use
    :meth:`groups` for 0-based access.
    """

    element_positions: tuple
    axis_groups_x: Optional[tuple] = None
    axis_groups_y: Optional[tuple] = None

    def __post_init__(self):
        pos = tuple(tuple(int(v) for v in p) for p in self.element_positions)
        if any(len(p) != 2 for p in pos):
            raise ValueError("element positions must be 2-D grid coordinates")
        if len(set(pos)) != len(pos):
            raise ValueError("element positions must be unique")
        object.__setattr__(self, "element_positions", pos)
        for axis in AXES:
            name = f"axis_groups_{axis}"
            groups = getattr(self, name)
            if groups is None:
                continue
            groups = tuple(tuple(int(i) for i in g) for g in groups)
            object.__setattr__(self, name, groups)
            self._check_groups(axis, groups)

    def _check_groups(self, axis, groups):
        if len(groups) != 2 or any(len(g) != 4 for g in groups):
            raise ValueError(f"{axis} axis needs two 4-antenna groups")
        along = 0 if axis == "x" else 1
        spacings = set()
        for g in groups:
            for idx in g:
                if not 1 <= idx <= len(self.element_positions):
                    raise ValueError(f"antenna index {idx} out of range 1..{len(self.element_positions)}")
            p = np.array([self.element_positions[i - 1] for i in g])
            d = np.diff(p, axis=0)
            if np.any(d[:, 1 - along] != 0):
                raise ValueError(f"{axis} group {g} is not collinear along {axis}")
            if len(set(d[:, along])) != 1 or d[0, along] == 0:
                raise ValueError(f"{axis} group {g} is not uniformly spaced")
            spacings.add(int(d[0, along]))
        if len(spacings) != 1:
            raise ValueError(f"{axis} groups have different element spacing")

    @property
    def count(self) -> int:
        return len(self.element_positions)

    @property
    def positions(self) -> np.ndarray:
        return np.asarray(self.element_positions, dtype=np.float64)

    def groups(self, axis: str) -> tuple:
        """0-based antenna indices of the two groups for ``axis``."""
        groups = getattr(self, f"axis_groups_{axis.lower()}")
        if groups is None:
            raise ValueError(f"layout has no {axis} axis groups")
        return tuple(tuple(i - 1 for i in g) for g in groups)

    def axis_spacing(self, axis: str) -> int:
        """Signed element spacing (half-wavelengths) along ``axis``."""
        g = self.groups(axis)[0]
        along = 0 if axis.lower() == "x" else 1
        return self.element_positions[g[1]][along] - self.element_positions[g[0]][along]


@dataclass(frozen=True, eq=False)
class RadarCube:
    samples: np.ndarray  # (N_c, N_a, N_s) complex
    chirp: ChirpConfig
    frame: FrameConfig

    def __post_init__(self):
        s = np.asarray(self.samples)
        if not np.iscomplexobj(s):
            s = s.astype(np.complex128)
        expected = (self.frame.chirps_per_frame, self.frame.virtual_count, self.chirp.samples_per_chirp)
        if s.shape != expected:
            raise ValueError(f"cube shape {s.shape} does not match configs {expected}")
        if not np.all(np.isfinite(s)):
            raise ValueError("cube contains non-finite samples")
        object.__setattr__(self, "samples", s)

    @property
    def shape(self):
        return self.samples.shape


@dataclass(frozen=True)
class RadarMetrics:
    v_max_mps: float
    v_res_mps: float
    r_max_m: float
    r_res_m: float
    integration_time_s: float


def derive_metrics(chirp: ChirpConfig, frame: FrameConfig) -> RadarMetrics:
    lam, tc, nc = chirp.carrier_wavelength_m, chirp.chirp_duration_s, frame.chirps_per_frame
    r_res = C_LIGHT / (2.0 * chirp.bandwidth_hz)
    return RadarMetrics(
        v_max_mps=lam / (4.0 * tc),
        v_res_mps=lam / (2.0 * nc * tc),
        r_max_m=r_res * chirp.samples_per_chirp,
        r_res_m=r_res,
        integration_time_s=nc * tc,
    )


def doppler_hz(radial_velocity_mps, wavelength_m, two_way=True):
    """Doppler frequency of a reflector closing at ``radial_velocity_mps``.

    ``two_way=False`` gives the one-way expression ``v/lambda``.
    """
    factor = 2.0 if two_way else 1.0
    return factor * np.asarray(radial_velocity_mps) / wavelength_m


def build_virtual_array(tx_positions: Sequence, rx_positions: Sequence, axis_groups_x=None,
                        axis_groups_y=None) -> ArrayLayout:
    """TX-major virtual array: element ``t * n_rx + r`` sits at ``tx[t] + rx[r]``."""
    tx = [tuple(int(v) for v in p) for p in tx_positions]
    rx = [tuple(int(v) for v in p) for p in rx_positions]
    virtual = [(t[0] + r[0], t[1] + r[1]) for t in tx for r in rx]
    seen = {}
    for i, p in enumerate(virtual):
        if p in seen:
            raise ValueError(
                f"overlapping co-array: virtual elements {seen[p] + 1} and {i + 1} both at {p}")
        seen[p] = i
    return ArrayLayout(tuple(virtual), axis_groups_x, axis_groups_y)


ODS_TX = ((0, 0), (2, 0), (2, 2))
ODS_RX = ((0, 0), (0, 1), (1, 1), (1, 0))
ODS_AXIS_GROUPS_X = ((1, 4, 5, 8), (2, 3, 6, 7))
ODS_AXIS_GROUPS_Y = ((8, 7, 12, 11), (5, 6, 9, 10))


def ods_layout() -> ArrayLayout:
    """Default 12-element downward-radar layout.

    Three TX and four RX on a half-wavelength grid; the TX-major numbering
    places 1,4,5,8 / 2,3,6,7 on two x-rows and 8,7,12,11 / 5,6,9,10 on two
    y-columns.
    """
    return build_virtual_array(ODS_TX, ODS_RX, ODS_AXIS_GROUPS_X, ODS_AXIS_GROUPS_Y)


def linear_layout(n_tx=2, n_rx=4) -> ArrayLayout:
    """Uniform horizontal array (forward radar): ``n_tx*n_rx`` elements along x."""
    tx = [(n_rx * t, 0) for t in range(n_tx)]
    rx = [(r, 0) for r in range(n_rx)]
    return build_virtual_array(tx, rx)


def select_axis_samples(cube: RadarCube, layout: ArrayLayout, axis: str) -> np.ndarray:
    """Sum the two antenna groups of ``axis`` into an ``N_c x 4 x N_s`` 1-D array cube."""
    g1, g2 = layout.groups(axis)
    n_a = cube.shape[1]
    for idx in g1 + g2:
        if not 0 <= idx < n_a:
            raise ValueError(f"axis group antenna {idx + 1} out of range for cube with {n_a} antennas")
    s = cube.samples
    return s[:, list(g1), :] + s[:, list(g2), :]


# Downward-radar parameter sets keyed by flow update rate. Chirps per frame
# stay a power of two, so the chirp period absorbs the integration time.
@dataclass(frozen=True)
class RatePreset:
    rate_hz: int
    integration_time_s: float
    theta_res_deg: float
    theta_max_deg: float
    range_subsample: int
    resize: tuple
    model: str
    chirps_per_frame: int = 128

    def chirp_config(self, samples_per_chirp=64, wavelength_m=5e-3, bandwidth_hz=4e9) -> ChirpConfig:
        tc = self.integration_time_s / self.chirps_per_frame
        return ChirpConfig(wavelength_m, tc, bandwidth_hz, samples_per_chirp, samples_per_chirp / tc)

    def frame_config(self) -> FrameConfig:
        return FrameConfig(self.chirps_per_frame, 3, 4, True)

    @property
    def batch_chirps(self) -> int:
        """Chirps per arriving batch so batches land at ``rate_hz``."""
        tc = self.integration_time_s / self.chirps_per_frame
        return max(1, int(round(1.0 / (self.rate_hz * tc))))


RATE_PRESETS = {
    15: RatePreset(15, 0.140, 6.0, 60.0, 3, (24, 24), "mini"),
    30: RatePreset(30, 0.100, 3.0, 60.0, 4, (24, 24), "micro"),
    40: RatePreset(40, 0.075, 6.0, 60.0, 6, (24, 24), "micro"),
    50: RatePreset(50, 0.060, 6.0, 60.0, 12, (12, 24), "nano"),
}


def default_chirp() -> ChirpConfig:
    """60 GHz downward chirp: v_max = 2 m/s, 64 samples, 4 GHz sweep."""
    return ChirpConfig(5e-3, 6.25e-4, 4e9, 64, 64 / 6.25e-4)


def default_frame() -> FrameConfig:
    return FrameConfig(32, 3, 4, True)


def forward_chirp() -> ChirpConfig:
    """77 GHz forward-radar chirp."""
    lam = C_LIGHT / 77e9
    return ChirpConfig(lam, 2.5e-4, 4e9, 64, 64 / 2.5e-4)


def forward_frame() -> FrameConfig:
    return FrameConfig(32, 2, 4, True)
