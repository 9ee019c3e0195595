"""Point-scatterer world model and FMCW cube synthesis.

World frame: right-handed, axes aligned with the radar. For the downward
radar +Z points at the ground, the ground plane is ``z = 0`` and the sensor
sits at ``z = -altitude``. For the forward radar +Z is boresight and +X is
to the right.

Each chirp uses a stop-and-hop geometry: sensor and scatterer positions are
frozen for the chirp and advanced between chirps. The phase of one return is

    2*pi*f_b(r)*t_s - 4*pi*r/lambda + pi*(p_a . u)

with ``f_b = 2*B*r / (c*T_c)``, so a closing reflector produces a positive
two-way doppler ``2*v_r/lambda``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional

import numpy as np

from radioflow import kernels
from radioflow.radar import C_LIGHT, ArrayLayout, ChirpConfig, FrameConfig, RadarCube
from radioflow.records import FlowEstimate

# Budget for one chunk of the (chirps, scatterers, samples) phasor tensor.
_CHUNK_ELEMENTS = 1 << 21


def _vec3(v) -> tuple:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    return tuple(float(x) for x in a)


@dataclass(frozen=True)
class Scatterer:
    position_m: tuple
    reflectivity: complex
    velocity_mps: tuple = (0.0, 0.0, 0.0)
    specular: bool = False  # tracks the sensor's nadir point on z = 0

    def __post_init__(self):
        object.__setattr__(self, "position_m", _vec3(self.position_m))
        object.__setattr__(self, "velocity_mps", _vec3(self.velocity_mps))
        object.__setattr__(self, "reflectivity", complex(self.reflectivity))
        if not all(np.isfinite(self.position_m)):
            raise ValueError("scatterer position must be finite")


@dataclass(frozen=True)
class Mirror:
    """Planar reflector producing first-order image sources."""

    point_m: tuple
    normal: tuple
    reflectivity: float = 0.5

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("mirror normal must be nonzero")
        object.__setattr__(self, "point_m", _vec3(self.point_m))
        object.__setattr__(self, "normal", _vec3(n / norm))

    def reflect_points(self, pts: np.ndarray) -> np.ndarray:
        n = np.asarray(self.normal)
        d = (pts - np.asarray(self.point_m)) @ n
        return pts - 2.0 * d[:, None] * n[None, :]

    def reflect_vectors(self, vecs: np.ndarray) -> np.ndarray:
        n = np.asarray(self.normal)
        return vecs - 2.0 * (vecs @ n)[:, None] * n[None, :]


@dataclass(frozen=True, eq=False)
class Scene:
    scatterers: tuple
    roughness: float = 1.0
    clutter: tuple = ()
    mirrors: tuple = ()
    noise_std: float = 0.0
    seed: int = 0
    surface_id: str = ""

    def __post_init__(self):
        if not 0.0 <= self.roughness <= 1.0:
            raise ValueError("roughness must lie in [0, 1]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        object.__setattr__(self, "clutter", tuple(self.clutter))
        object.__setattr__(self, "mirrors", tuple(self.mirrors))

    def with_noise(self, noise_std: float) -> "Scene":
        return Scene(self.scatterers, self.roughness, self.clutter, self.mirrors,
                     noise_std, self.seed, self.surface_id)

    def scaled(self, factor: float) -> "Scene":
        """Same geometry with every reflectivity multiplied by ``factor``."""
        def scale(items):
            return tuple(Scatterer(s.position_m, s.reflectivity * factor, s.velocity_mps, s.specular)
                         for s in items)
        return Scene(scale(self.scatterers), self.roughness, scale(self.clutter), self.mirrors,
                     self.noise_std * abs(factor), self.seed, self.surface_id)

    @cached_property
    def _packed(self):
        """Direct and image-source scatterers as flat arrays."""
        items = self.scatterers + self.clutter
        if not items:
            empty = np.zeros((0, 3))
            return empty, np.zeros(0, complex), empty, np.zeros(0, bool)
        pos = np.array([s.position_m for s in items], dtype=np.float64)
        amp = np.array([s.reflectivity for s in items], dtype=np.complex128)
        vel = np.array([s.velocity_mps for s in items], dtype=np.float64)
        spec = np.array([s.specular for s in items], dtype=bool)
        parts = [(pos, amp, vel, spec)]
        direct = ~spec
        for m in self.mirrors:
            parts.append((m.reflect_points(pos[direct]), amp[direct] * m.reflectivity,
                          m.reflect_vectors(vel[direct]), np.zeros(direct.sum(), bool)))
        return tuple(np.concatenate(a) for a in zip(*parts))

    def packed(self):
        return self._packed


@dataclass(frozen=True)
class SensorState:
    position_m: tuple
    velocity_mps: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "position_m", _vec3(self.position_m))
        object.__setattr__(self, "velocity_mps", _vec3(self.velocity_mps))

    @property
    def altitude_m(self) -> float:
        """Height above the ``z = 0`` ground plane (downward radar frame)."""
        return -self.position_m[2]

    def advanced(self, dt: float) -> "SensorState":
        p = np.asarray(self.position_m) + dt * np.asarray(self.velocity_mps)
        return SensorState(p, self.velocity_mps)


def make_ground_scene(roughness=1.0, scatterer_density_per_m2=50.0, extent_m=4.0, clutter_count=0,
                      mirror_count=0, noise_std=0.0, seed=0, specular_gain=4.0,
                      clutter_gain=2.0) -> Scene:
    """Random rough floor on ``z = 0`` centered under the origin.

    Diffuse amplitudes are Rayleigh distributed and scale with
    ``roughness``; one sensor-tracking specular return at nadir has
    amplitude ``(1 - roughness) * specular_gain``. The diffuse count is
    Poisson with mean ``density * extent**2``.
    """
    if scatterer_density_per_m2 < 0 or extent_m <= 0:
        raise ValueError("density must be >= 0 and extent > 0")
    if not 0.0 <= roughness <= 1.0:
        raise ValueError("roughness must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    half = extent_m / 2.0
    n = rng.poisson(scatterer_density_per_m2 * extent_m ** 2) if scatterer_density_per_m2 > 0 else 0
    xy = rng.uniform(-half, half, size=(n, 2))
    mag = rng.rayleigh(1.0, size=n)
    phase = rng.uniform(0.0, 2 * np.pi, size=n)
    scatterers = []
    if roughness > 0:
        amps = roughness * mag * np.exp(1j * phase)
        scatterers = [Scatterer((x, y, 0.0), a) for (x, y), a in zip(xy, amps)]
    if roughness < 1:
        scatterers.append(Scatterer((0.0, 0.0, 0.0), (1.0 - roughness) * specular_gain, specular=True))

    clutter = []
    for _ in range(clutter_count):
        x, y = rng.uniform(-half, half, size=2)
        z = -rng.uniform(0.1, 0.5)
        a = clutter_gain * rng.rayleigh(1.0) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        clutter.append(Scatterer((x, y, z), a))

    mirrors = []
    for _ in range(mirror_count):
        ang = rng.uniform(0, 2 * np.pi)
        normal = np.array([np.cos(ang), np.sin(ang), 0.0])
        mirrors.append(Mirror(half * normal, -normal, 0.5))

    return Scene(tuple(scatterers), roughness, tuple(clutter), tuple(mirrors), noise_std, seed,
                 surface_id=f"seed={seed},roughness={roughness:g}")


def planar_patch(center, u_axis, v_axis, size_u, size_v, density_per_m2, rng, amplitude=1.0):
    """Diffuse scatterers on a rectangle spanned by unit vectors ``u_axis``/``v_axis``."""
    center = np.asarray(center, dtype=np.float64)
    u_axis = np.asarray(u_axis, dtype=np.float64)
    v_axis = np.asarray(v_axis, dtype=np.float64)
    n = rng.poisson(density_per_m2 * size_u * size_v)
    a = rng.uniform(-size_u / 2, size_u / 2, size=n)
    b = rng.uniform(-size_v / 2, size_v / 2, size=n)
    pts = center + a[:, None] * u_axis + b[:, None] * v_axis
    amps = amplitude * rng.rayleigh(1.0, size=n) * np.exp(1j * rng.uniform(0, 2 * np.pi, size=n))
    return [Scatterer(p, z) for p, z in zip(pts, amps)]


def _noise_rng(scene: Scene, time_s: float):
    return np.random.default_rng([int(scene.seed) & 0xFFFFFFFF, int(round(time_s * 1e7)) & 0xFFFFFFFFFFFF])


def simulate_chirps(scene: Scene, state: SensorState, chirp: ChirpConfig, layout: ArrayLayout,
                    n_chirps: int, time_s: float = 0.0, rng=None, orientation=None) -> np.ndarray:
    """Synthesize ``n_chirps`` consecutive chirps starting at ``time_s``.

    ``state`` is the sensor state at ``time_s``. ``orientation`` is an
    optional 3x3 matrix whose rows are the sensor axes in world
    coordinates; by default the sensor axes are the world axes. Returns
    complex128 ``(n_chirps, N_a, N_s)``.
    """
    lam = chirp.carrier_wavelength_m
    tc = chirp.chirp_duration_s
    ns = chirp.samples_per_chirp
    n_a = layout.count
    out = np.zeros((n_chirps, n_a, ns), dtype=np.complex128)
    pos, amp, vel, spec = scene.packed()
    p0 = np.asarray(state.position_m)
    v0 = np.asarray(state.velocity_mps)
    elem = layout.positions  # (N_a, 2), half-wavelength units
    beat_step = 2.0 * np.pi * 2.0 * chirp.slope_hz_per_s / (C_LIGHT * chirp.sample_rate_hz)

    n_s = len(amp)
    if n_s:
        chunk = max(1, _CHUNK_ELEMENTS // (n_s * ns))
        for c0 in range(0, n_chirps, chunk):
            c1 = min(n_chirps, c0 + chunk)
            t_rel = np.arange(c0, c1) * tc
            sensor = p0[None, :] + t_rel[:, None] * v0[None, :]  # (C, 3)
            pts = pos[None, :, :] + (time_s + t_rel)[:, None, None] * vel[None, :, :]
            if spec.any():
                nadir = np.stack([sensor[:, 0], sensor[:, 1], np.zeros(c1 - c0)], axis=1)
                pts[:, spec, :] = nadir[:, None, :]
            d = pts - sensor[:, None, :]
            r = np.sqrt(np.einsum("csk,csk->cs", d, d))
            u = d / r[..., None]
            if orientation is not None:
                u = u @ np.asarray(orientation, dtype=np.float64).T
            loss = np.where(spec[None, :], 1.0 / r, 1.0 / r ** 2)
            g = amp[None, :] * loss * np.exp(-1j * 4.0 * np.pi * r / lam)
            spatial = np.exp(1j * np.pi * (u[..., :2] @ elem.T))  # (C, S, N_a)
            ga = spatial * g[..., None]
            beat = kernels.phasor_table(np.zeros(r.size), (beat_step * r).ravel(), ns)
            beat = beat.reshape(c1 - c0, n_s, ns)
            out[c0:c1] = np.matmul(ga.transpose(0, 2, 1), beat)

    if scene.noise_std > 0:
        rng = rng if rng is not None else _noise_rng(scene, time_s)
        noise = rng.standard_normal((2,) + out.shape)
        out += (scene.noise_std / np.sqrt(2.0)) * (noise[0] + 1j * noise[1])
    return out


def simulate_cube(scene: Scene, state: SensorState, chirp: ChirpConfig, frame: FrameConfig,
                  layout: ArrayLayout, time_s: float = 0.0, rng=None, orientation=None) -> RadarCube:
    if layout.count != frame.virtual_count:
        raise ValueError(f"layout has {layout.count} elements, frame expects {frame.virtual_count}")
    samples = simulate_chirps(scene, state, chirp, layout, frame.chirps_per_frame, time_s, rng,
                              orientation)
    return RadarCube(samples, chirp, frame)


def noise_std_for_snr(cube: RadarCube, snr_db: float) -> float:
    """Noise std giving ``snr_db`` against the mean sample power of a noiseless cube."""
    p_sig = float(np.mean(np.abs(cube.samples) ** 2))
    return float(np.sqrt(p_sig / 10 ** (snr_db / 10.0)))


def ground_truth_flow(state: SensorState, timestamp_s: float = 0.0) -> FlowEstimate:
    h = state.altitude_m
    if not h > 0:
        raise ValueError(f"altitude must be > 0, got {h}")
    vx, vy = state.velocity_mps[0], state.velocity_mps[1]
    return FlowEstimate(vx, vy, vx / h, vy / h, h, timestamp_s)


# Trajectory text format: one record per line, "t px py pz vx vy vz",
# whitespace separated, '#' starts a comment.
def write_trajectory(path, records: Iterable) -> None:
    with open(path, "w") as fh:
        fh.write("# t_s px_m py_m pz_m vx_mps vy_mps vz_mps\n")
        for t, st in records:
            vals = (t,) + st.position_m + st.velocity_mps
            fh.write(" ".join(repr(float(v)) for v in vals) + "\n")


def read_trajectory(path) -> list:
    out = []
    last = -np.inf
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 7:
                raise ValueError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
            t, px, py, pz, vx, vy, vz = map(float, parts)
            if t <= last:
                raise ValueError(f"{path}:{lineno}: timestamps must increase")
            last = t
            out.append((t, SensorState((px, py, pz), (vx, vy, vz))))
    return out
