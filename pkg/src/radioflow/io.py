"""Trace files, heatmap archives, INI configuration and run manifests.

Trace layout, little-endian::

    b"RFLW" | u32 version | u32 header length | header (UTF-8 JSON)
    records, each:
        f64 timestamp_s
        f32 samples, real/imag interleaved, shape (N_c, N_a, N_s)
        f64 position_m[3], velocity_mps[3]

The header holds the chirp, frame and layout. Every record has the same
size, which the header fixes. Floats in the header are written with
``repr`` precision, so a header round-trips exactly.
"""
from __future__ import annotations

import configparser
import hashlib
import io
import json
import os
import struct
import zipfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from radioflow.preprocess import PreprocessParams, StackedHeatmap
from radioflow.radar import (ArrayLayout, ChirpConfig, FrameConfig, default_chirp, default_frame,
                             forward_chirp, forward_frame, linear_layout, ods_layout)
from radioflow.scene import SensorState

TRACE_MAGIC = b"RFLW"
TRACE_VERSION = 1


@dataclass(frozen=True, eq=False)
class TraceRecord:
    timestamp_s: float
    samples: np.ndarray      # complex64 (N_c, N_a, N_s)
    state: SensorState


@dataclass(frozen=True, eq=False)
class TraceFile:
    chirp: ChirpConfig
    frame: FrameConfig
    layout: ArrayLayout
    records: tuple = ()

    @property
    def cube_shape(self) -> tuple:
        return (self.frame.chirps_per_frame, self.frame.virtual_count, self.chirp.samples_per_chirp)


def _header_dict(chirp: ChirpConfig, frame: FrameConfig, layout: ArrayLayout) -> dict:
    return {"chirp": asdict(chirp), "frame": asdict(frame),
            "layout": {"element_positions": [list(p) for p in layout.element_positions],
                       "axis_groups_x": layout.axis_groups_x and [list(g) for g in layout.axis_groups_x],
                       "axis_groups_y": layout.axis_groups_y and [list(g) for g in layout.axis_groups_y]}}


def _layout_from(d: dict) -> ArrayLayout:
    return ArrayLayout(tuple(tuple(p) for p in d["element_positions"]),
                       d["axis_groups_x"] and tuple(tuple(g) for g in d["axis_groups_x"]),
                       d["axis_groups_y"] and tuple(tuple(g) for g in d["axis_groups_y"]))


def _record_size(shape) -> int:
    return 8 + 8 * int(np.prod(shape)) + 6 * 8


def _pack_record(rec: TraceRecord, shape) -> bytes:
    samples = np.asarray(rec.samples)
    if samples.shape != shape:
        raise ValueError(f"record shape {samples.shape} does not match header shape {shape}")
    iq = np.ascontiguousarray(samples.astype(np.complex64)).view(np.float32).astype("<f4")
    st = np.array(tuple(rec.state.position_m) + tuple(rec.state.velocity_mps), dtype="<f8")
    return struct.pack("<d", rec.timestamp_s) + iq.tobytes() + st.tobytes()


def write_trace(path, trace: TraceFile) -> None:
    """Write a whole trace; samples are stored as complex64."""
    with TraceWriter(path, trace.chirp, trace.frame, trace.layout) as w:
        for rec in trace.records:
            w.append(rec)


class TraceWriter:
    """Incremental trace writer enforcing shape and time order."""

    def __init__(self, path, chirp: ChirpConfig, frame: FrameConfig, layout: ArrayLayout):
        if layout.count != frame.virtual_count:
            raise ValueError("layout size does not match the frame's virtual antenna count")
        self.shape = (frame.chirps_per_frame, frame.virtual_count, chirp.samples_per_chirp)
        header = json.dumps(_header_dict(chirp, frame, layout), sort_keys=True).encode("utf-8")
        self._fh = open(path, "wb")
        self._fh.write(TRACE_MAGIC + struct.pack("<II", TRACE_VERSION, len(header)) + header)
        self._last = -np.inf
        self.count = 0

    def append(self, rec: TraceRecord) -> None:
        if not rec.timestamp_s > self._last:
            raise ValueError(f"record {self.count}: timestamps must strictly increase")
        self._fh.write(_pack_record(rec, self.shape))
        self._last = rec.timestamp_s
        self.count += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trace(path) -> TraceFile:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != TRACE_MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != TRACE_VERSION:
        raise ValueError(f"{path}: unsupported trace version {version}")
    if 12 + hlen > len(data):
        raise ValueError(f"{path}: truncated header")
    hdr = json.loads(data[12:12 + hlen].decode("utf-8"))
    chirp = ChirpConfig(**hdr["chirp"])
    frame = FrameConfig(**hdr["frame"])
    layout = _layout_from(hdr["layout"])
    shape = (frame.chirps_per_frame, frame.virtual_count, chirp.samples_per_chirp)
    size = _record_size(shape)
    n_vals = 2 * int(np.prod(shape))
    body = memoryview(data)[12 + hlen:]
    n_full, rem = divmod(len(body), size)
    if rem:
        raise ValueError(f"{path}: record {n_full} truncated ({rem} of {size} bytes)")
    records = []
    last = -np.inf
    for i in range(n_full):
        off = i * size
        (t,) = struct.unpack_from("<d", body, off)
        iq = np.frombuffer(body, "<f4", n_vals, off + 8)
        samples = iq.view(np.complex64).reshape(shape).copy()
        st = np.frombuffer(body, "<f8", 6, off + 8 + 4 * n_vals)
        if not t > last:
            raise ValueError(f"{path}: record {i} is out of time order")
        last = t
        records.append(TraceRecord(t, samples, SensorState(tuple(st[:3]), tuple(st[3:]))))
    return TraceFile(chirp, frame, layout, tuple(records))


def traces_equal(a: TraceFile, b: TraceFile) -> bool:
    """Bit-level equality of headers and records."""
    if (a.chirp, a.frame, a.layout) != (b.chirp, b.frame, b.layout) or len(a.records) != len(b.records):
        return False
    for ra, rb in zip(a.records, b.records):
        if struct.pack("<d", ra.timestamp_s) != struct.pack("<d", rb.timestamp_s):
            return False
        if np.asarray(ra.samples, np.complex64).tobytes() != np.asarray(rb.samples, np.complex64).tobytes():
            return False
        sa = np.array(ra.state.position_m + ra.state.velocity_mps, dtype="<f8")
        sb = np.array(rb.state.position_m + rb.state.velocity_mps, dtype="<f8")
        if sa.tobytes() != sb.tobytes():
            return False
    return True


# ---------------------------------------------------------------------------
# heatmap archives (numpy .npz)

def save_heatmaps(path, heatmaps: Iterable[StackedHeatmap], **extra) -> None:
    """Stack heatmaps sharing one axis calibration into an ``.npz`` archive."""
    hms = list(heatmaps)
    if not hms:
        raise ValueError("no heatmaps to save")
    first = hms[0]
    save_npz(path, pixels=np.stack([h.pixels for h in hms]), native=np.stack([h.native for h in hms]),
             doppler_mps=first.doppler_mps, angles_deg=first.angles_deg,
             v_max_mps=np.float64(first.v_max_mps), v_res_mps=np.float64(first.v_res_mps), **extra)


def save_npz(path, **arrays) -> None:
    """``np.savez`` layout with fixed entry timestamps, so equal inputs give equal bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asanyarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def load_heatmaps(path) -> tuple:
    """Return ``(heatmaps, extra)`` where ``extra`` holds any additional arrays."""
    with np.load(path) as z:
        data = {k: z[k] for k in z.files}
    common = dict(doppler_mps=data.pop("doppler_mps"), angles_deg=data.pop("angles_deg"),
                  v_max_mps=float(data.pop("v_max_mps")), v_res_mps=float(data.pop("v_res_mps")))
    pixels, native = data.pop("pixels"), data.pop("native")
    hms = [StackedHeatmap(p, n, **common) for p, n in zip(pixels, native)]
    return hms, data


# ---------------------------------------------------------------------------
# configuration

CONFIG_SCHEMA = """\
[radar]            downward flow radar
  wavelength_m, chirp_duration_s, bandwidth_hz, samples_per_chirp, sample_rate_hz,
  chirps_per_frame, tx_count, rx_count, layout = ods | linear:<n_tx>x<n_rx>
[forward_radar]    collision radar, same keys
[preprocess]       theta_max_deg, theta_res_deg, range_subsample, resize_m, resize_n
"""


@dataclass(frozen=True)
class RadarSetup:
    chirp: ChirpConfig
    frame: FrameConfig
    layout: ArrayLayout
    layout_name: str


@dataclass(frozen=True)
class RunConfig:
    radar: RadarSetup
    forward_radar: RadarSetup
    preprocess: PreprocessParams = field(default_factory=PreprocessParams)


def _layout_by_name(name: str) -> ArrayLayout:
    name = name.strip().lower()
    if name == "ods":
        return ods_layout()
    if name.startswith("linear:"):
        n_tx, n_rx = (int(v) for v in name.split(":", 1)[1].split("x"))
        return linear_layout(n_tx, n_rx)
    raise ValueError(f"unknown layout {name!r} (expected 'ods' or 'linear:<tx>x<rx>')")


def _radar_section(sec, fallback: RadarSetup) -> RadarSetup:
    c, f = fallback.chirp, fallback.frame
    ns = sec.getint("samples_per_chirp", c.samples_per_chirp)
    tc = sec.getfloat("chirp_duration_s", c.chirp_duration_s)
    fs_default = c.sample_rate_hz if (ns, tc) == (c.samples_per_chirp, c.chirp_duration_s) else ns / tc
    chirp = ChirpConfig(sec.getfloat("wavelength_m", c.carrier_wavelength_m), tc,
                        sec.getfloat("bandwidth_hz", c.bandwidth_hz), ns,
                        sec.getfloat("sample_rate_hz", fs_default))
    frame = FrameConfig(sec.getint("chirps_per_frame", f.chirps_per_frame), sec.getint("tx_count", f.tx_count),
                        sec.getint("rx_count", f.rx_count), sec.getboolean("tdm_enabled", f.tdm_enabled))
    name = sec.get("layout", fallback.layout_name)
    layout = _layout_by_name(name)
    if layout.count != frame.virtual_count:
        raise ValueError(f"layout {name!r} has {layout.count} elements, frame expects {frame.virtual_count}")
    return RadarSetup(chirp, frame, layout, name)


def default_config() -> RunConfig:
    return RunConfig(RadarSetup(default_chirp(), default_frame(), ods_layout(), "ods"),
                     RadarSetup(forward_chirp(), forward_frame(), linear_layout(2, 4), "linear:2x4"))


def load_config(path=None, text: Optional[str] = None) -> RunConfig:
    """Read an INI config; missing sections and keys keep their defaults."""
    base = default_config()
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)
    elif text is not None:
        cp.read_string(text)
    known = {"radar", "forward_radar", "preprocess"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    radar = _radar_section(cp["radar"], base.radar) if cp.has_section("radar") else base.radar
    fwd = (_radar_section(cp["forward_radar"], base.forward_radar) if cp.has_section("forward_radar")
           else base.forward_radar)
    pp = base.preprocess
    if cp.has_section("preprocess"):
        sec = cp["preprocess"]
        kw = {}
        for f_ in fields(PreprocessParams):
            if f_.name in sec:
                kw[f_.name] = type(getattr(pp, f_.name))(sec[f_.name])
        pp = PreprocessParams(**kw)
    return RunConfig(radar, fwd, pp)


def config_text(cfg: RunConfig) -> str:
    """Canonical INI text; ``load_config(text=config_text(c)) == c``."""
    cp = configparser.ConfigParser()
    for name in ("radar", "forward_radar"):
        r = getattr(cfg, name)
        cp[name] = {"wavelength_m": repr(r.chirp.carrier_wavelength_m),
                    "chirp_duration_s": repr(r.chirp.chirp_duration_s),
                    "bandwidth_hz": repr(r.chirp.bandwidth_hz),
                    "samples_per_chirp": str(r.chirp.samples_per_chirp),
                    "sample_rate_hz": repr(r.chirp.sample_rate_hz),
                    "chirps_per_frame": str(r.frame.chirps_per_frame),
                    "tx_count": str(r.frame.tx_count), "rx_count": str(r.frame.rx_count),
                    "tdm_enabled": str(r.frame.tdm_enabled).lower(), "layout": r.layout_name}
    cp["preprocess"] = {f_.name: str(getattr(cfg.preprocess, f_.name)) for f_ in fields(PreprocessParams)}
    lines = []
    for sec in cp.sections():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {v}" for k, v in cp[sec].items()]
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# run manifests

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_hash: str
    seed: int
    tool_version: str
    outputs: dict    # relative path -> sha256

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))


def write_manifest(out_dir, command: str, cfg: RunConfig, seed: int, outputs: Iterable,
                   tool_version: str) -> RunManifest:
    out_dir = Path(out_dir)
    hashes = {os.path.relpath(p, out_dir): sha256_file(p) for p in outputs}
    man = RunManifest(command, hashlib.sha256(config_text(cfg).encode()).hexdigest(), int(seed),
                      tool_version, dict(sorted(hashes.items())))
    (out_dir / "manifest.json").write_text(man.to_json() + "\n")
    return man
