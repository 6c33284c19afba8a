"""Event records, analysis configuration, and the on-disk event formats.

Two waveform formats share one logical layout (header + samples with channels
as columns): a ``# kzm-event v1`` text file and a little-endian ``KZME`` binary
file. Frame-level series (per-frame Q, mean betweenness and node degrees, as
produced by the constructed oracle or dumped by ``analyze``) use the
``# kzm-frames v1`` text format handled in ``funcnet``.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

CSV_MAGIC = "# kzm-event v1"
BINARY_MAGIC = b"KZME"
BINARY_VERSION = 1


class EventFormatError(ValueError):
    """Malformed or invalid event data, with the offending position if known."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ConfigError(ValueError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def uniform_angles(n: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n) / n


@dataclass(frozen=True)
class EventRecord:
    """One multichannel waveform event.

    ``samples`` is stored channel-major (N x T); files store channels as columns.
    """

    event_id: str
    sample_interval: float
    samples: np.ndarray
    node_angles: np.ndarray | None = None
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise EventFormatError("samples must be a 2-D channels x time matrix")
        n, t = samples.shape
        if n < 3:
            raise EventFormatError(f"N >= 3 violated: event has {n} channels")
        if t < 2:
            raise EventFormatError(f"event has {t} samples; need at least 2")
        bad = np.argwhere(~np.isfinite(samples))
        if bad.size:
            ch, idx = bad[0]
            raise EventFormatError(
                f"non-finite sample in channel {ch} at index {idx}", row=int(idx), column=int(ch)
            )
        if not (math.isfinite(self.sample_interval) and self.sample_interval > 0):
            raise EventFormatError(f"sample_interval must be positive, got {self.sample_interval}")
        angles = uniform_angles(n) if self.node_angles is None else np.array(self.node_angles, dtype=np.float64)
        if angles.shape != (n,):
            raise EventFormatError(f"expected {n} angles, got {angles.size}")
        if not np.all(np.isfinite(angles)) or np.any(angles < 0) or np.any(angles >= 2 * np.pi):
            raise EventFormatError("angles must lie in [0, 2*pi)")
        steps = np.diff(angles)
        if np.any(steps <= 0):
            j = int(np.nonzero(steps <= 0)[0][0]) + 1
            what = "duplicate" if steps[j - 1] == 0 else "non-increasing"
            raise EventFormatError(f"{what} angle at position {j}", column=j)
        object.__setattr__(self, "samples", _readonly(samples))
        object.__setattr__(self, "node_angles", _readonly(angles))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class AnalysisConfig:
    window_length: int = 128
    stride: int = 128
    similarity_threshold: float = 0.55
    smoothing_width: int = 5
    impulse_k_sigma: float = 6.0
    freeze_tolerance: float = 0.05
    m_threshold: float = 0.1
    rng_seed: int = 0
    # frames averaged for the rest modularity Q0
    q0_frames: int = 1
    min_plateau_frames: int = 3

    def __post_init__(self):
        if self.window_length < 4:
            raise ConfigError(f"window_length must be >= 4, got {self.window_length}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if not 0.0 < self.similarity_threshold < 1.0:
            raise ConfigError("similarity_threshold must lie in (0, 1)")
        if self.smoothing_width < 1 or self.smoothing_width % 2 == 0:
            raise ConfigError("smoothing_width must be a positive odd number of frames")
        if not self.impulse_k_sigma > 0:
            raise ConfigError("impulse_k_sigma must be > 0")
        if not self.freeze_tolerance > 0:
            raise ConfigError("freeze_tolerance must be > 0")
        if not 0.0 < self.m_threshold < 1.0:
            raise ConfigError("m_threshold must lie in (0, 1)")
        if self.q0_frames < 1 or self.min_plateau_frames < 1:
            raise ConfigError("q0_frames and min_plateau_frames must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "AnalysisConfig":
        return dataclasses.replace(self, **changes)


def _coerce(name: str, kind: type, text: str):
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {kind.__name__}") from None
    return text


def config_field_types() -> dict[str, type]:
    hints = {"int": int, "float": float}
    return {f.name: hints.get(f.type, str) for f in dataclasses.fields(AnalysisConfig)}


def load_config(path: str | os.PathLike, base: AnalysisConfig | None = None) -> AnalysisConfig:
    """Read ``key = value`` lines (``#`` comments allowed) into an AnalysisConfig."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    text = Path(path).read_text()
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    types = config_field_types()
    values = {}
    for key, raw in parser["config"].items():
        name = key.replace("-", "_")
        if name not in types:
            raise ConfigError(f"{path}: unknown key {key!r}")
        values[name] = _coerce(name, types[name], raw.strip())
    return dataclasses.replace(base or AnalysisConfig(), **values)


def normalize_channels(event: EventRecord) -> EventRecord:
    """Z-score every channel over the whole event.

    Constant channels become all zeros and are listed under the metadata key
    ``constant_channels``.
    """
    x = event.samples
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    sd = np.sqrt(np.mean(xc * xc, axis=1))
    scale = np.max(np.abs(x), axis=1)
    constant = sd <= 16 * np.finfo(float).eps * np.maximum(scale, 1e-300)
    out = np.zeros_like(x)
    live = ~constant
    out[live] = xc[live] / sd[live, None]
    meta = dict(event.metadata)
    meta["normalized"] = True
    flagged = sorted(set(meta.get("constant_channels", [])) | set(np.nonzero(constant)[0].tolist()))
    if flagged:
        meta["constant_channels"] = flagged
    return EventRecord(event.event_id, event.sample_interval, out, event.node_angles, meta)


def _fmt(v: float) -> str:
    return repr(float(v))


def save_event(event: EventRecord, path: str | os.PathLike, format: str | None = None) -> Path:
    path = Path(path)
    format = format or ("binary" if path.suffix in (".kzme", ".bin") else "csv")
    if format == "binary":
        data = event_bytes(event)
    elif format == "csv":
        data = event_text(event).encode()
    else:
        raise ValueError(f"unknown event format {format!r}")
    atomic_write(path, data)
    return path


def event_text(event: EventRecord) -> str:
    n, t = event.samples.shape
    lines = [
        CSV_MAGIC,
        f"# event_id: {event.event_id}",
        f"# channels: {n}",
        f"# samples: {t}",
        f"# sample_interval: {_fmt(event.sample_interval)}",
        "# angles: " + " ".join(_fmt(a) for a in event.node_angles),
        "# metadata: " + json.dumps(event.metadata, sort_keys=True),
    ]
    body = "\n".join(",".join(_fmt(v) for v in row) for row in event.samples.T)
    return "\n".join(lines) + "\n" + body + "\n"


def event_bytes(event: EventRecord) -> bytes:
    n, t = event.samples.shape
    head = BINARY_MAGIC + struct.pack("<HIQd", BINARY_VERSION, n, t, event.sample_interval)
    trailer = json.dumps({"event_id": event.event_id, "metadata": event.metadata}, sort_keys=True).encode()
    return b"".join(
        [
            head,
            event.node_angles.astype("<f8").tobytes(),
            np.ascontiguousarray(event.samples.T).astype("<f8").tobytes(),
            struct.pack("<I", len(trailer)),
            trailer,
        ]
    )


def sniff_format(path: str | os.PathLike) -> str:
    with open(path, "rb") as fh:
        head = fh.read(len(CSV_MAGIC))
    if head.startswith(BINARY_MAGIC):
        return "binary"
    if head.decode("ascii", errors="replace") == CSV_MAGIC:
        return "csv"
    if head.startswith(b"# kzm-frames"):
        return "frames"
    raise EventFormatError(f"{path}: unrecognized event file header", row=1)


def load_event(path: str | os.PathLike, format: str | None = None) -> EventRecord:
    path = Path(path)
    format = format or sniff_format(path)
    if format == "binary":
        return _parse_binary(path.read_bytes(), path)
    if format == "csv":
        return _parse_csv(path.read_text(), path)
    raise EventFormatError(f"{path}: not a waveform event file (format {format!r})")


def _parse_binary(data: bytes, path) -> EventRecord:
    fixed = struct.calcsize("<HIQd")
    if data[:4] != BINARY_MAGIC or len(data) < 4 + fixed:
        raise EventFormatError(f"{path}: bad binary header")
    version, n, t, dt = struct.unpack_from("<HIQd", data, 4)
    if version != BINARY_VERSION:
        raise EventFormatError(f"{path}: unsupported binary version {version}")
    off = 4 + fixed
    need = off + 8 * n + 8 * n * t
    if len(data) < need:
        raise EventFormatError(f"{path}: truncated sample block ({len(data)} of {need} bytes)")
    angles = np.frombuffer(data, "<f8", n, off).astype(np.float64)
    samples = np.frombuffer(data, "<f8", n * t, off + 8 * n).reshape(t, n).T
    event_id, meta = Path(path).stem, {}
    if len(data) >= need + 4:
        (size,) = struct.unpack_from("<I", data, need)
        try:
            trailer = json.loads(data[need + 4 : need + 4 + size].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise EventFormatError(f"{path}: bad metadata trailer: {exc}") from None
        event_id = trailer.get("event_id", event_id)
        meta = trailer.get("metadata", {})
    return EventRecord(event_id, dt, samples, angles, meta)


def _parse_csv(text: str, path) -> EventRecord:
    lines = text.splitlines()
    if not lines or lines[0].strip() != CSV_MAGIC:
        raise EventFormatError(f"{path}: missing '{CSV_MAGIC}' header", row=1)
    header: dict[str, str] = {}
    i = 1
    while i < len(lines) and lines[i].startswith("#"):
        key, sep, value = lines[i][1:].partition(":")
        if not sep:
            raise EventFormatError(f"{path}: malformed header line {lines[i]!r}", row=i + 1)
        header[key.strip()] = value.strip()
        i += 1
    for key in ("channels", "samples", "sample_interval"):
        if key not in header:
            raise EventFormatError(f"{path}: header missing '{key}'", row=i)
    try:
        n = int(header["channels"])
        t = int(header["samples"])
        dt = float(header["sample_interval"])
    except ValueError as exc:
        raise EventFormatError(f"{path}: malformed header value: {exc}") from None
    angles = None
    if header.get("angles"):
        try:
            angles = [float(a) for a in header["angles"].split()]
        except ValueError as exc:
            raise EventFormatError(f"{path}: malformed angle list: {exc}") from None
        for j in range(1, len(angles)):
            if angles[j] == angles[j - 1]:
                raise EventFormatError(f"{path}: duplicate angle at position {j}", column=j)
    meta = json.loads(header["metadata"]) if header.get("metadata") else {}
    rows = [ln for ln in lines[i:] if ln.strip()]
    if len(rows) != t:
        raise EventFormatError(f"{path}: header declares {t} samples, found {len(rows)} rows", row=i + 1)
    samples = np.empty((t, n))
    for r, ln in enumerate(rows):
        parts = ln.split(",")
        if len(parts) != n:
            raise EventFormatError(
                f"{path}: expected {n} columns, found {len(parts)}", row=i + r + 1, column=len(parts)
            )
        for c, p in enumerate(parts):
            try:
                v = float(p)
            except ValueError:
                raise EventFormatError(f"{path}: unparsable value {p!r}", row=i + r + 1, column=c) from None
            if not math.isfinite(v):
                raise EventFormatError(
                    f"{path}: non-finite sample in channel {c} at index {r}", row=i + r + 1, column=c
                )
            samples[r, c] = v
    return EventRecord(header.get("event_id", Path(path).stem), dt, samples.T, angles, meta)


def atomic_write(path: str | os.PathLike, data: bytes | str) -> Path:
    """Write via a sibling temp file and rename, so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return path
