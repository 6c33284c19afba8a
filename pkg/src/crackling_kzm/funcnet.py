"""Per-window functional networks: thresholded Pearson similarity, degrees,
greedy modularity communities and shortest-path betweenness.

``FrameSeries`` is the columnar view the downstream modules consume; it can be
built from a list of ``FrameNetwork`` or read from a ``# kzm-frames v1`` file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .event_io import AnalysisConfig, EventFormatError, EventRecord, atomic_write, uniform_angles

FRAMES_MAGIC = "# kzm-frames v1"


class FrameError(ValueError):
    def __init__(self, message: str, frame_index: int | None = None):
        self.frame_index = frame_index
        super().__init__(message if frame_index is None else f"frame {frame_index}: {message}")


@dataclass(frozen=True)
class FrameNetwork:
    frame_index: int
    frame_time: float
    adjacency: np.ndarray
    degrees: np.ndarray
    partition: np.ndarray
    Q: float
    betweenness: np.ndarray
    # channels with zero variance in this window (kept as isolated nodes)
    silent_nodes: tuple[int, ...] = ()

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def mean_degree(self) -> float:
        return float(self.degrees.mean())

    @property
    def mean_betweenness(self) -> float:
        return float(self.betweenness.mean())


def network_from_adjacency(
    adjacency: np.ndarray, frame_index: int = 0, frame_time: float = 0.0, silent_nodes: Sequence[int] = ()
) -> FrameNetwork:
    adj = np.array(adjacency, dtype=bool)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    if not np.array_equal(adj, adj.T):
        raise ValueError("adjacency must be symmetric")
    if adj.diagonal().any():
        raise ValueError("adjacency must have an empty diagonal")
    q, part = greedy_modularity(adj)
    bc = kernels.betweenness(adj.astype(np.uint8))
    for a in (adj, part, bc):
        a.setflags(write=False)
    deg = adj.sum(axis=1).astype(np.int64)
    deg.setflags(write=False)
    return FrameNetwork(frame_index, frame_time, adj, deg, part, q, bc, tuple(silent_nodes))


def correlation_matrix(window: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pearson correlation of the rows of ``window``; also returns the silent-row mask."""
    xc = window - window.mean(axis=1, keepdims=True)
    norm = np.sqrt(np.einsum("ij,ij->i", xc, xc))
    silent = norm <= 1e-12 * np.sqrt(window.shape[1]) * np.maximum(np.abs(window).max(axis=1), 1e-300)
    safe = np.where(silent, 1.0, norm)
    z = xc / safe[:, None]
    r = z @ z.T
    r[silent, :] = 0.0
    r[:, silent] = 0.0
    return r, silent


def frame_count(n_samples: int, config: AnalysisConfig) -> int:
    if config.window_length > n_samples:
        return 0
    return (n_samples - config.window_length) // config.stride + 1


def build_frame(event: EventRecord, frame_index: int, config: AnalysisConfig) -> FrameNetwork:
    start = frame_index * config.stride
    stop = start + config.window_length
    if frame_index < 0 or stop > event.n_samples:
        raise FrameError(
            f"window [{start}, {stop}) lies outside the event (T={event.n_samples})", frame_index
        )
    r, silent = correlation_matrix(event.samples[:, start:stop])
    adj = r >= config.similarity_threshold
    np.fill_diagonal(adj, False)
    adj[silent, :] = False
    adj[:, silent] = False
    # round-off can leave r[i, j] and r[j, i] on opposite sides of the threshold
    adj = adj & adj.T
    silent_nodes = tuple(int(i) for i in np.nonzero(silent)[0])
    return network_from_adjacency(adj, frame_index, start * event.sample_interval, silent_nodes)


def frame_series(event: EventRecord, config: AnalysisConfig) -> list[FrameNetwork]:
    t = event.n_samples
    if config.window_length > t:
        raise FrameError(f"window_length {config.window_length} exceeds event length {t}")
    if t < 2 * config.window_length:
        raise FrameError(f"event length {t} is shorter than twice the window length {config.window_length}")
    return [build_frame(event, j, config) for j in range(frame_count(t, config))]


def modularity(network: FrameNetwork | np.ndarray) -> tuple[float, np.ndarray]:
    adj = network.adjacency if isinstance(network, FrameNetwork) else network
    return greedy_modularity(np.asarray(adj, dtype=bool))


def betweenness(network: FrameNetwork | np.ndarray) -> np.ndarray:
    adj = network.adjacency if isinstance(network, FrameNetwork) else network
    return kernels.betweenness(np.ascontiguousarray(adj, dtype=np.uint8))


def partition_modularity(adjacency: np.ndarray, partition: Sequence[int]) -> float:
    """Newman Q of a given partition, computed exactly in integers."""
    adj = np.asarray(adjacency, dtype=bool)
    labels = np.asarray(partition)
    m = int(adj.sum()) // 2
    if m == 0:
        return 0.0
    deg = adj.sum(axis=1).astype(np.int64)
    total = 0
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        internal = int(adj[np.ix_(idx, idx)].sum()) // 2
        d = int(deg[idx].sum())
        total += 4 * m * internal - d * d
    return float(Fraction(total, 4 * m * m))


def greedy_modularity(adj: np.ndarray) -> tuple[float, np.ndarray]:
    """Deterministic CNM-style agglomeration.

    Communities carry the smallest node index as their id. Each step merges the
    connected pair with the largest modularity gain (ties: lexicographically
    smallest id pair); the best partition along the whole trajectory is
    returned. All bookkeeping is integer so ties are exact.
    """
    q, labels, _ = _greedy(adj)
    return q, labels


def greedy_tied_steps(adj: np.ndarray) -> int:
    """Number of merge steps whose best gain was shared by several pairs.

    Only those steps depend on node labels; with none the greedy Q is
    invariant under relabelling.
    """
    return _greedy(np.asarray(adj, dtype=bool))[2]


def _greedy(adj: np.ndarray) -> tuple[float, np.ndarray, int]:
    n = adj.shape[0]
    labels = np.arange(n)
    m = int(adj.sum()) // 2
    tied = 0
    if m == 0:
        return 0.0, labels, tied
    between = adj.astype(np.int64)
    deg = between.sum(axis=1)
    internal = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    score = int(np.sum(-deg * deg))
    best_score, best_labels = score, labels.copy()
    two_m = 2 * m
    while True:
        # gain numerator 2m*E_cd - D_c*D_d over connected active pairs, upper triangle
        gain = two_m * between - np.outer(deg, deg)
        mask = np.triu(between > 0, 1)
        if not mask.any():
            break
        gain = np.where(mask, gain, np.iinfo(np.int64).min)
        flat = int(np.argmax(gain))
        c, d = divmod(flat, n)
        if np.count_nonzero(gain == gain.flat[flat]) > 1:
            tied += 1
        score += 2 * int(gain[c, d])
        internal[c] += internal[d] + between[c, d]
        between[c, :] += between[d, :]
        between[:, c] += between[:, d]
        between[c, c] = 0
        between[d, :] = 0
        between[:, d] = 0
        deg[c] += deg[d]
        deg[d] = 0
        active[d] = False
        labels[labels == d] = c
        if score > best_score:
            best_score, best_labels = score, labels.copy()
    _, relabeled = np.unique(best_labels, return_inverse=True)
    return float(Fraction(best_score, 4 * m * m)), relabeled.astype(np.int64), tied


@dataclass(frozen=True)
class FrameSeries:
    """Columnar per-frame data: times, Q, mean betweenness and node degrees."""

    times: np.ndarray
    Q: np.ndarray
    mean_betweenness: np.ndarray
    degrees: np.ndarray
    angles: np.ndarray
    frame_indices: np.ndarray | None = None
    event_id: str = "event"
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        f = times.shape[0]
        deg = np.asarray(self.degrees)
        if deg.ndim != 2 or deg.shape[0] != f:
            raise ValueError("degrees must be frames x nodes")
        if not np.issubdtype(deg.dtype, np.integer):
            if not np.array_equal(deg, np.round(deg)):
                raise ValueError("degrees must be integers")
        deg = deg.astype(np.int64)
        if np.any(deg < 0):
            raise ValueError("degrees must be nonnegative")
        q = np.asarray(self.Q, dtype=np.float64)
        bc = np.asarray(self.mean_betweenness, dtype=np.float64)
        if q.shape != (f,) or bc.shape != (f,):
            raise ValueError("Q and mean_betweenness need one value per frame")
        angles = uniform_angles(deg.shape[1]) if self.angles is None else np.asarray(self.angles, dtype=np.float64)
        if angles.shape != (deg.shape[1],):
            raise ValueError("one angle per node required")
        idx = np.arange(f) if self.frame_indices is None else np.asarray(self.frame_indices, dtype=np.int64)
        for name, a in (("times", times), ("Q", q), ("mean_betweenness", bc), ("degrees", deg),
                        ("angles", angles), ("frame_indices", idx)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def n_frames(self) -> int:
        return self.times.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.degrees.shape[1]

    @property
    def mean_degree(self) -> np.ndarray:
        return self.degrees.mean(axis=1)

    @classmethod
    def from_frames(
        cls, frames: Sequence[FrameNetwork], angles: np.ndarray | None = None, event_id: str = "event",
        metadata: Mapping[str, Any] | None = None,
    ) -> "FrameSeries":
        if not frames:
            raise ValueError("no frames")
        return cls(
            times=np.array([f.frame_time for f in frames]),
            Q=np.array([f.Q for f in frames]),
            mean_betweenness=np.array([f.mean_betweenness for f in frames]),
            degrees=np.stack([f.degrees for f in frames]),
            angles=angles,
            frame_indices=np.array([f.frame_index for f in frames]),
            event_id=event_id,
            metadata=metadata or {},
        )


def as_frame_series(frames: FrameSeries | Sequence[FrameNetwork], angles: np.ndarray | None = None) -> FrameSeries:
    if isinstance(frames, FrameSeries):
        return frames
    return FrameSeries.from_frames(list(frames), angles)


def _fmt(v: float) -> str:
    return repr(float(v))


def frames_csv(series: FrameSeries) -> str:
    """Per-frame summary: frame_index, time, Q, mean_k, mean_betweenness."""
    rows = ["frame_index,time,Q,mean_k,mean_betweenness"]
    mk = series.mean_degree
    for j in range(series.n_frames):
        rows.append(
            f"{series.frame_indices[j]},{_fmt(series.times[j])},{_fmt(series.Q[j])},"
            f"{_fmt(mk[j])},{_fmt(series.mean_betweenness[j])}"
        )
    return "\n".join(rows) + "\n"


def adjacency_csv(frames: Iterable[FrameNetwork]) -> str:
    rows = ["frame_index,i,j"]
    for f in frames:
        ii, jj = np.nonzero(np.triu(f.adjacency, 1))
        rows.extend(f"{f.frame_index},{i},{j}" for i, j in zip(ii.tolist(), jj.tolist()))
    return "\n".join(rows) + "\n"


def frame_series_text(series: FrameSeries) -> str:
    lines = [
        FRAMES_MAGIC,
        f"# event_id: {series.event_id}",
        f"# nodes: {series.n_nodes}",
        f"# frames: {series.n_frames}",
        "# angles: " + " ".join(_fmt(a) for a in series.angles),
        "# metadata: " + json.dumps(series.metadata, sort_keys=True),
        "frame_index,time,Q,mean_betweenness," + ",".join(f"k_{i}" for i in range(series.n_nodes)),
    ]
    for j in range(series.n_frames):
        lines.append(
            f"{series.frame_indices[j]},{_fmt(series.times[j])},{_fmt(series.Q[j])},"
            f"{_fmt(series.mean_betweenness[j])}," + ",".join(map(str, series.degrees[j].tolist()))
        )
    return "\n".join(lines) + "\n"


def save_frame_series(series: FrameSeries, path: str | os.PathLike) -> Path:
    return atomic_write(path, frame_series_text(series))


def load_frame_series(path: str | os.PathLike) -> FrameSeries:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != FRAMES_MAGIC:
        raise EventFormatError(f"{path}: missing '{FRAMES_MAGIC}' header", row=1)
    header: dict[str, str] = {}
    i = 1
    while i < len(lines) and lines[i].startswith("#"):
        key, _, value = lines[i][1:].partition(":")
        header[key.strip()] = value.strip()
        i += 1
    try:
        n = int(header["nodes"])
        f = int(header["frames"])
    except (KeyError, ValueError):
        raise EventFormatError(f"{path}: header needs integer 'nodes' and 'frames'", row=i) from None
    angles = np.array([float(a) for a in header["angles"].split()]) if header.get("angles") else None
    meta = json.loads(header["metadata"]) if header.get("metadata") else {}
    rows = [ln for ln in lines[i + 1 :] if ln.strip()]
    if len(rows) != f:
        raise EventFormatError(f"{path}: header declares {f} frames, found {len(rows)} rows", row=i + 2)
    idx = np.empty(f, dtype=np.int64)
    times, q, bc = np.empty(f), np.empty(f), np.empty(f)
    deg = np.empty((f, n), dtype=np.int64)
    for r, ln in enumerate(rows):
        parts = ln.split(",")
        if len(parts) != n + 4:
            raise EventFormatError(f"{path}: expected {n + 4} columns, found {len(parts)}", row=i + r + 2)
        try:
            idx[r] = int(parts[0])
            times[r], q[r], bc[r] = float(parts[1]), float(parts[2]), float(parts[3])
            deg[r] = np.array(parts[4:], dtype=np.int64)
        except ValueError as exc:
            raise EventFormatError(f"{path}: {exc}", row=i + r + 2) from None
    return FrameSeries(times, q, bc, deg, angles, idx, header.get("event_id", path.stem), meta)
