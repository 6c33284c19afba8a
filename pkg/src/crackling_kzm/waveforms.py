"""Raw multichannel waveform events with a scripted functional-network history.

Each frame window is built from orthonormal latent signals, so the windowed
Pearson correlations are known exactly: channels in one clique share a latent
factor, a bridge channel mixes the factors of its two neighbouring cliques,
and every channel adds its own private factor. The scripted sequence of
clique layouts fixes Q and mean betweenness frame by frame, which places the
impulse, the R maximum and the end of the weakening stretch at known frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .event_io import EventRecord, uniform_angles

# a layout is a tuple of chains; a chain is a tuple of clique sizes joined by
# one bridge channel between neighbours; unused channels are isolated
Layout = tuple[tuple[int, ...], ...]

PRIVATE_SCALE = 0.3

_BASE_A: Layout = ((7, 7, 7, 8),)
_BASE_B: Layout = ((8, 8, 8, 5),)
_BASE_C: Layout = ((9, 9, 8, 3),)
_RAMP: tuple[Layout, ...] = (
    ((9, 7, 7, 6),),
    ((10, 7, 7, 5),),
    ((11, 7, 7, 4),),
    ((12, 7, 7, 3),),
    ((13, 7, 7, 2),),
)
_IMPULSE: tuple[Layout, ...] = (((20, 9),), ((22, 8),), ((24, 6),))
_PEAK: Layout = ((26,), (6,))
_WEAKEN: tuple[Layout, ...] = (((20,), (12,)), ((16,), (8,), (8,)), ((10,), (10,), (12,)), ((8,), (8,), (8,), (8,)))
_DECEL: tuple[Layout, ...] = (((8, 8, 8, 5),), ((9, 7, 7, 6),), ((10, 7, 7, 5),))


@dataclass(frozen=True)
class WaveformTruth:
    impulse_interval: tuple[int, int]
    tc_frame: int
    w_end_frame: int
    n_frames: int


def default_schedule(baseline_frames: int = 12, ramp_repeat: int = 2, decel_repeat: int = 5) -> list[Layout]:
    """Cycling baseline, stepwise S ramp, impulse, peak, weakening, slow D drift.

    The baseline cycles three layouts so the impulse threshold has a real
    spread to work with.
    """
    base = (_BASE_A, _BASE_B, _BASE_C)
    seq: list[Layout] = [base[j % 3] for j in range(baseline_frames)]
    for lay in _RAMP:
        seq += [lay] * ramp_repeat
    seq += list(_IMPULSE) + [_PEAK] + list(_WEAKEN)
    for lay in _DECEL:
        seq += [lay] * decel_repeat
    return seq


def schedule_truth(schedule: Sequence[Layout]) -> WaveformTruth:
    onset = schedule.index(_IMPULSE[0])
    tc = schedule.index(_PEAK)
    return WaveformTruth((onset, tc), tc, tc + len(_WEAKEN), len(schedule))


def layout_roles(layout: Layout, n_channels: int) -> tuple[list[list[int]], list[tuple[int, int, int]]]:
    """Clique member lists and (channel, clique_a, clique_b) bridges, channels in ring order."""
    groups: list[list[int]] = []
    bridges: list[tuple[int, int, int]] = []
    pos = 0
    for chain in layout:
        for i, size in enumerate(chain):
            groups.append(list(range(pos, pos + size)))
            pos += size
            if i < len(chain) - 1:
                bridges.append((pos, len(groups) - 1, len(groups)))
                pos += 1
    if pos > n_channels:
        raise ValueError(f"layout needs {pos} channels, only {n_channels} available")
    return groups, bridges


def layout_adjacency(layout: Layout, n_channels: int) -> np.ndarray:
    groups, bridges = layout_roles(layout, n_channels)
    adj = np.zeros((n_channels, n_channels), dtype=bool)
    for g in groups:
        adj[np.ix_(g, g)] = True
    for ch, a, b in bridges:
        nb = groups[a] + groups[b]
        adj[ch, nb] = adj[nb, ch] = True
    np.fill_diagonal(adj, False)
    return adj


def _orthonormal(rng: np.random.Generator, window: int, k: int) -> np.ndarray:
    if k > window - 1:
        raise ValueError(f"window of {window} samples cannot hold {k} orthonormal centred signals")
    g = rng.standard_normal((window, k))
    g -= g.mean(axis=0)
    q, _ = np.linalg.qr(g)
    return q * math.sqrt(window)


def layout_window(rng: np.random.Generator, layout: Layout, n_channels: int, window: int) -> np.ndarray:
    """One (n_channels, window) block realising ``layout`` above a 0.55 threshold."""
    groups, bridges = layout_roles(layout, n_channels)
    basis = _orthonormal(rng, window, len(groups) + n_channels)
    latent, private = basis[:, : len(groups)], basis[:, len(groups) :]
    x = PRIVATE_SCALE * private.T.copy()
    for gi, members in enumerate(groups):
        x[members] += latent[:, gi]
    for ch, a, b in bridges:
        x[ch] += (latent[:, a] + latent[:, b]) / math.sqrt(2.0)
    return x


def waveform_event(
    seed: int = 0,
    schedule: Sequence[Layout] | None = None,
    n_channels: int = 32,
    window: int = 128,
    sample_interval: float = 1e-7,
    event_id: str = "waveform_000",
) -> tuple[EventRecord, WaveformTruth]:
    """Synthesize a raw event whose windows of ``window`` samples follow ``schedule``."""
    schedule = list(default_schedule() if schedule is None else schedule)
    rng = np.random.default_rng(seed)
    blocks = [layout_window(rng, lay, n_channels, window) for lay in schedule]
    samples = np.concatenate(blocks, axis=1)
    meta = {"generator": "waveform", "seed": seed, "window": window}
    event = EventRecord(event_id, sample_interval, samples, uniform_angles(n_channels), meta)
    truth = schedule_truth(schedule) if _PEAK in schedule else WaveformTruth((-1, -1), -1, -1, len(schedule))
    return event, truth
