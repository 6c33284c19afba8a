"""K-strings and their Ising-like sign chains.

Each node's degree trajectory is smoothed and differentiated in time; the sign
of the derivative is the node's spin. The open chain of spins (ordered by node
angle) gives the order parameter m(t), the correlation function G(x), a fitted
correlation length, and kink counts.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .event_io import AnalysisConfig
from .funcnet import FrameNetwork, FrameSeries, as_frame_series
from .profiles import PhaseSegmentation

COHERENT_FACTOR = 10.0
MIN_FIT_LAGS = 6


@dataclass(frozen=True)
class KString:
    frame_index: int
    radii: np.ndarray
    angles: np.ndarray
    signs: np.ndarray
    m: float

    @property
    def length(self) -> int:
        return self.signs.shape[0]


@dataclass(frozen=True)
class CorrelationCurve:
    lags: np.ndarray
    values: np.ndarray
    xi: float | None = None
    fit_rmse: float | None = None
    fit_range: tuple[int, int] | None = None
    # ok | coherent | diverged | not_fitted
    status: str = "not_fitted"

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def xi_normalized(self) -> float | None:
        return None if self.xi is None else self.xi / self.length


@dataclass(frozen=True)
class FreezeReport:
    found: bool
    plateau_frames: tuple[int, int] | None
    plateau_interval: tuple[float, float] | None
    xi_frozen: float | None
    xi_frozen_normalized: float | None
    relative_variation: float | None
    m_at_plateau: float | None
    n_frames: int = 0

    def to_dict(self) -> dict:
        return {
            "found": self.found,
            "plateau_frames": None if self.plateau_frames is None else list(self.plateau_frames),
            "plateau_interval": None if self.plateau_interval is None else list(self.plateau_interval),
            "xi_frozen": self.xi_frozen,
            "xi_frozen_normalized": self.xi_frozen_normalized,
            "relative_variation": self.relative_variation,
            "m_at_plateau": self.m_at_plateau,
            "n_frames": self.n_frames,
        }


@dataclass(frozen=True)
class OrderParameter:
    m: np.ndarray
    crossings: tuple[float, ...]
    crossing_nearest: float | None


def sign_matrix(degrees: np.ndarray, width: int) -> np.ndarray:
    """Frames x nodes spins from integer degree trajectories.

    The centered moving average shrinks at the edges. Smoothed values are kept
    as exact (sum, count) pairs so derivative signs, including exact zeros, are
    decided in integer arithmetic.
    """
    k = np.asarray(degrees, dtype=np.int64)
    f, n = k.shape
    if f < 3:
        raise ValueError(f"need at least 3 frames, got {f}")
    h = width // 2
    csum = np.vstack([np.zeros((1, n), dtype=np.int64), np.cumsum(k, axis=0)])
    lo = np.clip(np.arange(f) - h, 0, f)
    hi = np.clip(np.arange(f) + h + 1, 0, f)
    s = csum[hi] - csum[lo]
    c = (hi - lo)[:, None]
    prev = np.r_[0, np.arange(f - 1)]
    nxt = np.r_[np.arange(1, f), f - 1]
    d = np.sign(s[nxt] * c[prev] - s[prev] * c[nxt])
    out = np.empty((f, n), dtype=np.int8)
    carry = np.ones(n, dtype=np.int8)
    for j in range(f):
        carry = np.where(d[j] != 0, d[j], carry).astype(np.int8)
        out[j] = carry
    return out


def signs(frames: FrameSeries | Sequence[FrameNetwork], config: AnalysisConfig) -> list[KString]:
    series = as_frame_series(frames)
    s = sign_matrix(series.degrees, config.smoothing_width)
    return [
        KString(int(series.frame_indices[j]), series.degrees[j], series.angles, s[j], float(s[j].mean()))
        for j in range(series.n_frames)
    ]


def order_parameter(
    kstrings: Sequence[KString] | np.ndarray, times: np.ndarray | None = None, t_c: float | None = None
) -> OrderParameter:
    """m(t) per frame plus zero-crossing times (linear interpolation between frames)."""
    if isinstance(kstrings, np.ndarray):
        m = kstrings.mean(axis=1) if kstrings.ndim == 2 else kstrings.astype(float)
    else:
        m = np.array([ks.m for ks in kstrings])
    t = np.arange(m.shape[0], dtype=float) if times is None else np.asarray(times, dtype=float)
    crossings = []
    for j in range(m.shape[0]):
        if m[j] == 0.0:
            crossings.append(float(t[j]))
        elif j + 1 < m.shape[0] and m[j] * m[j + 1] < 0:
            crossings.append(float(t[j] + (t[j + 1] - t[j]) * m[j] / (m[j] - m[j + 1])))
    nearest = None
    if crossings:
        ref = t[0] if t_c is None else t_c
        nearest = min(crossings, key=lambda x: (abs(x - ref), x))
    return OrderParameter(m, tuple(crossings), nearest)


def correlation(chain: np.ndarray) -> CorrelationCurve:
    """G(x) = (1/L) sum_{i<L-x} s_i s_{i+x} on the open chain."""
    s = np.asarray(chain, dtype=np.float64)
    n = s.shape[0]
    if n < 8:
        raise ValueError(f"chain length must be >= 8, got {n}")
    size = 1 << (2 * n - 1).bit_length()
    fs = np.fft.rfft(s, size)
    # the lag sums are integers; rounding removes FFT round-off exactly
    sums = np.rint(np.fft.irfft(fs * np.conj(fs), size)[:n])
    return CorrelationCurve(np.arange(n), sums / n)


def _model(x: np.ndarray, inv_xi: float, n: int) -> np.ndarray:
    return (1.0 - x / n) * np.exp(-x * inv_xi)


def fit_xi(curve: CorrelationCurve, L: int | None = None) -> CorrelationCurve:
    """Fit G(x) ~ (1 - x/L) exp(-x/xi) over [0, x_cut].

    The fit runs on 1/xi (bounded below by 0) so a fully coherent chain is
    reached smoothly; 1/xi below 1/(10 L) is reported as ``coherent`` with no
    finite xi.
    """
    g = curve.values
    n = curve.length if L is None else int(L)
    x = curve.lags.astype(float)
    nonpos = np.nonzero(g <= 0)[0]
    x_cut = int(nonpos[0]) if nonpos.size else n // 2
    if x_cut + 1 < MIN_FIT_LAGS:
        raise ValueError(f"only {x_cut + 1} usable lags; need {MIN_FIT_LAGS}")
    xs, gs = x[: x_cut + 1], g[: x_cut + 1]
    ratio = gs / (1.0 - xs / n)
    below = np.nonzero(ratio < math.exp(-1.0))[0]
    xi_init = float(below[0]) if below.size else n / 10.0
    xi_init = max(xi_init, 0.5)
    res = least_squares(
        lambda p: _model(xs, p[0], n) - gs,
        x0=[1.0 / xi_init],
        bounds=([0.0], [np.inf]),
        method="trf",
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
        max_nfev=200,
    )
    rmse = float(np.sqrt(np.mean(res.fun**2)))
    fit_range = (0, x_cut)
    if not res.success or not np.isfinite(res.x[0]):
        return replace(curve, xi=None, fit_rmse=rmse, fit_range=fit_range, status="diverged")
    inv = float(res.x[0])
    if inv * COHERENT_FACTOR * n <= 1.0:
        return replace(curve, xi=None, fit_rmse=rmse, fit_range=fit_range, status="coherent")
    return replace(curve, xi=1.0 / inv, fit_rmse=rmse, fit_range=fit_range, status="ok")


def kink_count(chain: np.ndarray) -> int:
    s = np.asarray(chain)
    if s.shape[0] < 2:
        raise ValueError("chain length must be >= 2")
    return int(np.count_nonzero(s[1:] != s[:-1]))


def flipped_nodes(chain: np.ndarray) -> int:
    """Size of the minority-sign population."""
    s = np.asarray(chain)
    up = int(np.count_nonzero(s > 0))
    return min(up, s.shape[0] - up)


def xi_series(sign_rows: np.ndarray) -> tuple[np.ndarray, list[CorrelationCurve | None]]:
    """Fitted xi per frame; nan where the chain has no kinks or the fit fails."""
    xi = np.full(sign_rows.shape[0], np.nan)
    curves: list[CorrelationCurve | None] = []
    for j, row in enumerate(sign_rows):
        if kink_count(row) == 0:
            curves.append(None)
            continue
        try:
            cur = fit_xi(correlation(row))
        except ValueError:
            curves.append(None)
            continue
        curves.append(cur)
        if cur.status == "ok":
            xi[j] = cur.xi
    return xi, curves


def detect_freeze(
    xi: np.ndarray,
    m: np.ndarray,
    seg: PhaseSegmentation | int,
    config: AnalysisConfig,
    times: np.ndarray | None = None,
    L: int | None = None,
) -> FreezeReport:
    """Longest frame interval containing or abutting t_c over which |m| < m_thr
    and (max - min) / median of xi stays within the freeze tolerance.
    """
    xi = np.asarray(xi, dtype=float)
    m = np.asarray(m, dtype=float)
    n = xi.shape[0]
    t = np.arange(n, dtype=float) if times is None else np.asarray(times, dtype=float)
    tc = seg.tc_frame if isinstance(seg, PhaseSegmentation) else int(seg)
    if n < 5:
        raise ValueError("need xi on at least 5 frames")
    ok = np.isfinite(xi) & (np.abs(m) < config.m_threshold)
    # the run of usable frames that contains tc, or starts/ends right next to it
    a = b = None
    for start in (tc, tc + 1, tc - 1):
        if 0 <= start < n and ok[start]:
            a = b = start
            break
    if a is None:
        return FreezeReport(False, None, None, None, None, None, None)
    while a > 0 and ok[a - 1]:
        a -= 1
    while b < n - 1 and ok[b + 1]:
        b += 1
    min_len = config.min_plateau_frames
    # best: longest within tolerance; fallback: least variation otherwise
    best = fallback = None
    for i in range(a, b + 1):
        window: list[float] = []
        for j in range(i, b + 1):
            bisect.insort(window, xi[j])
            if j - i + 1 < min_len:
                continue
            size = len(window)
            med = window[size // 2] if size % 2 else 0.5 * (window[size // 2 - 1] + window[size // 2])
            var = (window[-1] - window[0]) / med
            touches = i - 1 <= tc <= j + 1
            if not touches:
                continue
            if var <= config.freeze_tolerance:
                key = (j - i + 1, -var, -i)
                if best is None or key > best[0]:
                    best = (key, i, j, var)
            else:
                key = (-var, j - i + 1, -i)
                if fallback is None or key > fallback[0]:
                    fallback = (key, i, j, var)
    chosen = best or fallback
    if chosen is None:
        return FreezeReport(False, (a, b + 1), (float(t[a]), float(t[b])), None, None, None, None, b - a + 1)
    _, i, j, var = chosen
    frozen = float(np.median(xi[i : j + 1]))
    return FreezeReport(
        found=best is not None,
        plateau_frames=(i, j + 1),
        plateau_interval=(float(t[i]), float(t[j])),
        xi_frozen=frozen if best is not None else None,
        xi_frozen_normalized=(frozen / L if L else None) if best is not None else None,
        relative_variation=float(var),
        m_at_plateau=float(np.mean(m[i : j + 1])),
        n_frames=j - i + 1,
    )


def kstring_csv(sign_rows: np.ndarray, frame_indices: np.ndarray, xi: np.ndarray) -> str:
    rows = ["frame,m,xi,kinks,flipped_nodes"]
    for j, row in enumerate(sign_rows):
        x = xi[j]
        rows.append(
            f"{int(frame_indices[j])},{float(row.mean())!r},{'' if np.isnan(x) else repr(float(x))},"
            f"{kink_count(row)},{flipped_nodes(row)}"
        )
    return "\n".join(rows) + "\n"


def correlation_csv(frame: int, curve: CorrelationCurve) -> str:
    rows = ["frame,lag,G"]
    rows.extend(f"{frame},{int(x)},{float(g)!r}" for x, g in zip(curve.lags, curve.values))
    return "\n".join(rows) + "\n"


def polar_csv(frames: Sequence[int], degrees: np.ndarray, angles: np.ndarray, sign_rows: np.ndarray) -> str:
    rows = ["frame,node,theta,k,sign"]
    for f in frames:
        for i in range(degrees.shape[1]):
            rows.append(f"{f},{i},{float(angles[i])!r},{int(degrees[f, i])},{int(sign_rows[f, i])}")
    return "\n".join(rows) + "\n"
