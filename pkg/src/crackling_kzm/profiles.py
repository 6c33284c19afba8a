"""Q/R/betweenness time profiles, impulse detection and S/W/D segmentation."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import stats

from .event_io import AnalysisConfig
from .funcnet import FrameNetwork, FrameSeries, as_frame_series

MAD_SCALE = 1.4826
# relative floor for the baseline spread, so a perfectly flat baseline does not
# turn round-off into impulses
SIGMA_FLOOR = 1e-9
FIRST_ORDER_JUMP = 0.5

Interval = tuple[int, int]  # half-open frame range [start, stop)


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class ProfileSeries:
    times: np.ndarray
    Q_t: np.ndarray
    Q0: float
    Q_norm: np.ndarray
    R_t: np.ndarray
    # nan where the mean betweenness is <= 1
    invlogBC: np.ndarray
    mean_k: np.ndarray
    mean_betweenness: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.times.shape[0]

    def shifted(self, dt: float) -> "ProfileSeries":
        return ProfileSeries(self.times + dt, self.Q_t, self.Q0, self.Q_norm, self.R_t, self.invlogBC,
                             self.mean_k, self.mean_betweenness)


@dataclass(frozen=True)
class PhaseSegmentation:
    s_interval: Interval
    w_interval: Interval
    d_interval: Interval
    tc_frame: int
    t_c: float
    R_c: float
    R_max: float
    R_min: float
    tau_c: float
    tau_s: float
    tau_w: float
    ramp_rate: float
    weakening_rate: float
    first_order_flag: bool
    impulse_onset_frame: int

    def to_dict(self) -> dict:
        return {
            "s_interval": list(self.s_interval),
            "w_interval": list(self.w_interval),
            "d_interval": list(self.d_interval),
            "tc_frame": self.tc_frame,
            "t_c": self.t_c,
            "R_c": self.R_c,
            "R_max": self.R_max,
            "R_min": self.R_min,
            "tau_c": self.tau_c,
            "tau_s": self.tau_s,
            "tau_w": self.tau_w,
            "ramp_rate": self.ramp_rate,
            "weakening_rate": self.weakening_rate,
            "first_order_flag": self.first_order_flag,
            "impulse_onset_frame": self.impulse_onset_frame,
        }


def compute_profiles(frames: FrameSeries | Sequence[FrameNetwork], q0_frames: int = 1) -> ProfileSeries:
    series = as_frame_series(frames)
    if series.n_frames < 8:
        raise ProfileError(f"need at least 8 frames, got {series.n_frames}")
    q = series.Q
    q0 = float(np.mean(q[:q0_frames]))
    if q0 == 0.0:
        raise ProfileError("rest modularity is zero; event unusable")
    with np.errstate(divide="ignore", invalid="ignore"):
        q_norm = q / q0
        r = np.where(q_norm != 0.0, 1.0 / q_norm, np.nan)
        bc = series.mean_betweenness
        invlog = np.where(bc > 1.0, 1.0 / np.log(np.where(bc > 1.0, bc, np.e)), np.nan)
    return ProfileSeries(series.times, q, q0, q_norm, r, invlog, series.mean_degree, bc)


def detect_impulse(profile: ProfileSeries, config: AnalysisConfig) -> list[Interval]:
    """Maximal runs of frames whose invlogBC exceeds a robust baseline threshold."""
    x = profile.invlogBC
    n = x.shape[0]
    if n < 8:
        raise ProfileError(f"need at least 8 frames, got {n}")
    base = x[: max(2, n // 4)]
    base = base[np.isfinite(base)]
    if base.size < 2:
        raise ProfileError("baseline quartile has fewer than 2 frames with defined invlogBC")
    mu = float(np.median(base))
    sigma = MAD_SCALE * float(np.median(np.abs(base - mu)))
    sigma = max(sigma, SIGMA_FLOOR * max(abs(mu), 1.0))
    above = np.isfinite(x) & (np.nan_to_num(x, nan=-np.inf) > mu + config.impulse_k_sigma * sigma)
    edges = np.diff(np.concatenate([[0], above.astype(np.int8), [0]]))
    starts = np.nonzero(edges == 1)[0]
    stops = np.nonzero(edges == -1)[0]
    return [(int(a), int(b)) for a, b in zip(starts, stops)]


def segment_phases(
    profile: ProfileSeries, impulses: Sequence[Interval], m: np.ndarray | None = None
) -> PhaseSegmentation:
    if not impulses:
        raise ProfileError("no impulse detected; cannot place the critical point")
    r = profile.R_t
    t = profile.times
    n = r.shape[0]
    onset = int(impulses[0][0])
    tail = r[onset:]
    if not np.any(np.isfinite(tail)):
        raise ProfileError("R undefined after impulse onset")
    tc = onset + int(np.nanargmax(tail))
    if tc == n - 1:
        raise ProfileError("truncated event: no W phase")
    after = r[tc + 1 :]
    if not np.any(np.isfinite(after)):
        raise ProfileError("R undefined after the critical point")
    w_end = tc + 1 + int(np.nanargmin(after))
    r_max = float(r[tc])
    r_min = float(r[w_end])
    tau_c = float(t[tc] - t[onset])
    if tau_c <= 0:
        raise ProfileError("R_max coincides with impulse onset (tau_c = 0)")
    tau_w = float(t[w_end] - t[tc])
    first_order = False
    if m is not None and len(m) > 1:
        first_order = bool(np.any(np.abs(np.diff(np.asarray(m, dtype=float))) > FIRST_ORDER_JUMP))
    seg = PhaseSegmentation(
        s_interval=(0, onset),
        w_interval=(tc, w_end + 1),
        d_interval=(w_end + 1, n),
        tc_frame=tc,
        t_c=float(t[tc]),
        R_c=float(r[onset]),
        R_max=r_max,
        R_min=r_min,
        tau_c=tau_c,
        tau_s=float(t[onset] - t[0]),
        tau_w=tau_w,
        ramp_rate=float("nan"),
        weakening_rate=float("nan"),
        first_order_flag=first_order,
        impulse_onset_frame=onset,
    )
    try:
        rc = ramp_rate(profile, seg)
    except ProfileError:
        rc = float("nan")
    return replace(seg, ramp_rate=rc, weakening_rate=weakening_rate(profile, seg))


def ramp_rate(profile: ProfileSeries, seg: PhaseSegmentation) -> float:
    """Least-squares slope of R(t) over the S interval (per second)."""
    a, b = seg.s_interval
    if b - a < 4:
        raise ProfileError(f"S interval has {b - a} frames; need at least 4")
    t = profile.times[a:b]
    r = profile.R_t[a:b]
    ok = np.isfinite(r)
    if ok.sum() < 4:
        raise ProfileError(f"S interval has {int(ok.sum())} frames with defined R; need at least 4")
    t, r = t[ok], r[ok]
    tc = t - t.mean()
    return float(np.dot(tc, r - r.mean()) / np.dot(tc, tc))


def weakening_rate(profile: ProfileSeries, seg: PhaseSegmentation) -> float:
    if not seg.tau_w > 0:
        raise ProfileError("tau_w = 0: weakening rate undefined")
    return max(0.0, (seg.R_max - seg.R_min) / seg.tau_w)


def degree_rank_correlation(profile: ProfileSeries) -> float:
    """Spearman correlation between mean degree and R (diagnostic only)."""
    ok = np.isfinite(profile.R_t)
    if ok.sum() < 3 or np.ptp(profile.mean_k[ok]) == 0 or np.ptp(profile.R_t[ok]) == 0:
        return float("nan")
    rho = stats.spearmanr(profile.mean_k[ok], profile.R_t[ok]).statistic
    return float(rho)


def profile_csv(profile: ProfileSeries) -> str:
    rows = ["time,Q,R,invlogBC,mean_k"]
    for j in range(profile.n_frames):
        inv = profile.invlogBC[j]
        vals = [profile.times[j], profile.Q_t[j], profile.R_t[j]]
        rows.append(
            ",".join(repr(float(v)) for v in vals)
            + f",{'' if np.isnan(inv) else repr(float(inv))},{float(profile.mean_k[j])!r}"
        )
    return "\n".join(rows) + "\n"
