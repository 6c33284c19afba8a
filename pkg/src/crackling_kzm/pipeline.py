"""Per-event analysis: frames -> profiles -> K-strings -> frozen length."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import funcnet, kstring, profiles
from .event_io import AnalysisConfig, EventRecord, normalize_channels
from .funcnet import FrameSeries
from .kstring import FreezeReport, OrderParameter
from .kzm import ScalingPoint
from .profiles import PhaseSegmentation, ProfileSeries


@dataclass
class EventReport:
    event_id: str
    series: FrameSeries
    profile: ProfileSeries | None = None
    impulses: list[tuple[int, int]] = field(default_factory=list)
    segmentation: PhaseSegmentation | None = None
    sign_rows: np.ndarray | None = None
    order: OrderParameter | None = None
    xi: np.ndarray | None = None
    curves: list | None = None
    freeze: FreezeReport | None = None
    quality: str = "failed"
    errors: list[str] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def scaling_point(self) -> ScalingPoint:
        rate = self.segmentation.ramp_rate if self.segmentation else float("nan")
        xi = self.freeze.xi_frozen if self.freeze and self.freeze.found else float("nan")
        return ScalingPoint(self.event_id, rate, xi, self.quality, self.rhat)

    @property
    def rhat(self) -> float | None:
        seg, fr = self.segmentation, self.freeze
        if seg is None or fr is None or not fr.found or not seg.tau_s > 0:
            return None
        return (seg.t_c - fr.plateau_interval[0]) / seg.tau_s

    @property
    def kinks_at_tc(self) -> int | None:
        if self.segmentation is None or self.sign_rows is None:
            return None
        return kstring.kink_count(self.sign_rows[self.segmentation.tc_frame])

    def to_dict(self) -> dict:
        seg = self.segmentation
        t = self.series.times
        out = {
            "event_id": self.event_id,
            "quality": self.quality,
            "errors": list(self.errors),
            "n_frames": self.series.n_frames,
            "n_nodes": self.series.n_nodes,
            "impulse_intervals": [[int(a), int(b)] for a, b in self.impulses],
            "impulse_times": [[float(t[a]), float(t[b - 1])] for a, b in self.impulses],
        }
        keys = ("R_c", "R_max", "R_min", "t_c", "tau_c", "tau_s", "tau_w", "ramp_rate", "weakening_rate")
        for k in keys:
            out[k] = _clean(getattr(seg, k)) if seg else None
        out["first_order_flag"] = seg.first_order_flag if seg else False
        out["segmentation"] = seg.to_dict() if seg else None
        if seg:
            out["segmentation"] = {k: _clean(v) if isinstance(v, float) else v for k, v in out["segmentation"].items()}
        out["Q0"] = self.profile.Q0 if self.profile else None
        out["m_zero_crossing"] = self.order.crossing_nearest if self.order else None
        out["freeze"] = self.freeze.to_dict() if self.freeze else None
        out["rhat"] = self.rhat
        out["kinks_at_tc"] = self.kinks_at_tc
        out["diagnostics"] = {k: _clean(v) for k, v in self.diagnostics.items()}
        return out


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def analyze_frames(series: FrameSeries, config: AnalysisConfig) -> EventReport:
    """Run the full per-event chain; failures are recorded, not raised."""
    rep = EventReport(series.event_id, series)
    try:
        rep.profile = profiles.compute_profiles(series, config.q0_frames)
        rep.sign_rows = kstring.sign_matrix(series.degrees, config.smoothing_width)
        m = rep.sign_rows.mean(axis=1)
        rep.impulses = profiles.detect_impulse(rep.profile, config)
        rep.diagnostics["degree_R_spearman"] = profiles.degree_rank_correlation(rep.profile)
        if not rep.impulses:
            rep.order = kstring.order_parameter(m, series.times)
            rep.errors.append("no impulse detected")
            return rep
        rep.segmentation = profiles.segment_phases(rep.profile, rep.impulses, m)
        rep.order = kstring.order_parameter(m, series.times, rep.segmentation.t_c)
        rep.xi, rep.curves = kstring.xi_series(rep.sign_rows)
        rep.freeze = kstring.detect_freeze(
            rep.xi, m, rep.segmentation, config, series.times, series.n_nodes
        )
    except (profiles.ProfileError, ValueError) as exc:
        rep.errors.append(str(exc))
        return rep
    if not rep.freeze.found:
        rep.quality = "no_plateau"
    elif not (rep.segmentation.ramp_rate > 0 and rep.freeze.xi_frozen and rep.freeze.xi_frozen > 0):
        rep.quality = "poor_fit"
        rep.errors.append("non-positive ramp rate or frozen length")
    else:
        rep.quality = "ok"
    return rep


def event_frame_series(event: EventRecord, config: AnalysisConfig) -> FrameSeries:
    frames = funcnet.frame_series(normalize_channels(event), config)
    return FrameSeries.from_frames(frames, event.node_angles, event.event_id, event.metadata)


def analyze_event(event: EventRecord, config: AnalysisConfig) -> EventReport:
    return analyze_frames(event_frame_series(event, config), config)
