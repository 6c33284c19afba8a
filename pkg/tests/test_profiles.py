import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crackling_kzm import profiles
from crackling_kzm.event_io import AnalysisConfig
from crackling_kzm.funcnet import FrameSeries
from crackling_kzm.profiles import ProfileError
from crackling_kzm.quench_oracle import QuenchConfig, generate_constructed

DT = 50e-9
CFG = AnalysisConfig()


def series(q, invlog=None, n_nodes=4, dt=DT, t0=0.0):
    q = np.asarray(q, dtype=float)
    f = q.size
    if invlog is None:
        invlog = np.full(f, 0.3)
    invlog = np.asarray(invlog, dtype=float)
    bc = np.where(np.isfinite(invlog), np.exp(1.0 / np.where(np.isfinite(invlog), invlog, 1.0)), 0.0)
    degrees = np.tile(np.arange(n_nodes), (f, 1))
    return FrameSeries(t0 + dt * np.arange(f), q, bc, degrees, None, None, "t", {})


def event_profile(ramp=2e5, f=60, onset=30, tc=36, w=8, scale=1.0, t0=0.0):
    """R linear on S, spike over [onset, tc), peak at tc, linear drop over w frames."""
    t = np.arange(f) * DT
    r = 1.0 + ramp * t
    r_max = r[tc]
    r_min = 1.0 + 0.3 * (r_max - 1.0)
    r[tc : tc + w + 1] = np.linspace(r_max, r_min, w + 1)
    r[tc + w + 1 :] = r_min + 0.01 * (r_max - r_min) * np.arange(1, f - tc - w)
    r = r * scale
    invlog = 0.3 + 0.001 * np.sin(np.arange(f))
    invlog[onset:tc] = 2.0
    prof = profiles.compute_profiles(series(scale * 0.6 / r, invlog, t0=t0))
    return prof, r


def test_constant_q_gives_unit_r():
    prof = profiles.compute_profiles(series(np.full(10, 0.4)))
    assert np.all(prof.R_t == 1.0)
    assert prof.Q0 == 0.4


def test_halved_q_doubles_r():
    q = np.full(10, 0.5)
    q[6] = 0.25
    prof = profiles.compute_profiles(series(q))
    assert prof.R_t[6] == 2.0 and prof.R_t[0] == 1.0


def test_zero_q_gives_undefined_r():
    q = np.full(10, 0.5)
    q[4] = 0.0
    prof = profiles.compute_profiles(series(q))
    assert math.isnan(prof.R_t[4])


def test_invlog_undefined_for_small_betweenness():
    s = series(np.full(10, 0.5))
    s = FrameSeries(s.times, s.Q, np.r_[0.5, 1.0, np.full(8, math.e)], s.degrees, None)
    prof = profiles.compute_profiles(s)
    assert math.isnan(prof.invlogBC[0]) and math.isnan(prof.invlogBC[1])
    assert prof.invlogBC[2] == pytest.approx(1.0)


def test_zero_rest_modularity_rejected():
    with pytest.raises(ProfileError, match="rest modularity"):
        profiles.compute_profiles(series(np.r_[0.0, np.full(9, 0.5)]))


def test_series_lengths_agree():
    prof, _ = event_profile()
    n = prof.n_frames
    for arr in (prof.Q_t, prof.Q_norm, prof.R_t, prof.invlogBC, prof.mean_k, prof.mean_betweenness):
        assert arr.shape == (n,)


def test_flat_invlog_no_impulse():
    prof = profiles.compute_profiles(series(np.full(40, 0.5)))
    assert profiles.detect_impulse(prof, CFG) == []


def test_single_spike_three_frames():
    rng = np.random.default_rng(0)
    inv = 0.3 + 0.01 * rng.standard_normal(40)
    base = inv[:10]
    sigma = 1.4826 * np.median(np.abs(base - np.median(base)))
    inv[20:23] = np.median(base) + 10 * sigma
    prof = profiles.compute_profiles(series(np.full(40, 0.5), inv))
    assert profiles.detect_impulse(prof, CFG) == [(20, 23)]


def test_two_spikes():
    inv = 0.3 + 0.001 * np.sin(np.arange(60))
    inv[20:24] = 1.0
    inv[40:43] = 1.0
    prof = profiles.compute_profiles(series(np.full(60, 0.5), inv))
    assert profiles.detect_impulse(prof, CFG) == [(20, 24), (40, 43)]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.2, 3.0), min_size=8, max_size=60))
def test_impulse_intervals_ordered_disjoint_inside(values):
    prof = profiles.compute_profiles(series(np.full(len(values), 0.5), values))
    try:
        iv = profiles.detect_impulse(prof, CFG)
    except ProfileError:
        return
    for a, b in iv:
        assert 0 <= a < b <= len(values)
    for (a1, b1), (a2, b2) in zip(iv, iv[1:]):
        assert b1 < a2


def test_segmentation_recovers_programmed_layout():
    prof, r = event_profile()
    imp = profiles.detect_impulse(prof, CFG)
    assert imp == [(30, 36)]
    seg = profiles.segment_phases(prof, imp)
    assert seg.tc_frame == 36
    assert seg.s_interval == (0, 30) and seg.w_interval == (36, 45) and seg.d_interval == (45, 60)
    assert seg.tau_c == pytest.approx(6 * DT) and seg.tau_w == pytest.approx(8 * DT)
    assert seg.tau_s == pytest.approx(30 * DT)
    assert seg.ramp_rate == pytest.approx(2e5, rel=1e-9)
    expected_w = (r[36] - r[44]) / (8 * DT)
    assert seg.weakening_rate == pytest.approx(expected_w, rel=1e-12)
    assert seg.R_c <= seg.R_max and seg.R_min <= seg.R_max


def test_time_shift_invariance():
    a, _ = event_profile()
    b, _ = event_profile(t0=3.7e-6)
    sa = profiles.segment_phases(a, profiles.detect_impulse(a, CFG))
    sb = profiles.segment_phases(b, profiles.detect_impulse(b, CFG))
    assert sb.t_c == pytest.approx(sa.t_c + 3.7e-6, abs=1e-15)
    for name in ("tau_c", "tau_s", "tau_w", "ramp_rate", "weakening_rate"):
        assert getattr(sb, name) == pytest.approx(getattr(sa, name), rel=1e-6)


def test_r_scaling_scales_rates():
    a, _ = event_profile()
    sa = profiles.segment_phases(a, profiles.detect_impulse(a, CFG))
    scaled = profiles.ProfileSeries(a.times, a.Q_t, a.Q0, a.Q_norm, 3.0 * a.R_t, a.invlogBC, a.mean_k,
                                    a.mean_betweenness)
    sb = profiles.segment_phases(scaled, profiles.detect_impulse(scaled, CFG))
    assert (sb.s_interval, sb.w_interval, sb.d_interval) == (sa.s_interval, sa.w_interval, sa.d_interval)
    assert sb.ramp_rate == pytest.approx(3 * sa.ramp_rate, rel=1e-12)
    assert sb.weakening_rate == pytest.approx(3 * sa.weakening_rate, rel=1e-12)


def test_truncated_event():
    q = np.full(20, 0.6)
    q[-1] = 0.1
    inv = np.full(20, 0.3)
    inv[-3:-1] = 2.0
    prof = profiles.compute_profiles(series(q, inv))
    with pytest.raises(ProfileError, match="truncated event: no W phase"):
        profiles.segment_phases(prof, profiles.detect_impulse(prof, CFG))


def test_peak_at_onset_rejected():
    q = np.full(20, 0.6)
    q[10] = 0.1
    inv = np.full(20, 0.3)
    inv[10:12] = 2.0
    prof = profiles.compute_profiles(series(q, inv))
    with pytest.raises(ProfileError, match="tau_c = 0"):
        profiles.segment_phases(prof, profiles.detect_impulse(prof, CFG))


def test_no_impulse_segmentation_error():
    prof = profiles.compute_profiles(series(np.full(10, 0.5)))
    with pytest.raises(ProfileError, match="no impulse"):
        profiles.segment_phases(prof, [])


def test_ramp_rate_exact_and_flat():
    t = np.arange(20) * DT
    for c in (0.0, 3e5):
        r = 1.0 + c * t
        prof = profiles.compute_profiles(series(0.6 / r))
        seg = profiles.PhaseSegmentation((0, 12), (12, 15), (15, 20), 12, t[12], 1, 1, 1, 1, 1, 1, 0, 0, False, 12)
        assert profiles.ramp_rate(prof, seg) == pytest.approx(c, abs=1e-9)


def test_noisy_ramp_within_three_standard_errors():
    rng = np.random.default_rng(5)
    t = np.arange(40) * DT
    r = 1.0 + 1e5 * t + 0.01 * rng.standard_normal(40)
    prof = profiles.compute_profiles(series(0.6 / r))
    seg = profiles.PhaseSegmentation((0, 40), (0, 0), (0, 0), 0, 0, 1, 1, 1, 1, 1, 1, 0, 0, False, 0)
    slope = profiles.ramp_rate(prof, seg)
    se = 0.01 / math.sqrt(np.sum((t - t.mean()) ** 2))
    assert abs(slope - 1e5) < 3 * se


def test_weakening_rate_formula():
    prof = profiles.compute_profiles(series(np.full(10, 0.5)))
    seg = profiles.PhaseSegmentation((0, 2), (2, 5), (5, 10), 2, 0, 1.0, 4.0, 1.0, 1, 1, 3e-6, 0, 0, False, 1)
    assert profiles.weakening_rate(prof, seg) * 1e-6 == pytest.approx(1.0)
    flat = profiles.PhaseSegmentation((0, 2), (2, 5), (5, 10), 2, 0, 1.0, 2.0, 2.0, 1, 1, 3e-6, 0, 0, False, 1)
    assert profiles.weakening_rate(prof, flat) == 0.0


def test_constructed_event_recovery():
    cfg = QuenchConfig(ramp_rates=(4e5,))
    (s,), (truth,) = generate_constructed(cfg)
    prof = profiles.compute_profiles(s)
    seg = profiles.segment_phases(prof, profiles.detect_impulse(prof, CFG))
    # R tracks the programmed linear ramp
    t = s.times[: truth.onset_frame]
    assert np.allclose(prof.R_t[: truth.onset_frame], 1 + 4e5 * t, rtol=1e-12)
    assert abs(seg.t_c - truth.t_c) <= cfg.frame_interval
    assert seg.ramp_rate == pytest.approx(4e5, rel=1e-9)
    assert seg.weakening_rate == pytest.approx(truth.weakening_rate, rel=0.02)
    assert seg.tau_c == pytest.approx(truth.tau_c)


def test_first_order_flag():
    prof, _ = event_profile()
    imp = profiles.detect_impulse(prof, CFG)
    m = np.zeros(prof.n_frames)
    assert not profiles.segment_phases(prof, imp, m).first_order_flag
    m[40:] = -0.8
    assert profiles.segment_phases(prof, imp, m).first_order_flag


def test_degree_rank_correlation_diagnostic():
    prof, _ = event_profile()
    rho = profiles.degree_rank_correlation(prof)
    assert math.isnan(rho) or -1.0 <= rho <= 1.0


def test_profile_csv_columns():
    prof, _ = event_profile()
    lines = profiles.profile_csv(prof).splitlines()
    assert lines[0] == "time,Q,R,invlogBC,mean_k"
    assert len(lines) == prof.n_frames + 1
