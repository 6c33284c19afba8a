"""Kibble-Zurek closed-form predictors and cross-event scaling fits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import spearmanr

QUALITIES = ("ok", "no_plateau", "poor_fit", "failed")


class InsufficientDataError(ValueError):
    pass


class EstimationError(ValueError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


@dataclass(frozen=True)
class KzmParams:
    nu: float = 0.5
    z: float = 1.0
    tau0: float = 1.0
    xi0: float = 1.0

    def __post_init__(self):
        for name in ("nu", "tau0", "xi0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v}")
        # z = 0 is admitted as a degenerate limit of the exponent formula
        if not (math.isfinite(self.z) and self.z >= 0):
            raise ValueError(f"z must be nonnegative, got {self.z}")

    @property
    def nu_z(self) -> float:
        return self.nu * self.z


@dataclass(frozen=True)
class ScalingPoint:
    event_id: str
    ramp_rate: float
    xi_frozen: float
    quality: str = "ok"
    # measured effective control parameter, when a plateau was found
    rhat: float | None = None

    def __post_init__(self):
        if self.quality not in QUALITIES:
            raise ValueError(f"quality must be one of {QUALITIES}, got {self.quality!r}")


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    amplitude: float
    stderr_b: float
    r_squared: float
    n_points: int
    low_confidence: bool = False

    def to_dict(self) -> dict:
        return {
            "b": self.exponent,
            "amplitude": self.amplitude,
            "stderr": self.stderr_b,
            "r2": self.r_squared,
            "n": self.n_points,
            "low_confidence": self.low_confidence,
        }


@dataclass(frozen=True)
class NuZEstimate:
    nu: float
    z: float
    b1: float
    b2: float
    length_fit: ScalingFit
    rhat_fit: ScalingFit


def kzm_exponent(params: KzmParams) -> float:
    return params.nu / (1.0 + params.nu_z)


def relaxation_time(eps: float, params: KzmParams) -> float:
    if eps == 0:
        raise ZeroDivisionError("relaxation time diverges at the critical point (eps = 0)")
    return params.tau0 / abs(eps) ** params.nu_z


def freeze_out_time(tau_s: float, params: KzmParams) -> float:
    _positive(tau_s, "tau_s")
    return (params.tau0 * tau_s**params.nu_z) ** (1.0 / (1.0 + params.nu_z))


def frozen_length(tau_s: float, params: KzmParams) -> float:
    _positive(tau_s, "tau_s")
    return params.xi0 * (tau_s / params.tau0) ** kzm_exponent(params)


def defect_density(xi_hat: float) -> float:
    _positive(xi_hat, "xi_hat")
    return 1.0 / xi_hat


def effective_control(tau_s: float, params: KzmParams) -> float:
    _positive(tau_s, "tau_s")
    return (params.tau0 / tau_s) ** (1.0 / (1.0 + params.nu_z))


def weakening_time(tau_s: float, params: KzmParams) -> float:
    if not tau_s > params.tau0:
        raise ValueError("weakening-time formula undefined for tau_s <= tau0")
    a = 2.0 * params.nu / (1.0 + params.nu_z)
    bracket = 1.0 - (tau_s / params.tau0) ** (-a)
    return params.tau0 * bracket ** (-1.0 / a)


def predict(params: KzmParams, tau_s: float) -> dict:
    """All closed-form predictions for one S-ramp duration."""
    out = {
        "nu": params.nu,
        "z": params.z,
        "tau0": params.tau0,
        "xi0": params.xi0,
        "tau_s": tau_s,
        "exponent": kzm_exponent(params),
        "freeze_out_time": freeze_out_time(tau_s, params),
        "frozen_length": frozen_length(tau_s, params),
        "effective_control": effective_control(tau_s, params),
    }
    out["defect_density"] = defect_density(out["frozen_length"])
    try:
        tw = weakening_time(tau_s, params)
        out["weakening_time"] = tw
        out["weakening_rate"] = 1.0 / tw
    except ValueError as exc:
        out["weakening_time"] = None
        out["weakening_rate"] = None
        out["weakening_note"] = str(exc)
    return out


def _positive(v: float, name: str) -> None:
    if not v > 0:
        raise ValueError(f"{name} must be > 0, got {v}")


def fit_loglog(x: Sequence[float], y: Sequence[float], min_points: int = 5) -> ScalingFit:
    """OLS of log y on log x; the exponent is minus the slope."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y must have equal length")
    if x.size < max(min_points, 2):
        raise InsufficientDataError(f"need at least {max(min_points, 2)} points, got {x.size}")
    if np.any(~(x > 0)) or np.any(~(y > 0)):
        raise ValueError("power-law fit needs strictly positive values")
    lx, ly = np.log(x), np.log(y)
    xc = lx - lx.mean()
    sxx = float(np.dot(xc, xc))
    if sxx == 0:
        raise InsufficientDataError("all x values are equal")
    slope = float(np.dot(xc, ly - ly.mean()) / sxx)
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(ly - ly.mean(), ly - ly.mean()))
    n = x.size
    stderr = math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else float("nan")
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(-slope, math.exp(intercept), stderr, r2, n)


def usable_points(points: Iterable[ScalingPoint]) -> list[ScalingPoint]:
    return [p for p in points if p.quality == "ok"]


def fit_power_law(points: Sequence[ScalingPoint], min_points: int = 5) -> ScalingFit:
    """Fit xi_frozen ~ ramp_rate^(-b) over the ok-quality points."""
    ok = usable_points(points)
    if len(ok) < min_points:
        raise InsufficientDataError(f"need at least {min_points} ok points, got {len(ok)}")
    return fit_loglog([p.ramp_rate for p in ok], [p.xi_frozen for p in ok], min_points)


def estimate_nu_z(
    points: Sequence[ScalingPoint], rhat_points: Sequence[tuple[str, float, float]], min_points: int = 5
) -> NuZEstimate:
    """Invert b1 = nu/(1+nu z) and b2 = 1/(1+nu z) from the two event clouds.

    ``rhat_points`` holds (event_id, rhat_measured, ramp_rate).
    """
    ok = {p.event_id: p for p in usable_points(points)}
    rh = {eid: (r, rate) for eid, r, rate in rhat_points if eid in ok}
    common = sorted(rh)
    if len(common) < min_points:
        raise InsufficientDataError(f"need at least {min_points} events in both clouds, got {len(common)}")
    length_fit = fit_loglog([ok[e].ramp_rate for e in common], [ok[e].xi_frozen for e in common], min_points)
    rhat_fit = fit_loglog([rh[e][1] for e in common], [rh[e][0] for e in common], min_points)
    b1 = length_fit.exponent
    # rhat grows with the ramp rate, so its exponent is the positive slope
    b2 = -rhat_fit.exponent
    # an exponent within two standard errors of zero leaves nu and z undefined
    weak = [b <= 2.0 * f.stderr_b for b, f in ((b1, length_fit), (b2, rhat_fit))]
    if b1 <= 0 or b2 <= 0 or any(weak):
        raise EstimationError(
            f"exponent not resolved above zero (b1={b1:.4g}, b2={b2:.4g}); nu and z undefined",
            {"b1": b1, "b2": b2, "stderr_b1": length_fit.stderr_b, "stderr_b2": rhat_fit.stderr_b},
        )
    nu = b1 / b2
    z = (1.0 / b2 - 1.0) / nu
    return NuZEstimate(nu, z, b1, b2, length_fit, rhat_fit)


def rank_correlation(a: Sequence[float], b: Sequence[float]) -> float:
    return float(spearmanr(a, b).statistic)


def scaling_csv(points: Sequence[ScalingPoint]) -> str:
    rows = ["event_id,ramp_rate,xi_frozen,quality,rhat"]
    for p in points:
        rh = "" if p.rhat is None else repr(float(p.rhat))
        rows.append(f"{p.event_id},{_num(p.ramp_rate)},{_num(p.xi_frozen)},{p.quality},{rh}")
    return "\n".join(rows) + "\n"


def _num(v: float) -> str:
    return "" if v is None or not math.isfinite(v) else repr(float(v))


def read_scaling_csv(text: str) -> tuple[list[ScalingPoint], list[str]]:
    """Parse a scaling CSV. Returns points and human-readable notes on skipped rows."""
    points, notes = [], []
    reader = csv.DictReader(io.StringIO(text))
    missing = {"event_id", "ramp_rate", "xi_frozen"} - set(reader.fieldnames or [])
    if missing:
        raise ValueError(f"scaling CSV lacks columns {sorted(missing)}")
    for row in reader:
        try:
            rate = float(row["ramp_rate"]) if row["ramp_rate"] else float("nan")
            xi = float(row["xi_frozen"]) if row["xi_frozen"] else float("nan")
        except ValueError as exc:
            notes.append(f"{row['event_id']}: unparsable value ({exc})")
            continue
        quality = row.get("quality") or "ok"
        rhat = float(row["rhat"]) if row.get("rhat") else None
        points.append(ScalingPoint(row["event_id"], rate, xi, quality, rhat))
    return points, notes
