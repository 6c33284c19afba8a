"""Synthetic ground truth for the pipeline.

Two generators:

* ``generate_constructed`` builds frame series with a programmed R ramp,
  impulse, critical frame, frozen plateau and domain structure whose
  correlation length follows a programmed power law in the ramp rate.
* ``simulate_phi4`` quenches an overdamped stochastic phi4 ring through its
  symmetry-breaking point and counts the kinks left behind.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .funcnet import FrameSeries
from .kzm import InsufficientDataError, ScalingFit, fit_loglog

# flips are kept this many frames away from either end so the shrinking
# smoothing window (width <= 5) never sees them
EDGE_MARGIN = 4
Q_REST = 0.6
BASE_INVLOG = 0.3
BASE_INVLOG_JITTER = 0.005
SPIKE_INVLOG = 3.0
DEFAULT_TAU_Q = (1e2, 10**2.5, 1e3, 10**3.5, 1e4)


class OracleConfigError(ValueError):
    pass


class Phi4BlowUpError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuenchConfig:
    model: str = "constructed"
    chain_length: int = 300
    tau_q: tuple[float, ...] = DEFAULT_TAU_Q
    dt: float = 0.01
    noise_amplitude: float = 0.1
    reps: int = 20
    rng_seed: int = 0
    # constructed model
    programmed_exponent: float = 1.0 / 3.0
    programmed_xi0: float = 28.0
    ramp_rates: tuple[float, ...] = tuple(np.geomspace(1e5, 1e7, 30).tolist())
    plateau_length: int = 12
    critical_time: int = 60
    n_frames: int = 120
    frame_interval: float = 50e-9
    impulse_frames: int = 8
    weakening_frames: int = 16
    nucleation_frames: int = 8
    # sigma of the lognormal multiplicative noise on the programmed xi
    xi_noise: float = 0.0
    plateau_span: float = 0.0
    edge_magnetization: float = 0.2
    # phi4 model
    initial_amplitude: float = 0.01
    initial_value: float | None = None

    def __post_init__(self):
        if self.model not in ("constructed", "phi4"):
            raise OracleConfigError(f"model must be 'constructed' or 'phi4', got {self.model!r}")
        if self.reps < 1:
            raise OracleConfigError("reps must be >= 1")
        if not 0 < self.dt <= 0.1:
            raise OracleConfigError("dt must lie in (0, 0.1]")
        if self.noise_amplitude < 0:
            raise OracleConfigError("noise_amplitude must be >= 0")
        if self.model == "phi4":
            if self.chain_length < 64:
                raise OracleConfigError("phi4 needs chain_length >= 64")
            if not self.tau_q or min(self.tau_q) <= 0:
                raise OracleConfigError("tau_q values must be positive")
        else:
            self._check_layout()

    def _check_layout(self):
        if self.chain_length < 8:
            raise OracleConfigError("constructed chains need chain_length >= 8")
        if not self.ramp_rates or min(self.ramp_rates) <= 0:
            raise OracleConfigError("ramp_rates must be positive")
        if self.programmed_xi0 <= 0 or self.xi_noise < 0:
            raise OracleConfigError("programmed_xi0 must be > 0 and xi_noise >= 0")
        tc, f = self.critical_time, self.n_frames
        onset = tc - self.impulse_frames
        p0 = tc - self.plateau_length // 2
        e = p0 + self.plateau_length
        if self.impulse_frames < 1 or onset < 4:
            raise OracleConfigError("need impulse_frames >= 1 and at least 4 S-phase frames")
        if p0 - self.nucleation_frames < EDGE_MARGIN or self.nucleation_frames < 1:
            raise OracleConfigError("nucleation window starts too early; raise critical_time")
        if e >= f - EDGE_MARGIN - 1 or tc + self.weakening_frames >= f - 1:
            raise OracleConfigError("plateau, collapse or W phase does not fit; raise n_frames")
        if not 0 < self.edge_magnetization < 1 or not 0 <= self.plateau_span < self.edge_magnetization:
            raise OracleConfigError("need 0 <= plateau_span < edge_magnetization < 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SyntheticGroundTruth:
    event_id: str
    ramp_rate: float
    xi_programmed: float
    mean_domain_length: float
    tc_frame: int
    t_c: float
    onset_frame: int
    tau_c: float
    tau_s: float
    tau_w: float
    R_max: float
    R_min: float
    weakening_rate: float
    plateau_frames: tuple[int, int] | None
    plateau_interval: tuple[float, float] | None
    kinks_at_freeze: int
    rhat: float | None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["plateau_frames"] = None if self.plateau_frames is None else list(self.plateau_frames)
        d["plateau_interval"] = None if self.plateau_interval is None else list(self.plateau_interval)
        return d


def programmed_xi(config: QuenchConfig) -> np.ndarray:
    rates = np.asarray(config.ramp_rates, dtype=float)
    return config.programmed_xi0 * (rates / rates.min()) ** (-config.programmed_exponent)


def mean_domain_length(xi: float) -> float:
    """Mean domain length of a two-state Markov chain whose G decays as exp(-x/xi)."""
    return 2.0 / -math.expm1(-1.0 / xi)


def _domains(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Start index and length of each constant run."""
    starts = np.r_[0, np.nonzero(s[1:] != s[:-1])[0] + 1]
    lengths = np.diff(np.r_[starts, s.shape[0]])
    return starts, lengths


def domain_lengths(rng: np.random.Generator, L: int, xi: float) -> np.ndarray:
    """Stratified geometric domain lengths summing to L.

    Lengths are inverse-CDF draws of a geometric law with success probability
    p = (1 - exp(-1/xi)) / 2, one per quantile stratum, which keeps the sample
    distribution close to the law without the shot noise of independent draws.
    """
    p = -math.expm1(-1.0 / xi) / 2.0
    mean = 1.0 / p
    expected = L / mean
    n = int(math.floor(expected))
    if rng.random() < expected - n:
        n += 1
    if n <= 1:
        return np.array([L], dtype=np.int64)
    q = (np.arange(n) + rng.random(n)) / n
    lengths = np.maximum(1, np.ceil(np.log1p(-q) / math.log1p(-p))).astype(np.int64)
    # match the total by unit changes on random domains
    while lengths.sum() != L:
        if lengths.sum() > L:
            big = np.nonzero(lengths > 1)[0]
            lengths[big[rng.integers(big.size)]] -= 1
        else:
            lengths[rng.integers(n)] += 1
    return lengths


def domain_chain(rng: np.random.Generator, L: int, xi: float, balance: bool = True) -> np.ndarray:
    """Open +-1 chain of alternating domains with geometric lengths.

    A geometric length law with p = (1 - exp(-1/xi)) / 2 is the run-length law
    of a two-state Markov chain with correlation exp(-x/xi). With ``balance``
    the lengths are split into two halves of near-equal total (one half per
    sign) and the remainder is removed by one-node wall shifts, so the chain
    sums to zero (one for odd L).
    """
    lengths = domain_lengths(rng, L, xi)
    n = lengths.size
    if balance and n > 1:
        order = np.argsort(-lengths, kind="stable")
        sides: list[list[int]] = [[], []]
        totals = [0, 0]
        for j in range(0, n - 1, 2):
            hi, lo = lengths[order[j]], lengths[order[j + 1]]
            big = 0 if totals[0] <= totals[1] else 1
            sides[big].append(hi)
            sides[1 - big].append(lo)
            totals[big] += hi
            totals[1 - big] += lo
        if n % 2:
            # the odd one out goes to the half that occupies the extra slot
            sides[0].append(lengths[order[-1]])
        for side in sides:
            rng.shuffle(side)
        seq = np.empty(n, dtype=np.int64)
        seq[0::2] = sides[0]
        seq[1::2] = sides[1]
        lengths = seq
    first = 1 if rng.random() < 0.5 else -1
    signs = first * (-1) ** np.arange(n)
    s = np.repeat(signs, lengths).astype(np.int8)
    if balance and n > 1:
        _balance(rng, s)
    return s


def _balance(rng: np.random.Generator, s: np.ndarray) -> None:
    while abs(int(s.sum())) > 1:
        major = 1 if s.sum() > 0 else -1
        starts, lengths = _domains(s)
        signs = s[starts]
        cand = []
        for d in np.nonzero((signs == major) & (lengths >= 2))[0]:
            if d > 0:
                cand.append(starts[d])
            if d < len(starts) - 1:
                cand.append(starts[d] + lengths[d] - 1)
        if not cand:
            return
        s[cand[int(rng.integers(len(cand)))]] = -major


def _shell_order(s: np.ndarray, sign: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Nodes of ``sign`` domains with their domain length, distance to the
    nearest wall (chain ends are not walls; inf if the domain has none) and
    relative radius from the domain centre (0 at the centre, towards 1 at the
    edges).
    """
    starts, lengths = _domains(s)
    L = s.shape[0]
    nodes, size, depth, rho = [], [], [], []
    for a, n in zip(starts, lengths):
        if s[a] != sign:
            continue
        idx = np.arange(a, a + n)
        left = idx - a if a > 0 else np.full(n, np.inf)
        right = a + n - 1 - idx if a + n < L else np.full(n, np.inf)
        nodes.append(idx)
        size.append(np.full(n, n))
        depth.append(np.minimum(left, right))
        rho.append(np.abs(idx - (a + (n - 1) / 2.0)) / (n / 2.0))
    if not nodes:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(size), np.concatenate(depth), np.concatenate(rho)


def _wall_movers(s: np.ndarray, sign: int, count: int) -> np.ndarray:
    """Up to ``count`` nodes of ``sign`` domains taken wall by wall, shallowest
    first, never more than a third of any domain."""
    nodes, size, depth, _ = _shell_order(s, sign)
    if count <= 0 or nodes.size == 0:
        return np.empty(0, dtype=np.int64)
    ok = np.isfinite(depth) & (size >= 3) & (depth < np.maximum(size // 3, 1))
    order = np.lexsort((nodes[ok], depth[ok]))
    return nodes[ok][order][:count]


def flip_frames(chain: np.ndarray, config: QuenchConfig) -> tuple[np.ndarray, dict]:
    """Frame at which each node turns from +1 to -1 so that the sign chain at
    the critical frame equals ``chain``."""
    L = chain.shape[0]
    tc, P = config.critical_time, config.plateau_length
    p0 = tc - P // 2
    e = p0 + P
    last = config.n_frames - 1 - EDGE_MARGIN
    f = np.full(L, -1, dtype=np.int64)
    quota = int(config.plateau_span * L / 4)

    # inside the plateau walls creep by single nodes: - domains shrink going back
    # from tc, + domains shrink going forward
    before = _wall_movers(chain, -1, quota) if tc > p0 else np.empty(0, dtype=np.int64)
    after = _wall_movers(chain, +1, quota) if e - 1 > tc else np.empty(0, dtype=np.int64)
    nb, na = tc - p0, e - 1 - tc
    for k, i in enumerate(before):
        f[i] = tc - (k * nb) // len(before)
    for k, i in enumerate(after):
        f[i] = tc + 1 + (k * na) // len(after)

    at_p0 = chain.copy()
    at_p0[before] = 1
    at_end = chain.copy()
    at_end[after] = -1
    edge = int(round((1.0 - config.edge_magnetization) * L / 2))

    # nucleation: - domains of the p0 chain grow from their centres; the outer
    # shell flips together at p0
    nodes, _, _, rho = _shell_order(at_p0, -1)
    order = np.lexsort((nodes, rho))
    nodes = nodes[order]
    n_batch = max(0, nodes.size - edge)
    early = nodes[: nodes.size - n_batch]
    f[nodes[nodes.size - n_batch :]] = p0
    ns = p0 - config.nucleation_frames
    for k, i in enumerate(early):
        f[i] = ns + (k * config.nucleation_frames) // max(len(early), 1)

    # collapse: + domains of the last plateau chain shrink from their walls
    nodes, _, _, rho = _shell_order(at_end, +1)
    order = np.lexsort((nodes, -rho))
    nodes = nodes[order]
    n_batch = max(0, nodes.size - edge)
    f[nodes[:n_batch]] = e
    rest = nodes[n_batch:]
    span = last - e
    for k, i in enumerate(rest):
        f[i] = e + 1 + (k * span) // max(len(rest), 1)
    assert np.all(f >= 0)
    info = {"p0": p0, "end": e, "before": before.size, "after": after.size}
    return f, info


def degree_trajectories(flips: np.ndarray, n_frames: int) -> np.ndarray:
    """Integer degrees rising by 2 per frame up to f-1, flat for one frame, then
    falling by 2; the smoothed derivative changes sign exactly at f."""
    t = np.arange(n_frames)[:, None]
    f = flips[None, :]
    base = 2 * n_frames + 2
    rise = 2 * np.minimum(t, f - 1)
    fall = 2 * np.maximum(t - f, 0)
    return (base + rise - fall).astype(np.int64)


def constructed_event(
    config: QuenchConfig, ramp_rate: float, xi: float, rng: np.random.Generator, event_id: str
) -> tuple[FrameSeries, SyntheticGroundTruth]:
    L, F = config.chain_length, config.n_frames
    dt = config.frame_interval
    tc = config.critical_time
    onset = tc - config.impulse_frames
    times = np.arange(F) * dt

    chain = domain_chain(rng, L, xi)
    flips, info = flip_frames(chain, config)
    degrees = degree_trajectories(flips, F)

    r = np.empty(F)
    r[: tc + 1] = 1.0 + ramp_rate * times[: tc + 1]
    r_max = r[tc]
    r_min = 1.0 + 0.3 * (r_max - 1.0)
    w_end = tc + config.weakening_frames
    r[tc : w_end + 1] = np.linspace(r_max, r_min, config.weakening_frames + 1)
    tail = F - 1 - w_end
    if tail:
        r[w_end + 1 :] = r_min + 0.2 * (r_max - r_min) * np.arange(1, tail + 1) / tail
    q = Q_REST / r

    invlog = BASE_INVLOG + BASE_INVLOG_JITTER * rng.standard_normal(F)
    invlog[onset:tc] = SPIKE_INVLOG
    bc = np.exp(1.0 / invlog)

    P = config.plateau_length
    p0, e = info["p0"], info["end"]
    tau_s = float(times[onset] - times[0])
    plateau = (p0, e) if P > 0 else None
    truth = SyntheticGroundTruth(
        event_id=event_id,
        ramp_rate=float(ramp_rate),
        xi_programmed=float(xi),
        mean_domain_length=mean_domain_length(xi),
        tc_frame=tc,
        t_c=float(times[tc]),
        onset_frame=onset,
        tau_c=float(times[tc] - times[onset]),
        tau_s=tau_s,
        tau_w=float(times[w_end] - times[tc]),
        R_max=float(r_max),
        R_min=float(r_min),
        weakening_rate=float((r_max - r_min) / (times[w_end] - times[tc])),
        plateau_frames=plateau,
        plateau_interval=None if plateau is None else (float(times[p0]), float(times[e - 1])),
        kinks_at_freeze=int(np.count_nonzero(chain[1:] != chain[:-1])),
        rhat=None if plateau is None else float((times[tc] - times[p0]) / tau_s),
        extra={"wall_movers_before": info["before"], "wall_movers_after": info["after"]},
    )
    meta = {"model": "constructed", "ramp_rate": float(ramp_rate), "xi_programmed": float(xi)}
    series = FrameSeries(times, q, bc, degrees, None, None, event_id, meta)
    return series, truth


def generate_constructed(config: QuenchConfig) -> tuple[list[FrameSeries], list[SyntheticGroundTruth]]:
    if config.model != "constructed":
        raise OracleConfigError("generate_constructed needs model='constructed'")
    xis = programmed_xi(config)
    series, truths = [], []
    for idx, (rate, xi) in enumerate(zip(config.ramp_rates, xis)):
        rng = np.random.default_rng(np.random.SeedSequence(config.rng_seed, spawn_key=(idx,)))
        if config.xi_noise > 0:
            xi = xi * math.exp(config.xi_noise * rng.standard_normal())
        s, t = constructed_event(config, rate, xi, rng, f"constructed_{idx:03d}")
        series.append(s)
        truths.append(t)
    return series, truths


# ---------------------------------------------------------------- phi4 oracle


@dataclass(frozen=True)
class Phi4Result:
    tau_q: np.ndarray
    # (n_tau, reps) kink counts at eps = +1
    kinks: np.ndarray
    chain_length: int
    # rep-0 fields per tau at eps = 0 and eps = +1, shape (n_tau, 2, L)
    snapshots: np.ndarray

    @property
    def density(self) -> np.ndarray:
        return self.kinks / self.chain_length


@dataclass(frozen=True)
class SweepResult:
    fit: ScalingFit
    tau_q: np.ndarray
    mean_kinks: np.ndarray
    sem_kinks: np.ndarray
    run: Phi4Result
    low_confidence: bool

    def monotone(self) -> bool:
        """Mean kink count non-increasing in tau_Q within one combined standard error."""
        m, s = self.mean_kinks, self.sem_kinks
        return bool(np.all(np.diff(m) <= np.sqrt(s[1:] ** 2 + s[:-1] ** 2)))


def _rep_streams(seed: int, tau_index: int, rep: int) -> tuple[int, np.random.Generator]:
    key = int(np.random.SeedSequence(seed, spawn_key=(tau_index, rep, 0)).generate_state(1, np.uint64)[0])
    init = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tau_index, rep, 1)))
    return key, init


def count_ring_kinks(phi: np.ndarray) -> int:
    s = phi >= 0
    return int(np.count_nonzero(s != np.roll(s, 1)))


def phi4_rep(config: QuenchConfig, tau_index: int, rep: int) -> tuple[int, np.ndarray]:
    """One quench; returns the kink count and the fields at eps = 0 and eps = +1."""
    L = config.chain_length
    tau_q = config.tau_q[tau_index]
    key, init = _rep_streams(config.rng_seed, tau_index, rep)
    if config.initial_value is None:
        phi = init.uniform(-config.initial_amplitude, config.initial_amplitude, L)
    else:
        phi = np.full(L, float(config.initial_value))
    n_steps = int(round(2.0 * tau_q / config.dt))
    deps = 2.0 / n_steps
    half = n_steps // 2
    snaps = np.empty((2, L))
    for j, (a, b) in enumerate(((0, half), (half, n_steps))):
        failed = kernels.phi4_integrate(phi, -1.0, deps, a, b - a, config.dt, config.noise_amplitude, key)
        if failed >= 0:
            raise Phi4BlowUpError(
                f"|phi| exceeded 1e3 near step {a + failed} (tau_Q={tau_q:g}, rep {rep}); "
                f"reduce dt below {config.dt:g}"
            )
        snaps[j] = phi
    return count_ring_kinks(phi), snaps


def _rep_task(args):
    return phi4_rep(*args)


def simulate_phi4(config: QuenchConfig, jobs: int = 1) -> Phi4Result:
    if config.model != "phi4":
        raise OracleConfigError("simulate_phi4 needs model='phi4'")
    tasks = [(config, ti, rep) for ti in range(len(config.tau_q)) for rep in range(config.reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_rep_task, tasks))
    else:
        results = [phi4_rep(*t) for t in tasks]
    n_tau = len(config.tau_q)
    kinks = np.array([r[0] for r in results], dtype=np.int64).reshape(n_tau, config.reps)
    snaps = np.stack([results[ti * config.reps][1] for ti in range(n_tau)])
    return Phi4Result(np.asarray(config.tau_q, dtype=float), kinks, config.chain_length, snaps)


def fit_kink_scaling(tau_q: Sequence[float], mean_density: Sequence[float], min_points: int = 3) -> ScalingFit:
    """Power law of the defect length 1/n against the quench rate 1/tau_Q."""
    tau_q = np.asarray(tau_q, dtype=float)
    dens = np.asarray(mean_density, dtype=float)
    if np.any(dens <= 0):
        raise InsufficientDataError("a tau_Q value produced no kinks in any rep; cannot fit")
    return fit_loglog(1.0 / tau_q, 1.0 / dens, min_points)


def kink_density_sweep(config: QuenchConfig, jobs: int = 1) -> SweepResult:
    run = simulate_phi4(config, jobs)
    mean = run.kinks.mean(axis=1)
    sem = run.kinks.std(axis=1, ddof=1) / math.sqrt(config.reps) if config.reps > 1 else np.full(mean.shape, np.nan)
    low = len(config.tau_q) < 4 or config.reps < 10
    fit = fit_kink_scaling(run.tau_q, mean / config.chain_length, min_points=min(3, len(config.tau_q)))
    if low:
        fit = ScalingFit(fit.exponent, fit.amplitude, fit.stderr_b, fit.r_squared, fit.n_points, True)
    return SweepResult(fit, run.tau_q, mean, sem, run, low)
