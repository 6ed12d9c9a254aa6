"""Two-trajectory echo-state tests, symbol-lock diagnostics and attractor enumeration."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .activations import ActivationSpec, ConfigurationError, apply_elementwise
from .reservoir import (
    ReservoirConfig,
    ReservoirMatrices,
    SeedLike,
    build_reservoir,
    gen_inputs,
    init_state,
    seed_sequence,
)

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class EspTestSpec:
    reservoir: ReservoirConfig = field(default_factory=ReservoirConfig)
    activation: ActivationSpec = field(default_factory=lambda: ActivationSpec.of("tanh"))
    distribution: str = "gaussian"
    horizon: int = 200
    extended_horizon: int = 2000
    threshold: float = 0.1
    trials: int = 1
    extend: bool = False

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be > 0")
        if not 1 <= self.horizon <= self.extended_horizon:
            raise ValueError("need 1 <= horizon <= extended_horizon")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass
class SymbolTrace:
    """Post-activation outputs of both trajectories; row i is step ``t0 + i``."""

    first: np.ndarray
    second: np.ndarray
    t0: int = 0

    def mismatch(self) -> np.ndarray:
        """Boolean per recorded step: any component differs."""
        return np.any(np.asarray(self.first) != np.asarray(self.second), axis=1)


@dataclass
class TrajectoryPairResult:
    distances: np.ndarray
    converged: bool
    convergence_time: Optional[int]
    final_distance: float
    decay_rate: Optional[float]
    symbol_lock_time: Optional[int]
    diverged: bool
    distances_inf: Optional[np.ndarray] = None
    horizon: int = 0
    extended: bool = False
    trace: Optional[SymbolTrace] = None

    def to_record(self) -> dict:
        """JSON-ready dict (the symbol trace is not exported)."""
        return {
            "converged": self.converged,
            "convergence_time": self.convergence_time,
            "final_distance": _num(self.final_distance),
            "decay_rate": None if self.decay_rate is None else _num(self.decay_rate),
            "symbol_lock_time": self.symbol_lock_time,
            "diverged": self.diverged,
            "horizon": self.horizon,
            "extended": self.extended,
            "distances": [_num(d) for d in self.distances],
        }


def _num(v: float):
    v = float(v)
    if math.isfinite(v):
        return v
    return "inf" if v > 0 else ("-inf" if v < 0 else "nan")


# -- core pair runner ----------------------------------------------------------


def _streams(trial_seed: SeedLike, reservoir_seed: int):
    # a bare trial number is keyed by the config seed; sequences are used as given
    if isinstance(trial_seed, (int, np.integer)):
        ss = np.random.SeedSequence([int(reservoir_seed), int(trial_seed)])
    else:
        ss = seed_sequence(trial_seed)
    return ss.spawn(5)


def _run_states(x1, x2, u, m, spec, a, rngs, keep_symbols):
    """Advance both trajectories over inputs ``u`` (one batched matvec per step)."""
    steps = u.shape[0]
    d2 = np.empty(steps)
    dinf = np.empty(steps)
    mism = np.zeros(steps, dtype=bool)
    sym1 = np.empty((steps, m.n)) if keep_symbols else None
    sym2 = np.empty((steps, m.n)) if keep_symbols else None
    X = np.stack([x1, x2], axis=1)
    diverged_at = None
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(steps):
            P = m.w_res @ X + (m.w_in @ u[t])[:, None]
            if spec.stochastic:
                S = np.stack(
                    [apply_elementwise(spec, P[:, 0], rngs[0]), apply_elementwise(spec, P[:, 1], rngs[1])],
                    axis=1,
                )
            else:
                S = apply_elementwise(spec, P, None)
            X = (1.0 - a) * X + a * S
            diff = X[:, 0] - X[:, 1]
            if not np.all(np.isfinite(X)):
                diverged_at = t
                d2[t:] = math.inf
                dinf[t:] = math.inf
                mism[t:] = True
                if keep_symbols:
                    sym1[t:] = np.nan
                    sym2[t:] = np.nan
                break
            d2[t] = math.sqrt(float(diff @ diff))
            dinf[t] = float(np.max(np.abs(diff)))
            mism[t] = bool(np.any(S[:, 0] != S[:, 1]))
            if keep_symbols:
                sym1[t] = S[:, 0]
                sym2[t] = S[:, 1]
    return X[:, 0], X[:, 1], d2, dinf, mism, sym1, sym2, diverged_at


def run_pair(
    spec: EspTestSpec,
    trial_seed: SeedLike = 0,
    *,
    matrices: Optional[ReservoirMatrices] = None,
    inputs: Optional[np.ndarray] = None,
    x0_first: Optional[np.ndarray] = None,
    x0_second: Optional[np.ndarray] = None,
    keep_trace: bool = False,
) -> TrajectoryPairResult:
    """Drive a zero-initialised and a randomly initialised state with the same inputs.

    The second state is uniform on [-1, 1]^N rescaled to sup-norm 2. Both share
    one reservoir draw; a Brownian activation draws independent noise for each
    trajectory. ``matrices``, ``inputs`` and the initial states may be supplied
    to replay a fixture; otherwise all are drawn from ``trial_seed``.

    ``distances[t]`` is the L2 gap after t steps (``distances[0]`` is the
    initial gap). Convergence is the first t with a gap strictly below the
    threshold. When ``spec.extend`` is set an unconverged pair keeps running to
    ``spec.extended_horizon``.
    """
    cfg = spec.reservoir
    res_ss, in_ss, init_ss, n1_ss, n2_ss = _streams(trial_seed, cfg.seed)
    m = matrices if matrices is not None else build_reservoir(cfg, res_ss)
    total = spec.extended_horizon if spec.extend else spec.horizon
    if inputs is None:
        u = gen_inputs(spec.distribution, total, cfg.input_dim, in_ss).values
    else:
        u = np.asarray(inputs, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        total = min(total, u.shape[0])
    n = m.n
    x1 = np.zeros(n) if x0_first is None else np.asarray(x0_first, dtype=float)
    x2 = init_state("random_scaled", n, init_ss).x if x0_second is None else np.asarray(x0_second, dtype=float)
    rngs = (np.random.default_rng(n1_ss), np.random.default_rng(n2_ss))
    codebook = spec.activation.codebook is not None
    d0 = float(np.linalg.norm(x1 - x2))
    d0_inf = float(np.max(np.abs(x1 - x2))) if n else 0.0

    y1, y2, d2, dinf, mism, s1, s2, div = _run_states(
        x1, x2, u[: spec.horizon], m, spec.activation, cfg.leak, rngs, keep_trace and codebook
    )
    distances = np.concatenate([[d0], d2])
    dist_inf = np.concatenate([[d0_inf], dinf])
    extended = False
    if spec.extend and div is None and total > spec.horizon and not np.any(distances < spec.threshold):
        extended = True
        _, _, e2, einf, emism, es1, es2, ediv = _run_states(
            y1, y2, u[spec.horizon : total], m, spec.activation, cfg.leak, rngs, keep_trace and codebook
        )
        distances = np.concatenate([distances, e2])
        dist_inf = np.concatenate([dist_inf, einf])
        mism = np.concatenate([mism, emism])
        if s1 is not None:
            s1, s2 = np.concatenate([s1, es1]), np.concatenate([s2, es2])
        div = None if ediv is None else ediv + spec.horizon

    below = np.flatnonzero(distances < spec.threshold)
    converged = below.size > 0
    lock = None
    if codebook:
        bad = np.flatnonzero(mism)
        if bad.size == 0:
            lock = 1 if len(mism) else None
        elif bad[-1] < len(mism) - 1:
            lock = int(bad[-1]) + 2  # step index of the first matching step after the last mismatch
    trace = SymbolTrace(s1, s2, t0=1) if s1 is not None else None
    diverged = div is not None
    return TrajectoryPairResult(
        distances=distances,
        converged=bool(converged),
        convergence_time=int(below[0]) if converged else None,
        final_distance=math.inf if diverged else float(distances[-1]),
        decay_rate=None if diverged else estimate_decay_rate(distances),
        symbol_lock_time=lock,
        diverged=diverged,
        distances_inf=dist_inf,
        horizon=len(distances) - 1,
        extended=extended,
        trace=trace,
    )


# -- diagnostics -----------------------------------------------------------------


def estimate_decay_rate(distances, floor: float = 1e-14, min_points: int = 10) -> Optional[float]:
    """Least-squares slope of ln d_t over steps with floor < d_t <= d_0."""
    d = np.asarray(distances, dtype=float)
    if d.size == 0 or not math.isfinite(d[0]):
        return None
    t = np.arange(d.size)
    keep = np.isfinite(d) & (d > floor) & (d <= d[0])
    if keep.sum() < min_points:
        return None
    slope, _ = np.polyfit(t[keep], np.log(d[keep]), 1)
    return float(slope)


def detect_symbol_lock(trace: SymbolTrace, spec: Optional[ActivationSpec] = None) -> Optional[int]:
    """Smallest T with s_t == s'_t for every recorded t >= T, or None."""
    if spec is not None and spec.codebook is None:
        raise ConfigurationError(f"{spec.name} has no codebook; symbol lock is undefined")
    if trace.first is None:
        raise ConfigurationError("trace holds no symbols")
    mism = trace.mismatch()
    if mism.size == 0:
        return None
    bad = np.flatnonzero(mism)
    if bad.size == 0:
        return trace.t0
    if bad[-1] == mism.size - 1:
        return None
    return trace.t0 + int(bad[-1]) + 1


def _rounding_floor(distances, scale: float, n: int) -> float:
    # state differences cannot be resolved below a few ulps of the state magnitude
    return 64.0 * _EPS * max(scale, 1.0) * math.sqrt(max(n, 1))


def verify_post_lock_contraction(
    result: TrajectoryPairResult,
    trace: Optional[SymbolTrace],
    a: float,
    rtol: float = 1e-6,
    state_scale: float = 2.0,
) -> bool:
    """After symbol lock T the gap must shrink exactly as (1 - a)^(t - T) d_T.

    For a = 1 the gap must be exactly zero from T on. Below the double-precision
    floor of the states (a few ulps of ``state_scale``) only the absolute
    agreement can be checked.
    """
    lock = result.symbol_lock_time
    if lock is None and trace is not None:
        lock = detect_symbol_lock(trace)
    if lock is None:
        raise ValueError("no symbol lock to verify")
    d = np.asarray(result.distances, dtype=float)
    if lock >= d.size:
        return True
    if a == 1.0:
        return bool(np.all(d[lock:] == 0.0))
    n = trace.first.shape[1] if trace is not None and trace.first is not None else 1
    floor = _rounding_floor(d, state_scale, n)
    k = np.arange(d.size - lock)
    predicted = (1.0 - a) ** k * d[lock]
    err = np.abs(d[lock:] - predicted)
    return bool(np.all(err <= rtol * predicted + floor))


def check_collision_bound(
    result: TrajectoryPairResult,
    trace: SymbolTrace,
    a: float,
    d_l: float,
    atol: float = 1e-9,
) -> bool:
    """Every step obeys |D_t| <= (1 - a)|D_{t-1}| + a d_L 1{s_t != s'_t} (sup norm)."""
    d = np.asarray(result.distances_inf, dtype=float)
    mism = trace.mismatch()
    steps = min(mism.size, d.size - trace.t0)
    for i in range(steps):
        t = trace.t0 + i
        bound = (1.0 - a) * d[t - 1] + a * d_l * float(mism[i]) + atol
        if not d[t] <= bound:
            return False
    return True


def fading_memory_probe(
    spec: EspTestSpec,
    perturb_time: int,
    trial_seed: SeedLike = 0,
    perturb: bool = True,
    x0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Gap between two runs whose inputs differ only at ``perturb_time``.

    Both start from the same state (zero unless ``x0`` is given). Returns the
    L2 gap for t = perturb_time .. horizon, where entry 0 is the gap right after
    the perturbed input is consumed.
    """
    if not 0 <= perturb_time < spec.horizon:
        raise ValueError("perturb_time must lie in [0, horizon)")
    cfg = spec.reservoir
    res_ss, in_ss, alt_ss, n1_ss, n2_ss = _streams(trial_seed, cfg.seed)
    m = build_reservoir(cfg, res_ss)
    u = gen_inputs(spec.distribution, spec.horizon, cfg.input_dim, in_ss).values
    u2 = u.copy()
    if perturb:
        u2[perturb_time] = gen_inputs(spec.distribution, 1, cfg.input_dim, alt_ss).values[0]
    x = np.zeros(m.n) if x0 is None else np.asarray(x0, dtype=float)
    y = x.copy()
    rng1, rng2 = np.random.default_rng(n1_ss), np.random.default_rng(n2_ss)
    a = cfg.leak
    f = spec.activation
    out = []
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(spec.horizon):
            x = (1 - a) * x + a * apply_elementwise(f, m.w_in @ u[t] + m.w_res @ x, rng1)
            y = (1 - a) * y + a * apply_elementwise(f, m.w_in @ u2[t] + m.w_res @ y, rng2)
            if t >= perturb_time:
                out.append(float(np.linalg.norm(x - y)))
    return np.array(out)


# -- quantized attractors -----------------------------------------------------------


class StateBudgetExceeded(RuntimeError):
    def __init__(self, msg, partial):
        super().__init__(msg)
        self.partial = partial


@dataclass
class AttractorReport:
    cycles: list
    basin_counts: list
    unique: bool
    transients: list = field(default_factory=list)

    @property
    def n_cycles(self) -> int:
        return len(self.cycles)


def _canonical_cycle(seq):
    """Rotate a cycle so its smallest (phase, state) key comes first."""
    keys = [s for s in seq]
    i = min(range(len(keys)), key=lambda j: keys[j])
    return tuple(keys[i:] + keys[:i])


def enumerate_quantized_attractors(
    matrices: ReservoirMatrices,
    spec: ActivationSpec,
    input_cycle,
    initial_states: Optional[Sequence] = None,
    init_samples: int = 256,
    seed: SeedLike = 0,
    max_states: Optional[int] = None,
) -> AttractorReport:
    """Find every limit cycle reached from the given initial conditions (leak a = 1).

    With a = 1 the state after a step is the codebook vector f(W_in u_t + W x),
    and with a periodic input the pair (input phase, state) lives in a finite
    set of size P * k^N, so every orbit is eventually periodic. Cycles are
    identified up to rotation.

    Initial conditions default to every codebook vector when k^N <= init_samples,
    otherwise ``init_samples`` random codebook vectors.
    """
    if spec.codebook is None:
        raise ConfigurationError(f"{spec.name} has no codebook")
    n = matrices.n
    if n > 8:
        raise ValueError("attractor enumeration is limited to n <= 8")
    levels = np.asarray(spec.codebook)
    k = len(levels)
    u = np.asarray(input_cycle, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    period = u.shape[0]
    budget = period * k**n if max_states is None else max_states
    if initial_states is None:
        if k**n <= init_samples:
            initial_states = [np.array(c) for c in itertools.product(levels, repeat=n)]
        else:
            rng = np.random.default_rng(seed_sequence(seed))
            initial_states = [levels[rng.integers(0, k, n)] for _ in range(init_samples)]

    cycle_ids: dict = {}
    cycles, basins, transients = [], [], []
    for x0 in initial_states:
        x = np.asarray(x0, dtype=float)
        seen: dict = {}
        path = []
        phase = 0
        while True:
            x = apply_elementwise(spec, matrices.w_in @ u[phase] + matrices.w_res @ x)
            phase = (phase + 1) % period
            key = (phase, tuple(x.tolist()))
            if key in seen:
                start = seen[key]
                cyc = _canonical_cycle(path[start:])
                break
            seen[key] = len(path)
            path.append(key)
            if len(seen) > budget:
                partial = AttractorReport(cycles, basins, len(cycles) == 1, transients)
                raise StateBudgetExceeded("state-space budget exceeded", partial)
        if cyc not in cycle_ids:
            cycle_ids[cyc] = len(cycles)
            cycles.append([np.array(s) for _, s in cyc])
            basins.append(0)
        basins[cycle_ids[cyc]] += 1
        transients.append(start)
    return AttractorReport(cycles, basins, len(cycles) == 1, transients)


# -- export ----------------------------------------------------------------------------


def write_trace_csv(result: TrajectoryPairResult, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "distance"])
        for t, d in enumerate(result.distances):
            w.writerow([t, repr(float(d))])
    return path


def write_result_json(result: TrajectoryPairResult, path, **extra) -> Path:
    path = Path(path)
    rec = {**extra, **result.to_record()}
    path.write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")
    return path
