"""Stability diagnostics: empirical Lipschitz slopes, leak-adjusted gain, crowding ratio."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .activations import ActivationSpec, ConfigurationError, apply_elementwise
from .reservoir import ReservoirMatrices, Trajectory, operator_inf_norm


class UnsupportedFamilyError(ConfigurationError):
    pass


@dataclass(frozen=True)
class LipschitzStats:
    max: float
    median: float
    p95: float
    sample_count: int
    epsilon: float
    domain: tuple


def estimate_lipschitz(
    spec: ActivationSpec,
    epsilon: float = 1e-6,
    samples: int = 100_000,
    domain: tuple = (-5.0, 5.0),
    seed: int = 0,
) -> LipschitzStats:
    """Forward-difference slopes |f(x + eps) - f(x)| / eps at uniform random x."""
    if spec.stochastic:
        raise UnsupportedFamilyError(f"{spec.name} is stochastic; its slope is undefined")
    lo, hi = domain
    x = np.random.default_rng(seed).uniform(lo, hi, samples)
    slopes = np.abs(apply_elementwise(spec, x + epsilon) - apply_elementwise(spec, x)) / epsilon
    return LipschitzStats(
        max=float(np.max(slopes)),
        median=float(np.median(slopes)),
        p95=float(np.percentile(slopes, 95)),
        sample_count=samples,
        epsilon=epsilon,
        domain=(float(lo), float(hi)),
    )


def effective_gain(a: float, l_g: float, w_norm: float) -> float:
    """Leak-adjusted contraction proxy (1 - a) + a * l_g * w_norm."""
    if not 0.0 < a <= 1.0:
        raise ValueError("a must lie in (0, 1]")
    if l_g < 0 or w_norm < 0:
        raise ValueError("l_g and w_norm must be nonnegative")
    return (1.0 - a) + a * l_g * w_norm


def crowding_ratio(n: int, k: int) -> float:
    if n < 1 or k < 2:
        raise ValueError("need n >= 1 and k >= 2")
    return n / k


@dataclass(frozen=True)
class CodebookStats:
    d_l: float
    delta_l: float
    k: int


def codebook_stats(levels: Iterable[float]) -> CodebookStats:
    """Diameter and minimum separation of a finite set of output levels."""
    vals = [float(v) for v in levels]
    if len(vals) < 2:
        raise ValueError("a codebook needs at least two levels")
    if len(set(vals)) != len(vals):
        raise ValueError("codebook levels must be distinct")
    gaps = [abs(p - q) for p, q in itertools.combinations(vals, 2)]
    return CodebookStats(d_l=max(gaps), delta_l=min(gaps), k=len(vals))


class GainProxy(NamedTuple):
    value: float
    excluded: int


def mean_jacobian_gain_proxy(
    trajectory: Trajectory,
    spec: ActivationSpec,
    m: ReservoirMatrices,
    a: float,
    epsilon: float = 1e-6,
    norm: str = "inf",
) -> GainProxy:
    """Time-averaged (1 - a) + a * mean|f'(pre)| * ||W_res|| along a recorded run.

    Slopes come from central differences at every pre-activation. For
    codebook activations a difference that straddles a jump is a
    discontinuity, not a slope; those points are dropped and counted.
    ``norm`` is ``"inf"`` (induced sup norm) or ``"spectral"`` (spectral radius).
    """
    if spec.stochastic:
        raise UnsupportedFamilyError(f"{spec.name} is stochastic; its slope is undefined")
    pre = np.asarray(trajectory.pre, dtype=float)
    pre = pre[np.all(np.isfinite(pre), axis=1)]
    if pre.size == 0:
        raise ValueError("trajectory has no finite pre-activations")
    if norm == "inf":
        w_norm = operator_inf_norm(m.w_res)
    elif norm == "spectral":
        w_norm = m.achieved_rho
    else:
        raise ValueError(f"unknown norm {norm!r}")
    up = apply_elementwise(spec, pre + epsilon)
    down = apply_elementwise(spec, pre - epsilon)
    slopes = np.abs(up - down) / (2.0 * epsilon)
    valid = np.ones(slopes.shape, dtype=bool)
    if spec.codebook is not None:
        valid = up == down
    excluded = int((~valid).sum())
    counts = valid.sum(axis=1)
    per_step = np.where(valid, slopes, 0.0).sum(axis=1) / np.maximum(counts, 1)
    return GainProxy(float(np.mean((1.0 - a) + a * per_step * w_norm)), excluded)


def write_lipschitz_csv(rows: Sequence[tuple], path) -> Path:
    """``family,max,median,p95`` from (name, LipschitzStats) pairs."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["family", "max", "median", "p95"])
        for name, st in rows:
            w.writerow([name, repr(st.max), repr(st.median), repr(st.p95)])
    return path
