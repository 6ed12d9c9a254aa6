"""Sparse random reservoirs scaled to an exact spectral radius, and the leaky update.

    x_t = (1 - a) x_{t-1} + a f(W_in u_t + W_res x_{t-1})
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as splinalg

from .activations import ActivationSpec, apply_elementwise

log = logging.getLogger(__name__)

DENSE_EIG_LIMIT = 600

SeedLike = Union[int, Sequence[int], np.random.SeedSequence]


class SpectralRadiusError(RuntimeError):
    """The iterative eigen-solver did not converge; ``estimate`` holds the best guess."""

    def __init__(self, msg, estimate=None):
        super().__init__(msg)
        self.estimate = estimate


def seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


@dataclass(frozen=True)
class ReservoirConfig:
    n: int = 100
    rho_target: float = 0.95
    leak: float = 0.7
    density: float = 0.1
    input_scaling: float = 1.0
    input_dim: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.rho_target > 0:
            raise ValueError("rho_target must be > 0")
        if not 0.0 < self.leak <= 1.0:
            raise ValueError("leak must lie in (0, 1]")
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")


@dataclass(frozen=True)
class ReservoirMatrices:
    w_res: np.ndarray
    w_in: np.ndarray
    achieved_rho: float
    redraws: int = 0

    def __post_init__(self):
        self.w_res.setflags(write=False)
        self.w_in.setflags(write=False)

    @property
    def n(self) -> int:
        return self.w_res.shape[0]

    @classmethod
    def from_arrays(cls, w_res, w_in) -> "ReservoirMatrices":
        """Wrap hand-built matrices (fixtures, oracles) without rescaling."""
        w_res = np.array(w_res, dtype=float, ndmin=2)
        w_in = np.array(w_in, dtype=float)
        if w_in.ndim == 1:
            w_in = w_in[:, None]
        rho = spectral_radius(w_res) if w_res.any() else 0.0
        return cls(w_res, w_in, rho)


def spectral_radius(m, method: str = "auto", tol: float = 1e-12, maxiter: Optional[int] = None) -> float:
    """Largest eigenvalue modulus of a square matrix.

    ``method="dense"`` uses the full eigendecomposition; ``"arnoldi"`` runs
    ARPACK's implicitly restarted Arnoldi iteration for a few largest-modulus
    eigenvalues. ``"auto"`` picks dense up to ``DENSE_EIG_LIMIT`` rows.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("spectral_radius needs a square matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    n = m.shape[0]
    if method == "auto":
        method = "dense" if n <= DENSE_EIG_LIMIT else "arnoldi"
    if method == "dense" or n < 8:
        return float(np.max(np.abs(np.linalg.eigvals(m))))
    if method != "arnoldi":
        raise ValueError(f"unknown method {method!r}")
    k = min(6, n - 2)
    try:
        vals = splinalg.eigs(
            sparse.csr_matrix(m), k=k, which="LM", tol=tol, maxiter=maxiter,
            return_eigenvectors=False,
        )
    except splinalg.ArpackNoConvergence as exc:
        partial = np.max(np.abs(exc.eigenvalues)) if len(exc.eigenvalues) else None
        raise SpectralRadiusError("Arnoldi iteration did not converge", partial) from None
    return float(np.max(np.abs(vals)))


def build_reservoir(config: ReservoirConfig, seed: Optional[SeedLike] = None) -> ReservoirMatrices:
    """Draw W_res (sparse uniform[-1, 1]) and W_in, and rescale W_res to ``rho_target``.

    ``seed`` overrides ``config.seed``. An all-zero (or nilpotent) draw has no
    spectral radius to rescale; it is redrawn from the next child stream and
    counted in ``redraws``.
    """
    ss = seed_sequence(config.seed if seed is None else seed)
    res_ss, in_ss = ss.spawn(2)
    n = config.n
    redraws = 0
    while True:
        rng = np.random.default_rng(res_ss)
        mask = rng.random((n, n)) < config.density
        w = np.where(mask, rng.uniform(-1.0, 1.0, (n, n)), 0.0)
        rho = spectral_radius(w) if mask.any() else 0.0
        if rho > 1e-12:
            break
        redraws += 1
        if redraws > 1000:
            raise RuntimeError("could not draw a reservoir with nonzero spectral radius")
        (res_ss,) = res_ss.spawn(1)
    if redraws:
        log.info("reservoir n=%d redrawn %d time(s): zero spectral radius", n, redraws)
    w_res = w * (config.rho_target / rho)
    w_in = np.random.default_rng(in_ss).uniform(-1.0, 1.0, (n, config.input_dim)) * config.input_scaling
    return ReservoirMatrices(w_res, w_in, spectral_radius(w_res), redraws)


INPUT_DISTRIBUTIONS = ("gaussian", "uniform", "sparse")


@dataclass(frozen=True)
class InputSequence:
    dist: str
    values: np.ndarray
    seed: object = None

    def __len__(self):
        return self.values.shape[0]


def gen_inputs(dist: str, t_len: int, input_dim: int = 1, seed: SeedLike = 0) -> InputSequence:
    if t_len < 1:
        raise ValueError("t_len must be >= 1")
    dist = dist.lower()
    rng = np.random.default_rng(seed_sequence(seed))
    shape = (t_len, input_dim)
    if dist == "gaussian":
        vals = rng.standard_normal(shape)
    elif dist == "uniform":
        vals = rng.uniform(-1.0, 1.0, shape)
    elif dist == "sparse":
        keep = rng.random(shape) >= 0.9
        vals = np.where(keep, rng.uniform(-1.0, 1.0, shape), 0.0)
    else:
        raise ValueError(f"unknown input distribution {dist!r}")
    return InputSequence(dist, vals, seed)


@dataclass
class StateVector:
    x: np.ndarray
    t: int = 0

    @property
    def diverged(self) -> bool:
        return not bool(np.all(np.isfinite(self.x)))


def init_state(mode: str, n: int, seed: SeedLike = 0, max_abs: float = 2.0) -> StateVector:
    """``"zero"`` or ``"random_scaled"`` (uniform draw rescaled to sup-norm ``max_abs``)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode == "zero":
        return StateVector(np.zeros(n))
    if mode != "random_scaled":
        raise ValueError(f"unknown init mode {mode!r}")
    ss = seed_sequence(seed)
    while True:
        x = np.random.default_rng(ss).uniform(-1.0, 1.0, n)
        peak = np.max(np.abs(x))
        if peak > 0:
            return StateVector(x * (max_abs / peak))
        (ss,) = ss.spawn(1)


Activation = Union[ActivationSpec, Callable[[np.ndarray], np.ndarray]]


def activate(f: Activation, pre: np.ndarray, rng=None) -> np.ndarray:
    if isinstance(f, ActivationSpec):
        return apply_elementwise(f, pre, rng)
    return np.asarray(f(pre), dtype=float)


def preactivation(x: np.ndarray, u, m: ReservoirMatrices) -> np.ndarray:
    return m.w_in @ np.atleast_1d(np.asarray(u, dtype=float)) + m.w_res @ x


def step(
    x: StateVector,
    u,
    m: ReservoirMatrices,
    spec: Activation,
    a: float,
    rng: Optional[np.random.Generator] = None,
) -> StateVector:
    """One leaky update. A diverged state is returned unchanged (frozen)."""
    if x.diverged:
        return StateVector(x.x, x.t + 1)
    with np.errstate(over="ignore", invalid="ignore"):
        fx = activate(spec, preactivation(x.x, u, m), rng)
        new = (1.0 - a) * x.x + a * fx
    return StateVector(new, x.t + 1)


@dataclass
class Trajectory:
    """States x_0..x_T, pre-activations a_1..a_T and outputs s_1..s_T."""

    states: np.ndarray
    pre: np.ndarray
    outputs: np.ndarray
    diverged_at: Optional[int] = None


def simulate(
    x0,
    inputs,
    m: ReservoirMatrices,
    spec: Activation,
    a: float,
    rng: Optional[np.random.Generator] = None,
) -> Trajectory:
    """Run the leaky update over every row of ``inputs``, keeping the full record."""
    u = inputs.values if isinstance(inputs, InputSequence) else np.asarray(inputs, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    x = np.array(x0.x if isinstance(x0, StateVector) else x0, dtype=float)
    t_len, n = u.shape[0], x.shape[0]
    states = np.empty((t_len + 1, n))
    pre = np.empty((t_len, n))
    outs = np.empty((t_len, n))
    states[0] = x
    diverged_at = None
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(t_len):
            if diverged_at is not None:
                states[t + 1], pre[t], outs[t] = x, np.nan, np.nan
                continue
            p = m.w_in @ u[t] + m.w_res @ x
            s = activate(spec, p, rng)
            x = (1.0 - a) * x + a * s
            states[t + 1], pre[t], outs[t] = x, p, s
            if not np.all(np.isfinite(x)):
                diverged_at = t + 1
    return Trajectory(states, pre, outs, diverged_at)


def operator_inf_norm(m) -> float:
    """Induced infinity norm: maximum absolute row sum."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return float(np.max(np.sum(np.abs(m), axis=1)))


def check_iss_bound(
    trajectory: Trajectory,
    m: ReservoirMatrices,
    spec: ActivationSpec,
    a: float,
    u_max: float,
) -> Optional[bool]:
    """Check ||x_t|| <= (1-a)^t ||x_0|| + B (||W_res|| + ||W_in|| u_max) with induced inf-norms.

    Returns ``None`` (skipped) for unbounded activations.
    """
    if not spec.is_bounded:
        log.info("ISS check skipped for unbounded activation %s", spec.name)
        return None
    states = trajectory.states
    if not np.all(np.isfinite(states)):
        return False
    norms = np.max(np.abs(states), axis=1)
    t = np.arange(states.shape[0])
    gain = spec.bound * (operator_inf_norm(m.w_res) + operator_inf_norm(m.w_in) * u_max)
    rhs = (1.0 - a) ** t * norms[0] + gain
    return bool(np.all(norms <= rhs + 1e-12))


def write_matrix_csv(m, path) -> Path:
    """Nonzero triples ``row,col,value``."""
    m = np.atleast_2d(np.asarray(m))
    rows, cols = np.nonzero(m)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "value"])
        for r, c in zip(rows, cols):
            w.writerow([int(r), int(c), repr(float(m[r, c]))])
    return path


def write_eigenvalue_csv(m, path) -> tuple:
    """All eigenvalues as ``re,im`` rows; returns (path, max modulus)."""
    vals = np.linalg.eigvals(np.asarray(m, dtype=float))
    order = np.lexsort((vals.imag, vals.real))
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["re", "im"])
        for v in vals[order]:
            w.writerow([repr(float(v.real)), repr(float(v.imag))])
    return path, float(np.max(np.abs(vals)))
