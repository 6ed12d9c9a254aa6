"""Bounded activation functions for leaky echo state reservoirs.

Two smooth baselines (tanh, ReLU) plus eight irregular maps: escape-time
Mandelbrot (discrete and smooth), the logistic map behind a sigmoid or a
fractional-part wrapper, a truncated Weierstrass series, the Cantor function,
the ternary Cantor set indicator and a noisy tanh driven by Brownian increments.

Every evaluator is vectorised over numpy arrays and accepts python scalars.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]


class ConfigurationError(ValueError):
    """Raised when an activation is asked to do something its family cannot."""


class Family(str, enum.Enum):
    TANH = "tanh"
    RELU = "relu"
    MANDELBROT_DISCRETE = "mandelbrot-discrete"
    MANDELBROT_CONTINUOUS = "mandelbrot-continuous"
    LOGISTIC_SIGMOID = "logistic-sigmoid"
    LOGISTIC_MODULO = "logistic-modulo"
    WEIERSTRASS = "weierstrass"
    CANTOR_FUNCTION = "cantor-function"
    CANTOR_SET = "cantor-set"
    BROWNIAN = "brownian"

    @classmethod
    def parse(cls, name: Union[str, "Family"]) -> "Family":
        if isinstance(name, Family):
            return name
        key = str(name).strip().lower().replace("_", "-")
        for fam in cls:
            if fam.value == key or fam.name.lower().replace("_", "-") == key:
                return fam
        compact = key.replace("-", "")
        for fam in cls:
            if fam.value.replace("-", "") == compact:
                return fam
        raise ConfigurationError(f"unknown activation family {name!r}")


# -- parameter records -------------------------------------------------------


@dataclass(frozen=True)
class MandelbrotParams:
    scale: float = 2.0
    t_max: int = 20
    bailout: float = 2.0

    def __post_init__(self):
        if self.t_max < 1:
            raise ConfigurationError("t_max must be >= 1")
        if self.bailout < 2.0:
            raise ConfigurationError("bailout must be >= 2")
        if self.scale == 0:
            raise ConfigurationError("scale must be nonzero")


@dataclass(frozen=True)
class LogisticParams:
    r: float = 3.7
    eps: float = 1e-10
    wrapper: str = "sigmoid"  # or "modulo"

    def __post_init__(self):
        if not 0.0 < self.r <= 4.0:
            raise ConfigurationError("r must lie in (0, 4]")
        if not 0.0 < self.eps < 0.5:
            raise ConfigurationError("eps must lie in (0, 0.5)")
        if self.wrapper not in ("sigmoid", "modulo"):
            raise ConfigurationError(f"unknown logistic wrapper {self.wrapper!r}")


@dataclass(frozen=True)
class WeierstrassParams:
    a: float = 0.5
    b: float = 3.0
    terms: int = 10
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.a < 1.0:
            raise ConfigurationError("a must lie in (0, 1)")
        if self.a * self.b <= 1.0:
            raise ConfigurationError("a*b must exceed 1")
        if self.terms < 1:
            raise ConfigurationError("terms must be >= 1")

    @property
    def bound(self) -> float:
        """Sup-norm bound (1 - a^K) / (1 - a)^2, attained at x = 0."""
        return (1.0 - self.a**self.terms) / (1.0 - self.a) ** 2


@dataclass(frozen=True)
class CantorParams:
    depth: int = 10

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigurationError("depth must be >= 1")


@dataclass(frozen=True)
class BrownianParams:
    eta: float = 0.3
    dt: float = 0.01
    k_sigma: float = 3.0

    def __post_init__(self):
        if self.eta <= 0 or self.dt <= 0 or self.k_sigma <= 0:
            raise ConfigurationError("eta, dt and k_sigma must be positive")

    @property
    def bound(self) -> float:
        return self.eta * (1.0 + self.k_sigma * math.sqrt(self.dt))


@dataclass(frozen=True)
class NoParams:
    pass


Params = Union[
    MandelbrotParams, LogisticParams, WeierstrassParams, CantorParams, BrownianParams, NoParams
]


# -- scalar maps ---------------------------------------------------------------


def sigmoid(x: ArrayLike) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    # two-branch form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _ret(x_in, out):
    return float(out) if np.ndim(x_in) == 0 else out


def eval_mandelbrot(
    x: ArrayLike, params: MandelbrotParams = MandelbrotParams(), variant: str = "discrete"
) -> ArrayLike:
    """Normalised escape time of z -> z^2 + c with c = x / scale.

    The seed z_0 = 0 and c are real, so the orbit stays on the real axis and is
    iterated in float64 without a complex dtype. Orbits that never exceed the
    bailout by ``t_max`` get the full value 1.

    Args:
        x: input value(s).
        params: scale, iteration cap and bailout radius.
        variant: ``"discrete"`` for the integer escape count, ``"continuous"``
            for ``n - log2(log2|z_n|)`` clamped to ``[0, t_max]``.
    """
    if variant not in ("discrete", "continuous"):
        raise ConfigurationError(f"unknown Mandelbrot variant {variant!r}")
    c = np.asarray(x, dtype=float) / params.scale
    z = np.zeros_like(c)
    t = np.full(c.shape, float(params.t_max))
    alive = np.ones(c.shape, dtype=bool)
    for n in range(1, params.t_max + 1):
        z = np.where(alive, z * z + c, z)
        escaped = alive & (np.abs(z) > params.bailout)
        if escaped.any():
            if variant == "discrete":
                t[escaped] = n
            else:
                mod = np.abs(z[escaped])
                t[escaped] = np.clip(n - np.log2(np.log2(mod)), 0.0, params.t_max)
            alive &= ~escaped
        if not alive.any():
            break
    return _ret(x, t / params.t_max)


def eval_logistic(x: ArrayLike, params: LogisticParams = LogisticParams()) -> ArrayLike:
    """Logistic map r*y*(1-y) applied to a squashed input y."""
    xa = np.asarray(x, dtype=float)
    if params.wrapper == "sigmoid":
        y = sigmoid(xa)
    else:
        y = np.clip(np.mod(np.abs(xa), 1.0), params.eps, 1.0 - params.eps)
    return _ret(x, params.r * y * (1.0 - y))


def eval_weierstrass(x: ArrayLike, params: WeierstrassParams = WeierstrassParams()) -> ArrayLike:
    xa = np.asarray(x, dtype=float)
    acc = np.zeros_like(xa)
    for k in range(params.terms):
        acc += params.a**k * np.cos(params.b**k * np.pi * params.scale * xa)
    return _ret(x, acc / (1.0 - params.a))


_LOW, _MID, _HIGH, _BASE = 0, 1, 2, 3


def cantor_staircase(y: ArrayLike, depth: int) -> np.ndarray:
    """Depth-limited Cantor function on [0, 1].

    Walks the ternary branches top-down, then folds them back bottom-up so the
    floating-point operations happen in the same order as the recursive
    definition (results are bit-identical to it).
    """
    y = np.array(y, dtype=float, copy=True)
    path = np.empty((depth,) + y.shape, dtype=np.int8)
    open_ = np.ones(y.shape, dtype=bool)
    for level in range(depth):
        low = open_ & (y <= 1.0 / 3.0)
        high = open_ & (y >= 2.0 / 3.0)
        mid = open_ & ~low & ~high
        code = np.full(y.shape, _BASE, dtype=np.int8)
        code[low] = _LOW
        code[high] = _HIGH
        code[mid] = _MID
        path[level] = code
        y = np.where(low, 3.0 * y, np.where(high, 3.0 * y - 2.0, y))
        open_ &= ~mid
    # innermost value: y itself where the recursion bottomed out at d = 0
    val = np.where(open_, y, 0.5)
    for level in range(depth - 1, -1, -1):
        code = path[level]
        val = np.where(
            code == _LOW, 0.5 * val,
            np.where(code == _HIGH, 0.5 + 0.5 * val, np.where(code == _MID, 0.5, val)),
        )
    return val


def eval_cantor_function(x: ArrayLike, params: CantorParams = CantorParams()) -> ArrayLike:
    return _ret(x, cantor_staircase(sigmoid(x), params.depth))


def eval_cantor_set(x: ArrayLike, params: CantorParams = CantorParams()) -> ArrayLike:
    """Indicator of the depth-d ternary Cantor set evaluated at sigmoid(x)."""
    y = sigmoid(x)
    inside = np.ones(y.shape, dtype=bool)
    for k in range(params.depth):
        inside &= np.floor(np.mod(3.0**k * y, 3.0)) != 1.0
    return _ret(x, inside.astype(float))


def brownian_increments(
    shape, params: BrownianParams, rng: np.random.Generator
) -> np.ndarray:
    sd = math.sqrt(params.dt)
    w = rng.normal(0.0, sd, size=shape)
    lim = params.k_sigma * sd
    return np.clip(w, -lim, lim)


def eval_brownian(
    x: ArrayLike,
    params: BrownianParams = BrownianParams(),
    rng: Optional[np.random.Generator] = None,
    increment: Optional[ArrayLike] = None,
) -> ArrayLike:
    """eta * (tanh(x) + W) with a clamped Gaussian increment W ~ N(0, dt).

    ``increment`` forces W (used by tests); otherwise one increment per
    component is drawn from ``rng``.
    """
    xa = np.asarray(x, dtype=float)
    if increment is None:
        if rng is None:
            raise ConfigurationError("Brownian activation needs a random generator")
        w = brownian_increments(xa.shape, params, rng)
    else:
        w = np.asarray(increment, dtype=float)
    return _ret(x, params.eta * (np.tanh(xa) + w))


def eval_baseline(x: ArrayLike, family: Union[str, Family]) -> ArrayLike:
    fam = Family.parse(family)
    xa = np.asarray(x, dtype=float)
    if fam is Family.TANH:
        return _ret(x, np.tanh(xa))
    if fam is Family.RELU:
        return _ret(x, np.maximum(0.0, xa))
    raise ConfigurationError(f"{fam.value} is not a baseline family")


# -- ActivationSpec --------------------------------------------------------------


_DEFAULT_PARAMS = {
    Family.TANH: NoParams,
    Family.RELU: NoParams,
    Family.MANDELBROT_DISCRETE: MandelbrotParams,
    Family.MANDELBROT_CONTINUOUS: MandelbrotParams,
    Family.LOGISTIC_SIGMOID: lambda: LogisticParams(wrapper="sigmoid"),
    Family.LOGISTIC_MODULO: lambda: LogisticParams(wrapper="modulo"),
    Family.WEIERSTRASS: WeierstrassParams,
    Family.CANTOR_FUNCTION: CantorParams,
    Family.CANTOR_SET: CantorParams,
    Family.BROWNIAN: BrownianParams,
}

_PARAM_TYPES = {
    Family.MANDELBROT_DISCRETE: MandelbrotParams,
    Family.MANDELBROT_CONTINUOUS: MandelbrotParams,
    Family.LOGISTIC_SIGMOID: LogisticParams,
    Family.LOGISTIC_MODULO: LogisticParams,
    Family.WEIERSTRASS: WeierstrassParams,
    Family.CANTOR_FUNCTION: CantorParams,
    Family.CANTOR_SET: CantorParams,
    Family.BROWNIAN: BrownianParams,
}

# order-preserving families
MONOTONE = frozenset({Family.TANH, Family.RELU, Family.CANTOR_FUNCTION})


@dataclass(frozen=True)
class ActivationSpec:
    """One activation family with its parameters, range and codebook.

    Build with :meth:`of` rather than the constructor so bounds and codebook
    stay consistent with the parameters.
    """

    family: Family
    params: Params = field(default_factory=NoParams)
    declared_bounds: tuple = (-math.inf, math.inf)
    codebook: Optional[tuple] = None

    @classmethod
    def of(cls, family: Union[str, Family], **overrides) -> "ActivationSpec":
        fam = Family.parse(family)
        if overrides:
            ptype = _PARAM_TYPES.get(fam)
            if ptype is None:
                raise ConfigurationError(f"{fam.value} takes no parameters")
            base = _DEFAULT_PARAMS[fam]()
            try:
                params = type(base)(**{**base.__dict__, **overrides})
            except TypeError as exc:
                raise ConfigurationError(str(exc)) from None
        else:
            params = _DEFAULT_PARAMS[fam]()
        if fam is Family.LOGISTIC_SIGMOID and params.wrapper != "sigmoid":
            raise ConfigurationError("logistic-sigmoid requires the sigmoid wrapper")
        if fam is Family.LOGISTIC_MODULO and params.wrapper != "modulo":
            raise ConfigurationError("logistic-modulo requires the modulo wrapper")
        return cls(fam, params, _bounds(fam, params), _codebook(fam, params))

    @property
    def name(self) -> str:
        return self.family.value

    @property
    def bound(self) -> float:
        """B = max(|L|, |U|); infinite for ReLU."""
        lo, hi = self.declared_bounds
        return max(abs(lo), abs(hi))

    @property
    def is_bounded(self) -> bool:
        return math.isfinite(self.bound)

    @property
    def stochastic(self) -> bool:
        return self.family is Family.BROWNIAN

    @property
    def monotone(self) -> bool:
        return self.family in MONOTONE

    def __call__(self, v, rng: Optional[np.random.Generator] = None):
        out = apply_elementwise(self, v, rng)
        return float(out) if out.ndim == 0 else out

    def describe(self) -> dict:
        """Plain-dict view used for hashing and JSON export."""
        return {
            "family": self.family.value,
            "params": dict(sorted(self.params.__dict__.items())),
        }


def _bounds(fam: Family, params) -> tuple:
    if fam is Family.TANH:
        return (-1.0, 1.0)
    if fam is Family.RELU:
        return (0.0, math.inf)
    if fam in (Family.MANDELBROT_DISCRETE, Family.MANDELBROT_CONTINUOUS,
               Family.CANTOR_FUNCTION, Family.CANTOR_SET):
        return (0.0, 1.0)
    if fam in (Family.LOGISTIC_SIGMOID, Family.LOGISTIC_MODULO):
        return (0.0, params.r / 4.0)
    if fam is Family.WEIERSTRASS:
        return (-params.bound, params.bound)
    if fam is Family.BROWNIAN:
        return (-params.bound, params.bound)
    raise AssertionError(fam)


def _codebook(fam: Family, params) -> Optional[tuple]:
    if fam is Family.MANDELBROT_DISCRETE:
        return tuple(n / params.t_max for n in range(params.t_max + 1))
    if fam is Family.CANTOR_SET:
        return (0.0, 1.0)
    return None


def evaluate(spec: ActivationSpec, x: ArrayLike, rng: Optional[np.random.Generator] = None):
    """Evaluate ``spec`` at x (scalar or array)."""
    fam = spec.family
    p = spec.params
    if fam in (Family.TANH, Family.RELU):
        return eval_baseline(x, fam)
    if fam is Family.MANDELBROT_DISCRETE:
        return eval_mandelbrot(x, p, "discrete")
    if fam is Family.MANDELBROT_CONTINUOUS:
        return eval_mandelbrot(x, p, "continuous")
    if fam in (Family.LOGISTIC_SIGMOID, Family.LOGISTIC_MODULO):
        return eval_logistic(x, p)
    if fam is Family.WEIERSTRASS:
        return eval_weierstrass(x, p)
    if fam is Family.CANTOR_FUNCTION:
        return eval_cantor_function(x, p)
    if fam is Family.CANTOR_SET:
        return eval_cantor_set(x, p)
    if fam is Family.BROWNIAN:
        return eval_brownian(x, p, rng)
    raise AssertionError(fam)


def apply_elementwise(
    spec: ActivationSpec, v, rng: Optional[np.random.Generator] = None
) -> np.ndarray:
    """Apply the activation to every component of ``v``.

    Brownian draws one independent increment per component and therefore
    requires ``rng``; every other family ignores it.
    """
    if spec.stochastic and rng is None:
        raise ConfigurationError("Brownian activation requires a random generator")
    v = np.asarray(v, dtype=float)
    return np.asarray(evaluate(spec, v, rng), dtype=float)


ALL_FAMILIES = tuple(Family)


def default_specs() -> list:
    return [ActivationSpec.of(f) for f in ALL_FAMILIES]


def sample_curve(
    spec: ActivationSpec,
    lo: float = -3.0,
    hi: float = 3.0,
    points: int = 10_001,
    seed: int = 0,
) -> tuple:
    x = np.linspace(lo, hi, points)
    rng = np.random.default_rng(seed) if spec.stochastic else None
    return x, apply_elementwise(spec, x, rng)


def write_curve_csv(spec: ActivationSpec, path, **kwargs) -> Path:
    """Write the ``x,value`` table for one family."""
    x, y = sample_curve(spec, **kwargs)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "value"])
        for xi, yi in zip(x, y):
            w.writerow([repr(float(xi)), repr(float(yi))])
    return path
