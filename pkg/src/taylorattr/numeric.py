"""Deterministic numeric substrate: seeded RNG, Gaussian sampling, finite differences.

The random stream is SplitMix64 evaluated in counter mode, so draw ``k`` of a
stream depends only on ``(seed, k)``. Gaussian variates use the Box-Muller
transform on pairs of 53-bit uniforms. Finite differences are an independent
oracle for the exact derivatives in :mod:`taylorattr.deriv`; they are not used
on any production path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError, ParameterError, UnsupportedOrderError

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

FD_STEP_FIRST = 1e-4
FD_STEP_HIGHER = 1e-3
MAX_FD_ORDER = 4


def _splitmix64(seed: int, counters: np.ndarray) -> np.ndarray:
    z = np.uint64(seed & _MASK64) + counters * _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@dataclass
class RngState:
    """Counter-mode SplitMix64 stream.

    ``counter`` is the number of 64-bit words consumed so far. Two states
    with equal ``(seed, counter)`` produce identical continuations.
    """

    seed: int
    counter: int = 0

    def __post_init__(self) -> None:
        self.seed = int(self.seed) & _MASK64
        self.counter = int(self.counter)

    def next_u64(self, k: int) -> np.ndarray:
        counters = np.arange(self.counter + 1, self.counter + k + 1, dtype=np.uint64)
        self.counter += k
        return _splitmix64(self.seed, counters)

    def uniform(self, k: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """``k`` doubles in ``[low, high)`` built from the top 53 bits."""
        u = (self.next_u64(k) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return low + (high - low) * u

    def integers(self, k: int, low: int, high: int) -> np.ndarray:
        """``k`` integers in ``[low, high)``; modulo bias is below 2^-40 for small ranges."""
        if high <= low:
            raise ParameterError(f"empty integer range [{low}, {high})")
        span = np.uint64(high - low)
        return (self.next_u64(k) % span).astype(np.int64) + low

    def permutation(self, k: int) -> np.ndarray:
        return np.argsort(self.next_u64(k), kind="stable")

    def spawn(self) -> "RngState":
        """Independent child stream keyed off the next word of this one."""
        return RngState(int(self.next_u64(1)[0]))


@dataclass(frozen=True)
class GaussianSpec:
    sigma: float
    mean: float = 0.0

    def __post_init__(self) -> None:
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ParameterError(f"sigma must be a positive finite number, got {self.sigma}")


def standard_normal(rng: RngState, n: int) -> np.ndarray:
    """``n`` N(0, 1) draws via Box-Muller; consumes ``2 * ceil(n / 2)`` words."""
    pairs = (n + 1) // 2
    u = rng.uniform(2 * pairs)
    u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
    u2 = u[1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(theta)
    z[1::2] = radius * np.sin(theta)
    return z[:n]


def sample_gaussian_vector(rng: RngState, spec: GaussianSpec | float, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. samples of N(mean, sigma^2), advancing ``rng``."""
    if not isinstance(spec, GaussianSpec):
        spec = GaussianSpec(float(spec))
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    return spec.mean + spec.sigma * standard_normal(rng, n)


def _checked(f: Callable[[np.ndarray], float], x: np.ndarray) -> float:
    value = float(f(x))
    if not math.isfinite(value):
        raise NumericError(f"non-finite function value {value} at {x.tolist()}")
    return value


def fd_gradient(f: Callable[[np.ndarray], float], x: Sequence[float], h: float = FD_STEP_FIRST) -> np.ndarray:
    """Central-difference gradient ``(f(x + h e_i) - f(x - h e_i)) / 2h``."""
    if h <= 0:
        raise ParameterError(f"step must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (_checked(f, x + e) - _checked(f, x - e)) / (2.0 * h)
    return grad


def _central_weights(k: int) -> list[tuple[float, float]]:
    # k-th central difference: sum_j (-1)^j C(k, j) f(x + (k/2 - j) h)
    return [((-1) ** j * math.comb(k, j), k / 2.0 - j) for j in range(k + 1)]


def fd_mixed_partial(
    f: Callable[[np.ndarray], float],
    x: Sequence[float],
    multi_index: Sequence[int],
    h: float = FD_STEP_HIGHER,
) -> float:
    """Tensor-product central-difference estimate of ``d^|k| f / dx^k`` at ``x``."""
    x = np.asarray(x, dtype=float)
    kappa = [int(k) for k in multi_index]
    if len(kappa) != x.size:
        raise ParameterError(f"multi-index length {len(kappa)} != dimension {x.size}")
    if any(k < 0 for k in kappa):
        raise ParameterError(f"negative exponent in multi-index {kappa}")
    order = sum(kappa)
    if order > MAX_FD_ORDER:
        raise UnsupportedOrderError(f"order {order} exceeds the supported maximum {MAX_FD_ORDER}")
    if h <= 0:
        raise ParameterError(f"step must be positive, got {h}")
    if order == 0:
        return _checked(f, x)

    axes = [i for i, k in enumerate(kappa) if k > 0]
    stencils = [_central_weights(kappa[i]) for i in axes]
    total = 0.0
    for combo in itertools.product(*stencils):
        weight = 1.0
        point = x.copy()
        for axis, (w, offset) in zip(axes, combo):
            weight *= w
            point[axis] += offset * h
        total += weight * _checked(f, point)
    return total / h**order
