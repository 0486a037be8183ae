"""Taylor decomposition of an output difference into per-feature and interactive terms."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

MultiIndex = tuple[int, ...]


class AnchorMode(str, Enum):
    """Where the expansion is taken.

    ``AT_INPUT`` expands at ``x`` with ``delta = baseline - x`` so the terms sum
    to ``f(baseline) - f(x)``; ``AT_BASELINE`` expands at the baseline with
    ``delta = x - baseline`` so they sum to ``f(x) - f(baseline)``.
    """

    AT_INPUT = "at_input"
    AT_BASELINE = "at_baseline"

    @property
    def sign(self) -> int:
        return -1 if self is AnchorMode.AT_INPUT else 1


def support(kappa: MultiIndex) -> frozenset[int]:
    return frozenset(i for i, k in enumerate(kappa) if k)


@dataclass(frozen=True)
class TaylorDecomposition:
    """Term values ``c_k * delta^k`` keyed by multi-index, plus bookkeeping.

    ``f_diff`` is ``f(x) - f(baseline)`` regardless of anchor; ``epsilon`` is the
    part of ``sign * f_diff`` that the stored terms do not explain.
    """

    anchor_mode: AnchorMode
    delta: np.ndarray
    terms: dict[MultiIndex, float]
    f_diff: float
    order: int
    epsilon: float = field(default=float("nan"))

    def __post_init__(self) -> None:
        object.__setattr__(self, "anchor_mode", AnchorMode(self.anchor_mode))
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float))
        if np.isnan(self.epsilon):
            object.__setattr__(self, "epsilon", self.sign * self.f_diff - self.total())

    @property
    def n(self) -> int:
        return self.delta.size

    @property
    def sign(self) -> int:
        return self.anchor_mode.sign

    def items(self, min_order: int = 1) -> Iterator[tuple[MultiIndex, float]]:
        for kappa, value in self.terms.items():
            if sum(kappa) >= min_order:
                yield kappa, value

    def total(self) -> float:
        return float(sum(v for _, v in self.items()))

    @property
    def F(self) -> np.ndarray:
        out = np.zeros(self.n)
        for kappa, value in self.items():
            if sum(kappa) == 1:
                out[kappa.index(1)] += value
        return out

    @property
    def S_ind(self) -> np.ndarray:
        out = np.zeros(self.n)
        for kappa, value in self.items():
            if sum(kappa) == 2 and len(support(kappa)) == 1:
                out[kappa.index(2)] += value
        return out

    @property
    def S_int(self) -> np.ndarray:
        """Symmetric matrix of pairwise second-order terms ``f_ij delta_i delta_j``."""
        out = np.zeros((self.n, self.n))
        for kappa, value in self.items():
            s = support(kappa)
            if sum(kappa) == 2 and len(s) == 2:
                i, j = sorted(s)
                out[i, j] = out[j, i] = value
        return out

    @property
    def higher(self) -> dict[MultiIndex, float]:
        return {k: v for k, v in self.items(3)}

    @property
    def T_ind(self) -> np.ndarray:
        """High-order (order >= 2) independent term of every feature."""
        out = np.zeros(self.n)
        for kappa, value in self.items(2):
            s = support(kappa)
            if len(s) == 1:
                out[next(iter(s))] += value
        return out

    @property
    def T_int(self) -> dict[frozenset[int], float]:
        """Interactive terms grouped by their exact feature support."""
        out: dict[frozenset[int], float] = {}
        for kappa, value in self.items(2):
            s = support(kappa)
            if len(s) >= 2:
                out[s] = out.get(s, 0.0) + value
        return out

    @property
    def T(self) -> float:
        return float(sum(v for _, v in self.items(2)))

    def to_dict(self) -> dict:
        return {
            "anchor_mode": self.anchor_mode.value,
            "delta": self.delta.tolist(),
            "order": self.order,
            "F": self.F.tolist(),
            "S_ind": self.S_ind.tolist(),
            "T_ind": self.T_ind.tolist(),
            "T_int": {",".join(str(i) for i in sorted(k)): v for k, v in self.T_int.items()},
            "total": self.total(),
            "f_diff": self.f_diff,
            "epsilon": self.epsilon,
        }
