"""Exact derivatives through truncated multivariate Taylor arithmetic.

A *jet* is the vector of Taylor-monomial coefficients ``c_k`` of a function of
the displacement ``d`` from an anchor point, truncated at a maximum total
order. Multiplying jets and composing them with univariate functions whose
derivatives are known in closed form gives every mixed partial up to that
order, exact to rounding. Coefficients follow the convention
``c_k = (d^k f)(anchor) / k!`` so that ``f(anchor + d) ~ sum_k c_k d^k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Protocol, Sequence

import numpy as np
from scipy import sparse

from .errors import ComplexityError, NumericError, ShapeError, UnsupportedOrderError

MAX_ORDER = 4
MONOMIAL_BUDGET = 100_000

MultiIndex = tuple[int, ...]


class ModelFunction(Protocol):
    """Scalar model ``f: R^n -> R`` that can be differentiated exactly."""

    n_features: int

    def __call__(self, x: np.ndarray) -> float: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def taylor_jet(self, anchor: np.ndarray, basis: "MonomialBasis", support: Sequence[int]) -> np.ndarray: ...


def count_monomials(n_vars: int, order: int) -> int:
    return math.comb(n_vars + order, order)


@dataclass(frozen=True, eq=False)
class MonomialBasis:
    """All exponent tuples over ``n_vars`` variables with total degree <= ``order``.

    Index 0 is the constant monomial; entries are grouped by degree.
    """

    n_vars: int
    order: int
    exponents: list[MultiIndex] = field(init=False, repr=False)
    degrees: np.ndarray = field(init=False, repr=False)
    _index: dict[MultiIndex, int] = field(init=False, repr=False)
    _product: sparse.csr_matrix = field(init=False, repr=False)
    _pairs: tuple[np.ndarray, np.ndarray] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        size = count_monomials(self.n_vars, self.order)
        if size > MONOMIAL_BUDGET:
            raise ComplexityError(
                f"{size} monomials for n={self.n_vars}, order={self.order} exceeds budget "
                f"{MONOMIAL_BUDGET}; order-k expansions cost O(n^k)"
            )
        groups: list[list[MultiIndex]] = [[(0,) * self.n_vars]]
        for _ in range(self.order):
            nxt: list[MultiIndex] = []
            seen: set[MultiIndex] = set()
            for base in groups[-1]:
                # extend only at or after the last nonzero slot so each tuple appears once
                last = max((i for i, k in enumerate(base) if k), default=0)
                for i in range(last, self.n_vars):
                    e = list(base)
                    e[i] += 1
                    t = tuple(e)
                    if t not in seen:
                        seen.add(t)
                        nxt.append(t)
            groups.append(sorted(nxt, reverse=True))
        exps = [e for g in groups for e in g]
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "degrees", np.array([sum(e) for e in exps], dtype=int))
        object.__setattr__(self, "_index", {e: i for i, e in enumerate(exps)})

        ia, ib, ic = [], [], []
        for da in range(self.order + 1):
            for a in groups[da]:
                pa = self._index[a]
                for db in range(self.order - da + 1):
                    for b in groups[db]:
                        ia.append(pa)
                        ib.append(self._index[b])
                        ic.append(self._index[tuple(x + y for x, y in zip(a, b))])
        ia_arr, ib_arr = np.array(ia, dtype=np.int64), np.array(ib, dtype=np.int64)
        prod = sparse.csr_matrix(
            (np.ones(len(ic)), (np.arange(len(ic)), np.array(ic, dtype=np.int64))),
            shape=(len(ic), len(exps)),
        )
        object.__setattr__(self, "_pairs", (ia_arr, ib_arr))
        object.__setattr__(self, "_product", prod)

    @property
    def size(self) -> int:
        return len(self.exponents)

    def index(self, exponent: MultiIndex) -> int:
        return self._index[tuple(exponent)]

    def constant(self, value: np.ndarray | float) -> np.ndarray:
        value = np.asarray(value, dtype=float)
        out = np.zeros(value.shape + (self.size,))
        out[..., 0] = value
        return out

    def variable(self, i: int, value: float) -> np.ndarray:
        out = self.constant(value)
        e = [0] * self.n_vars
        e[i] = 1
        if self.order >= 1:
            out[self.index(tuple(e))] = 1.0
        return out

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Truncated product of jets (broadcast over leading axes)."""
        ia, ib = self._pairs
        a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
        lead = a.shape[:-1]
        terms = (a[..., ia] * b[..., ib]).reshape(-1, ia.size)
        out = (self._product.T @ terms.T).T
        return np.asarray(out).reshape(lead + (self.size,))

    def compose(self, derivatives: np.ndarray, jets: np.ndarray) -> np.ndarray:
        """Apply univariate ``g`` to jets given ``g^(k)`` at their constant terms.

        ``derivatives`` has shape ``jets.shape[:-1] + (order + 1,)``.
        """
        nil = jets.copy()
        nil[..., 0] = 0.0
        out = self.constant(derivatives[..., 0])
        power = None
        for k in range(1, self.order + 1):
            power = nil if power is None else self.mul(power, nil)
            out = out + (derivatives[..., k] / math.factorial(k))[..., None] * power
        return out

    def power(self, jet: np.ndarray, k: int) -> np.ndarray:
        out = self.constant(np.ones(jet.shape[:-1]))
        for _ in range(k):
            out = self.mul(out, jet)
        return out


@lru_cache(maxsize=32)
def get_basis(n_vars: int, order: int) -> MonomialBasis:
    return MonomialBasis(n_vars, order)


def input_jets(anchor: np.ndarray, basis: MonomialBasis, support: Sequence[int]) -> np.ndarray:
    """Jets of the coordinates ``x_i = anchor_i + d_i`` (``d_i`` only for ``i`` in support)."""
    anchor = np.asarray(anchor, dtype=float)
    jets = basis.constant(anchor)
    for slot, i in enumerate(support):
        e = [0] * basis.n_vars
        e[slot] = 1
        jets[i, basis.index(tuple(e))] = 1.0
    return jets


def _as_vector(f: ModelFunction, x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != f.n_features:
        raise ShapeError(f"expected a vector of length {f.n_features}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("input contains non-finite entries")
    return x


def gradient(f: ModelFunction, x: Sequence[float]) -> np.ndarray:
    """Exact gradient of ``f`` at ``x``."""
    g = np.asarray(f.gradient(_as_vector(f, x)), dtype=float)
    if not np.all(np.isfinite(g)):
        raise NumericError("gradient contains non-finite entries")
    return g


def taylor_coefficients(
    f: ModelFunction,
    anchor: Sequence[float],
    max_order: int,
    support: Sequence[int] | None = None,
) -> dict[MultiIndex, float]:
    """Taylor-monomial coefficients ``c_k = d^k f(anchor) / k!`` for ``1 <= |k| <= max_order``.

    Keys are full-length exponent tuples. With ``support`` given, only
    multi-indices over those features are enumerated and the remaining
    features stay fixed at the anchor.
    """
    anchor = _as_vector(f, anchor)
    if not 1 <= max_order <= MAX_ORDER:
        raise UnsupportedOrderError(f"max_order must be in [1, {MAX_ORDER}], got {max_order}")
    support = list(range(f.n_features)) if support is None else sorted(set(int(i) for i in support))
    if any(not 0 <= i < f.n_features for i in support):
        raise ShapeError(f"support {support} outside [0, {f.n_features})")
    basis = get_basis(len(support), max_order)
    jet = np.asarray(f.taylor_jet(anchor, basis, support), dtype=float)
    if not np.all(np.isfinite(jet)):
        raise NumericError("Taylor coefficients contain non-finite entries")
    out: dict[MultiIndex, float] = {}
    for idx, local in enumerate(basis.exponents):
        if idx == 0:
            continue
        full = [0] * f.n_features
        for slot, i in enumerate(support):
            full[i] = local[slot]
        out[tuple(full)] = float(jet[idx])
    return out


def hessian(f: ModelFunction, x: Sequence[float]) -> np.ndarray:
    """Exact symmetric Hessian of ``f`` at ``x``."""
    coeffs = taylor_coefficients(f, x, 2)
    n = f.n_features
    h = np.zeros((n, n))
    for kappa, c in coeffs.items():
        if sum(kappa) != 2:
            continue
        idx = [i for i, k in enumerate(kappa) if k]
        if len(idx) == 1:
            h[idx[0], idx[0]] = 2.0 * c
        else:
            i, j = idx
            h[i, j] = h[j, i] = c
    return h


def derivative_bundle(f: ModelFunction, x: Sequence[float], max_order: int = 2) -> dict:
    """Value, gradient, Hessian and (for ``max_order > 2``) raw higher partials."""
    x = _as_vector(f, x)
    bundle = {"value": float(f(x)), "gradient": gradient(f, x), "hessian": hessian(f, x)}
    if max_order > 2:
        higher = {}
        for kappa, c in taylor_coefficients(f, x, max_order).items():
            if sum(kappa) > 2:
                higher[kappa] = c * math.prod(math.factorial(k) for k in kappa)
        bundle["higher"] = higher
    return bundle
