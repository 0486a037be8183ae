"""Exact multivariate polynomials: the ground-truth model family.

Every Taylor statement about attribution is an exact finite identity on a
polynomial, so this module supplies closed-form expansions and a closed-form
straight-line path integral that the numerical routines are checked against.

Literal grammar (whitespace ignored)::

    expr   := ["+" | "-"] term (("+" | "-") term)*
    term   := factor ("*" factor)*
    factor := "-" factor | atom ["^" INT]
    atom   := NUMBER | VAR | "(" expr ")"
    VAR    := "x" INT            (1-based: x1 is the first feature)
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .deriv import MonomialBasis, input_jets
from .errors import ParameterError, PolynomialSyntaxError, ShapeError
from .results import AttributionResult
from .terms import AnchorMode, MultiIndex, TaylorDecomposition

MAX_DEGREE = 8
MAX_VARS = 8


@dataclass(frozen=True, eq=False)
class Polynomial:
    """``sum_k c_k x^k`` over ``n`` variables; zero coefficients are dropped."""

    terms: Mapping[MultiIndex, float]
    n: int

    def __post_init__(self) -> None:
        if not 1 <= self.n <= MAX_VARS:
            raise ParameterError(f"variable count must be in [1, {MAX_VARS}], got {self.n}")
        clean: dict[MultiIndex, float] = {}
        for kappa, c in self.terms.items():
            kappa = tuple(int(k) for k in kappa)
            if len(kappa) != self.n or any(k < 0 for k in kappa):
                raise ShapeError(f"bad exponent tuple {kappa} for n={self.n}")
            c = float(c)
            if c != 0.0:
                clean[kappa] = clean.get(kappa, 0.0) + c
        clean = {k: v for k, v in sorted(clean.items(), key=lambda kv: (sum(kv[0]), [-e for e in kv[0]])) if v != 0.0}
        if clean and max(sum(k) for k in clean) > MAX_DEGREE:
            raise ParameterError(f"degree exceeds the oracle cap {MAX_DEGREE}")
        object.__setattr__(self, "terms", clean)

    # -- construction ---------------------------------------------------------

    @classmethod
    def constant(cls, value: float, n: int) -> "Polynomial":
        return cls({(0,) * n: value}, n)

    @classmethod
    def variable(cls, i: int, n: int) -> "Polynomial":
        e = [0] * n
        e[i] = 1
        return cls({tuple(e): 1.0}, n)

    @classmethod
    def parse(cls, text: str, n: int | None = None) -> "Polynomial":
        return _Parser(text, n).parse()

    # -- algebra ---------------------------------------------------------------

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.terms), default=0)

    @property
    def n_features(self) -> int:
        return self.n

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.n != self.n:
                raise ShapeError(f"variable counts differ: {self.n} vs {other.n}")
            return other
        return Polynomial.constant(float(other), self.n)

    def __add__(self, other) -> "Polynomial":
        other = self._coerce(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0.0) + c
        return Polynomial(out, self.n)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial({k: -c for k, c in self.terms.items()}, self.n)

    def __sub__(self, other) -> "Polynomial":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Polynomial":
        return self._coerce(other) - self

    def __mul__(self, other) -> "Polynomial":
        other = self._coerce(other)
        out: dict[MultiIndex, float] = {}
        for (ka, ca), (kb, cb) in itertools.product(self.terms.items(), other.terms.items()):
            k = tuple(a + b for a, b in zip(ka, kb))
            out[k] = out.get(k, 0.0) + ca * cb
        return Polynomial(out, self.n)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Polynomial":
        out = Polynomial.constant(1.0, self.n)
        for _ in range(int(k)):
            out = out * self
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.n == other.n and dict(self.terms) == dict(other.terms)

    def allclose(self, other: "Polynomial", atol: float = 1e-12) -> bool:
        keys = set(self.terms) | set(other.terms)
        return self.n == other.n and all(abs(self.terms.get(k, 0.0) - other.terms.get(k, 0.0)) <= atol for k in keys)

    # -- evaluation --------------------------------------------------------------

    def __call__(self, x: Sequence[float] | np.ndarray) -> float | np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ShapeError(f"polynomial has {self.n} variables, input has {x.shape[-1]}")
        total = np.zeros(x.shape[:-1])
        for kappa, c in self.terms.items():
            total = total + c * np.prod(x ** np.array(kappa, dtype=float), axis=-1)
        return float(total) if total.ndim == 0 else total

    def partial(self, multi_index: Sequence[int]) -> "Polynomial":
        kappa = tuple(int(k) for k in multi_index)
        if len(kappa) != self.n or any(k < 0 for k in kappa):
            raise ShapeError(f"bad multi-index {kappa} for n={self.n}")
        out: dict[MultiIndex, float] = {}
        for e, c in self.terms.items():
            if any(ei < ki for ei, ki in zip(e, kappa)):
                continue
            factor = math.prod(math.perm(ei, ki) for ei, ki in zip(e, kappa))
            out[tuple(ei - ki for ei, ki in zip(e, kappa))] = c * factor
        return Polynomial(out, self.n)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cols = []
        for i in range(self.n):
            e = [0] * self.n
            e[i] = 1
            cols.append(np.asarray(self.partial(e)(x), dtype=float) * np.ones(x.shape[:-1]))
        return np.stack(cols, axis=-1)

    def shift(self, point: Sequence[float]) -> "Polynomial":
        """``q(d) = p(point + d)`` expanded by the binomial theorem."""
        point = np.asarray(point, dtype=float)
        if point.size != self.n:
            raise ShapeError(f"shift point has {point.size} entries, expected {self.n}")
        out: dict[MultiIndex, float] = {}
        for e, c in self.terms.items():
            for j in itertools.product(*(range(k + 1) for k in e)):
                coeff = c
                for ei, ji, b in zip(e, j, point):
                    coeff *= math.comb(ei, ji) * b ** (ei - ji)
                out[j] = out.get(j, 0.0) + coeff
        return Polynomial(out, self.n)

    def taylor_jet(self, anchor: np.ndarray, basis: MonomialBasis, support: Sequence[int]) -> np.ndarray:
        xs = input_jets(anchor, basis, support)
        total = basis.constant(0.0)
        for kappa, c in self.terms.items():
            term = basis.constant(c)
            for i, k in enumerate(kappa):
                if k:
                    term = basis.mul(term, basis.power(xs[i], k))
            total = total + term
        return total

    # -- text ----------------------------------------------------------------------

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for kappa, c in self.terms.items():
            factors = [f"x{i + 1}" if k == 1 else f"x{i + 1}^{k}" for i, k in enumerate(kappa) if k]
            mag = abs(c)
            coef = repr(int(mag)) if mag.is_integer() and mag < 1e15 else repr(mag)
            body = "*".join(factors) if mag == 1.0 and factors else "*".join([coef] + factors)
            parts.append(("- " if c < 0 else "+ ") + body)
        text = " ".join(parts)
        return text[2:] if text.startswith("+ ") else "-" + text[2:]

    def __repr__(self) -> str:
        return f"Polynomial({str(self)!r}, n={self.n})"


# -- parser -------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|(x\d+)|(\^|\*|\+|-|\(|\)))")


class _Parser:
    def __init__(self, text: str, n: int | None):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        text = text.rstrip()
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise PolynomialSyntaxError(f"unexpected character at offset {pos}: {text[pos:pos + 10]!r}")
            kind = "num" if m.group(1) else "var" if m.group(2) else "op"
            self.tokens.append((kind, m.group(m.lastindex), m.start(m.lastindex)))
            pos = m.end()
        used = [int(v[1:]) for k, v, _ in self.tokens if k == "var"]
        if any(i < 1 for i in used):
            raise PolynomialSyntaxError("variables are numbered from x1")
        self.n = n if n is not None else max(used, default=1)
        if used and max(used) > self.n:
            raise PolynomialSyntaxError(f"x{max(used)} used but only {self.n} variables declared")
        self.i = 0

    def _peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def _take(self, value: str | None = None) -> tuple[str, str, int]:
        tok = self._peek()
        if tok is None or (value is not None and tok[1] != value):
            where = tok[2] if tok else len(self.text)
            raise PolynomialSyntaxError(f"expected {value or 'a token'} at offset {where} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self) -> Polynomial:
        if not self.tokens:
            raise PolynomialSyntaxError("empty polynomial literal")
        p = self._expr()
        if self._peek() is not None:
            raise PolynomialSyntaxError(f"trailing input at offset {self._peek()[2]} in {self.text!r}")
        return p

    def _expr(self) -> Polynomial:
        tok = self._peek()
        negate = False
        if tok and tok[1] in "+-":
            negate = self._take()[1] == "-"
        out = self._term()
        if negate:
            out = -out
        while (tok := self._peek()) and tok[1] in "+-":
            op = self._take()[1]
            rhs = self._term()
            out = out + rhs if op == "+" else out - rhs
        return out

    def _term(self) -> Polynomial:
        out = self._factor()
        while (tok := self._peek()) and tok[1] == "*":
            self._take()
            out = out * self._factor()
        return out

    def _factor(self) -> Polynomial:
        tok = self._peek()
        if tok and tok[1] == "-":
            self._take()
            return -self._factor()
        base = self._atom()
        if (tok := self._peek()) and tok[1] == "^":
            self._take()
            exp = self._take()
            if exp[0] != "num" or not exp[1].isdigit():
                raise PolynomialSyntaxError(f"exponent must be a non-negative integer at offset {exp[2]}")
            base = base ** int(exp[1])
        return base

    def _atom(self) -> Polynomial:
        kind, value, _ = self._take()
        if kind == "num":
            return Polynomial.constant(float(value), self.n)
        if kind == "var":
            return Polynomial.variable(int(value[1:]) - 1, self.n)
        if value == "(":
            inner = self._expr()
            self._take(")")
            return inner
        raise PolynomialSyntaxError(f"unexpected {value!r} in {self.text!r}")


# -- oracle operations ---------------------------------------------------------------


def poly_eval(p: Polynomial, x: Sequence[float]) -> float:
    return p(x)


def poly_partial(p: Polynomial, multi_index: Sequence[int]) -> Polynomial:
    return p.partial(multi_index)


def exact_ig(p: Polynomial, x: Sequence[float], baseline: Sequence[float]) -> AttributionResult:
    """Closed-form straight-line integrated gradients.

    Each monomial of the expansion around the baseline, with exponents ``k``
    and total degree ``|k|``, gives feature ``i`` the share ``k_i / |k|`` of
    its value at the displacement ``x - baseline``.
    """
    x = np.asarray(x, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    delta = x - baseline
    q = p.shift(baseline)
    scores = np.zeros(p.n)
    for kappa, c in q.terms.items():
        k = sum(kappa)
        if k == 0:
            continue
        value = c * math.prod(d**e for d, e in zip(delta, kappa))
        for i, ki in enumerate(kappa):
            if ki:
                scores[i] += ki / k * value
    residual = float(scores.sum() - (p(x) - p(baseline)))
    return AttributionResult(scores, "exact_ig", f"explicit {baseline.tolist()}", residual)


def exact_taylor_terms(
    p: Polynomial,
    x: Sequence[float],
    baseline: Sequence[float],
    anchor_mode: AnchorMode | str = AnchorMode.AT_BASELINE,
    order: int | None = None,
) -> TaylorDecomposition:
    """Every Taylor term of ``p`` between ``x`` and ``baseline``.

    With ``order`` below the degree the higher terms are left out and show
    up in ``epsilon``.
    """
    mode = AnchorMode(anchor_mode)
    x = np.asarray(x, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    anchor, other = (x, baseline) if mode is AnchorMode.AT_INPUT else (baseline, x)
    delta = other - anchor
    q = p.shift(anchor)
    top = p.degree if order is None else order
    terms: dict[MultiIndex, float] = {}
    for kappa, c in q.terms.items():
        if 1 <= sum(kappa) <= top:
            terms[kappa] = c * math.prod(d**e for d, e in zip(delta, kappa))
    return TaylorDecomposition(mode, delta, terms, f_diff=float(p(x) - p(baseline)), order=max(top, 1))
