"""Taylor attribution framework.

Splits ``f(x) - f(baseline)`` into first-order terms, high-order independent
terms and high-order interactive terms keyed by multi-index, distributes the
interactive terms over features, and measures how an attribution method
treats each kind of term.

Expansion conventions per method (each identity is exact on polynomials only
under its own anchor):

* Gradient*Input, Perturbation-1, Perturbation-patch, DeepLift, epsilon-LRP:
  expand at the input, ``delta = baseline - x``; the terms sum to
  ``f(baseline) - f(x)`` and attributions are compared after a sign flip.
* Integrated gradients: expand at the baseline, ``delta = x - baseline``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .deriv import MAX_ORDER, ModelFunction, taylor_coefficients
from .errors import ParameterError, ShapeError
from .methods import (
    PatchSpec,
    deeplift_rescale,
    gradient_x_input,
    integrated_gradients,
    perturbation_1,
    perturbation_patch,
    rescale_rule,
)
from .model import Activation, DenseLayer, Network
from .numeric import RngState
from .poly import Polynomial, exact_ig, exact_taylor_terms
from .results import AttributionResult
from .terms import AnchorMode, MultiIndex, TaylorDecomposition, support

POLY_TOL = 1e-9
SMOOTH_RTOL = 1e-4

METHOD_ANCHOR = {
    "gradient_x_input": AnchorMode.AT_INPUT,
    "perturbation_1": AnchorMode.AT_INPUT,
    "perturbation_patch": AnchorMode.AT_INPUT,
    "deeplift_rescale": AnchorMode.AT_INPUT,
    "epsilon_lrp": AnchorMode.AT_INPUT,
    "integrated_gradients": AnchorMode.AT_BASELINE,
    "exact_ig": AnchorMode.AT_BASELINE,
}


def decompose(
    f: ModelFunction,
    x: Sequence[float],
    baseline: Sequence[float],
    order: int | None = 2,
    anchor_mode: AnchorMode | str = AnchorMode.AT_BASELINE,
) -> TaylorDecomposition:
    """Taylor decomposition of ``f`` between ``x`` and ``baseline``.

    Polynomials are expanded exactly (``order=None`` keeps every term);
    other models go through :func:`taylor_coefficients` up to ``order``.
    """
    mode = AnchorMode(anchor_mode)
    x = np.asarray(x, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    if x.shape != baseline.shape or x.size != f.n_features:
        raise ShapeError(f"x {x.shape} and baseline {baseline.shape} must both have {f.n_features} entries")
    if isinstance(f, Polynomial):
        return exact_taylor_terms(f, x, baseline, mode, order)
    if order is None:
        order = MAX_ORDER
    anchor, other = (x, baseline) if mode is AnchorMode.AT_INPUT else (baseline, x)
    delta = other - anchor
    coeffs = taylor_coefficients(f, anchor, order)
    terms = {k: c * math.prod(d**e for d, e in zip(delta, k) if e) for k, c in coeffs.items()}
    return TaylorDecomposition(mode, delta, terms, f_diff=float(f(x) - f(baseline)), order=order)


# -- assignment ---------------------------------------------------------------------


@dataclass(frozen=True)
class AssignmentRule:
    """How a term's value is shared among the features in its support.

    ``equal_split`` gives each of the ``|A|`` features ``1/|A|`` (one half
    for pairwise terms); ``degree_proportional`` gives feature ``i`` the
    fraction ``k_i / |k|``.
    """

    kind: str = "degree_proportional"

    def __post_init__(self) -> None:
        if self.kind not in ("equal_split", "degree_proportional"):
            raise ParameterError(f"unknown assignment rule {self.kind!r}")

    def shares(self, kappa: MultiIndex) -> np.ndarray:
        k = np.asarray(kappa, dtype=float)
        if self.kind == "degree_proportional":
            return k / k.sum()
        s = (k > 0).astype(float)
        return s / s.sum()


EQUAL_SPLIT = AssignmentRule("equal_split")
DEGREE_PROPORTIONAL = AssignmentRule("degree_proportional")


def assign(dec: TaylorDecomposition, rule: AssignmentRule = DEGREE_PROPORTIONAL) -> AttributionResult:
    """Per-feature attribution of every term; the scores sum to ``dec.total()``."""
    scores = np.zeros(dec.n)
    for kappa, value in dec.items():
        scores += rule.shares(kappa) * value
    return AttributionResult(
        scores,
        f"taylor_{rule.kind}",
        f"{dec.anchor_mode.value}, order {dec.order}",
        float(scores.sum() - dec.total()),
    )


# -- method structure --------------------------------------------------------------------


def method_shares(
    method: str,
    dec: TaylorDecomposition,
    attribution: AttributionResult | None = None,
    patches: PatchSpec | None = None,
) -> dict[MultiIndex, np.ndarray]:
    """Fraction of each term a method hands to each feature.

    Shares are read off each method's reformulation: Gradient*Input keeps
    only first-order terms, Perturbation-1 keeps each feature's independent
    terms, Perturbation-patch gives a patch's internal terms to every feature
    of the patch, layerwise rules keep first-order terms and spread all
    higher-order mass with one fraction vector, and integrated gradients
    uses ``k_i / |k|``.
    """
    n = dec.n
    out: dict[MultiIndex, np.ndarray] = {}
    if method in ("deeplift_rescale", "epsilon_lrp"):
        fractions = _layerwise_fractions(dec, attribution)
    if method == "perturbation_patch":
        if patches is None:
            raise ParameterError("perturbation_patch structure needs the patch layout")
        owner = patches.patch_of()
    for kappa, _ in dec.items():
        s = support(kappa)
        order = sum(kappa)
        share = np.zeros(n)
        if method == "gradient_x_input":
            if order == 1:
                share[next(iter(s))] = 1.0
        elif method == "perturbation_1":
            if len(s) == 1:
                share[next(iter(s))] = 1.0
        elif method == "perturbation_patch":
            owners = {owner[i] for i in s}
            if len(owners) == 1:
                share[owner == owners.pop()] = 1.0
        elif method in ("deeplift_rescale", "epsilon_lrp"):
            if order == 1:
                share[next(iter(s))] = 1.0
            else:
                share = fractions.copy()
        elif method in ("integrated_gradients", "exact_ig"):
            share = DEGREE_PROPORTIONAL.shares(kappa)
        else:
            raise ParameterError(f"no Taylor structure known for method {method!r}")
        out[kappa] = share
    return out


def _layerwise_fractions(dec: TaylorDecomposition, attribution: AttributionResult | None) -> np.ndarray:
    if attribution is not None and "fractions" in attribution.metadata:
        return np.asarray(attribution.metadata["fractions"], dtype=float)
    if attribution is None:
        raise ParameterError("layerwise structure needs the attribution (fractions or scores)")
    high = dec.sign * dec.T
    first = dec.sign * dec.F
    if abs(high) < 1e-300:
        return np.zeros(dec.n)
    return (attribution.scores - first) / high


def structured_scores(dec: TaylorDecomposition, shares: dict[MultiIndex, np.ndarray]) -> np.ndarray:
    """Scores implied by ``shares``, oriented as ``f(x) - f(baseline)``."""
    scores = np.zeros(dec.n)
    for kappa, value in dec.items():
        scores += shares[kappa] * (dec.sign * value)
    return scores


# -- three properties ------------------------------------------------------------------


@dataclass(frozen=True)
class PropertyTolerances:
    atol: float = POLY_TOL
    rtol: float = POLY_TOL

    def bound(self, scale: float) -> float:
        return self.atol + self.rtol * scale


@dataclass
class PropertyReport:
    method: str
    approx_error: float
    approx_error_rel: float
    independent_residual: float
    interactive_residual: float
    structure_residual: float
    reference_residual: float
    tolerances: PropertyTolerances
    satisfied: tuple[bool, bool, bool]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["satisfied"] = {"property_1": self.satisfied[0], "property_2": self.satisfied[1], "property_3": self.satisfied[2]}
        return d


def check_properties(
    attribution: AttributionResult,
    dec: TaylorDecomposition,
    rule: AssignmentRule = DEGREE_PROPORTIONAL,
    tolerances: PropertyTolerances | None = None,
    patches: PatchSpec | None = None,
) -> PropertyReport:
    """Measure the three desired properties for one attribution.

    * Property 1: ``|f(x) - f(baseline) - sum(a)|``, the error of the additive
      model the attribution implies.
    * Property 2: the largest gap between what feature ``i`` receives from
      terms involving only ``i`` and ``F_i + T^ind_i``.
    * Property 3: interactive mass given to features outside the term's
      support plus interactive mass lost or duplicated inside it.

    ``dec`` must use the method's own anchor (see :data:`METHOD_ANCHOR`).
    """
    tol = tolerances or PropertyTolerances()
    if attribution.scores.size != dec.n:
        raise ShapeError(f"attribution has {attribution.scores.size} scores, decomposition {dec.n} features")
    method = attribution.method
    expected_anchor = METHOD_ANCHOR.get(method)
    if expected_anchor is not None and expected_anchor is not dec.anchor_mode:
        raise ParameterError(f"{method} is characterised at anchor {expected_anchor.value}, got {dec.anchor_mode.value}")

    a = attribution.scores
    shares = method_shares(method, dec, attribution, patches)
    scale = max([abs(dec.f_diff)] + [abs(v) for _, v in dec.items()] + [1.0])

    approx = abs(dec.f_diff - a.sum())
    approx_rel = approx / abs(dec.f_diff) if dec.f_diff != 0 else approx

    own = np.zeros(dec.n)
    target = dec.sign * (dec.F + dec.T_ind)
    interactive = 0.0
    for kappa, value in dec.items():
        v = dec.sign * value
        s = support(kappa)
        share = shares[kappa]
        if len(s) == 1:
            i = next(iter(s))
            own[i] += share[i] * v
        else:
            inside = np.zeros(dec.n, dtype=bool)
            inside[list(s)] = True
            interactive += float(np.abs(share[~inside] * v).sum()) + abs(float(share[inside].sum()) * v - v)
    independent = float(np.max(np.abs(own - target))) if dec.n else 0.0

    structure = float(np.max(np.abs(a - structured_scores(dec, shares))))
    reference = float(np.max(np.abs(a - dec.sign * assign(dec, rule).scores)))
    bound = tol.bound(scale)
    return PropertyReport(
        method=method,
        approx_error=approx,
        approx_error_rel=approx_rel,
        independent_residual=independent,
        interactive_residual=interactive,
        structure_residual=structure,
        reference_residual=reference,
        tolerances=tol,
        satisfied=(bool(approx <= bound), bool(independent <= bound), bool(interactive <= bound)),
    )


# -- reformulation identities ---------------------------------------------------------------


def ig_quadrature(p: Polynomial, x: Sequence[float], baseline: Sequence[float]) -> np.ndarray:
    """Straight-line IG by Gauss-Legendre quadrature, exact for polynomial integrands."""
    x = np.asarray(x, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    nodes, weights = np.polynomial.legendre.leggauss(max(1, (p.degree + 2) // 2 + 1))
    alphas = 0.5 * (nodes + 1.0)
    grads = p.gradient(baseline + alphas[:, None] * (x - baseline))
    return (x - baseline) * (0.5 * weights @ grads)


def polynomial_of_network(net: Network, output_index: int = 0) -> Polynomial:
    """Exact polynomial of a network built from identity and square activations."""
    n = net.input_dim
    h = [Polynomial.variable(i, n) for i in range(n)]
    for l, layer in enumerate(net.layers):
        if layer.activation not in (Activation.IDENTITY, Activation.SQUARE):
            raise ParameterError(f"layer {l}: {layer.activation.value} is not a polynomial activation")
        nxt = []
        for j in range(layer.out_dim):
            z = Polynomial.constant(float(layer.bias[j]), n)
            for i, w in enumerate(layer.weights[j]):
                if w != 0.0:
                    z = z + float(w) * h[i]
            nxt.append(z * z if layer.activation is Activation.SQUARE else z)
        h = nxt
    return h[output_index]


def verify_reformulation(
    method_id: str,
    f: Polynomial,
    x: Sequence[float],
    baseline: Sequence[float] | None = None,
    *,
    v: float = 0.0,
    patches: PatchSpec | None = None,
    net: Network | None = None,
    output_index: int = 0,
    steps: int = 100,
) -> float:
    """Max per-feature gap between a method and its Taylor reformulation on ``f``.

    Both sides are computed independently: the method by its own definition
    (forward passes, gradients, relevance propagation or path quadrature),
    the reformulation from the exact Taylor terms of ``f``.
    """
    x = np.asarray(x, dtype=float)
    n = f.n
    if x.size != n:
        raise ShapeError(f"x has {x.size} entries, polynomial {n} variables")
    baseline = np.zeros(n) if baseline is None else np.asarray(baseline, dtype=float)

    if method_id == "gradient_x_input":
        got = gradient_x_input(f, x).scores
        dec = decompose(f, x, np.zeros(n), None, AnchorMode.AT_INPUT)
        want = dec.sign * dec.F
    elif method_id == "perturbation_1":
        got = perturbation_1(f, x, v).scores
        dec = decompose(f, x, np.full(n, v), None, AnchorMode.AT_INPUT)
        want = dec.sign * (dec.F + dec.T_ind)
    elif method_id == "perturbation_patch":
        patches = patches or PatchSpec.singletons(n)
        got = perturbation_patch(f, x, patches, v).scores
        dec = decompose(f, x, np.full(n, v), None, AnchorMode.AT_INPUT)
        owner = patches.patch_of()
        per_patch = np.zeros(len(patches.patches))
        for kappa, value in dec.items():
            owners = {owner[i] for i in support(kappa)}
            if len(owners) == 1:
                per_patch[owners.pop()] += dec.sign * value
        want = per_patch[owner]
    elif method_id == "deeplift_rescale":
        if net is None or len(net.layers) != 1:
            raise ParameterError("deeplift_rescale verification needs a single-layer network")
        got = deeplift_rescale(net, x, baseline, output_index).scores
        dec = decompose(f, x, baseline, None, AnchorMode.AT_INPUT)
        w = net.layers[0].weights[output_index]
        dz = w * (x - baseline)
        fractions = dz / dz.sum()
        want = dec.sign * dec.F + fractions * (dec.sign * dec.T)
    elif method_id == "exact_ig":
        got = ig_quadrature(f, x, baseline)
        want = assign(decompose(f, x, baseline, None, AnchorMode.AT_BASELINE), DEGREE_PROPORTIONAL).scores
    elif method_id == "integrated_gradients":
        got = integrated_gradients(f, x, baseline, steps).scores
        want = assign(decompose(f, x, baseline, None, AnchorMode.AT_BASELINE), DEGREE_PROPORTIONAL).scores
    else:
        raise ParameterError(f"unsupported method id {method_id!r}")
    return float(np.max(np.abs(got - want)))


def verify_deeplift_univariate(
    outer: Sequence[float], w: Sequence[float], b: float, x: Sequence[float], baseline: Sequence[float]
) -> float:
    """DeepLift identity for one neuron ``y = q(w.x + b)`` with polynomial ``q``.

    ``outer`` holds the coefficients of ``q`` (constant first). The method side
    applies the rescale rule to the neuron; the reformulation side expands the
    composed polynomial exactly.
    """
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    baseline = np.asarray(baseline, dtype=float)
    n = w.size
    pre = Polynomial.constant(b, n)
    for i, wi in enumerate(w):
        pre = pre + float(wi) * Polynomial.variable(i, n)
    f = Polynomial.constant(0.0, n)
    for k, c in enumerate(outer):
        f = f + float(c) * pre**k
    q = np.polynomial.Polynomial(outer)
    dy = q(w @ x + b) - q(w @ baseline + b)
    got, _ = rescale_rule((w * (x - baseline))[None, :], np.array([dy]))
    dec = decompose(f, x, baseline, None, AnchorMode.AT_INPUT)
    dz = w * (x - baseline)
    want = dec.sign * dec.F + dz / dz.sum() * (dec.sign * dec.T)
    return float(np.max(np.abs(got - want)))


# -- randomized suite ----------------------------------------------------------------------


def random_polynomial(rng: RngState, n: int, max_degree: int = 4, max_terms: int = 8, coef: float = 5.0) -> Polynomial:
    """Random polynomial with at least one term of degree ``max_degree``."""
    n_terms = int(rng.integers(1, 1, max_terms + 1)[0])
    terms: dict[MultiIndex, float] = {}
    for t in range(n_terms):
        degree = max_degree if t == 0 else int(rng.integers(1, 0, max_degree + 1)[0])
        e = [0] * n
        for slot in rng.integers(degree, 0, n) if degree else []:
            e[int(slot)] += 1
        c = float(rng.uniform(1, -coef, coef)[0])
        terms[tuple(e)] = terms.get(tuple(e), 0.0) + c
    return Polynomial(terms, n)


def random_patches(rng: RngState, n: int) -> PatchSpec:
    k = int(rng.integers(1, 1, n + 1)[0])
    labels = rng.integers(n, 0, k)
    groups = [tuple(int(i) for i in np.flatnonzero(labels == j)) for j in range(k)]
    return PatchSpec(tuple(g for g in groups if g), n)


@dataclass
class SuiteConfig:
    count: int = 100
    seed: int = 2020
    max_degree: int = 4
    max_vars: int = 5
    coef: float = 5.0
    x_range: float = 3.0
    riemann_steps: tuple[int, ...] = (50, 100, 200, 400, 1000)
    riemann_rules: tuple[str, ...] = ("right", "midpoint")


@dataclass
class InstanceResult:
    index: int
    polynomial: str
    n: int
    degree: int
    residuals: dict[str, float]
    riemann_error: dict[str, dict[int, float]]
    completeness_1000: dict[str, float]


@dataclass
class SuiteReport:
    config: SuiteConfig
    instances: list[InstanceResult] = field(default_factory=list)
    seconds: float = 0.0

    PROPOSITIONS = (
        ("gradient_x_input", "Gradient*Input == F_i (baseline 0)"),
        ("perturbation_1", "Perturbation-1 == F_i + T^ind_i"),
        ("perturbation_patch", "Perturbation-patch == patch sum"),
        ("deeplift_rescale", "single-layer DeepLift == F_i + fraction*T"),
        ("exact_ig", "exact IG == k_i/k allocation"),
    )

    def max_residual(self, key: str) -> float:
        return max((r.residuals[key] for r in self.instances), default=0.0)

    def riemann_ratio_ok(self, rule: str = "right", m_hi: int = 400, m_lo: int = 100, ratio: float = 0.3) -> bool:
        return all(
            r.riemann_error[rule][m_hi] <= ratio * r.riemann_error[rule][m_lo] or r.riemann_error[rule][m_lo] <= 1e-12
            for r in self.instances
        )

    def worst_completeness(self, rule: str = "right") -> float:
        return max((abs(r.completeness_1000[rule]) for r in self.instances), default=0.0)

    def passed(self, tol: float = POLY_TOL) -> bool:
        return all(self.max_residual(k) <= tol for k, _ in self.PROPOSITIONS)

    def table(self, tol: float = POLY_TOL) -> str:
        lines = [f"{'identity':<28} {'max residual':>14}  status  claim"]
        for key, claim in self.PROPOSITIONS:
            res = self.max_residual(key)
            lines.append(f"{key:<28} {res:>14.3e}  {'PASS' if res <= tol else 'FAIL':<6}  {claim}")
        for rule in self.config.riemann_rules:
            ok = self.riemann_ratio_ok(rule)
            lines.append(f"{'riemann_convergence_' + rule:<28} {'':>14}  {'PASS' if ok else 'FAIL':<6}  err(m=400) <= 0.3 err(m=100)")
            worst = self.worst_completeness(rule)
            status = "PASS" if worst <= 1e-3 else ("INFO" if rule == "right" else "FAIL")
            lines.append(f"{'ig_completeness_' + rule:<28} {worst:>14.3e}  {status:<6}  |sum a - df| at m=1000")
        lines.append(f"{len(self.instances)} instances in {self.seconds:.2f}s")
        return "\n".join(lines)

    def to_dict(self, tol: float = POLY_TOL) -> dict:
        return {
            "config": asdict(self.config),
            "tolerance": tol,
            "seconds": self.seconds,
            "summary": {k: {"max_residual": self.max_residual(k), "pass": self.max_residual(k) <= tol} for k, _ in self.PROPOSITIONS},
            "riemann": {
                rule: {"ratio_ok": self.riemann_ratio_ok(rule), "worst_completeness_m1000": self.worst_completeness(rule)}
                for rule in self.config.riemann_rules
            },
            "instances": [
                {**asdict(r), "riemann_error": {rule: {str(k): v for k, v in errs.items()} for rule, errs in r.riemann_error.items()}}
                for r in self.instances
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def run_proposition_suite(config: SuiteConfig | None = None) -> SuiteReport:
    """Check every reformulation identity on seeded random polynomials."""
    cfg = config or SuiteConfig()
    rng = RngState(cfg.seed)
    report = SuiteReport(cfg)
    start = time.perf_counter()
    for idx in range(cfg.count):
        n = int(rng.integers(1, 1, cfg.max_vars + 1)[0])
        degree = int(rng.integers(1, 1, cfg.max_degree + 1)[0])
        p = random_polynomial(rng, n, degree, coef=cfg.coef)
        x = rng.uniform(n, -cfg.x_range, cfg.x_range)
        baseline = rng.uniform(n, -cfg.x_range, cfg.x_range)
        v = float(rng.uniform(1, -cfg.x_range, cfg.x_range)[0])
        patches = random_patches(rng, n)

        # single-layer DeepLift: a square-activation network and a degree<=4 outer polynomial
        w = rng.uniform(n, -2.0, 2.0)
        b = float(rng.uniform(1, -2.0, 2.0)[0])
        net = Network((DenseLayer(w[None, :], [b], Activation.SQUARE),))
        outer = rng.uniform(degree + 1, -cfg.coef, cfg.coef)
        if abs(w @ (x - baseline)) < 1e-6:
            baseline = baseline + 0.5
        layerwise = max(
            verify_reformulation("deeplift_rescale", polynomial_of_network(net), x, baseline, net=net),
            verify_deeplift_univariate(outer, w, b, x, baseline),
        )

        residuals = {
            "gradient_x_input": verify_reformulation("gradient_x_input", p, x),
            "perturbation_1": verify_reformulation("perturbation_1", p, x, v=v),
            "perturbation_patch": verify_reformulation("perturbation_patch", p, x, v=v, patches=patches),
            "deeplift_rescale": layerwise,
            "exact_ig": max(
                verify_reformulation("exact_ig", p, x, baseline),
                float(np.max(np.abs(exact_ig(p, x, baseline).scores - ig_quadrature(p, x, baseline)))),
            ),
        }
        exact = exact_ig(p, x, baseline).scores
        riemann: dict[str, dict[int, float]] = {}
        completeness: dict[str, float] = {}
        for rule in cfg.riemann_rules:
            riemann[rule] = {}
            for m in cfg.riemann_steps:
                res = integrated_gradients(p, x, baseline, m, rule)
                riemann[rule][m] = float(np.max(np.abs(res.scores - exact)))
                if m == 1000:
                    completeness[rule] = float(res.completeness_residual)
        report.instances.append(
            InstanceResult(idx, str(p), n, p.degree, residuals, riemann, completeness)
        )
    report.seconds = time.perf_counter() - start
    return report
