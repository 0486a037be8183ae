"""Attribution methods.

Every method maps a scalar model (or a :class:`~taylorattr.model.Network`
plus output index for the layerwise rules) and an input to per-feature
scores. Integrated-gradient variants average exact path gradients with a
Riemann sum; IG1/IG2/IG3 return the path-gradient average directly, which
equals the IG score divided by the displacement wherever that is nonzero and
stays finite where it is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .deriv import ModelFunction, gradient
from .errors import ParameterError, ShapeError
from .model import Network, NetworkFunction
from .numeric import RngState, sample_gaussian_vector
from .results import AttributionResult

DEFAULT_SIGMA = 0.25 * 255
DEFAULT_NUM_BASELINES = 20
DEEPLIFT_TOL = 1e-9


# -- configuration types ---------------------------------------------------------


@dataclass(frozen=True)
class BaselineSpec:
    """Reference input: ``zero``, ``constant``, ``explicit``, ``gaussian_delta`` or ``gaussian_multi``."""

    kind: str = "zero"
    value: float = 0.0
    vector: tuple[float, ...] | None = None
    sigma: float = DEFAULT_SIGMA
    seed: int = 0
    count: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "constant", "explicit", "gaussian_delta", "gaussian_multi"):
            raise ParameterError(f"unknown baseline kind {self.kind!r}")
        if self.kind == "explicit" and self.vector is None:
            raise ParameterError("explicit baseline needs a vector")
        if self.kind.startswith("gaussian") and not self.sigma > 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if self.count < 1:
            raise ParameterError(f"baseline count must be >= 1, got {self.count}")

    def resolve(self, x: np.ndarray) -> np.ndarray:
        """Baseline(s) for input ``x``; gaussian kinds return shape ``(count, n)``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "constant":
            return np.full_like(x, self.value)
        if self.kind == "explicit":
            b = np.asarray(self.vector, dtype=float)
            if b.shape != x.shape:
                raise ShapeError(f"baseline has shape {b.shape}, input {x.shape}")
            return b
        rng = RngState(self.seed)
        count = 1 if self.kind == "gaussian_delta" else self.count
        return np.stack([x - sample_gaussian_vector(rng, self.sigma, x.size) for _ in range(count)])

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant {self.value}"
        if self.kind == "explicit":
            return "explicit vector"
        if self.kind.startswith("gaussian"):
            return f"{self.kind} sigma={self.sigma} seed={self.seed} count={self.count}"
        return "zero"


@dataclass(frozen=True)
class PatchSpec:
    """Partition of feature indices into disjoint patches covering all features."""

    patches: tuple[tuple[int, ...], ...]
    n: int

    def __post_init__(self) -> None:
        patches = tuple(tuple(int(i) for i in p) for p in self.patches)
        seen: set[int] = set()
        for j, p in enumerate(patches):
            if not p:
                raise ParameterError(f"patch {j} is empty")
            for i in p:
                if i in seen:
                    raise ParameterError(f"feature {i} appears in more than one patch")
                if not 0 <= i < self.n:
                    raise ParameterError(f"feature {i} outside [0, {self.n})")
                seen.add(i)
        if len(seen) != self.n:
            missing = sorted(set(range(self.n)) - seen)
            raise ParameterError(f"patches do not cover features {missing[:10]}")
        object.__setattr__(self, "patches", patches)

    @classmethod
    def singletons(cls, n: int) -> "PatchSpec":
        return cls(tuple((i,) for i in range(n)), n)

    @classmethod
    def grid(cls, height: int, width: int, size: int) -> "PatchSpec":
        """Square ``size`` x ``size`` tiles over a row-major image (edge tiles may be smaller)."""
        patches = []
        for r0 in range(0, height, size):
            for c0 in range(0, width, size):
                patches.append(
                    tuple(r * width + c for r in range(r0, min(r0 + size, height)) for c in range(c0, min(c0 + size, width)))
                )
        return cls(tuple(patches), height * width)

    def patch_of(self) -> np.ndarray:
        owner = np.empty(self.n, dtype=int)
        for j, p in enumerate(self.patches):
            owner[list(p)] = j
        return owner


def _vec(f: ModelFunction, x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != f.n_features:
        raise ShapeError(f"expected {f.n_features} features, got shape {x.shape}")
    return x


def _f_values(f: ModelFunction, xs: np.ndarray) -> np.ndarray:
    return np.asarray(f(xs), dtype=float).reshape(xs.shape[0])


# -- gradient family ------------------------------------------------------------------


def plain_gradient(f: ModelFunction, x: Sequence[float]) -> AttributionResult:
    """Raw gradient saliency (the "Gradient" column of localization benchmarks)."""
    x = _vec(f, x)
    return AttributionResult(gradient(f, x), "gradient", "none")


def gradient_x_input(f: ModelFunction, x: Sequence[float]) -> AttributionResult:
    x = _vec(f, x)
    return AttributionResult(gradient(f, x) * x, "gradient_x_input", "zero (implicit)")


def _path_points(x: np.ndarray, baseline: np.ndarray, m: int, rule: str) -> np.ndarray:
    if m < 1:
        raise ParameterError(f"step count must be >= 1, got {m}")
    k = np.arange(1, m + 1, dtype=float)
    if rule == "right":
        alphas = k / m
    elif rule == "midpoint":
        alphas = (k - 0.5) / m
    else:
        raise ParameterError(f"unknown Riemann rule {rule!r}; use 'right' or 'midpoint'")
    return baseline + alphas[:, None] * (x - baseline)


def path_gradient_average(
    f: ModelFunction, x: np.ndarray, baseline: np.ndarray, m: int, rule: str = "right"
) -> np.ndarray:
    """``(1/m) sum_k grad f(baseline + alpha_k (x - baseline))``."""
    grads = np.asarray(f.gradient(_path_points(x, baseline, m, rule)), dtype=float)
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient on the integration path")
    return grads.sum(axis=0) / m


def integrated_gradients(
    f: ModelFunction,
    x: Sequence[float],
    baseline: Sequence[float] | None = None,
    m: int = 50,
    rule: str = "right",
) -> AttributionResult:
    x = _vec(f, x)
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=float)
    delta = x - baseline
    scores = delta * path_gradient_average(f, x, baseline, m, rule)
    residual = float(scores.sum() - (f(x) - f(baseline)))
    return AttributionResult(scores, "integrated_gradients", f"explicit, m={m}, rule={rule}", residual, {"steps": m})


def ig1(
    f: ModelFunction, x: Sequence[float], baseline: Sequence[float] | None = None, m: int = 50, rule: str = "right"
) -> AttributionResult:
    """Average path gradient per feature (IG rescaled by the displacement)."""
    x = _vec(f, x)
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=float)
    scores = path_gradient_average(f, x, baseline, m, rule)
    return AttributionResult(scores, "ig1", f"explicit, m={m}", None, {"steps": m})


def ig2(
    f: ModelFunction,
    x: Sequence[float],
    sigma: float = DEFAULT_SIGMA,
    seed: int = 0,
    m: int = 50,
    clip: tuple[float, float] | None = None,
    rule: str = "right",
) -> AttributionResult:
    """Path-gradient average from a baseline ``x - delta`` with ``delta ~ N(0, sigma^2 I)``."""
    return _gaussian_ig(f, x, sigma, seed, 1, m, clip, rule, "ig2")


def ig3(
    f: ModelFunction,
    x: Sequence[float],
    sigma: float = DEFAULT_SIGMA,
    seed: int = 0,
    J: int = DEFAULT_NUM_BASELINES,
    m: int = 50,
    clip: tuple[float, float] | None = None,
    rule: str = "right",
) -> AttributionResult:
    """Mean of ``J`` IG2 attributions whose baselines come from one seeded stream."""
    return _gaussian_ig(f, x, sigma, seed, J, m, clip, rule, "ig3")


def _gaussian_ig(f, x, sigma, seed, J, m, clip, rule, name) -> AttributionResult:
    x = _vec(f, x)
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    if J < 1:
        raise ParameterError(f"number of baselines must be >= 1, got {J}")
    rng = RngState(seed)
    per_baseline = []
    baselines = []
    for _ in range(J):
        base = x - sample_gaussian_vector(rng, sigma, x.size)
        if clip is not None:
            base = np.clip(base, *clip)
        baselines.append(base)
        per_baseline.append(path_gradient_average(f, x, base, m, rule))
    stacked = np.array(per_baseline)
    # exactly rounded sums make the result independent of baseline order
    scores = np.array([math.fsum(col) for col in stacked.T]) / J
    meta = {"sigma": sigma, "seed": seed, "steps": m, "num_baselines": J}
    if J == 1:
        meta["baseline"] = baselines[0]
    info = f"gaussian sigma={sigma} seed={seed} J={J}"
    return AttributionResult(scores, name, info, None, meta)


# -- perturbation family ------------------------------------------------------------


def perturbation_1(f: ModelFunction, x: Sequence[float], v: float = 0.0) -> AttributionResult:
    """``a_i = f(x) - f(x with x_i := v)``."""
    x = _vec(f, x)
    perturbed = np.tile(x, (x.size, 1))
    np.fill_diagonal(perturbed, v)
    scores = f(x) - _f_values(f, perturbed)
    return AttributionResult(scores, "perturbation_1", f"constant {v}")


def perturbation_patch(
    f: ModelFunction, x: Sequence[float], patches: PatchSpec, v: float | Sequence[float] = 0.0
) -> AttributionResult:
    """Every feature of patch ``p`` gets ``f(x) - f(x with p := v)``."""
    x = _vec(f, x)
    if patches.n != x.size:
        raise ShapeError(f"patch spec covers {patches.n} features, input has {x.size}")
    fill = np.broadcast_to(np.asarray(v, dtype=float), x.shape)
    perturbed = np.tile(x, (len(patches.patches), 1))
    for j, p in enumerate(patches.patches):
        perturbed[j, list(p)] = fill[list(p)]
    drops = f(x) - _f_values(f, perturbed)
    scores = drops[patches.patch_of()]
    return AttributionResult(scores, "perturbation_patch", f"constant {np.asarray(v).tolist()}", None,
                             {"num_patches": len(patches.patches)})


# -- layerwise relevance family ------------------------------------------------------------


def rescale_rule(dz: np.ndarray, relevance: np.ndarray, tol: float = DEEPLIFT_TOL) -> tuple[np.ndarray, list[int]]:
    """One DeepLift-rescale step for a layer.

    ``dz[j, i] = w_ji (h_i - h~_i)``. Neuron ``j``'s relevance is split in
    proportion to ``dz[j, :]``; when ``|sum_i dz[j, i]| < tol`` it is split
    equally among inputs with nonzero weight contribution instead. Returns the
    lower-layer relevance and the stabilized neuron indices.
    """
    denom = dz.sum(axis=1)
    shares = np.zeros_like(dz)
    fired = []
    for j in range(dz.shape[0]):
        if abs(denom[j]) < tol:
            fired.append(j)
            contributing = dz[j] != 0.0
            if not contributing.any():
                contributing[:] = True
            shares[j, contributing] = 1.0 / contributing.sum()
        else:
            shares[j] = dz[j] / denom[j]
    return relevance @ shares, fired


def deeplift_rescale(
    net: Network,
    x: Sequence[float],
    baseline: Sequence[float] | None = None,
    output_index: int = 0,
    tol: float = DEEPLIFT_TOL,
) -> AttributionResult:
    """DeepLift with the rescale rule, seeded by ``f(x) - f(baseline)`` at one output."""
    f = NetworkFunction(net, output_index)
    x = _vec(f, x)
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=float)
    tr, tr_b = net.trace(x), net.trace(baseline)
    diff = tr[-1].post[output_index] - tr_b[-1].post[output_index]
    relevance = np.zeros(net.output_dim)
    relevance[output_index] = diff
    per_layer = [relevance]
    events = []
    first_fractions = None
    for l in reversed(range(len(net.layers))):
        w = net.layers[l].weights
        dz = w * (tr[l].inputs - tr_b[l].inputs)[None, :]
        if l == 0 and len(net.layers) == 1:
            denom = dz[output_index].sum()
            first_fractions = dz[output_index] / denom if abs(denom) >= tol else None
        relevance, fired = rescale_rule(dz, relevance, tol)
        events.extend({"layer": l, "neuron": j} for j in fired)
        per_layer.append(relevance)
    meta = {
        "stabilizer_events": events,
        "layer_relevance": [r.tolist() for r in reversed(per_layer)],
    }
    if first_fractions is not None:
        meta["fractions"] = first_fractions.tolist()
    residual = float(relevance.sum() - diff)
    return AttributionResult(relevance, "deeplift_rescale", "explicit", residual, meta)


def epsilon_lrp(net: Network, x: Sequence[float], epsilon: float = 1e-6, output_index: int = 0) -> AttributionResult:
    """epsilon-LRP seeded with ``f(x)``; ``z_ji / (sum_i z_ji + b_j + eps*sign)`` shares."""
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    f = NetworkFunction(net, output_index)
    x = _vec(f, x)
    tr = net.trace(x)
    relevance = np.zeros(net.output_dim)
    relevance[output_index] = tr[-1].post[output_index]
    for l in reversed(range(len(net.layers))):
        layer = net.layers[l]
        z = layer.weights * tr[l].inputs[None, :]
        s = z.sum(axis=1) + layer.bias
        denom = s + epsilon * np.where(s >= 0, 1.0, -1.0)
        relevance = (z / denom[:, None]).T @ relevance
    return AttributionResult(relevance, "epsilon_lrp", "none", None, {"epsilon": epsilon})


# -- uniform dispatch ------------------------------------------------------------------


@dataclass
class MethodConfig:
    baseline: BaselineSpec = field(default_factory=BaselineSpec)
    steps: int = 50
    rule: str = "right"
    sigma: float = DEFAULT_SIGMA
    seed: int = 0
    num_baselines: int = DEFAULT_NUM_BASELINES
    epsilon: float = 1e-6
    perturb_value: float = 0.0
    patches: PatchSpec | None = None
    output_index: int = 0
    clip: tuple[float, float] | None = None


METHOD_NAMES = (
    "gradient",
    "gradient_x_input",
    "perturbation_1",
    "perturbation_patch",
    "deeplift_rescale",
    "epsilon_lrp",
    "integrated_gradients",
    "ig1",
    "ig2",
    "ig3",
)


def run_method(name: str, model: Network | ModelFunction, x: Sequence[float], cfg: MethodConfig | None = None) -> AttributionResult:
    """Dispatch by method name; ``model`` may be a network or any scalar model."""
    cfg = cfg or MethodConfig()
    if isinstance(model, Network):
        net: Network | None = model
        f: ModelFunction = NetworkFunction(model, cfg.output_index)
    else:
        net = model.net if isinstance(model, NetworkFunction) else None
        f = model
    x = np.asarray(x, dtype=float)

    def base() -> np.ndarray:
        b = cfg.baseline.resolve(x)
        return b[0] if b.ndim == 2 else b

    table: dict[str, Callable[[], AttributionResult]] = {
        "gradient": lambda: plain_gradient(f, x),
        "gradient_x_input": lambda: gradient_x_input(f, x),
        "perturbation_1": lambda: perturbation_1(f, x, cfg.perturb_value),
        "perturbation_patch": lambda: perturbation_patch(
            f, x, cfg.patches or PatchSpec.singletons(x.size), cfg.perturb_value
        ),
        "integrated_gradients": lambda: integrated_gradients(f, x, base(), cfg.steps, cfg.rule),
        "ig1": lambda: ig1(f, x, base(), cfg.steps, cfg.rule),
        "ig2": lambda: ig2(f, x, cfg.sigma, cfg.seed, cfg.steps, cfg.clip, cfg.rule),
        "ig3": lambda: ig3(f, x, cfg.sigma, cfg.seed, cfg.num_baselines, cfg.steps, cfg.clip, cfg.rule),
    }
    if name in ("deeplift_rescale", "epsilon_lrp"):
        if net is None:
            raise ParameterError(f"{name} needs a network model")
        oi = f.output_index if isinstance(f, NetworkFunction) else cfg.output_index
        if name == "deeplift_rescale":
            return deeplift_rescale(net, x, base(), oi)
        return epsilon_lrp(net, x, cfg.epsilon, oi)
    if name not in table:
        raise ParameterError(f"unknown method {name!r}; choose from {', '.join(METHOD_NAMES)}")
    return table[name]()
