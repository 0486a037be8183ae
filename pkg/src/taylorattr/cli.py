"""Command-line interface: ``taylorattr {attribute,verify,eval,gen-data,train,export}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import evaluation
from .methods import METHOD_NAMES, DEFAULT_NUM_BASELINES, DEFAULT_SIGMA, BaselineSpec, MethodConfig, PatchSpec, run_method
from .model import NetworkFunction, load_model, save_model
from .poly import Polynomial
from .results import AttributionResult
from .taylor import POLY_TOL, SuiteConfig, run_proposition_suite

log = logging.getLogger("taylorattr")


class CliError(Exception):
    """Runtime failure reported with exit code 1."""


def _read_vector(spec: str) -> tuple[np.ndarray, tuple[int, int] | None]:
    path = Path(spec)
    if path.suffix.lower() in (".pgm", ".pnm"):
        if not path.exists():
            raise CliError(f"input image not found: {path}")
        img = evaluation.read_pgm(path)
        return img.reshape(-1), img.shape
    if path.suffix.lower() == ".json":
        if not path.exists():
            raise CliError(f"input file not found: {path}")
        return np.asarray(json.loads(path.read_text()), dtype=float).reshape(-1), None
    try:
        return np.array([float(v) for v in spec.split(",")]), None
    except ValueError:
        raise CliError(f"cannot read input {spec!r}: expected a .pgm/.json path or comma-separated numbers") from None


def _baseline(spec: str, n: int) -> BaselineSpec:
    if spec == "zero":
        return BaselineSpec()
    try:
        return BaselineSpec("constant", value=float(spec))
    except ValueError:
        pass
    vec, _ = _read_vector(spec)
    if vec.size != n:
        raise CliError(f"baseline has {vec.size} entries, input has {n}")
    return BaselineSpec("explicit", vector=tuple(vec))


def _load_network(path: str):
    if not Path(path).exists():
        raise CliError(f"model file not found: {path}")
    return load_model(path)


def _method_config(args, n: int, shape) -> MethodConfig:
    patches = None
    if getattr(args, "patch_size", None):
        if shape is None:
            patches = PatchSpec(tuple(tuple(range(i, min(i + args.patch_size, n))) for i in range(0, n, args.patch_size)), n)
        else:
            patches = PatchSpec.grid(shape[0], shape[1], args.patch_size)
    return MethodConfig(
        baseline=_baseline(args.baseline, n) if hasattr(args, "baseline") else BaselineSpec(),
        steps=args.steps,
        rule=args.rule,
        sigma=args.sigma,
        seed=args.seed,
        num_baselines=args.num_baselines,
        epsilon=getattr(args, "epsilon", 1e-6),
        perturb_value=getattr(args, "perturb_value", 0.0),
        patches=patches,
        output_index=args.output_index,
        clip=(0.0, 255.0) if getattr(args, "clip", False) else None,
    )


def cmd_attribute(args) -> int:
    x, shape = _read_vector(args.input)
    if args.poly:
        model = Polynomial.parse(args.poly, n=x.size)
    elif args.model:
        model = NetworkFunction(_load_network(args.model), args.output_index)
    else:
        raise CliError("attribute needs --model or --poly")
    if x.size != model.n_features:
        raise CliError(f"input has {x.size} features, model expects {model.n_features}")
    result = run_method(args.method, model, x, _method_config(args, x.size, shape))
    text = result.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_verify(args) -> int:
    report = run_proposition_suite(SuiteConfig(count=args.count, seed=args.seed))
    print(report.table(args.tolerance))
    if args.json:
        Path(args.json).write_text(report.to_json() + "\n")
    ok = report.passed(args.tolerance) and report.riemann_ratio_ok("right") and report.riemann_ratio_ok("midpoint")
    return 0 if ok else 1


def cmd_eval(args) -> int:
    net = _load_network(args.model)
    if not Path(args.manifest).exists():
        raise CliError(f"manifest not found: {args.manifest}")
    records = evaluation.load_manifest(args.manifest)
    methods = {}
    for name in args.methods:
        base = name.split("@", 1)[0]
        if base != "random" and base not in METHOD_NAMES:
            raise CliError(f"unknown method {name!r}")
        methods[name] = MethodConfig(
            steps=args.steps, sigma=args.sigma, seed=args.seed, num_baselines=args.num_baselines, output_index=args.output_index
        )
    report = evaluation.evaluate_methods(records, net, methods, tuple(args.alpha), output_index=args.output_index, signed=args.signed)
    report.write(args.out_json, args.out_csv)
    print(report.table())
    return 0


def cmd_gen_data(args) -> int:
    try:
        records = evaluation.generate_synthetic_dataset(args.count, args.height, args.width, args.seed, args.out_dir)
    except OSError as exc:
        raise CliError(f"cannot write dataset to {args.out_dir}: {exc}") from None
    print(f"wrote {len(records)} images and {Path(args.out_dir) / 'manifest.jsonl'}")
    return 0


def cmd_train(args) -> int:
    records = evaluation.load_manifest(args.manifest)
    if not records:
        raise CliError("manifest is empty")
    net, acc = evaluation.train_benchmark_model(records, args.seed, args.hidden, args.epochs, args.lr)
    save_model(net, args.out)
    print(f"training accuracy {acc:.3f}; model written to {args.out}")
    return 0


def cmd_export(args) -> int:
    path = Path(args.attribution)
    if not path.exists():
        raise CliError(f"attribution file not found: {path}")
    result = AttributionResult.from_dict(json.loads(path.read_text()))
    evaluation.export_saliency(result.scores, args.height, args.width, args.out)
    print(f"saliency map written to {args.out}")
    return 0


def _add_method_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, default=50, help="Riemann steps for IG variants")
    p.add_argument("--rule", choices=("right", "midpoint"), default="right")
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA, help="std of the IG2/IG3 displacement")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-baselines", type=int, default=DEFAULT_NUM_BASELINES, help="J for IG3")
    p.add_argument("--output-index", type=int, default=0, help="explained logit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="taylorattr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attribute", help="attribute one input")
    p.add_argument("--model", help=".model.json network file")
    p.add_argument("--poly", help="polynomial literal used as the model, e.g. '3*x1 + x1^2*x2'")
    p.add_argument("--input", required=True, help=".pgm, .json vector or comma-separated numbers")
    p.add_argument("--method", required=True, choices=METHOD_NAMES)
    p.add_argument("--baseline", default="zero", help="'zero', a constant, or a .pgm/.json vector")
    p.add_argument("--epsilon", type=float, default=1e-6, help="epsilon-LRP stabilizer")
    p.add_argument("--perturb-value", type=float, default=0.0)
    p.add_argument("--patch-size", type=int, help="tile size for perturbation_patch")
    p.add_argument("--clip", action="store_true", help="clip IG2/IG3 baselines to [0, 255]")
    p.add_argument("--out", help="write JSON here instead of stdout")
    _add_method_options(p)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("verify", help="run the reformulation identity suite")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=2020)
    p.add_argument("--tolerance", type=float, default=POLY_TOL)
    p.add_argument("--json", help="write the full report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", help="bounding-box localization benchmark")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--methods", nargs="+", default=["gradient", "integrated_gradients", "ig1", "ig2", "ig3"])
    p.add_argument("--alpha", type=float, nargs="+", default=list(evaluation.ALPHA_THRESHOLDS))
    p.add_argument("--signed", action="store_true", help="rank raw scores instead of magnitudes")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    _add_method_options(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-data", help="write a synthetic localization dataset")
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the toy classifier on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export", help="write an attribution as a PGM saliency map")
    p.add_argument("--attribution", required=True, help="attribution JSON from 'attribute'")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
