"""Desk-scale localization benchmark: synthetic images, the top-n box metric, saliency export.

Images are 8-bit grayscale PGM. A manifest is line-delimited JSON with one
record ``{"image": path, "bbox": [r0, c0, r1, c1], "label": 0|1}`` per sample;
paths are relative to the manifest's directory. Boxes are inclusive-exclusive.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .methods import MethodConfig, run_method
from .model import DenseLayer, Network, NetworkFunction, save_model, train_toy_classifier, training_accuracy
from .numeric import RngState, sample_gaussian_vector

log = logging.getLogger(__name__)

ALPHA_THRESHOLDS = (0.33, 0.66)
BACKGROUND_MEAN = 30.0
BACKGROUND_STD = 10.0
OBJECT_LEVEL = 200.0


# -- PGM ----------------------------------------------------------------------------


def write_pgm(path: str | Path, pixels: np.ndarray) -> None:
    """Binary P5: ``b"P5\\n<W> <H>\\n255\\n"`` followed by H*W row-major bytes."""
    img = np.asarray(pixels)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {img.shape}")
    data = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a P5 or P2 PGM (maxval <= 255) into a float ``(H, W)`` array."""
    raw = Path(path).read_bytes()
    header: list[bytes] = []
    pos = 0
    while len(header) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        header.append(raw[start:pos])
    magic, w, h, maxval = header[0], int(header[1]), int(header[2]), int(header[3])
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    if magic == b"P5":
        body = raw[pos + 1 : pos + 1 + w * h]
        if len(body) != w * h:
            raise ValueError(f"{path}: expected {w * h} pixel bytes, found {len(body)}")
        values = np.frombuffer(body, dtype=np.uint8)
    elif magic == b"P2":
        values = np.array(raw[pos:].split()[: w * h], dtype=int)
        if values.size != w * h:
            raise ValueError(f"{path}: expected {w * h} pixel values, found {values.size}")
    else:
        raise ValueError(f"{path}: unsupported PGM magic {magic!r}")
    return values.reshape(h, w).astype(float)


# -- boxes and samples ---------------------------------------------------------------------


@dataclass(frozen=True)
class BBox:
    row0: int
    col0: int
    row1: int
    col1: int

    def validate(self, height: int, width: int) -> None:
        if not (0 <= self.row0 < self.row1 <= height and 0 <= self.col0 < self.col1 <= width):
            raise ValueError(f"bbox {self.as_list()} outside a {height}x{width} grid or empty")

    @property
    def area(self) -> int:
        return (self.row1 - self.row0) * (self.col1 - self.col0)

    def coverage(self, height: int, width: int) -> float:
        return self.area / (height * width)

    def mask(self, height: int, width: int) -> np.ndarray:
        self.validate(height, width)
        m = np.zeros((height, width), dtype=bool)
        m[self.row0 : self.row1, self.col0 : self.col1] = True
        return m.reshape(-1)

    def as_list(self) -> list[int]:
        return [self.row0, self.col0, self.row1, self.col1]


@dataclass(frozen=True)
class ManifestRecord:
    image: Path
    bbox: BBox
    label: int

    def to_json(self, root: Path) -> str:
        return json.dumps({"image": str(self.image.relative_to(root)), "bbox": self.bbox.as_list(), "label": self.label})


def load_manifest(path: str | Path) -> list[ManifestRecord]:
    path = Path(path)
    root = path.parent
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            records.append(ManifestRecord(root / doc["image"], BBox(*map(int, doc["bbox"])), int(doc["label"])))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad manifest record ({exc})") from None
    return records


def synthesize_sample(rng: RngState, height: int, width: int, label: int, max_coverage: float = 0.66) -> tuple[np.ndarray, BBox]:
    """Noise image N(30, 10^2) with a bright (~200) rectangle when ``label == 1``."""
    if height < 8 or width < 8:
        raise ValueError(f"images must be at least 8x8, got {height}x{width}")
    while True:
        bh = int(rng.integers(1, 2, height - 1)[0])
        bw = int(rng.integers(1, 2, width - 1)[0])
        if bh * bw <= max_coverage * height * width:
            break
    r0 = int(rng.integers(1, 0, height - bh + 1)[0])
    c0 = int(rng.integers(1, 0, width - bw + 1)[0])
    box = BBox(r0, c0, r0 + bh, c0 + bw)
    img = BACKGROUND_MEAN + sample_gaussian_vector(rng, BACKGROUND_STD, height * width)
    if label == 1:
        obj = OBJECT_LEVEL + sample_gaussian_vector(rng, BACKGROUND_STD, height * width)
        img = np.where(box.mask(height, width), obj, img)
    return np.clip(np.rint(img), 0, 255).reshape(height, width), box


def generate_synthetic_dataset(
    count: int, height: int, width: int, seed: int, out_dir: str | Path
) -> list[ManifestRecord]:
    """Write ``count`` PGM images plus ``manifest.jsonl``; deterministic in ``seed``.

    Labels alternate 1, 0, 1, ... so half of the samples hold an object.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = RngState(seed)
    records = []
    for i in range(count):
        label = 1 if i % 2 == 0 else 0
        img, box = synthesize_sample(rng, height, width, label)
        path = out / f"img_{i:05d}.pgm"
        write_pgm(path, img)
        records.append(ManifestRecord(path, box, label))
    (out / "manifest.jsonl").write_text("".join(r.to_json(out) + "\n" for r in records))
    return records


# -- metric ---------------------------------------------------------------------------------


def localization_accuracy(scores: np.ndarray, bbox: BBox, height: int, width: int, signed: bool = False) -> float:
    """Fraction of the top-n pixels that lie inside the box of n pixels.

    Pixels are ranked by ``|score|`` (raw score when ``signed``), ties broken
    by ascending pixel index.
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if scores.size != height * width:
        raise ValueError(f"{scores.size} scores for a {height}x{width} image")
    inside = bbox.mask(height, width)
    n = int(inside.sum())
    key = scores if signed else np.abs(scores)
    order = np.lexsort((np.arange(key.size), -key))
    return float(inside[order[:n]].sum()) / n


def template_network(bbox: BBox, height: int, width: int) -> Network:
    """Linear model whose weights are the box indicator."""
    w = bbox.mask(height, width).astype(float)[None, :]
    return Network((DenseLayer(w, [0.0]),))


def random_scores(seed: int, n: int) -> np.ndarray:
    return RngState(seed).uniform(n)


# -- evaluation -------------------------------------------------------------------------------


@dataclass
class EvalRow:
    sample_id: int
    method: str
    alpha: float
    ratio: float


@dataclass
class EvalReport:
    methods: list[str]
    alpha_thresholds: tuple[float, ...]
    manifest_size: int
    rows: list[EvalRow] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def samples_used(self) -> int:
        return len({r.sample_id for r in self.rows})

    @property
    def samples_skipped(self) -> int:
        return len(self.skipped)

    def mean_ratio(self, method: str, threshold: float) -> float | None:
        vals = [r.ratio for r in self.rows if r.method == method and r.alpha <= threshold]
        return float(np.mean(vals)) if vals else None

    def count(self, method: str, threshold: float) -> int:
        return sum(1 for r in self.rows if r.method == method and r.alpha <= threshold)

    def summary(self) -> dict:
        return {
            m: {f"alpha<={t:g}": {"mean_ratio": self.mean_ratio(m, t), "samples": self.count(m, t)} for t in self.alpha_thresholds}
            for m in self.methods
        }

    def to_dict(self) -> dict:
        return {
            "methods": self.methods,
            "alpha_thresholds": list(self.alpha_thresholds),
            "manifest_size": self.manifest_size,
            "samples_used": self.samples_used,
            "samples_skipped": self.samples_skipped,
            "skipped": self.skipped,
            "seconds": self.seconds,
            "summary": self.summary(),
        }

    def write(self, json_path: str | Path | None = None, csv_path: str | Path | None = None) -> None:
        if json_path:
            Path(json_path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")
        if csv_path:
            with open(csv_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["sample_id", "method", "alpha", "ratio"])
                for r in self.rows:
                    writer.writerow([r.sample_id, r.method, repr(r.alpha), repr(r.ratio)])

    def table(self) -> str:
        head = f"{'method':<22}" + "".join(f"{'alpha<=' + format(t, 'g'):>14}" for t in self.alpha_thresholds)
        lines = [head]
        for m in self.methods:
            cells = []
            for t in self.alpha_thresholds:
                v = self.mean_ratio(m, t)
                cells.append(f"{'-' if v is None else format(100 * v, '.1f') + '%':>14}")
            lines.append(f"{m:<22}" + "".join(cells))
        lines.append(f"used {self.samples_used}, skipped {self.samples_skipped} of {self.manifest_size}")
        return "\n".join(lines)


def evaluate_methods(
    manifest: Sequence[ManifestRecord],
    model: Network,
    methods: Mapping[str, MethodConfig],
    alpha_thresholds: Sequence[float] = ALPHA_THRESHOLDS,
    labels: Sequence[int] = (1,),
    output_index: int = 0,
    signed: bool = False,
) -> EvalReport:
    """Mean top-n localization ratio per method, bucketed by box coverage.

    Samples whose label is not in ``labels`` and samples on which any method
    fails are skipped with a reason. ``methods`` maps a report name to its
    config; the name ``random`` scores pixels with seeded uniform noise.
    """
    start = time.perf_counter()
    report = EvalReport(list(methods), tuple(alpha_thresholds), len(manifest))
    f = NetworkFunction(model, output_index)
    for sid, rec in enumerate(manifest):
        if rec.label not in labels:
            report.skipped.append({"sample_id": sid, "reason": f"label {rec.label} not evaluated"})
            continue
        try:
            img = read_pgm(rec.image)
            h, w = img.shape
            if h * w != model.input_dim:
                raise ValueError(f"image has {h * w} pixels, model expects {model.input_dim}")
            x = img.reshape(-1)
            alpha = rec.bbox.coverage(h, w)
            rows = []
            for name, cfg in methods.items():
                if name == "random":
                    scores = random_scores(cfg.seed + sid, x.size)
                else:
                    scores = run_method(_method_of(name), f, x, cfg).scores
                rows.append(EvalRow(sid, name, alpha, localization_accuracy(scores, rec.bbox, h, w, signed)))
        except Exception as exc:  # one bad sample must not sink the whole report
            log.warning("sample %d skipped: %s", sid, exc)
            report.skipped.append({"sample_id": sid, "reason": f"{type(exc).__name__}: {exc}"})
            continue
        report.rows.extend(rows)
    report.seconds = time.perf_counter() - start
    return report


def _method_of(name: str) -> str:
    # report names may carry a suffix, e.g. "ig3@J=5"
    return name.split("@", 1)[0]


def default_benchmark_methods(seed: int = 0, steps: int = 32) -> dict[str, MethodConfig]:
    """Gradient, IG and IG1-3 with black baselines and the published sigma/J."""
    return {
        "gradient": MethodConfig(),
        "gradient_x_input": MethodConfig(),
        "integrated_gradients": MethodConfig(steps=steps),
        "ig1": MethodConfig(steps=steps),
        "ig2": MethodConfig(steps=steps, seed=seed),
        "ig3": MethodConfig(steps=steps, seed=seed),
        "random": MethodConfig(seed=seed),
    }


def train_benchmark_model(
    manifest: Sequence[ManifestRecord], seed: int, hidden: int = 16, epochs: int = 30, lr: float = 0.05
) -> tuple[Network, float]:
    data = [(read_pgm(r.image).reshape(-1), r.label) for r in manifest]
    n = data[0][0].size
    net = train_toy_classifier(data, [n, hidden, 1], RngState(seed), epochs=epochs, lr=lr, input_scale=1.0 / 255.0)
    return net, training_accuracy(net, data)


def run_localization_benchmark(
    out_dir: str | Path,
    count: int = 500,
    height: int = 16,
    width: int = 16,
    seed: int = 7,
    methods: Mapping[str, MethodConfig] | None = None,
    epochs: int = 30,
) -> tuple[EvalReport, float]:
    """Generate data, train the toy classifier, evaluate; returns report and training accuracy."""
    out = Path(out_dir)
    records = generate_synthetic_dataset(count, height, width, seed, out / "data")
    net, acc = train_benchmark_model(records, seed, epochs=epochs)
    save_model(net, out / "classifier.model.json")
    report = evaluate_methods(records, net, methods or default_benchmark_methods(seed))
    report.write(out / "report.json", out / "report.csv")
    return report, acc


# -- saliency export ------------------------------------------------------------------------------


def normalize_saliency(scores: np.ndarray) -> np.ndarray:
    """Min-max scale ``|scores|`` to [0, 255]; constant input maps to all zeros."""
    mag = np.abs(np.asarray(scores, dtype=float))
    lo, hi = mag.min(), mag.max()
    if hi == lo:
        return np.zeros_like(mag)
    return 255.0 * (mag - lo) / (hi - lo)


def export_saliency(scores: np.ndarray, height: int, width: int, path: str | Path) -> np.ndarray:
    """Write the normalized saliency map as a P5 PGM and return the written bytes as an array."""
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if scores.size != height * width:
        raise ValueError(f"{scores.size} scores cannot form a {height}x{width} image")
    img = np.clip(np.rint(normalize_saliency(scores)), 0, 255).reshape(height, width)
    write_pgm(path, img)
    return img
