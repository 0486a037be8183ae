from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class AttributionResult:
    """Per-feature scores from one attribution method.

    ``completeness_residual`` is ``sum(scores) - (f(x) - f(baseline))`` for
    methods that claim completeness and ``None`` otherwise.
    """

    scores: np.ndarray
    method: str
    baseline_info: str = ""
    completeness_residual: float | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.scores = np.asarray(self.scores, dtype=float)
        if not np.all(np.isfinite(self.scores)):
            raise FloatingPointError(f"{self.method}: non-finite attribution scores")

    def to_dict(self) -> dict[str, Any]:
        doc = {
            "method": self.method,
            "scores": [float(v) for v in self.scores],
            "baseline_info": self.baseline_info,
            "completeness_residual": self.completeness_residual,
        }
        if self.metadata:
            doc["metadata"] = _jsonable(self.metadata)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "AttributionResult":
        return cls(
            scores=np.array(doc["scores"], dtype=float),
            method=doc["method"],
            baseline_info=doc.get("baseline_info", ""),
            completeness_residual=doc.get("completeness_residual"),
            metadata=doc.get("metadata", {}),
        )


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
