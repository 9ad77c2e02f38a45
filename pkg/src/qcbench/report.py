"""Serialized record of one benchmark run."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Optional

REPORT_SCHEMA = 1


def jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays, tuples and non-finite floats into plain JSON values."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    return obj


@dataclass
class BenchmarkReport:
    benchmark: str
    spec: dict = field(default_factory=dict)
    points: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    seed: Optional[int] = None
    metadata: dict = field(default_factory=dict)  # timestamps and host info, excluded from comparisons

    def stamp(self, started: float) -> "BenchmarkReport":
        self.metadata.update({"started": started, "finished": time.time()})
        return self

    def to_dict(self) -> dict:
        return jsonable(
            {
                "schema_version": REPORT_SCHEMA,
                "benchmark": self.benchmark,
                "spec": self.spec,
                "points": self.points,
                "fits": self.fits,
                "derived": self.derived,
                "verdicts": self.verdicts,
                "errors": self.errors,
                "seed": self.seed,
                "metadata": self.metadata,
            }
        )

    def content(self) -> dict:
        """The report without its metadata block (deterministic given the seed)."""
        d = self.to_dict()
        d.pop("metadata")
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchmarkReport":
        if doc.get("schema_version", REPORT_SCHEMA) != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {doc.get('schema_version')}")
        return cls(
            benchmark=doc["benchmark"],
            spec=doc.get("spec", {}),
            points=doc.get("points", []),
            fits=doc.get("fits", {}),
            derived=doc.get("derived", {}),
            verdicts=doc.get("verdicts", {}),
            errors=doc.get("errors", {}),
            seed=doc.get("seed"),
            metadata=doc.get("metadata", {}),
        )
