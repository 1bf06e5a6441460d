"""Probability-rank fusion of ensemble outputs: concatenate each classifier's
top-X classes mapped to global poses, re-rank by raw probability, truncate.
No calibration, no deduplication."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import PartitionSummary, PlacePartition, Viewpoint
from .classify import Prediction


@dataclass(frozen=True)
class GlobalCandidate:
    """One ranked place hypothesis in the global frame."""

    source_classifier: int
    class_id: int
    probability: float
    location: Viewpoint

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must be in [0, 1]")


@dataclass(frozen=True)
class FusedResult:
    """Final ranked candidate list, probabilities non-increasing."""

    ranked: tuple[GlobalCandidate, ...]

    def __post_init__(self) -> None:
        probs = [c.probability for c in self.ranked]
        if any(a < b for a, b in zip(probs, probs[1:])):
            raise ValueError("fused probabilities must be non-increasing")


def top_x(pred: Prediction, partition: "PlacePartition | PartitionSummary", x: int,
          slot: int = 0) -> list[GlobalCandidate]:
    """The x most probable classes of one classifier, annotated with their
    representative global poses. Ties go to the smaller class id."""
    if x < 1:
        raise ValueError("x must be >= 1")
    k = len(pred.probs)
    if k != len(partition.classes):
        raise ValueError(f"prediction over {k} classes != partition with {len(partition.classes)}")
    order = sorted(range(k), key=lambda c: (-float(pred.probs[c]), c))
    return [
        GlobalCandidate(
            source_classifier=slot,
            class_id=c,
            probability=float(pred.probs[c]),
            location=partition.classes[c].representative,
        )
        for c in order[:x]
    ]


def fuse(lists: Sequence[Sequence[GlobalCandidate]], x: int) -> FusedResult:
    """Merge per-classifier candidate lists by raw probability.

    Ties break to the lower slot index, then the lower class id; duplicates
    of the same place from different classifiers are kept.
    """
    if x < 1:
        raise ValueError("x must be >= 1")
    merged = [c for lst in lists for c in lst]
    if not merged:
        raise ValueError("fuse needs at least one non-empty candidate list")
    merged.sort(key=lambda c: (-c.probability, c.source_classifier, c.class_id))
    return FusedResult(ranked=tuple(merged[:x]))
