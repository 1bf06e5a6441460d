"""Shared domain types for the season-loop place classification pipeline.

Geometry is planar (x, y, heading); headings live in (-pi, pi]. Feature
vectors are numpy arrays whose dimension is fixed per dataset. All types are
immutable after construction and safe to share across concurrent readers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .classify import ModelParams

TAU = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    t = math.remainder(theta, TAU)
    if t <= -math.pi:
        t += TAU
    return t


def circular_mean(angles: Iterable[float]) -> float:
    """Mean direction of a set of angles, wrapped into (-pi, pi]."""
    s = sum(math.sin(a) for a in angles)
    c = sum(math.cos(a) for a in angles)
    return normalize_angle(math.atan2(s, c))


@dataclass(frozen=True)
class Viewpoint:
    """A planar viewing pose: position in meters, heading in radians."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError("viewpoint components must be finite")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))


def viewpoint_distance(a: Viewpoint, b: Viewpoint) -> float:
    """Euclidean distance between two viewing positions (heading ignored)."""
    return math.hypot(a.x - b.x, a.y - b.y)


def angle_difference(a: float, b: float) -> float:
    """Smallest absolute angular difference on the circle, in [0, pi]."""
    return abs(normalize_angle(a - b))


@dataclass(frozen=True, eq=False)
class MappedImage:
    """One collected image: sequence id, capture time (us), pose, feature."""

    id: int
    timestamp: int
    viewpoint: Viewpoint
    feature: np.ndarray


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """One season's ordered sequence of mapped images."""

    season_id: int
    label: str
    images: tuple[MappedImage, ...]

    def __post_init__(self) -> None:
        if self.season_id < 1:
            raise ValueError("season_id must be >= 1")
        if not self.images:
            raise ValueError("training set has no images")
        dim = self.images[0].feature.shape
        prev_ts = None
        for idx, img in enumerate(self.images):
            if img.id != idx:
                raise ValueError(f"image id {img.id} != sequence index {idx}")
            if img.feature.ndim != 1 or img.feature.shape != dim:
                raise ValueError("feature dimension differs within one dataset")
            if not np.all(np.isfinite(img.feature)):
                raise ValueError(f"non-finite feature at index {idx}")
            if prev_ts is not None and img.timestamp <= prev_ts:
                raise ValueError("timestamps must be strictly increasing")
            prev_ts = img.timestamp

    @property
    def feature_dim(self) -> int:
        return int(self.images[0].feature.shape[0])


def path_length(images: Sequence[MappedImage], start: int, end: int) -> float:
    """Travel distance along the image sequence from index start to end (inclusive)."""
    if start < 0 or end >= len(images) or start > end:
        raise ValueError(f"invalid range [{start}, {end}] for {len(images)} images")
    total = 0.0
    for i in range(start, end):
        total += viewpoint_distance(images[i].viewpoint, images[i + 1].viewpoint)
    return total


@dataclass(frozen=True)
class RetrainHistory:
    """Bit string recording, per mission, whether a classifier was fine-tuned."""

    bits: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("history bits must be 0 or 1")

    @classmethod
    def from_string(cls, s: str) -> "RetrainHistory":
        return cls(tuple(int(c) for c in s))

    def extended(self, bit: int) -> "RetrainHistory":
        return RetrainHistory(self.bits + (bit,))

    def last_bit(self) -> int:
        return self.bits[-1] if self.bits else 0

    def as_string(self) -> str:
        return "".join(str(b) for b in self.bits)

    def __len__(self) -> int:
        return len(self.bits)


def ones_count(history: "RetrainHistory | Sequence[int]") -> int:
    """Number of 1-bits in a retrain history."""
    bits = history.bits if isinstance(history, RetrainHistory) else tuple(history)
    return int(sum(bits))


@dataclass(frozen=True, eq=False)
class PlaceClass:
    """A place class: keyframe, member images, and a representative pose."""

    class_id: int
    keyframe: MappedImage
    members: tuple[MappedImage, ...]
    representative: Viewpoint


def make_place_class(class_id: int, members: Sequence[MappedImage],
                     keyframe: MappedImage | None = None) -> PlaceClass:
    """Build a place class; the representative pose is the member centroid
    with a circular-mean heading."""
    if not members:
        raise ValueError("place class needs at least one member")
    kf = members[0] if keyframe is None else keyframe
    if not any(kf is m for m in members):
        raise ValueError("keyframe must be one of the members")
    xs = [m.viewpoint.x for m in members]
    ys = [m.viewpoint.y for m in members]
    rep = Viewpoint(
        sum(xs) / len(xs),
        sum(ys) / len(ys),
        circular_mean(m.viewpoint.theta for m in members),
    )
    return PlaceClass(class_id=class_id, keyframe=kf, members=tuple(members), representative=rep)


@dataclass(frozen=True, eq=False)
class PlacePartition:
    """Assignment of one season's images to place classes (ids dense 0..K-1)."""

    classes: tuple[PlaceClass, ...]
    source_season: int
    method: str

    def __post_init__(self) -> None:
        for idx, cls in enumerate(self.classes):
            if cls.class_id != idx:
                raise ValueError("class ids must be dense 0..K-1 in order")

    def summary(self) -> "PartitionSummary":
        return PartitionSummary(
            classes=tuple(
                ClassSummary(
                    class_id=c.class_id,
                    keyframe_id=c.keyframe.id,
                    keyframe_timestamp=c.keyframe.timestamp,
                    keyframe_viewpoint=c.keyframe.viewpoint,
                    representative=c.representative,
                    size=len(c.members),
                )
                for c in self.classes
            ),
            source_season=self.source_season,
            method=self.method,
        )


@dataclass(frozen=True)
class ClassSummary:
    """Feature-free byproduct of a place class: what a classifier keeps."""

    class_id: int
    keyframe_id: int
    keyframe_timestamp: int
    keyframe_viewpoint: Viewpoint
    representative: Viewpoint
    size: int


@dataclass(frozen=True)
class PartitionSummary:
    """Feature-free partition metadata retained inside classifier records.

    Full PlacePartition objects hold member images (with feature vectors) and
    exist only while a season is being processed; only this summary survives
    into the persistent ensemble state.
    """

    classes: tuple[ClassSummary, ...]
    source_season: int
    method: str


def membership_labels(partition: PlacePartition, n_images: int) -> np.ndarray:
    """Per-image class label array; raises if any image is missing or doubly
    assigned."""
    labels = np.full(n_images, -1, dtype=np.int64)
    for cls in partition.classes:
        for m in cls.members:
            if m.id < 0 or m.id >= n_images:
                raise ValueError(f"member id {m.id} outside dataset of {n_images}")
            if labels[m.id] != -1:
                raise ValueError(f"image {m.id} assigned to more than one class")
            labels[m.id] = cls.class_id
    if np.any(labels < 0):
        missing = int(np.argmax(labels < 0))
        raise ValueError(f"image {missing} not assigned to any class")
    return labels


@dataclass(frozen=True, eq=False)
class ClassifierRecord:
    """One ensemble slot: retrain history, partition summary, model handle.

    The never-fine-tuned base slot carries no model and no partition.
    """

    history: RetrainHistory
    partition: PartitionSummary | None
    model: "ModelParams | None"

    def __post_init__(self) -> None:
        if (self.model is None) != (self.partition is None):
            raise ValueError("model and partition must be present or absent together")
        if self.model is not None and self.model.n_classes != len(self.partition.classes):
            raise ValueError("model output classes must match the partition")


@dataclass(frozen=True, eq=False)
class EnsembleState:
    """The classifier set plus mission index; the only state kept between
    seasons. Never holds past training features."""

    mission: int
    classifiers: tuple[ClassifierRecord, ...]
    capacity: int

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.mission < 0:
            raise ValueError("mission must be >= 0")
        expected = 1 if self.mission == 0 else min(self.mission, self.capacity)
        if len(self.classifiers) != expected:
            raise ValueError(
                f"expected {expected} classifiers at mission {self.mission}, "
                f"got {len(self.classifiers)}"
            )
        for rec in self.classifiers:
            if len(rec.history) != self.mission:
                raise ValueError("history length must equal the mission index")
