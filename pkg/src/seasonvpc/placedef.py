"""Unsupervised place definition: carve one season's trajectory into place
classes by travel distance, appearance clustering, or incremental keyframe
matching."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    MappedImage,
    PlaceClass,
    PlacePartition,
    TrainingSet,
    angle_difference,
    make_place_class,
    path_length,
    viewpoint_distance,
)

PARTITION_METHODS = ("location", "location-appearance", "incremental")


@dataclass(frozen=True)
class PartitionConfig:
    method: str = "location"
    t_d: float = 18.0
    k: int | None = None  # None: ~ expected location-class count / 4
    kmeans_iters: int = 50
    seed: int = 0
    pos_max: float = 30.0
    ang_max: float = math.pi / 6.0
    feat_max: float = 0.8

    def __post_init__(self) -> None:
        if self.method not in PARTITION_METHODS:
            raise ValueError(f"unknown partition method {self.method!r}")
        if self.t_d <= 0:
            raise ValueError("t_d must be positive")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")
        if self.kmeans_iters < 1:
            raise ValueError("kmeans_iters must be >= 1")
        if min(self.pos_max, self.ang_max, self.feat_max) <= 0:
            raise ValueError("incremental thresholds must be positive")


@dataclass
class ClusterAssignment:
    """k-means output: per-point labels, centroids, and the per-iteration
    distortion trace (non-increasing by Lloyd monotonicity)."""

    labels: np.ndarray
    centroids: np.ndarray
    inertia_history: list[float] = field(default_factory=list)


def default_k(n_images: int, t_d: float) -> int:
    # Appearance clusters are coarser than places: expected location-class
    # count (images ~3 m apart) divided by 4.
    return max(1, math.ceil(n_images * 3.0 / t_d / 4.0))


def build_partition(train: TrainingSet, cfg: PartitionConfig) -> PlacePartition:
    """Dispatch to the configured place-definition strategy."""
    if cfg.method == "location":
        return partition_by_location(train, cfg.t_d)
    if cfg.method == "location-appearance":
        return partition_location_appearance(train, cfg)
    return partition_incremental(train, cfg)


def partition_by_location(train: TrainingSet, t_d: float) -> PlacePartition:
    """Split the image sequence into contiguous classes of ~t_d meters of travel.

    A class closes on the image whose arrival pushes accumulated travel to
    t_d or beyond; that image opens the next class.
    """
    if t_d <= 0:
        raise ValueError("t_d must be positive")
    if not train.images:
        raise ValueError("cannot partition an empty training set")
    groups: list[list[MappedImage]] = []
    current = [train.images[0]]
    cum = 0.0
    for img in train.images[1:]:
        cum += viewpoint_distance(current[-1].viewpoint, img.viewpoint)
        if cum >= t_d:
            groups.append(current)
            current = [img]
            cum = 0.0
        else:
            current.append(img)
    groups.append(current)
    classes = tuple(make_place_class(cid, members) for cid, members in enumerate(groups))
    return PlacePartition(classes=classes, source_season=train.season_id, method="location")


def l2_normalize(f: np.ndarray) -> np.ndarray:
    """Scale a feature vector to unit Euclidean norm."""
    v = np.asarray(f, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or not math.isfinite(norm):
        raise ValueError("cannot L2-normalize a zero or non-finite vector")
    return v / norm


def kmeans(features: np.ndarray, k: int, iters: int = 50, seed: int = 0) -> ClusterAssignment:
    """Seeded Lloyd's k-means.

    Initialization draws k distinct points uniformly without replacement;
    clusters that empty out are re-seeded with the point farthest from its
    assigned centroid. Deterministic for a given seed.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a (n, F) array")
    n = x.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} out of range for {n} points")
    rng = np.random.default_rng(seed)
    centroids = x[rng.choice(n, size=k, replace=False)].copy()

    def assign(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d2 = np.maximum(
            (x * x).sum(axis=1)[:, None] + (c * c).sum(axis=1)[None, :] - 2.0 * x @ c.T,
            0.0,
        )
        labels = np.argmin(d2, axis=1)
        return labels, d2[np.arange(n), labels]

    history: list[float] = []
    labels, dist2 = assign(centroids)
    history.append(float(dist2.sum()))
    for _ in range(iters):
        new_centroids = centroids.copy()
        for c in range(k):
            mask = labels == c
            if np.any(mask):
                new_centroids[c] = x[mask].mean(axis=0)
        empty = [c for c in range(k) if not np.any(labels == c)]
        if empty:
            order = np.argsort(-dist2, kind="stable")
            for c, point in zip(empty, order):
                new_centroids[c] = x[point]
        new_labels, dist2 = assign(new_centroids)
        history.append(float(dist2.sum()))
        centroids = new_centroids
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return ClusterAssignment(labels=labels, centroids=centroids, inertia_history=history)


def _split_by_travel(train: TrainingSet, member_ids: list[int], t_d: float) -> list[list[int]]:
    # Travel between consecutive members is measured along the full
    # trajectory, so distance skipped through other clusters still counts.
    runs: list[list[int]] = [[member_ids[0]]]
    cum = 0.0
    for prev, cur in zip(member_ids, member_ids[1:]):
        cum += path_length(train.images, prev, cur)
        if cum >= t_d:
            runs.append([cur])
            cum = 0.0
        else:
            runs[-1].append(cur)
    return runs


def partition_location_appearance(train: TrainingSet, cfg: PartitionConfig) -> PlacePartition:
    """Two-stage partition: k-means on raw features, then each cluster is
    split into sub-clusters by travel distance along the trajectory."""
    n = len(train.images)
    k = cfg.k if cfg.k is not None else default_k(n, cfg.t_d)
    feats = np.stack([img.feature for img in train.images]).astype(np.float64)
    assignment = kmeans(feats, k, iters=cfg.kmeans_iters, seed=cfg.seed)
    groups: list[list[int]] = []
    for c in range(k):
        member_ids = [int(i) for i in np.flatnonzero(assignment.labels == c)]
        if member_ids:
            groups.extend(_split_by_travel(train, member_ids, cfg.t_d))
    groups.sort(key=lambda g: g[0])
    classes = tuple(
        make_place_class(cid, [train.images[i] for i in g]) for cid, g in enumerate(groups)
    )
    return PlacePartition(
        classes=classes, source_season=train.season_id, method="location-appearance"
    )


def partition_incremental(train: TrainingSet, cfg: PartitionConfig) -> PlacePartition:
    """Online clustering against class keyframes.

    Each image joins the spatially nearest class iff position, heading and
    L2-normalized feature distance to that class's keyframe all clear the
    thresholds; otherwise it founds a new class and becomes its keyframe.
    """
    feats = [l2_normalize(img.feature) for img in train.images]
    member_groups: list[list[int]] = []
    kf_xy: list[tuple[float, float]] = []
    kf_theta: list[float] = []
    kf_feat: list[np.ndarray] = []
    for idx, img in enumerate(train.images):
        vp = img.viewpoint
        target = -1
        if member_groups:
            dists = [math.hypot(vp.x - kx, vp.y - ky) for kx, ky in kf_xy]
            nearest = int(np.argmin(dists))
            if (
                dists[nearest] < cfg.pos_max
                and angle_difference(vp.theta, kf_theta[nearest]) < cfg.ang_max
                and float(np.linalg.norm(feats[idx] - kf_feat[nearest])) < cfg.feat_max
            ):
                target = nearest
        if target >= 0:
            member_groups[target].append(idx)
        else:
            member_groups.append([idx])
            kf_xy.append((vp.x, vp.y))
            kf_theta.append(vp.theta)
            kf_feat.append(feats[idx])
    classes = tuple(
        make_place_class(cid, [train.images[i] for i in g]) for cid, g in enumerate(member_groups)
    )
    return PlacePartition(classes=classes, source_season=train.season_id, method="incremental")


def incremental_margins(train: TrainingSet, partition: PlacePartition) -> list[dict]:
    """Post-hoc insertion log for an incremental partition.

    Keyframes never move, so recomputing each member's distances against its
    class keyframe reproduces the values seen at insertion time.
    """
    rows = []
    for cls in partition.classes:
        kf = cls.keyframe
        kf_feat = l2_normalize(kf.feature)
        for m in cls.members:
            if m is kf:
                continue
            rows.append(
                {
                    "image_id": m.id,
                    "class_id": cls.class_id,
                    "pos_dist": viewpoint_distance(m.viewpoint, kf.viewpoint),
                    "ang_diff": angle_difference(m.viewpoint.theta, kf.viewpoint.theta),
                    "feat_dist": float(np.linalg.norm(l2_normalize(m.feature) - kf_feat)),
                }
            )
    return rows


def t_d_candidates(bound: float) -> list[float]:
    """The 3-meter grid of travel-distance candidates up to `bound`."""
    return [3.0 * i for i in range(1, int(bound // 3) + 1)]


def search_t_d(train: TrainingSet, candidates, scorer) -> float:
    """Pick the travel-distance quantum whose location partition scores best;
    ties go to the smallest candidate."""
    cands = sorted(candidates)
    if not cands:
        raise ValueError("empty candidate set")
    best_t, best_s = None, None
    for t in cands:
        s = scorer(partition_by_location(train, t))
        if best_s is None or s > best_s:
            best_t, best_s = t, s
    return best_t
