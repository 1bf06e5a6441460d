"""The alternating exploration/adaptation loop: per-season retraining of the
ensemble, VPC evaluation through fusion, success-ratio scoring, and the
persistent state container (models + partition metadata, never raw data)."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .classify import ModelParams, TrainConfig, fine_tune, predict, train
from .core import (
    ClassifierRecord,
    ClassSummary,
    EnsembleState,
    PartitionSummary,
    RetrainHistory,
    TrainingSet,
    Viewpoint,
    membership_labels,
    viewpoint_distance,
)
from .fusion import FusedResult, fuse, top_x
from .placedef import PartitionConfig, build_partition
from .sched import Schedule, StrategyConfig, next_schedule, st3_fusion_filter

STATE_MAGIC = b"SVPC"
STATE_VERSION = 1
_HEADER = struct.Struct("<4sIQ32s")  # magic, version, payload length, sha256

PARTITION_METHOD_CODES = {"location": 0, "location-appearance": 1, "incremental": 2}
_METHOD_BY_CODE = {v: k for k, v in PARTITION_METHOD_CODES.items()}


class StateFormatError(Exception):
    """Unreadable, tampered, or wrong-version state file."""


@dataclass(frozen=True)
class MissionConfig:
    strategy: StrategyConfig
    partition: PartitionConfig = PartitionConfig()
    train: TrainConfig = TrainConfig()
    fusion_x: int = 10
    capacity: int = 4
    error_thresholds: tuple[float, ...] = (10.0, 20.0)
    success_mode: str = "rank1"

    def __post_init__(self) -> None:
        if self.fusion_x < 1 or self.capacity < 1:
            raise ValueError("fusion_x and capacity must be >= 1")
        if not self.error_thresholds or any(t <= 0 for t in self.error_thresholds):
            raise ValueError("error thresholds must be positive")
        if self.success_mode not in ("rank1", "topx"):
            raise ValueError("success_mode must be rank1 or topx")


@dataclass(frozen=True, eq=False)
class VPCQuery:
    """A global-localization query: feature vector plus ground-truth pose."""

    feature: np.ndarray
    ground_truth: Viewpoint


def queries_from_set(test_set: TrainingSet) -> list[VPCQuery]:
    return [VPCQuery(feature=img.feature, ground_truth=img.viewpoint) for img in test_set.images]


def initial_state(capacity: int) -> EnsembleState:
    """Mission-0 ensemble: the lone base classifier, never fine-tuned."""
    base = ClassifierRecord(history=RetrainHistory(), partition=None, model=None)
    return EnsembleState(mission=0, classifiers=(base,), capacity=capacity)


def _slot_seed(cfg: TrainConfig, mission: int, slot: int) -> int:
    # Distinct deterministic stream per (mission, slot) so coincidentally
    # identical retrains still produce diverse ensemble members.
    return cfg.seed + 100 * mission + slot


def run_adaptation(state: EnsembleState, d: TrainingSet, cfg: MissionConfig) -> EnsembleState:
    """One adaptation mission: schedule, partition the new season once, then
    fine-tune (or freshly train, for base-derived slots) every slot whose new
    bit is 1. The training set itself is not retained in the result."""
    if d.season_id != state.mission + 1:
        raise ValueError(f"season {d.season_id} does not follow mission {state.mission}")
    i = state.mission + 1
    previous = Schedule(()) if state.mission == 0 else Schedule(
        tuple(c.history for c in state.classifiers)
    )
    decision = next_schedule(cfg.strategy, previous, i, cfg.capacity)
    partition = build_partition(d, cfg.partition)
    features = np.stack([img.feature for img in d.images]).astype(np.float64)
    labels = membership_labels(partition, len(d.images))
    summary = partition.summary()
    n_classes = len(partition.classes)

    records = []
    for slot, history in enumerate(decision.schedule.histories):
        old = state.classifiers[slot] if slot < len(previous.histories) else None
        if history.last_bit() == 0:
            records.append(
                ClassifierRecord(
                    history=history,
                    partition=old.partition if old else None,
                    model=old.model if old else None,
                )
            )
            continue
        slot_cfg = replace(cfg.train, seed=_slot_seed(cfg.train, i, slot))
        if old is None or old.model is None:
            model = train(features, labels, n_classes, slot_cfg)
        else:
            model = fine_tune(old.model, features, labels, n_classes, slot_cfg)
        records.append(ClassifierRecord(history=history, partition=summary, model=model))
    return EnsembleState(mission=i, classifiers=tuple(records), capacity=state.capacity)


def active_slots(state: EnsembleState, strategy: StrategyConfig) -> list[int]:
    """Slots that participate in fusion: trained ones, narrowed by the ST3
    filter when enabled (base-only slots have no partition to predict over)."""
    trained = [j for j, c in enumerate(state.classifiers) if c.model is not None]
    if strategy.kind == "ST3" and strategy.st3_filter:
        schedule = Schedule(tuple(c.history for c in state.classifiers))
        chosen = set(st3_fusion_filter(schedule, strategy.k_bar))
        filtered = [j for j in trained if j in chosen]
        if filtered:
            return filtered
    return trained


def run_vpc(state: EnsembleState, queries: Sequence[VPCQuery],
            cfg: MissionConfig) -> list[FusedResult]:
    """Classify every query through the ensemble and fuse the ranked lists.

    Pure with respect to the state; deterministic.
    """
    if state.mission < 1:
        raise ValueError("VPC needs at least one adaptation mission")
    slots = active_slots(state, cfg.strategy)
    if not slots:
        raise ValueError("no trained classifiers available for VPC")
    results = []
    for q in queries:
        lists = [
            top_x(
                predict(state.classifiers[j].model, np.asarray(q.feature, dtype=np.float64)),
                state.classifiers[j].partition,
                cfg.fusion_x,
                slot=j,
            )
            for j in slots
        ]
        results.append(fuse(lists, cfg.fusion_x))
    return results


def success_ratio(results: Sequence[FusedResult], queries: Sequence[VPCQuery],
                  error: float, mode: str = "rank1") -> float:
    """Fraction of queries whose predicted place lies within `error` meters
    of ground truth (rank-1 candidate, or any candidate for mode "topx")."""
    if not results or len(results) != len(queries):
        raise ValueError("results and queries must be non-empty and aligned")
    if mode not in ("rank1", "topx"):
        raise ValueError("mode must be rank1 or topx")
    hits = 0
    for res, q in zip(results, queries):
        cands = res.ranked[:1] if mode == "rank1" else res.ranked
        if any(viewpoint_distance(c.location, q.ground_truth) < error for c in cands):
            hits += 1
    return hits / len(results)


# --- state persistence -------------------------------------------------
#
# Fixed-width little-endian binary: the byte size depends only on structural
# counts (capacity, mission, class counts, model dimensions), never on the
# amount of data each season contained.


def _pack_viewpoint(vp: Viewpoint) -> bytes:
    return struct.pack("<3d", vp.x, vp.y, vp.theta)


def _pack_array(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _serialize(state: EnsembleState) -> bytes:
    parts = [struct.pack("<QQI", state.mission, state.capacity, len(state.classifiers))]
    for rec in state.classifiers:
        parts.append(struct.pack("<I", len(rec.history)))
        parts.append(bytes(rec.history.bits))
        if rec.model is None:
            parts.append(struct.pack("<B", 0))
        else:
            m = rec.model
            parts.append(struct.pack("<B", 1))
            parts.append(struct.pack("<III", m.feature_dim, m.hidden, m.n_classes))
            parts.extend(_pack_array(a) for a in (m.w1, m.b1, m.w2, m.b2))
            has_loss = m.final_loss is not None
            parts.append(struct.pack("<Bd", int(has_loss), m.final_loss if has_loss else 0.0))
            has_seed = m.seed is not None
            parts.append(struct.pack("<Bq", int(has_seed), m.seed if has_seed else 0))
        if rec.partition is None:
            parts.append(struct.pack("<B", 0))
        else:
            p = rec.partition
            parts.append(struct.pack("<B", 1))
            parts.append(
                struct.pack("<IBI", p.source_season, PARTITION_METHOD_CODES[p.method],
                            len(p.classes))
            )
            for cls in p.classes:
                parts.append(struct.pack("<Iqq", cls.class_id, cls.keyframe_id,
                                         cls.keyframe_timestamp))
                parts.append(_pack_viewpoint(cls.keyframe_viewpoint))
                parts.append(_pack_viewpoint(cls.representative))
                parts.append(struct.pack("<I", cls.size))
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, fmt: str):
        s = struct.Struct(fmt)
        if self.pos + s.size > len(self.blob):
            raise StateFormatError("truncated state payload")
        vals = s.unpack_from(self.blob, self.pos)
        self.pos += s.size
        return vals

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise StateFormatError("truncated state payload")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def array(self, shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.raw(8 * count), dtype="<f8").reshape(shape).copy()

    def viewpoint(self) -> Viewpoint:
        x, y, theta = self.take("<3d")
        return Viewpoint(x, y, theta)


def _deserialize(blob: bytes) -> EnsembleState:
    r = _Reader(blob)
    mission, capacity, n_records = r.take("<QQI")
    records = []
    for _ in range(n_records):
        (hist_len,) = r.take("<I")
        bits = tuple(r.raw(hist_len))
        history = RetrainHistory(bits)
        (has_model,) = r.take("<B")
        model = None
        if has_model:
            f_dim, hidden, n_classes = r.take("<III")
            w1 = r.array((hidden, f_dim))
            b1 = r.array((hidden,))
            w2 = r.array((n_classes, hidden))
            b2 = r.array((n_classes,))
            has_loss, loss = r.take("<Bd")
            has_seed, seed = r.take("<Bq")
            model = ModelParams(w1, b1, w2, b2,
                                final_loss=loss if has_loss else None,
                                seed=seed if has_seed else None)
        (has_partition,) = r.take("<B")
        partition = None
        if has_partition:
            source_season, method_code, n_classes_p = r.take("<IBI")
            if method_code not in _METHOD_BY_CODE:
                raise StateFormatError(f"unknown partition method code {method_code}")
            classes = []
            for _ in range(n_classes_p):
                class_id, kf_id, kf_ts = r.take("<Iqq")
                kf_vp = r.viewpoint()
                rep = r.viewpoint()
                (size,) = r.take("<I")
                classes.append(
                    ClassSummary(
                        class_id=class_id,
                        keyframe_id=kf_id,
                        keyframe_timestamp=kf_ts,
                        keyframe_viewpoint=kf_vp,
                        representative=rep,
                        size=size,
                    )
                )
            partition = PartitionSummary(
                classes=tuple(classes),
                source_season=source_season,
                method=_METHOD_BY_CODE[method_code],
            )
        records.append(ClassifierRecord(history=history, partition=partition, model=model))
    if r.pos != len(blob):
        raise StateFormatError("trailing bytes in state payload")
    return EnsembleState(mission=mission, classifiers=tuple(records), capacity=capacity)


def save_state(state: EnsembleState, path) -> None:
    """Write the ensemble to a checksummed, versioned binary container."""
    payload = _serialize(state)
    header = _HEADER.pack(STATE_MAGIC, STATE_VERSION, len(payload),
                          hashlib.sha256(payload).digest())
    Path(path).write_bytes(header + payload)


def load_state(path) -> EnsembleState:
    """Read a state file, verifying magic, version, length and checksum."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise StateFormatError(f"{path}: file shorter than header")
    magic, version, length, digest = _HEADER.unpack_from(blob)
    if magic != STATE_MAGIC:
        raise StateFormatError(f"{path}: bad magic {magic!r}")
    if version != STATE_VERSION:
        raise StateFormatError(f"{path}: unsupported version {version}")
    payload = blob[_HEADER.size:]
    if len(payload) != length:
        raise StateFormatError(f"{path}: payload length {len(payload)} != header {length}")
    if hashlib.sha256(payload).digest() != digest:
        raise StateFormatError(f"{path}: checksum mismatch")
    return _deserialize(payload)


def states_equal(a: EnsembleState, b: EnsembleState) -> bool:
    """Bitwise equality of two ensemble states."""
    return _serialize(a) == _serialize(b)
