import numpy as np
import pytest

from seasonvpc import (
    FusedResult,
    GlobalCandidate,
    MappedImage,
    Prediction,
    TrainingSet,
    Viewpoint,
    fuse,
    partition_by_location,
    top_x,
)

from conftest import line_training_set


def _partition(n=3):
    train = line_training_set(n, spacing=100.0)  # one class per image
    return partition_by_location(train, 50.0)


def _cand(slot, cid, prob, x=0.0):
    return GlobalCandidate(source_classifier=slot, class_id=cid, probability=prob,
                           location=Viewpoint(x, 0.0))


def test_top_x_sorts_by_probability():
    part = _partition(3)
    pred = Prediction(probs=np.array([0.1, 0.7, 0.2]))
    out = top_x(pred, part, 2)
    assert [c.class_id for c in out] == [1, 2]
    assert [c.probability for c in out] == [0.7, 0.2]
    assert out[0].location == part.classes[1].representative


def test_top_x_with_x_at_least_k_returns_all():
    part = _partition(3)
    pred = Prediction(probs=np.array([0.5, 0.2, 0.3]))
    out = top_x(pred, part, 10)
    assert [c.class_id for c in out] == [0, 2, 1]


def test_top_x_tie_breaks_to_lower_class_id():
    part = _partition(4)
    pred = Prediction(probs=np.array([0.25, 0.25, 0.25, 0.25]))
    out = top_x(pred, part, 4)
    assert [c.class_id for c in out] == [0, 1, 2, 3]


def test_top_x_validates_sizes():
    part = _partition(3)
    with pytest.raises(ValueError):
        top_x(Prediction(probs=np.array([0.5, 0.5])), part, 1)
    with pytest.raises(ValueError):
        top_x(Prediction(probs=np.array([1 / 3] * 3)), part, 0)


def test_fuse_single_classifier_is_identity():
    part = _partition(3)
    pred = Prediction(probs=np.array([0.6, 0.1, 0.3]))
    lst = top_x(pred, part, 3, slot=0)
    fused = fuse([lst], 3)
    assert list(fused.ranked) == lst


def test_fuse_hand_merge():
    a = [_cand(0, 0, 0.9)]
    b = [_cand(1, 0, 0.8), _cand(1, 1, 0.7)]
    fused = fuse([a, b], 2)
    assert [(c.source_classifier, c.class_id, c.probability) for c in fused.ranked] == [
        (0, 0, 0.9), (1, 0, 0.8),
    ]


def test_fuse_keeps_duplicates():
    a = [_cand(0, 2, 0.5, x=7.0)]
    b = [_cand(1, 4, 0.5, x=7.0)]  # same place, different classifier
    fused = fuse([a, b], 2)
    assert len(fused.ranked) == 2
    assert fused.ranked[0].source_classifier == 0  # tie: lower slot first


def test_fuse_rejects_empty():
    with pytest.raises(ValueError):
        fuse([], 3)
    with pytest.raises(ValueError):
        fuse([[], []], 3)


def test_fused_result_rejects_increasing_probabilities():
    with pytest.raises(ValueError):
        FusedResult(ranked=(_cand(0, 0, 0.2), _cand(0, 1, 0.9)))


def _random_lists(rng):
    n_classifiers = int(rng.integers(1, 5))
    lists = []
    for slot in range(n_classifiers):
        k = int(rng.integers(1, 6))
        probs = rng.dirichlet(np.ones(k))
        lists.append([
            _cand(slot, cid, float(p), x=float(rng.normal())) for cid, p in enumerate(probs)
        ])
    return lists


def test_fuse_properties_on_random_ensembles():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        lists = _random_lists(rng)
        x = int(rng.integers(1, 8))
        fused = fuse(lists, x)
        total = sum(len(l) for l in lists)
        assert len(fused.ranked) == min(x, total)
        probs = [c.probability for c in fused.ranked]
        assert all(a >= b for a, b in zip(probs, probs[1:]))


def test_fused_csv_schema():
    from seasonvpc.report import fused_csv
    fused = fuse([[_cand(0, 0, 0.9, x=1.5)], [_cand(1, 1, 0.8, x=2.5)]], 2)
    lines = fused_csv([fused]).splitlines()
    assert lines[0] == "query,rank,slot,class_id,prob,x,y,theta"
    assert lines[1].startswith("0,0,0,0,0.9,1.5,")
    assert lines[2].startswith("0,1,1,1,0.8,2.5,")


def test_fuse_invariant_under_input_order():
    rng = np.random.default_rng(1)
    for _ in range(50):
        lists = _random_lists(rng)
        x = int(rng.integers(1, 8))
        fused = fuse(lists, x)
        perm = [lists[i] for i in rng.permutation(len(lists))]
        assert fuse(perm, x) == fused  # slot ids travel with candidates
