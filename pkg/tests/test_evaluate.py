import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import accuracy_score, precision_recall_fscore_support

from rfgesture import gnn
from rfgesture.evaluate import (
    LOPO,
    WITHIN_SUBJECT,
    SplitSpec,
    ablate_tags,
    ablation_study,
    availability,
    compute_metrics,
    lopo_specs,
    misdetection_stats,
    run_protocol,
    split,
    sweep,
    write_confusion,
    write_table,
)
from rfgesture.pipeline import PipelineConfig, process_dataset
from rfgesture.synth import PRESETS, DropoutConfig, generate_dataset

# ---------------------------------------------------------------- metrics


def test_perfect_predictions():
    y = np.arange(1, 22).repeat(2)
    m = compute_metrics(y, y)
    assert m.accuracy == 1.0 and m.macro_f1 == 1.0
    assert (m.confusion == np.diag(np.diag(m.confusion))).all()


def test_two_class_toy():
    m = compute_metrics([1, 2, 2, 2], [1, 1, 2, 2], n_classes=2)
    assert m.accuracy == 0.75
    assert m.recall[0] == 0.5
    assert m.precision[1] == pytest.approx(2 / 3)
    assert m.confusion.tolist() == [[1, 1], [0, 2]]


def test_constant_predictor_on_balanced_labels():
    y = np.arange(1, 22).repeat(3)
    assert compute_metrics(np.full_like(y, 4), y).accuracy == pytest.approx(1 / 21)


def test_absent_class_warns_and_scores_zero():
    with pytest.warns(UserWarning, match=r"\[3\]"):
        m = compute_metrics([1, 3], [1, 2], n_classes=3)
    assert m.precision[2] == 0 and m.recall[2] == 0
    assert m.macro_recall == pytest.approx(1 / 3)


def test_metric_errors():
    with pytest.raises(ValueError):
        compute_metrics([1, 2], [1])
    with pytest.raises(ValueError):
        compute_metrics([0], [1])


@given(st.lists(st.tuples(st.integers(1, 6), st.integers(1, 6)), min_size=1, max_size=80))
def test_metrics_match_sklearn_and_identities(pairs):
    preds, labels = map(np.array, zip(*pairs))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = compute_metrics(preds, labels, n_classes=6)
        classes = sorted(set(labels) | set(preds))
        p, r, f, _ = precision_recall_fscore_support(labels, preds, labels=classes, average="macro", zero_division=0)
    assert m.accuracy == pytest.approx(accuracy_score(labels, preds))
    assert (m.macro_precision, m.macro_recall, m.macro_f1) == pytest.approx((p, r, f))
    assert m.accuracy == pytest.approx(np.trace(m.confusion) / m.confusion.sum())
    assert (m.confusion.sum(axis=1) == np.bincount(labels - 1, minlength=6)).all()
    ok = (m.precision + m.recall) > 0
    np.testing.assert_allclose(m.f1[ok], 2 * m.precision[ok] * m.recall[ok] / (m.precision + m.recall)[ok], atol=1e-9)


def test_normalized_confusion_and_tables(tmp_path):
    m = compute_metrics([1, 2, 2, 2], [1, 1, 2, 2], n_classes=3)
    np.testing.assert_allclose(m.normalized_confusion(), [[0.5, 0.5, 0], [0, 1, 0], [0, 0, 0]])
    write_confusion(tmp_path / "c.csv", tmp_path / "n.csv", m)
    assert (tmp_path / "c.csv").read_text().splitlines()[1] == "1,1,1,0"
    assert (tmp_path / "n.csv").read_text().splitlines()[1] == "1,0.500000,0.500000,0.000000"
    write_table(tmp_path / "t.csv", [{"split": "x", **m.summary()}])
    assert (tmp_path / "t.csv").read_text().splitlines()[1].startswith("x,0.75,")
    with pytest.raises(ValueError):
        write_table(tmp_path / "e.csv", [])


# ---------------------------------------------------------------- splits


class _Meta:
    def __init__(self, label, subject):
        self.label, self.subject = label, subject


def _fake(subjects, classes, reps):
    return [_Meta(c, s) for s in range(1, subjects + 1) for c in range(1, classes + 1) for _ in range(reps)]


def test_lopo_partitions():
    data = _fake(3, 4, 2)
    tests = []
    for spec in lopo_specs(data):
        tr, te = split(data, spec)
        assert set(tr).isdisjoint(te) and len(tr) + len(te) == len(data)
        assert {data[i].subject for i in te} == {spec.held_out_subject}
        tests.append(set(te))
    assert len(tests) == 3 and set().union(*tests) == set(range(len(data)))
    with pytest.raises(ValueError):
        split(data, SplitSpec(LOPO, held_out_subject=9))


def test_within_subject_stratified_counts():
    data = _fake(2, 21, 20)
    tr, te = split(data, SplitSpec(WITHIN_SUBJECT, 0.2, seed=1))
    assert set(tr).isdisjoint(te) and len(tr) + len(te) == len(data)
    counts = {}
    for i in te:
        key = (data[i].subject, data[i].label)
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 42 and set(counts.values()) == {4}
    again = split(data, SplitSpec(WITHIN_SUBJECT, 0.2, seed=1))
    assert again[1].tolist() == te.tolist()
    other = split(data, SplitSpec(WITHIN_SUBJECT, 0.2, seed=2))
    assert other[1].tolist() != te.tolist()


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec("random")
    with pytest.raises(ValueError):
        SplitSpec(LOPO)
    with pytest.raises(ValueError):
        SplitSpec(WITHIN_SUBJECT, test_fraction=1.0)


# ---------------------------------------------------------------- misdetection


def test_misdetection_rates():
    avail = np.ones((4, 8), bool)
    stats = misdetection_stats(avail)
    assert set(stats["epc"].values()) == {0.0} and set(stats["pair"].values()) == {0.0}
    avail[0, [4, 5]] = False
    avail[1, 5] = False
    stats = misdetection_stats(avail)
    assert stats["epc"][6] == 0.5 and stats["epc"][5] == 0.25
    assert stats["pair"][(5, 6)] == 0.25
    for (a, b), r in stats["pair"].items():
        assert r <= min(stats["epc"][a], stats["epc"][b])


def test_availability_matches_processing():
    samples = generate_dataset(1, 2, seed=3, classes=6)
    data = process_dataset(samples)
    assert (availability(samples) == data.available).all()
    assert misdetection_stats(samples) == misdetection_stats(data)


# ---------------------------------------------------------------- protocols

TINY_MODEL = gnn.ModelConfig(hidden_dim=4, layer_count=1)
TINY_TRAIN = gnn.TrainConfig(epochs=1, batch_size=16, learning_rate=0.01)


@pytest.fixture(scope="module")
def tiny_samples():
    return generate_dataset(2, 5, seed=1)


def test_sweep_counts_and_single_point(tiny_samples):
    rows = sweep(tiny_samples, {"l_rs": [10, 20, 30, 40], "nu": [10, 20, 30]}, model=TINY_MODEL, train_cfg=TINY_TRAIN)
    assert len(rows) == 12
    assert {(r["l_rs"], r["nu"]) for r in rows} == {(l, n) for l in (10, 20, 30, 40) for n in (10, 20, 30)}
    assert all(0 <= r["accuracy"] <= 1 for r in rows)
    (one,) = sweep(tiny_samples, {"nu": [10]}, model=TINY_MODEL, train_cfg=TINY_TRAIN)
    direct = run_protocol(process_dataset(tiny_samples), pipe=PipelineConfig(nu=10), model=TINY_MODEL, train_cfg=TINY_TRAIN)
    assert one["accuracy"] == direct.metrics.accuracy and one["macro_f1"] == direct.metrics.macro_f1
    with pytest.raises(ValueError):
        sweep(tiny_samples, {"sigma": [1]})


def test_ablation_baseline_and_errors(tiny_samples):
    rows = ablation_study(tiny_samples, [(4, 8)], model=TINY_MODEL, train_cfg=TINY_TRAIN)
    assert [r["removed"] for r in rows] == ["none", "4 8"]
    empty = ablate_tags(tiny_samples, (), model=TINY_MODEL, train_cfg=TINY_TRAIN)
    assert empty.summary() == {k: v for k, v in rows[0].items() if k != "removed"}
    with pytest.raises(ValueError):
        ablate_tags(tiny_samples, range(1, 9), model=TINY_MODEL, train_cfg=TINY_TRAIN)


def test_protocol_is_deterministic(tiny_samples):
    data = process_dataset(tiny_samples)
    a = run_protocol(data, model=TINY_MODEL, train_cfg=TINY_TRAIN)
    b = run_protocol(process_dataset(tiny_samples), model=TINY_MODEL, train_cfg=TINY_TRAIN)
    assert a.metrics.summary() == b.metrics.summary()
    assert gnn.checkpoint_bytes(a.params) == gnn.checkpoint_bytes(b.params)


@pytest.mark.slow
def test_removing_a_motionless_tag_changes_little():
    # control experiment: EPC 8 does not move, so dropping it should stay
    # within sampling noise; single runs swing by ~0.1, hence three seeds
    traj, ch = PRESETS["separable"]
    weight = list(traj.tag_weight)
    weight[7] = 0.0
    nuisance = list(traj.nuisance_m)
    nuisance[7] = 0.0
    traj = replace(traj, tag_weight=tuple(weight), nuisance_m=tuple(nuisance), n_classes=6)
    samples = generate_dataset(3, 20, traj, ch, DropoutConfig(), seed=4)
    spec = SplitSpec(WITHIN_SUBJECT, 0.2, seed=4)
    model = gnn.ModelConfig(hidden_dim=16)
    base, without = [], []
    for seed in (1, 2, 3):
        cfg = gnn.TrainConfig(epochs=60, learning_rate=0.01, optimizer="adam", lr_schedule="cosine", seed=seed)
        base.append(ablate_tags(samples, (), spec, model=model, train_cfg=cfg).accuracy)
        without.append(ablate_tags(samples, (8,), spec, model=model, train_cfg=cfg).accuracy)
    n_test = 72
    var = sum(p * (1 - p) / n_test for p in base + without) / len(base) ** 2
    assert abs(np.mean(without) - np.mean(base)) <= 2 * np.sqrt(var)
