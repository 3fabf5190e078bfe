"""F1 and confusion against brute force and sklearn; cross-validation laws."""

import json

import numpy as np
import pytest
from sklearn.metrics import confusion_matrix as sk_confusion
from sklearn.metrics import f1_score as sk_f1

from mdbench.data import Label, Record, Scheme
from mdbench.encoder import EncoderConfig
from mdbench.metrics import (
    ConfusionMatrix,
    CVReport,
    averaging_for,
    confusion,
    cross_validate,
    f1,
    f1_binary,
    f1_macro,
    fold_seed,
    group_by_aspect,
    render_f1_grid,
    score_records,
    summarize_reports,
)
from mdbench.tasks import TaskKind, TaskSetting
from mdbench.training import TrainConfig


def _brute_force_f1(golds, preds, positive):
    tp = sum(1 for g, p in zip(golds, preds) if g == positive and p == positive)
    fp = sum(1 for g, p in zip(golds, preds) if g != positive and p == positive)
    fn = sum(1 for g, p in zip(golds, preds) if g == positive and p != positive)
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


class TestConfusion:
    def test_counts_match_brute_force(self, rng):
        for _ in range(50):
            n, c = int(rng.integers(1, 40)), int(rng.integers(2, 5))
            golds = rng.integers(0, c, size=n).tolist()
            preds = rng.integers(0, c, size=n).tolist()
            cm = confusion(golds, preds, c)
            for g in range(c):
                for p in range(c):
                    expected = sum(1 for a, b in zip(golds, preds) if (a, b) == (g, p))
                    assert cm.counts[g][p] == expected

    def test_matches_sklearn(self, rng):
        golds = rng.integers(0, 3, size=200).tolist()
        preds = rng.integers(0, 3, size=200).tolist()
        ours = np.array(confusion(golds, preds, 3).counts)
        theirs = sk_confusion(golds, preds, labels=[0, 1, 2])
        assert np.array_equal(ours, theirs)

    def test_marginals_and_accuracy(self):
        cm = confusion([0, 0, 1, 1, 1], [0, 1, 1, 1, 0], 2)
        assert cm.support(1) == 3
        assert cm.predicted(1) == 3
        assert cm.true_positive(1) == 2
        assert cm.accuracy() == pytest.approx(3 / 5)
        assert cm.total == 5

    def test_validation(self):
        with pytest.raises(ValueError, match="golds"):
            confusion([0], [0, 1], 2)
        with pytest.raises(ValueError, match="outside"):
            confusion([0, 2], [0, 0], 2)
        with pytest.raises(ValueError, match="square"):
            ConfusionMatrix(((0, 1), (0,)))
        with pytest.raises(ValueError, match="name"):
            ConfusionMatrix(((0, 0), (0, 0)), class_names=("just_one",))

    def test_empty_input(self):
        cm = confusion([], [], 2)
        assert cm.total == 0
        assert cm.accuracy() == 0.0


class TestF1:
    def test_binary_exact_against_brute_force(self):
        # the acceptance gate repeats this at n=1000; this is the unit form
        rng = np.random.default_rng(99)
        for _ in range(200):
            n = int(rng.integers(1, 30))
            golds = rng.integers(0, 2, size=n).tolist()
            preds = rng.integers(0, 2, size=n).tolist()
            assert f1(golds, preds) == _brute_force_f1(golds, preds, 1)

    def test_binary_matches_sklearn(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 60))
            golds = rng.integers(0, 2, size=n).tolist()
            preds = rng.integers(0, 2, size=n).tolist()
            assert f1(golds, preds) == pytest.approx(
                sk_f1(golds, preds, zero_division=0), abs=1e-12
            )

    def test_macro_matches_sklearn_when_all_classes_present(self, rng):
        for _ in range(50):
            c = 4
            golds = np.concatenate([np.arange(c), rng.integers(0, c, size=40)]).tolist()
            preds = np.concatenate([np.arange(c), rng.integers(0, c, size=40)]).tolist()
            ours = f1(golds, preds, num_classes=c, average="macro")
            theirs = sk_f1(golds, preds, labels=list(range(c)), average="macro", zero_division=0)
            assert ours == pytest.approx(theirs, abs=1e-12)

    def test_absent_class_scores_zero_in_macro(self):
        # every pair lands in class 0; classes 1..3 contribute 0 each
        assert f1([0, 0], [0, 0], num_classes=4, average="macro") == pytest.approx(0.25)

    def test_degenerate_binary_is_zero(self):
        assert f1([0, 0, 0], [0, 0, 0]) == 0.0

    def test_perfect_binary(self):
        assert f1([1, 0, 1], [1, 0, 1]) == 1.0

    def test_positive_class_selectable(self):
        golds, preds = [0, 0, 1], [0, 1, 1]
        cm = confusion(golds, preds, 2)
        assert f1_binary(cm, positive=0) == _brute_force_f1(golds, preds, 0)

    def test_unknown_average_rejected(self):
        with pytest.raises(ValueError, match="average"):
            f1([0], [0], average="micro")

    def test_averaging_for(self):
        assert averaging_for(TaskKind(TaskSetting.SENTENCE_LEVEL, 2)) == "binary"
        assert averaging_for(TaskKind(TaskSetting.SENTENCE_LEVEL, 4)) == "macro"


class TestScoreRecords:
    def test_classification_pairs(self, tiny_model, separable, separable_vocab):
        task = TaskKind(TaskSetting.SENTENCE_LEVEL, 2)
        records = list(separable.records[:10])
        golds, preds, value, cm = score_records(
            tiny_model, task, records, separable_vocab, max_len=32
        )
        assert golds == [r.label.value for r in records]
        assert len(preds) == 10
        assert value == _brute_force_f1(golds, preds, 1)
        assert cm.total == 10

    def test_sequence_labeling_scores_every_word(self, tiny_model, separable, separable_vocab):
        task = TaskKind(TaskSetting.SEQUENCE_LABELING, 2)
        records = list(separable.records[:6])
        golds, preds, value, cm = score_records(
            tiny_model, task, records, separable_vocab, max_len=32
        )
        expected_pairs = sum(len(r.words) for r in records)
        assert len(golds) == len(preds) == expected_pairs == cm.total

    def test_batching_does_not_change_scores(self, tiny_model, separable, separable_vocab):
        task = TaskKind(TaskSetting.SENTENCE_LEVEL, 2)
        records = list(separable.records)
        a = score_records(tiny_model, task, records, separable_vocab, 32, batch_size=3)
        b = score_records(tiny_model, task, records, separable_vocab, 32, batch_size=64)
        assert a[:3] == b[:3]


class TestFoldSeed:
    def test_deterministic(self):
        assert fold_seed(7, 3) == fold_seed(7, 3)

    def test_distinct_across_folds(self):
        seeds = {fold_seed(0, f) for f in range(10)}
        assert len(seeds) == 10


@pytest.fixture(scope="module")
def small_cv_report(separable, separable_vocab):
    task = TaskKind(TaskSetting.SENTENCE_LEVEL, 2)
    encoder_cfg = EncoderConfig(
        layers=1, heads=2, hidden=16, ff_dim=32, max_len=32, vocab_size=8,
        dropout_rate=0.0, seed=0,
    )
    train_cfg = TrainConfig(epochs=2, batch_size=8, learning_rate=1e-3, max_len=32, seed=0)
    return cross_validate(
        separable, task, k=4, seed=0,
        train_cfg=train_cfg, encoder_cfg=encoder_cfg, vocab=separable_vocab,
    )


class TestCrossValidate:
    def test_report_shape(self, small_cv_report, separable):
        r = small_cv_report
        assert r.k == 4
        assert len(r.fold_f1) == 4
        assert sum(r.fold_sizes) == len(separable)
        assert r.mean_f1 == pytest.approx(float(np.mean(r.fold_f1)))
        assert r.std_f1 == pytest.approx(float(np.std(r.fold_f1)))
        assert r.averaging == "binary"
        assert r.task == "sentence_level"

    def test_config_echo(self, small_cv_report, separable_vocab):
        cfg = small_cv_report.config
        assert cfg["num_classes"] == 2
        assert cfg["encoder"]["vocab_size"] == len(separable_vocab)
        assert cfg["encoder"]["max_len"] == cfg["train"]["max_len"]
        assert cfg["train"]["epochs"] == 2
        assert cfg["small_classes"] == []

    def test_json_round_trip(self, small_cv_report):
        payload = json.loads(small_cv_report.to_json())
        assert payload["std_ddof"] == 0
        again = CVReport.from_dict(payload)
        assert again.fold_f1 == small_cv_report.fold_f1
        assert again.config == small_cv_report.config

    def test_deterministic_modulo_timing(self, separable, separable_vocab, small_cv_report):
        task = TaskKind(TaskSetting.SENTENCE_LEVEL, 2)
        encoder_cfg = EncoderConfig(
            layers=1, heads=2, hidden=16, ff_dim=32, max_len=32, vocab_size=8,
            dropout_rate=0.0, seed=0,
        )
        train_cfg = TrainConfig(epochs=2, batch_size=8, learning_rate=1e-3, max_len=32, seed=0)
        again = cross_validate(
            separable, task, k=4, seed=0,
            train_cfg=train_cfg, encoder_cfg=encoder_cfg, vocab=separable_vocab,
        )
        a, b = small_cv_report.to_dict(), again.to_dict()
        a.pop("timing"), b.pop("timing")
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


class TestGroupSummary:
    def test_counts_on_shaped_fixture(self):
        from mdbench.synthetic import make_group_fixture

        ds = make_group_fixture()
        summary = group_by_aspect(ds)
        assert summary.total_records == 1640
        assert summary.total_groups == 438
        assert summary.all_literal == 194
        assert summary.all_metaphorical == 11
        assert summary.mixed == 233

    def test_case_insensitive_grouping(self):
        records = [
            Record(id=f"r{i}", words=(w, "x"), aspect_index=0,
                   label=Label(scheme=Scheme.BINARY_MOH, value=v), dataset="t")
            for i, (w, v) in enumerate([("Fire", 1), ("fire", 0), ("FIRE", 1)])
        ]
        from mdbench.data import Dataset

        ds = Dataset(name="t", scheme=Scheme.BINARY_MOH, records=tuple(records))
        summary = group_by_aspect(ds)
        assert summary.total_groups == 1
        assert summary.histograms["fire"] == {1: 2, 0: 1}

    def test_to_dict_layout(self):
        from mdbench.synthetic import make_group_fixture

        d = group_by_aspect(make_group_fixture()).to_dict()
        assert d["total_groups"] == 438
        assert d["all_literal"] + d["all_metaphorical"] + d["mixed"] == 438


class TestRendering:
    def _report(self, dataset, task, mean):
        return CVReport(
            dataset=dataset, task=task, readout="cls", k=10, seed=0,
            averaging="binary", fold_f1=[mean] * 10, fold_sizes=[10] * 10,
            mean_f1=mean, std_f1=0.0, config={},
        )

    def test_summary_nesting(self):
        reports = [self._report("moh", "sentence_level", 0.75)]
        s = summarize_reports(reports)
        assert s["moh"]["sentence_level"]["mean_f1"] == 0.75

    def test_grid_cells(self):
        reports = [
            self._report("moh", "sentence_level", 0.756),
            self._report("moh", "word_level", 0.5),
            self._report("trofi", "sequence_labeling", 1.0),
        ]
        grid = render_f1_grid(reports)
        lines = grid.splitlines()
        assert lines[0].startswith("| dataset | word_level | sentence_level |")
        moh_row = next(l for l in lines if l.startswith("| moh"))
        assert "75.60" in moh_row and "50.00" in moh_row
        trofi_row = next(l for l in lines if l.startswith("| trofi"))
        assert "100.00" in trofi_row and "-" in trofi_row
