"""Loss, optimizer, training loop, and the gradient checker itself."""

import numpy as np
import pytest

from mdbench.data import Label, Record, Scheme
from mdbench.encoder import init_model
from mdbench.tasks import TaskKind, TaskSetting
from mdbench.training import (
    GRAD_CHECK_BLOCKS,
    AdamW,
    TrainConfig,
    cross_entropy,
    finite_difference,
    fit,
    grad_check,
    log_softmax,
    vector_relative_error,
    xent_with_grad,
)


class TestTrainConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epochs": 0},
            {"batch_size": 0},
            {"learning_rate": 0.0},
            {"learning_rate": -1.0},
            {"weight_decay": -0.1},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestCrossEntropy:
    def test_log_softmax_normalized(self, rng):
        logits = rng.normal(size=(7, 4)) * 5
        logp = log_softmax(logits)
        np.testing.assert_allclose(np.exp(logp).sum(axis=1), 1.0, atol=1e-12)

    def test_log_softmax_overflow_safe(self):
        logp = log_softmax(np.array([[1e4, 0.0]]))
        assert np.isfinite(logp).all()

    def test_matches_brute_force(self, rng):
        for _ in range(20):
            n, c = int(rng.integers(1, 12)), int(rng.integers(2, 6))
            logits = rng.normal(size=(n, c)) * 3
            targets = rng.integers(0, c, size=n)
            expected = 0.0
            for i in range(n):
                probs = np.exp(logits[i]) / np.exp(logits[i]).sum()
                expected -= np.log(probs[targets[i]])
            expected /= n
            assert cross_entropy(logits, targets) == pytest.approx(expected, abs=1e-12)

    def test_ignored_rows_do_not_count(self, rng):
        logits = rng.normal(size=(4, 3))
        targets = np.array([1, -100, 2, -100])
        loss, count, dlogits = xent_with_grad(logits, targets)
        keep = cross_entropy(logits[[0, 2]], targets[[0, 2]])
        assert count == 2
        assert loss == pytest.approx(keep, abs=1e-12)
        assert (dlogits[[1, 3]] == 0.0).all()

    def test_all_ignored_is_zero(self):
        loss, count, dlogits = xent_with_grad(np.zeros((3, 2)), [-100] * 3)
        assert (loss, count) == (0.0, 0)
        assert not dlogits.any()

    def test_bad_target_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            xent_with_grad(np.zeros((2, 3)), [0, 3])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="targets"):
            xent_with_grad(np.zeros((2, 3)), [0])

    def test_gradient_against_finite_differences(self, rng):
        logits = rng.normal(size=(5, 3))
        targets = np.array([0, 2, -100, 1, 1])
        _, _, dlogits = xent_with_grad(logits, targets)

        numeric = finite_difference(
            lambda: cross_entropy(logits, targets), logits, eps=1e-5
        )
        assert vector_relative_error(dlogits, numeric) < 1e-8


class TestAdamW:
    def _reference_step(self, p, g, m, v, t, lr, wd, b1=0.9, b2=0.999, eps=1e-8):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        step = mhat / (np.sqrt(vhat) + eps)
        if p.ndim >= 2:
            step = step + wd * p
        return p - lr * step, m, v

    def test_matches_reference_trajectory(self, rng):
        params = {"w": rng.normal(size=(4, 3)), "b": rng.normal(size=3)}
        ref = {k: p.copy() for k, p in params.items()}
        state = {k: (np.zeros_like(p), np.zeros_like(p)) for k, p in params.items()}
        opt = AdamW(learning_rate=0.01, weight_decay=0.1)
        for t in range(1, 6):
            grads = {k: rng.normal(size=p.shape) for k, p in params.items()}
            opt.step(params, grads)
            for k in ref:
                m, v = state[k]
                ref[k], m, v = self._reference_step(
                    ref[k], grads[k], m, v, t, lr=0.01, wd=0.1
                )
                state[k] = (m, v)
        for k in params:
            np.testing.assert_allclose(params[k], ref[k], rtol=0, atol=1e-12)

    def test_decay_skips_vectors(self, rng):
        p = {"w": rng.normal(size=(3, 3)), "b": rng.normal(size=3)}
        zero_g = {k: np.zeros_like(t) for k, t in p.items()}
        b_before = p["b"].copy()
        w_before = p["w"].copy()
        AdamW(learning_rate=0.5, weight_decay=0.5).step(p, zero_g)
        assert np.array_equal(p["b"], b_before)  # no grad, no decay
        assert not np.array_equal(p["w"], w_before)  # decay still applies

    def test_zero_learning_rate_is_identity(self, rng):
        p = {"w": rng.normal(size=(3, 3))}
        before = p["w"].copy()
        opt = AdamW(learning_rate=0.0, weight_decay=0.01)
        for _ in range(3):
            opt.step(p, {"w": rng.normal(size=(3, 3))})
        assert np.array_equal(p["w"], before)


def _binary_task():
    return TaskKind(TaskSetting.SENTENCE_LEVEL, 2)


class TestFit:
    def test_empty_training_set_rejected(self, tiny_cfg, separable_vocab):
        model = init_model(tiny_cfg)
        with pytest.raises(ValueError, match="empty"):
            fit(model, _binary_task(), [], TrainConfig(epochs=1), separable_vocab)

    def test_uncertain_label_rejected(self, tiny_cfg):
        from mdbench.tokenization import build_vocab

        rec = Record(
            id="u1",
            words=("a", "b"),
            aspect_index=0,
            label=Label(scheme=Scheme.SCORE_LCC, value=-1),
            dataset="t",
        )
        vocab = build_vocab(["a b"], merges=0)
        model = init_model(tiny_cfg, num_classes=4)
        task = TaskKind(TaskSetting.SENTENCE_LEVEL, 4)
        with pytest.raises(ValueError, match="uncertain"):
            fit(model, task, [rec], TrainConfig(epochs=1, max_len=16), vocab)

    def test_report_is_filled(self, tiny_cfg, separable, separable_vocab):
        model = init_model(tiny_cfg)
        cfg = TrainConfig(epochs=3, batch_size=8, learning_rate=1e-3, max_len=32, seed=1)
        _, report = fit(model, _binary_task(), list(separable.records), cfg, separable_vocab)
        assert len(report.epoch_losses) == 3
        assert len(report.epoch_train_f1) == 3
        assert report.wall_seconds > 0
        assert report.param_checksum == model.checksum()
        d = report.to_dict()
        assert set(d) == {"epoch_losses", "epoch_train_f1", "wall_seconds", "param_checksum"}

    def test_loss_decreases(self, tiny_cfg, separable, separable_vocab):
        model = init_model(tiny_cfg)
        cfg = TrainConfig(epochs=8, batch_size=8, learning_rate=1e-3, max_len=32, seed=0)
        _, report = fit(model, _binary_task(), list(separable.records), cfg, separable_vocab)
        assert report.epoch_losses[-1] < report.epoch_losses[0]

    def test_same_seed_same_weights(self, tiny_cfg, separable, separable_vocab):
        cfg = TrainConfig(epochs=2, batch_size=8, learning_rate=1e-3, max_len=32, seed=7)
        runs = []
        for _ in range(2):
            model = init_model(tiny_cfg)
            _, report = fit(model, _binary_task(), list(separable.records), cfg, separable_vocab)
            runs.append(report.param_checksum)
        assert runs[0] == runs[1]

    def test_seed_changes_trajectory(self, tiny_cfg, separable, separable_vocab):
        sums = []
        for seed in (0, 1):
            cfg = TrainConfig(epochs=2, batch_size=8, learning_rate=1e-3, max_len=32, seed=seed)
            model = init_model(tiny_cfg)
            _, report = fit(model, _binary_task(), list(separable.records), cfg, separable_vocab)
            sums.append(report.param_checksum)
        assert sums[0] != sums[1]

    @pytest.mark.parametrize("setting", ["word_level", "sentence_level", "sequence_labeling"])
    def test_learns_separable_data(self, setting, separable, separable_vocab):
        from mdbench.encoder import EncoderConfig

        cfg = EncoderConfig(layers=2, heads=2, hidden=32, ff_dim=64, max_len=32,
                            vocab_size=len(separable_vocab), dropout_rate=0.0, seed=0)
        task = TaskKind.for_scheme(setting, separable.scheme)
        model = init_model(cfg, num_classes=task.num_classes)
        train_cfg = TrainConfig(
            epochs=30, batch_size=8, learning_rate=1e-3, weight_decay=0.01,
            max_len=32, seed=0,
        )
        _, report = fit(model, task, list(separable.records), train_cfg, separable_vocab)
        assert max(report.epoch_train_f1) == 1.0


class TestGradientChecker:
    def test_relative_error_on_matching_vectors(self):
        a = np.array([1.0, 2.0, 3.0])
        assert vector_relative_error(a, a) == 0.0

    def test_relative_error_on_disjoint_vectors(self):
        assert vector_relative_error(np.array([1.0, 0.0]), np.array([0.0, 1.0])) > 0.5

    def test_both_zero_is_clean(self):
        z = np.zeros(4)
        assert vector_relative_error(z, z) == 0.0

    def test_finite_difference_exact_on_quadratic(self, rng):
        x = rng.normal(size=(3, 2))
        c = rng.normal(size=(3, 2))
        numeric = finite_difference(lambda: float((c * x * x).sum()), x, eps=1e-3)
        np.testing.assert_allclose(numeric, 2 * c * x, rtol=1e-9, atol=1e-10)

    def test_finite_difference_restores_input(self, rng):
        x = rng.normal(size=(2, 2))
        before = x.copy()
        finite_difference(lambda: float((x * x).sum()), x, eps=1e-3)
        assert np.array_equal(x, before)

    def test_unknown_block_rejected(self):
        with pytest.raises(ValueError, match="unknown block"):
            grad_check("recurrent")

    @pytest.mark.parametrize("block", GRAD_CHECK_BLOCKS)
    def test_every_block_passes(self, block):
        assert grad_check(block, seed=0, eps=1e-3) < 1e-4
