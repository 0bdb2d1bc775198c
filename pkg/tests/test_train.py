from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import hkg.train as train_mod
from hkg.errors import ConfigError, DegenerateLabels, DomainError, NonFiniteLoss
from hkg.model import ModelConfig
from hkg.split import random_link_split
from hkg.synth import SynthConfig, generate
from hkg.tensor import Parameter
from hkg.train import (
    AdamState,
    TrainConfig,
    adam_step,
    bce_with_logits,
    evaluate_auc,
    run_repeated,
    train_model,
)

from conftest import relative_error


def auc_pair_oracle(scores, labels) -> float:
    """Brute-force pair counting: wins + half-ties over all pos/neg pairs."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = np.sum(pos[:, None] > neg[None, :]) + 0.5 * np.sum(pos[:, None] == neg[None, :])
    return float(wins / (len(pos) * len(neg)))


class TestBce:
    def test_zero_logit_positive_label(self):
        loss, _ = bce_with_logits(np.array([0.0]), np.array([1.0]))
        assert abs(loss - math.log(2.0)) < 1e-12

    def test_large_logit_no_overflow(self):
        loss, grad = bce_with_logits(np.array([100.0]), np.array([1.0]))
        assert 0.0 <= loss < 1e-8
        assert np.all(np.isfinite(grad))

    def test_negative_logit_negative_class(self):
        loss, _ = bce_with_logits(np.array([-2.0]), np.array([0.0]))
        assert abs(loss - math.log1p(math.exp(-2.0))) < 1e-12

    def test_gradient_is_sigmoid_minus_label_over_n(self):
        z = np.array([0.5, -1.5, 3.0, 0.0])
        y = np.array([1.0, 0.0, 1.0, 0.0])
        _, grad = bce_with_logits(z, y)
        sig = 1.0 / (1.0 + np.exp(-z))
        np.testing.assert_allclose(grad, (sig - y) / 4.0, rtol=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal(12)
        y = (rng.random(12) < 0.5).astype(float)
        _, grad = bce_with_logits(z, y)
        h = 1e-6
        numeric = np.zeros_like(z)
        for i in range(len(z)):
            zp, zm = z.copy(), z.copy()
            zp[i] += h
            zm[i] -= h
            numeric[i] = (bce_with_logits(zp, y)[0] - bce_with_logits(zm, y)[0]) / (2 * h)
        assert relative_error(grad, numeric) < 1e-6

    def test_rejects_nonbinary_labels(self):
        with pytest.raises(DomainError):
            bce_with_logits(np.array([0.0]), np.array([0.5]))


class TestAdam:
    def test_zero_gradient_is_identity(self):
        p = Parameter(np.full((2, 2), 3.0), "w")
        state = AdamState([p])
        adam_step([p], state, lr=0.1)
        assert np.array_equal(p.value, np.full((2, 2), 3.0))

    def test_first_step_is_signed_learning_rate(self):
        p = Parameter(np.array([[1.0]]), "w")
        p.grad[:] = 0.5
        state = AdamState([p])
        adam_step([p], state, lr=0.1)
        assert abs((1.0 - p.value[0, 0]) - 0.1) < 1e-6
        assert np.array_equal(p.grad, np.zeros((1, 1)))  # zeroed afterwards
        p.grad[:] = -2.0
        adam_step([p], state, lr=0.1)

    def test_two_fixed_steps_match_hand_trace(self):
        lr, b1, b2, eps, g = 0.1, 0.9, 0.999, 1e-8, 0.5
        p = Parameter(np.array([[1.0]]), "w")
        state = AdamState([p])
        # independent scalar re-derivation of the recurrences
        m = v = 0.0
        w = 1.0
        for t in (1, 2):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            w -= lr * m_hat / (math.sqrt(v_hat) + eps)
            p.grad[:] = g
            adam_step([p], state, lr, b1, b2, eps)
        assert abs(p.value[0, 0] - w) < 1e-14

    def test_moments_persist_across_steps(self):
        p = Parameter(np.array([[0.0]]), "w")
        state = AdamState([p])
        p.grad[:] = 1.0
        adam_step([p], state, lr=0.01)
        first = p.value[0, 0]
        # zero grad after a nonzero history still moves the parameter
        adam_step([p], state, lr=0.01)
        assert p.value[0, 0] != first


class TestAuc:
    def test_perfect_separation(self):
        assert evaluate_auc(np.array([0.9, 0.8, 0.1, 0.2]), np.array([1, 1, 0, 0])) == 1.0

    def test_all_ties(self):
        assert evaluate_auc(np.ones(6), np.array([1, 0, 1, 0, 1, 0])) == 0.5

    def test_hand_example(self):
        scores = np.array([0.1, 0.4, 0.35, 0.8])
        labels = np.array([0, 0, 1, 1])
        assert evaluate_auc(scores, labels) == 0.75
        assert auc_pair_oracle(scores, labels) == 0.75

    def test_single_class_raises(self):
        with pytest.raises(DegenerateLabels):
            evaluate_auc(np.array([0.1, 0.2]), np.array([1, 1]))

    @given(
        n=st.integers(5, 60),
        tie_prob=st.floats(0.0, 0.9),
        data_seed=st.integers(0, 10_000),
    )
    @settings(max_examples=150, deadline=None)
    def test_matches_pair_oracle_exactly(self, n, tie_prob, data_seed):
        rng = np.random.default_rng(data_seed)
        scores = rng.random(n)
        ties = rng.random(n) < tie_prob
        scores[ties] = np.round(scores[ties], 1)  # force tie groups
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        assert evaluate_auc(scores, labels) == auc_pair_oracle(scores, labels)

    @given(data_seed=st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_invariant_under_monotone_transform(self, data_seed):
        rng = np.random.default_rng(data_seed)
        scores = rng.standard_normal(40)
        labels = rng.integers(0, 2, 40)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        base = evaluate_auc(scores, labels)
        assert evaluate_auc(3.0 * scores + 7.0, labels) == base
        assert evaluate_auc(np.exp(scores), labels) == base


class TestTrainModel:
    def toy(self):
        hkg = generate(SynthConfig(students=30, seed=2, chapters_per_submodule=2, pages_per_chapter=2))
        split = random_link_split(hkg, seed=0)
        return hkg, split

    def test_loss_decreases_on_toy_graph(self):
        hkg, split = self.toy()
        for seed in range(3):
            cfg = TrainConfig(epochs=6, runs=1, seed=seed)
            _, metrics = train_model(hkg, split, ModelConfig(hidden_dim=16, out_dim=4, embed_dim=8), cfg)
            assert metrics.train_loss[-1] < metrics.train_loss[0]

    def test_determinism_bitwise(self):
        hkg, split = self.toy()
        cfg = TrainConfig(epochs=3, runs=1, seed=5)
        mcfg = ModelConfig(hidden_dim=8, out_dim=4, embed_dim=8)
        _, a = train_model(hkg, split, mcfg, cfg)
        _, b = train_model(hkg, split, mcfg, cfg)
        assert a.train_loss == b.train_loss
        assert a.train_auc == b.train_auc
        assert a.val_auc == b.val_auc
        assert (a.test_auc, a.test_accuracy) == (b.test_auc, b.test_accuracy)

    def test_small_weight_init_loss_near_log_two(self):
        hkg, split = self.toy()
        from hkg.split import MessageGraph, full_link_batch
        from hkg.model import HeteroSageModel, forward_batch

        mcfg = ModelConfig(hidden_dim=8, out_dim=4, embed_dim=8)
        mg = MessageGraph(hkg)
        model = HeteroSageModel(
            mcfg,
            {t: hkg.node_count(t) for t in hkg.features},
            {t: hkg.features[t].dim for t in hkg.features},
            mg.relations,
            0,
        )
        for p in model.parameters():
            p.value *= 0.01  # small-weight regime: logits collapse to ~0
        batch = full_link_batch(mg, split.train)
        logits, _ = forward_batch(model, batch)
        loss, _ = bce_with_logits(logits, batch.labels)
        assert abs(loss - math.log(2.0)) < 0.15

    def test_fanout_layer_mismatch_rejected(self):
        hkg, split = self.toy()
        cfg = TrainConfig(epochs=1, runs=1, fanouts=(4, 2, 2))
        with pytest.raises(ConfigError):
            train_model(hkg, split, ModelConfig(), cfg)

    def test_nonfinite_loss_aborts(self, monkeypatch):
        hkg, split = self.toy()

        def explode(model, batch):
            return np.full(len(batch.labels), np.inf), None

        monkeypatch.setattr(train_mod, "forward_batch", explode)
        with pytest.raises(NonFiniteLoss):
            train_model(hkg, split, ModelConfig(hidden_dim=4, out_dim=2, embed_dim=4),
                        TrainConfig(epochs=1, runs=1))


class TestRunRepeated:
    def test_single_run_zero_variance(self):
        hkg = generate(SynthConfig(students=25, seed=9, chapters_per_submodule=2, pages_per_chapter=2))
        cfg = TrainConfig(epochs=2, runs=1, seed=0)
        rep = run_repeated(hkg, ModelConfig(hidden_dim=8, out_dim=4, embed_dim=8), cfg)
        assert rep.test_auc_var == 0.0
        assert all(v == 0.0 for v in rep.var_val_auc)

    def test_distinct_seeds_vary(self):
        hkg = generate(SynthConfig(students=25, seed=9, chapters_per_submodule=2, pages_per_chapter=2))
        cfg = TrainConfig(epochs=2, runs=3, seed=0)
        rep = run_repeated(hkg, ModelConfig(hidden_dim=8, out_dim=4, embed_dim=8), cfg)
        assert len(rep.runs) == 3
        assert rep.test_auc_var > 0.0
        seeds = [r.seed for r in rep.runs]
        assert seeds == [0, 1, 2]

    def test_outputs_written(self, tmp_path):
        hkg = generate(SynthConfig(students=25, seed=9, chapters_per_submodule=2, pages_per_chapter=2))
        cfg = TrainConfig(epochs=2, runs=2, seed=0)
        run_repeated(hkg, ModelConfig(hidden_dim=8, out_dim=4, embed_dim=8), cfg, tmp_path)
        assert (tmp_path / "curves_run0.csv").exists()
        assert (tmp_path / "curves_run1.csv").exists()
        assert (tmp_path / "model_run0.ckpt").exists()
