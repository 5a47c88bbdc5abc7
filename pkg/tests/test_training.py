"""Training-loop tests: loss oracles, Adam behavior, separable-data sanity,
regularizer inertness, metric identities, and seeded determinism."""

import math

import numpy as np
import pytest

from tempgate import autodiff as ad
from tempgate.attention import METHODS, TEMP_EPS, spec_for_method
from tempgate.graph import LabeledDataset, from_edges
from tempgate.training import (
    RunResult,
    TrainConfig,
    TrainingError,
    accuracy_from_logits,
    adam_step,
    cross_entropy,
    evaluate,
    gate_regularizer,
    init_adam_state,
    micro_f1_from_logits,
    train,
)


def two_clique_dataset(size=10):
    """Two complete same-class cliques with one-hot class features: linearly
    separable and perfectly homophilous, so every variant can hit 1.0."""
    n = 2 * size
    src, dst = [], []
    for block in (range(size), range(size, n)):
        for i in block:
            for j in block:
                if i != j:
                    src.append(i)
                    dst.append(j)
    labels = np.array([0] * size + [1] * size)
    feats = np.eye(2)[labels]
    train_m = np.zeros(n, bool)
    val_m = np.zeros(n, bool)
    test_m = np.zeros(n, bool)
    for base in (0, size):
        train_m[base : base + size - 2] = True
        val_m[base + size - 2] = True
        test_m[base + size - 1] = True
    return LabeledDataset(
        graph=from_edges(n, src, dst),
        features=feats,
        labels=labels,
        num_classes=2,
        train_mask=train_m,
        val_mask=val_m,
        test_mask=test_m,
    )


class TestCrossEntropy:
    def test_uniform_logits_seven_classes(self):
        logits = ad.constant(np.zeros((3, 7)))
        loss = cross_entropy(logits, np.array([0, 3, 6]), np.ones(3, bool))
        assert abs(float(loss.data) - math.log(7)) < 1e-12

    def test_confident_correct_is_tiny(self):
        logits = np.zeros((2, 4))
        logits[:, 1] = 40.0
        loss = cross_entropy(ad.constant(logits), np.array([1, 1]), np.ones(2, bool))
        assert float(loss.data) < 1e-6

    def test_matches_direct_summation_oracle(self):
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((5, 3)) * 4
        labels = rng.integers(0, 3, size=5)
        mask = np.array([True, False, True, True, False])
        ref = 0.0
        for i in np.flatnonzero(mask):
            ref -= math.log(
                math.exp(logits[i, labels[i]]) / sum(math.exp(v) for v in logits[i])
            )
        ref /= mask.sum()
        loss = cross_entropy(ad.constant(logits), labels, mask)
        assert abs(float(loss.data) - ref) < 1e-10

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError, match="empty mask"):
            cross_entropy(ad.constant(np.zeros((2, 2))), np.zeros(2, int),
                          np.zeros(2, bool))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        w = ad.param(rng.standard_normal((4, 3)))
        x = rng.standard_normal((6, 4))
        labels = rng.integers(0, 3, size=6)
        mask = np.ones(6, bool)

        def f():
            return cross_entropy(ad.matmul(ad.constant(x), w), labels, mask)

        assert ad.grad_check(f, [w]) < 1e-4


class TestGateRegularizer:
    def test_lambda_zero(self):
        g = ad.constant(np.full((3, 2), 0.7))
        assert float(gate_regularizer([g], 0.0).data) == 0.0

    def test_formula_instance(self):
        gates = [ad.constant(np.full((4, 3), 0.5)), ad.constant(np.full((2, 5), 0.5))]
        reg = gate_regularizer(gates, 1e-5)
        assert abs(float(reg.data) - 1e-5) < 1e-20

    def test_no_gates_is_exact_zero(self):
        assert float(gate_regularizer([None, None], 123.0).data) == 0.0

    def test_bias_gradient_includes_regularizer(self):
        # loss = CE + lambda * mean(g); check d/d bg against central diffs.
        rng = np.random.default_rng(2)
        ds = two_clique_dataset(4)
        spec = spec_for_method("Gated", in_dim=2, hidden_dim=3, out_dim=2,
                               heads=2, layers=1)
        from tempgate.attention import AttentionModel
        from tempgate.graph import add_self_loops

        model = AttentionModel(spec, seed=3)
        graph = add_self_loops(ds.graph)

        def f():
            logits, gates, _ = model.forward(graph, ds.features)
            return ad.add(
                cross_entropy(logits, ds.labels, ds.train_mask),
                gate_regularizer(gates, 1e-3),
            )

        assert ad.grad_check(f, model.parameters()) < 1e-4


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = ad.param(np.array([1.0, -2.0]))
        state = init_adam_state([p])
        adam_step([p], {p: np.zeros(2)}, state, lr=0.1, weight_decay=0.0, t=1)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_magnitude_is_lr(self):
        p = ad.param(np.array([5.0]))
        state = init_adam_state([p])
        adam_step([p], {p: np.array([3.7])}, state, lr=0.01, weight_decay=0.0, t=1)
        assert abs((5.0 - p.data[0]) - 0.01) < 1e-9

    def test_converges_on_quadratic(self):
        p = ad.param(np.array([0.0]))
        state = init_adam_state([p])
        for t in range(1, 501):
            grad = 2.0 * (p.data - 3.0)
            adam_step([p], {p: grad}, state, lr=0.1, weight_decay=0.0, t=t)
        assert abs(p.data[0] - 3.0) < 1e-3

    def test_state_shape_mismatch(self):
        p = ad.param(np.zeros(3))
        with pytest.raises(ValueError, match="state"):
            adam_step([p], {}, [], lr=0.1, weight_decay=0.0, t=1)


class TestTrainSeparable:
    def test_every_variant_reaches_perfect_accuracy(self):
        ds = two_clique_dataset(10)
        cfg = TrainConfig(lr=0.02, epochs=200, lambda_gate=1e-5, seed=0)
        for method in METHODS:
            spec = spec_for_method(method, in_dim=2, hidden_dim=4, out_dim=2,
                                   heads=1 if method == "GCN" else 2)
            result, model = train(spec, ds, cfg, return_model=True)
            train_acc = evaluate(model, ds, ds.train_mask, "accuracy")
            assert train_acc == 1.0, method
            assert result.test_metric == 1.0, method

    def test_temperatures_stay_above_floor(self):
        ds = two_clique_dataset(6)
        cfg = TrainConfig(lr=0.05, epochs=100, seed=1)
        spec = spec_for_method("Temp_gated_v2", in_dim=2, hidden_dim=3, out_dim=2,
                               heads=2)
        result = train(spec, ds, cfg)
        assert all(t > TEMP_EPS for t in result.learned_temperatures)
        assert all(0.0 < g < 1.0 for g in result.gate_means)


class TestRegularizerInert:
    def test_gateless_losses_identical_for_any_lambda(self):
        ds = two_clique_dataset(5)
        spec = spec_for_method("GAT", in_dim=2, hidden_dim=3, out_dim=2, heads=2)
        r0 = train(spec, ds, TrainConfig(lr=0.02, epochs=30, lambda_gate=0.0, seed=4))
        r1 = train(spec, ds, TrainConfig(lr=0.02, epochs=30, lambda_gate=1e-5, seed=4))
        assert r0 == r1


class TestDeterminism:
    def test_identical_runs_bit_identical(self):
        ds = two_clique_dataset(6)
        cfg = TrainConfig(lr=0.03, epochs=40, lambda_gate=1e-5, seed=9)
        spec = spec_for_method("Temp_gated", in_dim=2, hidden_dim=3, out_dim=2,
                               heads=2, dropout=0.3)
        a = train(spec, ds, cfg)
        b = train(spec, ds, cfg)
        assert a == b

    def test_different_seeds_differ(self):
        ds = two_clique_dataset(6)
        spec = spec_for_method("GAT", in_dim=2, hidden_dim=3, out_dim=2, heads=2)
        a = train(spec, ds, TrainConfig(lr=0.03, epochs=10, seed=0))
        b = train(spec, ds, TrainConfig(lr=0.03, epochs=10, seed=1))
        assert a != b


class TestEvaluate:
    def test_metric_identities(self):
        rng = np.random.default_rng(5)
        logits = rng.standard_normal((50, 4))
        labels = rng.integers(0, 4, size=50)
        mask = rng.random(50) < 0.7
        acc = accuracy_from_logits(logits, labels, mask)
        f1 = micro_f1_from_logits(logits, labels, mask, 4)
        assert acc == pytest.approx(f1, abs=1e-12)

    def test_all_correct_and_all_wrong(self):
        labels = np.array([0, 1, 2])
        perfect = np.eye(3) * 10
        assert accuracy_from_logits(perfect, labels, np.ones(3, bool)) == 1.0
        assert micro_f1_from_logits(perfect, labels, np.ones(3, bool), 3) == 1.0
        wrong = np.roll(perfect, 1, axis=1)
        assert accuracy_from_logits(wrong, labels, np.ones(3, bool)) == 0.0

    def test_unknown_metric(self):
        ds = two_clique_dataset(4)
        spec = spec_for_method("GCN", in_dim=2, hidden_dim=3, out_dim=2)
        _, model = train(spec, ds, TrainConfig(lr=0.05, epochs=5), return_model=True)
        with pytest.raises(ValueError, match="metric"):
            evaluate(model, ds, ds.test_mask, "macro_f1")


class TestConfigValidation:
    def test_bad_configs(self):
        with pytest.raises(ValueError):
            TrainConfig(lr=0.0, epochs=10)
        with pytest.raises(ValueError):
            TrainConfig(lr=0.1, epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(lr=0.1, epochs=10, lambda_gate=-1.0)
        with pytest.raises(ValueError):
            TrainConfig(lr=0.1, epochs=10, early_metric="loss")

    def test_run_result_validation(self):
        with pytest.raises(ValueError):
            RunResult(test_metric=1.2, val_metric=0.5,
                      learned_temperatures=(), gate_means=(), seed=0)
        with pytest.raises(ValueError):
            RunResult(test_metric=0.5, val_metric=0.5,
                      learned_temperatures=(-1.0,), gate_means=(), seed=0)
