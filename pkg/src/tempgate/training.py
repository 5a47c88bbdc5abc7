"""Loss, gate regularizer, Adam, the full-batch training loop, and metrics.

One run = one (spec, dataset, config, seed) cell: full-batch epochs with
cross-entropy plus the gate-sparsity term, Adam updates, per-epoch
validation, and best-validation-epoch model selection for the reported test
metric. Runs are bit-deterministic given identical inputs; parallelism
happens across runs, never inside one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .attention import TEMP_EPS, AttentionModel, EdgeCache
from .graph import add_self_loops

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Input feature matrices at or below this density train as scipy CSR.
SPARSE_DENSITY_CUTOFF = 0.25


class TrainingError(RuntimeError):
    """Raised when a run cannot continue (e.g. non-finite loss)."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for one or more runs."""

    lr: float
    epochs: int
    weight_decay: float = 0.0
    lambda_gate: float = 0.0
    seed: int = 0
    runs: int = 1
    early_metric: str = "val_accuracy"

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.lambda_gate < 0 or self.weight_decay < 0:
            raise ValueError("regularization coefficients must be >= 0")
        if self.runs <= 0:
            raise ValueError("runs must be positive")
        if self.early_metric != "val_accuracy":
            raise ValueError("only val_accuracy model selection is supported")


@dataclass(frozen=True)
class RunResult:
    """Outcome of one training run.

    learned_temperatures / gate_means hold one entry per layer; None marks a
    layer without that mechanism.
    """

    test_metric: float
    val_metric: float
    learned_temperatures: tuple
    gate_means: tuple
    seed: int

    def __post_init__(self):
        if not (0.0 <= self.test_metric <= 1.0 and 0.0 <= self.val_metric <= 1.0):
            raise ValueError("metrics must lie in [0, 1]")
        for t in self.learned_temperatures:
            if t is not None and t <= 0:
                raise ValueError("temperatures must be positive")


def cross_entropy(logits, labels, mask):
    """Mean negative log-likelihood over masked rows, via stabilized
    log-softmax. `logits` is a Tensor; labels/mask are arrays."""
    idx = np.flatnonzero(np.asarray(mask))
    if idx.size == 0:
        raise ValueError("empty mask")
    rows = ad.gather_rows(logits, idx)
    shift = rows.data.max(axis=1, keepdims=True)  # constant: cancels exactly
    z = ad.sub(rows, ad.constant(shift))
    lse = ad.log(ad.summ(ad.exp(z), axis=1, keepdims=True))
    onehot = np.zeros(rows.shape)
    onehot[np.arange(idx.size), np.asarray(labels)[idx]] = 1.0
    picked = ad.summ(ad.mul(z, ad.constant(onehot)), axis=1, keepdims=True)
    return ad.reduce_mean(ad.sub(lse, picked))


def gate_regularizer(gates, lambda_gate):
    """lambda * sum over layers of mean gate activation; exact scalar zero
    when lambda is 0 or no layer has a gate."""
    active = [g for g in gates if g is not None]
    if lambda_gate == 0.0 or not active:
        return ad.constant(0.0)
    total = ad.reduce_mean(active[0])
    for g in active[1:]:
        total = ad.add(total, ad.reduce_mean(g))
    return ad.mul(total, lambda_gate)


def init_adam_state(params):
    return [
        {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data)} for p in params
    ]


def adam_step(params, grads, state, lr, weight_decay, t):
    """One Adam update with bias correction; weight decay enters the
    gradient as weight_decay * p. Parameters are updated in place."""
    if len(state) != len(params):
        raise ValueError("state does not match parameters")
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    for p, st in zip(params, state):
        g = grads.get(p)
        g = np.zeros_like(p.data) if g is None else g
        if weight_decay:
            g = g + weight_decay * p.data
        st["m"] = ADAM_BETA1 * st["m"] + (1.0 - ADAM_BETA1) * g
        st["v"] = ADAM_BETA2 * st["v"] + (1.0 - ADAM_BETA2) * (g * g)
        m_hat = st["m"] / bc1
        v_hat = st["v"] / bc2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def accuracy_from_logits(logits_data, labels, mask):
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("empty mask")
    preds = logits_data[idx].argmax(axis=1)
    return float(np.mean(preds == labels[idx]))


def micro_f1_from_logits(logits_data, labels, mask, num_classes):
    """Micro-F1 from pooled per-class confusion counts. Equals accuracy for
    single-label multiclass data; computed independently as a cross-check."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("empty mask")
    preds = logits_data[idx].argmax(axis=1)
    true = labels[idx]
    tp = fp = fn = 0
    for c in range(num_classes):
        tp += int(np.sum((preds == c) & (true == c)))
        fp += int(np.sum((preds == c) & (true != c)))
        fn += int(np.sum((preds != c) & (true == c)))
    denom = 2 * tp + fp + fn
    return float(2 * tp / denom) if denom else 0.0


def evaluate(model, ds, mask, metric="accuracy", graph=None):
    """Metric of the model's predictions on the masked nodes."""
    graph = graph if graph is not None else add_self_loops(ds.graph)
    x = prepare_features(ds.features)
    logits, _, _ = model.forward(graph, x, training=False)
    if metric == "accuracy":
        return accuracy_from_logits(logits.data, ds.labels, mask)
    if metric == "micro_f1":
        return micro_f1_from_logits(logits.data, ds.labels, mask, ds.num_classes)
    raise ValueError(f"unknown metric: {metric}")


def prepare_features(features):
    """Hand sparse inputs to the layers as CSR so the first projection and
    its weight gradient stay sparse-dense products."""
    density = np.count_nonzero(features) / max(features.size, 1)
    if density <= SPARSE_DENSITY_CUTOFF:
        return sp.csr_matrix(features)
    return features


def train(spec, ds, cfg, features=None, return_model=False):
    """Run full-batch training, returning the RunResult for this seed.

    Reports the test metric at the best-validation epoch (earliest on ties)
    and records the final learned per-layer temperatures and gate means.
    `features` overrides ds.features (the noise sweeps pass corrupted
    copies); masks must select at least one train/val/test node each.
    With return_model=True, returns (RunResult, AttentionModel).
    """
    graph = add_self_loops(ds.graph)
    cache = EdgeCache(graph)
    feats = ds.features if features is None else features
    x = prepare_features(np.asarray(feats, dtype=np.float64))
    model = AttentionModel(spec, seed=cfg.seed)
    params = model.parameters()
    state = init_adam_state(params)
    drop_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1,))
    )
    best_val = -1.0
    best_test = 0.0
    reuse_logits = spec.dropout == 0.0
    for epoch in range(1, cfg.epochs + 1):
        with ad.Tape() as tape:
            logits, gates, _ = model.forward(cache, x, training=True, rng=drop_rng)
            loss = ad.add(
                cross_entropy(logits, ds.labels, ds.train_mask),
                gate_regularizer(gates, cfg.lambda_gate),
            )
            if not np.isfinite(loss.data):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            grads = tape.backward(loss)
        adam_step(params, grads, state, cfg.lr, cfg.weight_decay, epoch)
        if reuse_logits:
            eval_data = logits.data
        else:
            eval_logits, _, _ = model.forward(cache, x, training=False)
            eval_data = eval_logits.data
        val = accuracy_from_logits(eval_data, ds.labels, ds.val_mask)
        if val > best_val:
            best_val = val
            best_test = accuracy_from_logits(eval_data, ds.labels, ds.test_mask)
    _, final_gates, _ = model.forward(cache, x, training=False)
    gate_means = tuple(
        None if g is None else float(np.mean(g.data)) for g in final_gates
    )
    temps = tuple(model.layer_temperatures())
    result = RunResult(
        test_metric=best_test,
        val_metric=best_val,
        learned_temperatures=temps,
        gate_means=gate_means,
        seed=cfg.seed,
    )
    return (result, model) if return_model else result
