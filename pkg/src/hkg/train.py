"""Training loop and evaluation: BCE-with-logits, Adam, rank-based AUC.

Each epoch shuffles the training supervision edges, walks them in
mini-batches built by the neighbor sampler, and applies one Adam step per
batch. Per-epoch records hold the mean training loss, the AUC over the
epoch's concatenated training-batch scores (in-situ AUC), and the
validation AUC; validation and test always use exact full-graph
neighborhoods so reported metrics carry no sampling noise. Repeated runs
re-seed both the split and the initialization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateLabels, DomainError, NonFiniteLoss
from .graph import Hkg, PAGE, STUDENT
from .model import (
    HeteroSageModel,
    ModelConfig,
    backward,
    decode,
    encode,
    forward_batch,
    save_model,
)
from .split import (
    LinkSplit,
    MessageGraph,
    full_link_batch,
    random_link_split,
    sample_link_batch,
)
from .tensor import Parameter, RngStream


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 0.001
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    runs: int = 5
    seed: int = 0
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    fanouts: tuple[int, ...] = (4, 2)
    split_by_user: bool = False

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "runs": self.runs,
            "seed": self.seed,
            "ratios": list(self.ratios),
            "fanouts": list(self.fanouts),
            "split_by_user": self.split_by_user,
        }


def bce_with_logits(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Numerically stable mean binary cross entropy on raw logits.

    loss_i = max(z, 0) - z*y + log(1 + exp(-|z|)); the returned gradient is
    (sigmoid(z) - y) / n, matching the mean reduction.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if logits.shape != labels.shape or logits.size == 0:
        raise DomainError(f"logits/labels shape mismatch: {logits.shape} vs {labels.shape}")
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise DomainError("labels must be 0 or 1")
    losses = np.maximum(logits, 0.0) - logits * labels + np.log1p(np.exp(-np.abs(logits)))
    sig = np.empty_like(logits)
    pos = logits >= 0
    sig[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    expz = np.exp(logits[~pos])
    sig[~pos] = expz / (1.0 + expz)
    return float(losses.mean()), (sig - labels) / logits.size


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params: list[Parameter]):
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]
        self.scratch = [np.empty_like(p.value) for p in params]
        self.t = 0


def adam_step(
    params: list[Parameter],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update; zeroes every gradient afterwards.

    value -= lr * m_hat / (sqrt(v_hat) + eps) with m_hat = m / (1-b1^t),
    v_hat = v / (1-b2^t). Written with in-place ops (the step runs once
    per mini-batch over every parameter, including the embedding tables).
    """
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for p, m, v, buf in zip(params, state.m, state.v, state.scratch):
        grad = p.grad
        np.square(grad, out=buf)
        buf *= 1.0 - beta2
        v *= beta2
        v += buf
        m *= beta1
        grad *= 1.0 - beta1
        m += grad
        np.sqrt(v, out=buf)
        buf /= np.sqrt(bc2)
        buf += eps
        np.divide(m, buf, out=buf)
        buf *= lr / bc1
        p.value -= buf
        p.zero_grad()


def evaluate_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC AUC via the Mann-Whitney rank statistic, average ranks on ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if not np.all((labels == 0) | (labels == 1)):
        raise DomainError("labels must be 0 or 1")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"need both classes, have {n_pos} positives / {n_neg} negatives")
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    change = np.empty(len(scores), dtype=bool)
    change[0] = True
    np.not_equal(sorted_scores[1:], sorted_scores[:-1], out=change[1:])
    starts = np.flatnonzero(change)
    sizes = np.diff(np.append(starts, len(scores)))
    # average 1-based rank of each tie group, spread back to elements
    group_rank = starts + (sizes + 1) / 2.0
    ranks = np.empty(len(scores))
    ranks[order] = np.repeat(group_rank, sizes)
    rank_sum = ranks[np.asarray(labels) == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class RunMetrics:
    seed: int
    train_loss: list[float] = field(default_factory=list)
    train_auc: list[float] = field(default_factory=list)
    val_auc: list[float] = field(default_factory=list)
    test_auc: float = 0.0
    test_accuracy: float = 0.0


@dataclass
class RepeatedMetrics:
    runs: list[RunMetrics]
    mean_train_loss: list[float]
    var_train_loss: list[float]
    mean_train_auc: list[float]
    var_train_auc: list[float]
    mean_val_auc: list[float]
    var_val_auc: list[float]
    test_auc_mean: float
    test_auc_var: float
    test_accuracy_mean: float
    test_accuracy_var: float


def _full_scores(model: HeteroSageModel, mg: MessageGraph, edge_idx: np.ndarray) -> np.ndarray:
    batch = full_link_batch(mg, edge_idx)
    reps = encode(model, batch.subgraph)
    return decode(reps[STUDENT][batch.seed_students], reps[PAGE][batch.seed_pages])


def train_model(
    hkg: Hkg,
    split: LinkSplit,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
) -> tuple[HeteroSageModel, RunMetrics]:
    """One full training run; deterministic given configs and seed."""
    train_cfg.validate()
    model_cfg.validate()
    if len(train_cfg.fanouts) != model_cfg.num_layers:
        raise ConfigError(
            f"fanouts {train_cfg.fanouts} must have one entry per conv layer ({model_cfg.num_layers})"
        )
    mg = MessageGraph(hkg, use_edge_weights=model_cfg.use_edge_weights)
    model = HeteroSageModel(
        model_cfg,
        {t: hkg.node_count(t) for t in hkg.features},
        {t: hkg.features[t].dim for t in hkg.features},
        mg.relations,
        train_cfg.seed,
    )
    params = model.parameters()
    state = AdamState(params)
    rng = RngStream(train_cfg.seed)
    metrics = RunMetrics(seed=train_cfg.seed)
    labels_all = hkg.supervision.labels

    for epoch in range(1, train_cfg.epochs + 1):
        perm = rng.derive("shuffle", epoch).permutation(len(split.train))
        order = split.train[perm]
        loss_sum = 0.0
        seen = 0
        epoch_scores: list[np.ndarray] = []
        batch_rng = rng.derive("epoch", epoch)
        for b, start in enumerate(range(0, len(order), train_cfg.batch_size)):
            idx = order[start : start + train_cfg.batch_size]
            batch = sample_link_batch(mg, idx, train_cfg.fanouts, batch_rng.derive(b))
            logits, cache = forward_batch(model, batch)
            loss, d_logits = bce_with_logits(logits, batch.labels)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss={loss} at epoch {epoch}, batch {b}")
            backward(model, cache, d_logits)
            adam_step(
                params, state, train_cfg.learning_rate, train_cfg.beta1, train_cfg.beta2, train_cfg.eps
            )
            loss_sum += loss * len(idx)
            seen += len(idx)
            epoch_scores.append(logits)
        metrics.train_loss.append(loss_sum / seen)
        metrics.train_auc.append(
            evaluate_auc(np.concatenate(epoch_scores), labels_all[order])
        )
        metrics.val_auc.append(
            evaluate_auc(_full_scores(model, mg, split.val), labels_all[split.val])
        )

    test_scores = _full_scores(model, mg, split.test)
    test_labels = labels_all[split.test]
    metrics.test_auc = evaluate_auc(test_scores, test_labels)
    metrics.test_accuracy = float(np.mean((test_scores > 0).astype(np.int64) == test_labels))
    return model, metrics


def _curve_stats(curves: list[list[float]]) -> tuple[list[float], list[float]]:
    arr = np.array(curves)
    mean = arr.mean(axis=0)
    var = arr.var(axis=0, ddof=1) if arr.shape[0] > 1 else np.zeros(arr.shape[1])
    return mean.tolist(), var.tolist()


def _scalar_stats(values: list[float]) -> tuple[float, float]:
    arr = np.array(values)
    var = float(arr.var(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), var


def run_repeated(
    hkg: Hkg,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir: Path | None = None,
) -> RepeatedMetrics:
    """Train ``runs`` times with seeds seed+0..runs-1 and aggregate.

    Each run draws its own split and initialization from its seed. When
    ``out_dir`` is given, per-run curves, checkpoints and a summary are
    written there.
    """
    runs: list[RunMetrics] = []
    for k in range(train_cfg.runs):
        seed = train_cfg.seed + k
        run_cfg = replace(train_cfg, seed=seed)
        split = random_link_split(hkg, train_cfg.ratios, seed, by_user=train_cfg.split_by_user)
        model, metrics = train_model(hkg, split, model_cfg, run_cfg)
        runs.append(metrics)
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            write_curves(out_dir / f"curves_run{k}.csv", metrics)
            save_model(model, out_dir / f"model_run{k}.ckpt")

    mean_loss, var_loss = _curve_stats([r.train_loss for r in runs])
    mean_tauc, var_tauc = _curve_stats([r.train_auc for r in runs])
    mean_vauc, var_vauc = _curve_stats([r.val_auc for r in runs])
    auc_mean, auc_var = _scalar_stats([r.test_auc for r in runs])
    acc_mean, acc_var = _scalar_stats([r.test_accuracy for r in runs])
    return RepeatedMetrics(
        runs,
        mean_loss,
        var_loss,
        mean_tauc,
        var_tauc,
        mean_vauc,
        var_vauc,
        auc_mean,
        auc_var,
        acc_mean,
        acc_var,
    )


def write_curves(path: Path, metrics: RunMetrics) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("epoch,train_loss,train_auc,val_auc\n")
        for e, (loss, tauc, vauc) in enumerate(
            zip(metrics.train_loss, metrics.train_auc, metrics.val_auc), start=1
        ):
            handle.write(f"{e},{loss!r},{tauc!r},{vauc!r}\n")


def summary_dict(
    repeated: RepeatedMetrics,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    provenance: dict | None = None,
) -> dict:
    return {
        "config": {"model": model_cfg.to_dict(), "train": train_cfg.to_dict()},
        "runs": [
            {"seed": r.seed, "test_auc": r.test_auc, "test_accuracy": r.test_accuracy}
            for r in repeated.runs
        ],
        "test_auc": {"mean": repeated.test_auc_mean, "variance": repeated.test_auc_var},
        "test_accuracy": {
            "mean": repeated.test_accuracy_mean,
            "variance": repeated.test_accuracy_var,
        },
        "curves": {
            "train_loss": {"mean": repeated.mean_train_loss, "variance": repeated.var_train_loss},
            "train_auc": {"mean": repeated.mean_train_auc, "variance": repeated.var_train_auc},
            "val_auc": {"mean": repeated.mean_val_auc, "variance": repeated.var_val_auc},
        },
        "provenance": provenance or {},
    }


def write_summary(path: Path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, sort_keys=True, indent=2)
        handle.write("\n")
