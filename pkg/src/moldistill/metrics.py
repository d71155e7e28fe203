"""Evaluation metrics and the inference-efficiency benchmark.

ROCAUC uses the rank-statistic form with half credit for ties: sort once,
assign midranks, and read the statistic off the positive ranks. This is
exactly (#correctly ordered pairs + 0.5 * #tied pairs) / (#pos * #neg) in
O(n log n). Multi-task reports average over tasks that have both classes
present; degenerate tasks are listed, not averaged.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import CLASSIFICATION, MoleculeDataset
from .models import make_batch

DEFAULT_EVAL_BATCH = 256


class AucUndefinedError(ValueError):
    """ROCAUC is undefined when only one class is present."""


def rocauc(scores, labels) -> float:
    """Probability a random positive outranks a random negative (ties half)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise AucUndefinedError(
            f"undefined AUC: {n_pos} positives, {n_neg} negatives"
        )
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        midrank = (i + j) / 2.0 + 1.0  # ranks are 1-based
        ranks[order[i:j + 1]] = midrank
        i = j + 1
    rank_sum = ranks[pos].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def rmse(preds, targets, mask=None) -> float:
    """Root of the mean squared difference over unmasked entries."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ValueError("preds and targets must align")
    if mask is None:
        mask = np.ones(preds.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("all entries masked")
    diff = (preds - targets)[mask]
    return float(np.sqrt(np.mean(diff * diff)))


@dataclass
class MetricReport:
    metric: str
    split: str
    per_task: list[float | None]      # None = single-class, excluded from mean
    mean: float
    n_evaluated: int
    seed: int | None = None
    excluded_tasks: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "split": self.split,
            "per_task": self.per_task,
            "mean": self.mean,
            "n_evaluated": self.n_evaluated,
            "seed": self.seed,
            "excluded_tasks": self.excluded_tasks,
        }


def predict_all(model, ds: MoleculeDataset, indices,
                batch_size: int = DEFAULT_EVAL_BATCH):
    """Forward the model over ``indices`` in chunks; returns (h, logits)."""
    indices = np.asarray(indices, dtype=np.int64)
    hs, ys = [], []
    for start in range(0, len(indices), batch_size):
        chunk = indices[start:start + batch_size]
        h, y = model.forward(make_batch(ds, chunk))
        hs.append(h.data)
        ys.append(y.data)
    return np.concatenate(hs, axis=0), np.concatenate(ys, axis=0)


def evaluate_split(model, ds: MoleculeDataset, indices, split_name: str = "",
                   seed: int | None = None,
                   batch_size: int = DEFAULT_EVAL_BATCH) -> MetricReport:
    """Per-task metric over one split, averaged across valid tasks."""
    indices = np.asarray(indices, dtype=np.int64)
    _, logits = predict_all(model, ds, indices, batch_size)
    return score_predictions(logits, ds, indices, split_name, seed)


def score_predictions(logits: np.ndarray, ds: MoleculeDataset, indices,
                      split_name: str = "", seed: int | None = None) -> MetricReport:
    indices = np.asarray(indices, dtype=np.int64)
    labels = ds.labels[indices]
    mask = ds.mask[indices]
    per_task: list[float | None] = []
    excluded: list[int] = []
    for t in range(ds.task.n_tasks):
        valid = mask[:, t]
        if ds.task.task_kind == CLASSIFICATION:
            try:
                value = rocauc(logits[valid, t], labels[valid, t].astype(int))
            except AucUndefinedError:
                per_task.append(None)
                excluded.append(t)
                continue
        else:
            if valid.sum() == 0:
                per_task.append(None)
                excluded.append(t)
                continue
            value = rmse(logits[valid, t], labels[valid, t])
        per_task.append(value)
    valid_values = [v for v in per_task if v is not None]
    mean = float(np.mean(valid_values)) if valid_values else float("nan")
    return MetricReport(
        metric=ds.task.metric,
        split=split_name,
        per_task=per_task,
        mean=mean,
        n_evaluated=len(indices),
        seed=seed,
        excluded_tasks=excluded,
    )


@dataclass
class BenchReport:
    model_id: str
    parameter_count: int
    mean_ms_per_pass: float
    repeats: int
    times_ms: list[float]

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "parameter_count": self.parameter_count,
            "mean_ms_per_pass": self.mean_ms_per_pass,
            "repeats": self.repeats,
            "times_ms": self.times_ms,
        }


def bench_inference(model, ds: MoleculeDataset, repeats: int = 100,
                    batch_size: int = DEFAULT_EVAL_BATCH) -> BenchReport:
    """Wall time of a full-dataset forward pass, averaged over ``repeats``.

    One warm-up pass is excluded; BLAS thread pools are pinned to a single
    thread for comparability (timings remain hardware-specific).
    """
    indices = np.arange(len(ds))
    batches = [
        make_batch(ds, indices[s:s + batch_size])
        for s in range(0, len(indices), batch_size)
    ]

    def one_pass():
        for batch in batches:
            model.forward(batch)

    times = []
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        import contextlib

        threadpool_limits = lambda limits: contextlib.nullcontext()  # noqa: E731
    with threadpool_limits(limits=1):
        one_pass()  # warm-up
        for _ in range(repeats):
            t0 = time.perf_counter()
            one_pass()
            times.append((time.perf_counter() - t0) * 1000.0)
    return BenchReport(
        model_id=model.kind,
        parameter_count=model.parameter_count(),
        mean_ms_per_pass=float(np.mean(times)),
        repeats=repeats,
        times_ms=times,
    )


def plot_data_row(report: BenchReport, auc: float) -> dict:
    """One row of the efficiency plot CSV: metric vs log-time and log-params."""
    return {
        "model": report.model_id,
        "rocauc": auc,
        "log_time_ms": float(np.log10(report.mean_ms_per_pass)),
        "log_params": float(np.log10(report.parameter_count)),
    }
