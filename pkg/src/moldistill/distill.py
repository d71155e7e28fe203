"""Distillation losses and training loops.

The student minimizes a prediction loss plus a weighted distillation loss.
Two distillation forms exist: label distillation matches the student's
predictive distribution to each teacher's soft predictions (Bernoulli KL per
task for classification, RMSE for regression scalars), and representation
distillation matches projected hidden vectors in a shared latent space
(RMSE). By default classification uses label distillation and regression
uses representation distillation; both work for either task kind.

``alpha`` weights the language-model teacher, ``beta`` the graph teacher.
Terms with zero weight are skipped entirely, so an ``alpha = beta = 0`` run
is bit-identical to a plain model run with the same seed. Teacher targets
are consumed only for train-split molecules; validation and test touch
ground-truth labels only.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import Tensor, matmul, mul, softplus, sqrt, sub, tmean, tsum
from .checkpoint import load_params, save_params
from .data import CLASSIFICATION, MoleculeDataset, SplitIndices
from .errors import DataError, NonFiniteError
from .metrics import evaluate_split
from .models import Gcn, GraphBatch, Mlp, ProjectionHeads, make_batch
from .optim import Adam
from .rng import Rng, derive_seed

logger = logging.getLogger(__name__)

LABEL = "label"
REPRESENTATION = "representation"

DEFAULT_GRID = (0.0, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0)


@dataclass
class DistillConfig:
    alpha: float = 0.0
    beta: float = 0.0
    mode: str | None = None        # None -> label for classification, repr for regression
    grid: tuple[float, ...] = DEFAULT_GRID
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    patience: int = 20
    seed: int = 0
    hidden: int = 32
    layers: int = 3
    latent: int = 32
    teacher_heads_trainable: bool = False

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise DataError("alpha and beta must be non-negative")
        if self.mode not in (None, LABEL, REPRESENTATION):
            raise DataError(f"unknown distillation mode {self.mode!r}")

    def resolved_mode(self, task_kind: str) -> str:
        if self.mode is not None:
            return self.mode
        return LABEL if task_kind == CLASSIFICATION else REPRESENTATION


@dataclass
class TeacherArtifacts:
    """Per-molecule soft targets and representations from both teachers."""

    y_lm: np.ndarray | None = None     # (n, d)
    h_lm: np.ndarray | None = None     # (n, H_LM)
    y_gnn: np.ndarray | None = None    # (n, d)
    h_gnn: np.ndarray | None = None    # (n, H)
    provenance: dict = field(default_factory=dict)

    def check(self, n_molecules: int, need_lm: bool, need_gnn: bool) -> None:
        if need_lm and (self.y_lm is None or self.h_lm is None):
            raise DataError("language-model teacher artifacts missing")
        if need_gnn and (self.y_gnn is None or self.h_gnn is None):
            raise DataError("graph teacher artifacts missing")
        for name in ("y_lm", "h_lm", "y_gnn", "h_gnn"):
            arr = getattr(self, name)
            if arr is not None and arr.shape[0] != n_molecules:
                raise DataError(
                    f"{name} has {arr.shape[0]} rows for {n_molecules} molecules"
                )

    def merged_with(self, other: "TeacherArtifacts") -> "TeacherArtifacts":
        return TeacherArtifacts(
            y_lm=self.y_lm if self.y_lm is not None else other.y_lm,
            h_lm=self.h_lm if self.h_lm is not None else other.h_lm,
            y_gnn=self.y_gnn if self.y_gnn is not None else other.y_gnn,
            h_gnn=self.h_gnn if self.h_gnn is not None else other.h_gnn,
            provenance={**other.provenance, **self.provenance},
        )

    def save(self, path: str | Path) -> None:
        arrays = {
            name: getattr(self, name)
            for name in ("y_lm", "h_lm", "y_gnn", "h_gnn")
            if getattr(self, name) is not None
        }
        save_params(path, arrays)
        meta_path = Path(str(path) + ".provenance.json")
        meta_path.write_text(json.dumps(self.provenance, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "TeacherArtifacts":
        arrays = load_params(path)
        meta_path = Path(str(path) + ".provenance.json")
        provenance = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(
            y_lm=arrays.get("y_lm"),
            h_lm=arrays.get("h_lm"),
            y_gnn=arrays.get("y_gnn"),
            h_gnn=arrays.get("h_gnn"),
            provenance=provenance,
        )


# -- losses -------------------------------------------------------------------


def pred_loss(logits: Tensor, labels: np.ndarray, mask: np.ndarray,
              task_kind: str) -> Tensor:
    """Ground-truth loss: masked mean BCE on logits, or masked RMSE."""
    labels = np.asarray(labels, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if logits.shape != labels.shape or labels.shape != mask.shape:
        raise DataError(
            f"shape mismatch: logits {logits.shape}, labels {labels.shape}"
        )
    count = float(mask.sum())
    if count == 0:
        raise DataError("fully masked batch")
    weights = Tensor(mask.astype(np.float64) / count)
    if task_kind == CLASSIFICATION:
        # BCE from logits: softplus(z) - y*z, stable for any magnitude
        per = sub(softplus(logits), mul(logits, Tensor(labels * mask)))
        return tsum(mul(per, weights))
    diff = sub(logits, Tensor(np.where(mask, labels, 0.0)))
    return sqrt(tsum(mul(mul(diff, diff), weights)))


def _bernoulli_kl_mean(student_logits: Tensor, teacher_logits: np.ndarray) -> Tensor:
    """Mean over batch and tasks of KL(teacher || student) on sigmoid outputs."""
    t = np.asarray(teacher_logits, dtype=np.float64)
    if student_logits.shape != t.shape:
        raise DataError(
            f"teacher rows {t.shape} do not match student logits "
            f"{student_logits.shape}"
        )
    p = _np_sigmoid(t)
    log_p = -np.logaddexp(0.0, -t)
    log_1p = -np.logaddexp(0.0, t)
    teacher_part = p * log_p + (1.0 - p) * log_1p   # constant in the student
    # student cross terms: -p log q - (1-p) log(1-q), via stable softplus
    cross = mul(Tensor(p), softplus(-student_logits)) + mul(
        Tensor(1.0 - p), softplus(student_logits)
    )
    return tmean(cross + Tensor(teacher_part))


def _np_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _rmse_to_constant(student: Tensor, target: np.ndarray) -> Tensor:
    target = np.asarray(target, dtype=np.float64)
    if student.shape != target.shape:
        raise DataError(
            f"target shape {target.shape} does not match student {student.shape}"
        )
    diff = sub(student, Tensor(target))
    return sqrt(tmean(mul(diff, diff)))


def label_distill_loss(student_logits: Tensor,
                       y_lm: np.ndarray | None, y_gnn: np.ndarray | None,
                       alpha: float, beta: float, task_kind: str) -> Tensor:
    """Eq.-style label distillation: weighted teacher-matching on predictions."""
    total = Tensor(0.0)
    for weight, target in ((alpha, y_lm), (beta, y_gnn)):
        if weight == 0.0:
            continue
        if target is None:
            raise DataError("teacher predictions missing for a non-zero weight")
        if task_kind == CLASSIFICATION:
            term = _bernoulli_kl_mean(student_logits, target)
        else:
            term = _rmse_to_constant(student_logits, target)
        total = total + mul(term, weight)
    return total


def repr_distill_loss(h_student: Tensor,
                      h_lm: np.ndarray | None, h_gnn: np.ndarray | None,
                      heads: ProjectionHeads,
                      alpha: float, beta: float) -> Tensor:
    """Representation distillation in the shared latent space."""
    total = Tensor(0.0)
    z_student = None
    for weight, h_teacher, u_teacher in (
        (alpha, h_lm, heads.u_lm),
        (beta, h_gnn, heads.u_gnn),
    ):
        if weight == 0.0:
            continue
        if h_teacher is None:
            raise DataError("teacher representations missing for a non-zero weight")
        if z_student is None:
            z_student = matmul(h_student, heads.u_mlp)
        z_teacher = matmul(Tensor(np.asarray(h_teacher, dtype=np.float64)), u_teacher)
        diff = sub(z_student, z_teacher)
        term = sqrt(tmean(mul(diff, diff)))
        total = total + mul(term, weight)
    return total


def total_loss(logits: Tensor, h_student: Tensor, batch: GraphBatch,
               teachers: TeacherArtifacts | None, heads: ProjectionHeads | None,
               config: DistillConfig, task_kind: str) -> Tensor:
    """Prediction loss plus the mode-selected distillation loss."""
    base = pred_loss(logits, batch.labels, batch.mask, task_kind)
    if config.alpha == 0.0 and config.beta == 0.0:
        return base
    if teachers is None:
        raise DataError("teacher artifacts required when alpha or beta is non-zero")
    rows = batch.indices
    mode = config.resolved_mode(task_kind)
    if mode == LABEL:
        extra = label_distill_loss(
            logits,
            teachers.y_lm[rows] if teachers.y_lm is not None else None,
            teachers.y_gnn[rows] if teachers.y_gnn is not None else None,
            config.alpha, config.beta, task_kind,
        )
    else:
        if heads is None:
            raise DataError("projection heads required for representation mode")
        extra = repr_distill_loss(
            h_student,
            teachers.h_lm[rows] if teachers.h_lm is not None else None,
            teachers.h_gnn[rows] if teachers.h_gnn is not None else None,
            heads, config.alpha, config.beta,
        )
    return base + extra


# -- training loops -----------------------------------------------------------


@dataclass
class TrainResult:
    train_losses: list[float]
    val_metrics: list[float]
    best_val: float
    best_epoch: int
    final_val: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _better(task_kind: str):
    return (lambda a, b: a > b) if task_kind == CLASSIFICATION else (lambda a, b: a < b)


def _worst(task_kind: str) -> float:
    return -np.inf if task_kind == CLASSIFICATION else np.inf


def _val_metric(model, ds, split) -> float:
    idx = split.valid if len(split.valid) else split.train
    report = evaluate_split(model, ds, idx, "valid")
    if np.isnan(report.mean):
        return 0.5 if ds.task.task_kind == CLASSIFICATION else np.inf
    return report.mean


def _fit(model, extra_params, ds, split, config: DistillConfig,
         batch_loss) -> TrainResult:
    """Shared minibatch loop with early stopping on the validation metric."""
    params = model.parameters + extra_params
    opt = Adam(params, lr=config.lr)
    shuffle_rng = Rng(derive_seed(config.seed, "student-batches"))
    train_idx = np.asarray(split.train, dtype=np.int64)
    task_kind = ds.task.task_kind
    better = _better(task_kind)

    snapshots = [p.data.copy() for p in params]
    best_val = _val_metric(model, ds, split)
    best_epoch = -1
    bad = 0
    train_losses: list[float] = []
    val_metrics: list[float] = []
    current = best_val
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(train_idx))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            rows = train_idx[order[start:start + config.batch_size]]
            batch = make_batch(ds, rows)
            loss = batch_loss(batch)
            if not np.isfinite(loss.data):
                raise NonFiniteError(
                    f"training diverged at epoch {epoch}: loss={loss.data}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(loss.item())
        train_losses.append(float(np.mean(epoch_losses)))
        current = _val_metric(model, ds, split)
        val_metrics.append(current)
        if better(current, best_val):
            best_val = current
            best_epoch = epoch
            snapshots = [p.data.copy() for p in params]
            bad = 0
        else:
            bad += 1
            if bad > config.patience:
                break
    for p, snap in zip(params, snapshots):
        p.data = snap.copy()
    return TrainResult(
        train_losses=train_losses,
        val_metrics=val_metrics,
        best_val=best_val,
        best_epoch=best_epoch,
        final_val=current,
    )


def _emit_artifacts(model, ds, batch_size: int = 256):
    from .metrics import predict_all

    h, y = predict_all(model, ds, np.arange(len(ds)), batch_size)
    return h, y


def train_gnn_teacher(ds: MoleculeDataset, split: SplitIndices,
                      config: DistillConfig) -> tuple[Gcn, TeacherArtifacts, TrainResult]:
    """Pretrain the graph teacher on ground truth; emit its soft targets."""
    f_in = ds.feature_rows(0).shape[1]
    model = Gcn.init(f_in, ds.task.n_tasks, Rng(derive_seed(config.seed, "gnn-init")),
                     hidden=config.hidden, layers=config.layers)

    def batch_loss(batch: GraphBatch) -> Tensor:
        _, logits = model.forward(batch)
        return pred_loss(logits, batch.labels, batch.mask, ds.task.task_kind)

    result = _fit(model, [], ds, split, config, batch_loss)
    h_gnn, y_gnn = _emit_artifacts(model, ds)
    artifacts = TeacherArtifacts(
        y_gnn=y_gnn, h_gnn=h_gnn,
        provenance={"gnn_seed": config.seed, "gnn_best_val": result.best_val},
    )
    return model, artifacts, result


def train_student(ds: MoleculeDataset, split: SplitIndices,
                  teachers: TeacherArtifacts | None,
                  config: DistillConfig
                  ) -> tuple[Mlp, ProjectionHeads | None, TrainResult]:
    """Train the MLP under the combined objective.

    ``alpha``/``beta`` zeroing reproduces the single-teacher and plain
    configurations; with both zero the run is bit-identical to ``train_mlp``.
    """
    f_in = ds.feature_rows(0).shape[1]
    task_kind = ds.task.task_kind
    model = Mlp.init(f_in, ds.task.n_tasks, Rng(derive_seed(config.seed, "student-init")),
                     hidden=config.hidden, layers=config.layers)

    distilling = config.alpha > 0.0 or config.beta > 0.0
    heads = None
    if distilling:
        if teachers is None:
            raise DataError("teacher artifacts required when alpha or beta is non-zero")
        mode = config.resolved_mode(task_kind)
        need_lm = config.alpha > 0.0
        need_gnn = config.beta > 0.0
        teachers.check(len(ds), need_lm, need_gnn)
        if mode == REPRESENTATION:
            lm_dim = teachers.h_lm.shape[1] if teachers.h_lm is not None else config.hidden
            heads = ProjectionHeads.init(
                config.hidden, lm_dim, Rng(derive_seed(config.seed, "student-heads")),
                latent=config.latent,
                teacher_heads_trainable=config.teacher_heads_trainable,
            )

    def batch_loss(batch: GraphBatch) -> Tensor:
        h, logits = model.forward(batch)
        return total_loss(logits, h, batch, teachers, heads, config, task_kind)

    extra = heads.parameters if heads is not None else []
    result = _fit(model, extra, ds, split, config, batch_loss)
    return model, heads, result


def train_mlp(ds: MoleculeDataset, split: SplitIndices,
              config: DistillConfig) -> tuple[Mlp, TrainResult]:
    """Plain student baseline: no teachers, no distillation terms."""
    plain = replace(config, alpha=0.0, beta=0.0)
    model, _, result = train_student(ds, split, None, plain)
    return model, result


# -- grid search ----------------------------------------------------------------


@dataclass
class GridCell:
    alpha: float
    beta: float
    seed: int
    val_metric: float
    test_metric: float


@dataclass
class GridResult:
    best_alpha: float
    best_beta: float
    cells: list[GridCell]

    def to_csv(self) -> str:
        lines = ["alpha,beta,val_metric,test_metric,seed"]
        for c in self.cells:
            lines.append(
                f"{c.alpha},{c.beta},{c.val_metric:.6f},{c.test_metric:.6f},{c.seed}"
            )
        return "\n".join(lines) + "\n"


def _run_cell(args) -> GridCell:
    ds, split, teachers, config, alpha, beta, cell_index = args
    cell_cfg = replace(config, alpha=alpha, beta=beta,
                       seed=config.seed ^ cell_index)
    model, _, result = train_student(ds, split, teachers, cell_cfg)
    test_report = evaluate_split(model, ds, split.test, "test")
    return GridCell(
        alpha=alpha, beta=beta, seed=cell_cfg.seed,
        val_metric=result.best_val, test_metric=test_report.mean,
    )


def grid_search(ds: MoleculeDataset, split: SplitIndices,
                teachers: TeacherArtifacts | None, config: DistillConfig,
                grid: tuple[float, ...] | None = None,
                jobs: int = 1) -> GridResult:
    """One student per (alpha, beta) pair; select by validation metric.

    Ties break toward the earliest enumerated pair (alpha ascending, then
    beta ascending). Per-cell seeds are ``seed XOR cell_index`` so cells are
    reproducible when run in isolation or in parallel.
    """
    values = tuple(grid) if grid is not None else config.grid
    if not values:
        raise DataError("empty hyperparameter grid")
    pairs = [(a, b) for a in values for b in values]
    tasks = [
        (ds, split, teachers, config, a, b, i)
        for i, (a, b) in enumerate(pairs)
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, tasks))
    else:
        cells = [_run_cell(t) for t in tasks]

    better = _better(ds.task.task_kind)
    best = cells[0]
    for cell in cells[1:]:
        if better(cell.val_metric, best.val_metric):
            best = cell
    logger.info("grid best: alpha=%s beta=%s val=%.4f",
                best.alpha, best.beta, best.val_metric)
    return GridResult(best_alpha=best.alpha, best_beta=best.beta, cells=cells)
