"""The numeric core: gradients vs finite differences, and a training curve.

Run:  python3 demos/04_autodiff_and_training.py
"""

from pathlib import Path
import tempfile

import numpy as np

from _common import write_pool_csv

from moldistill.autodiff import Tensor, grad, matmul, sigmoid, tmean
from moldistill.data import TaskSpec, load_csv, scaffold_split
from moldistill.distill import DistillConfig, train_gnn_teacher
from moldistill.metrics import evaluate_split
from moldistill.rng import Rng

# 1. gradients agree with central finite differences
rng = Rng(0)
w = Tensor(rng.uniform(-1, 1, (3, 2)), requires_grad=True)
x = np.asarray(rng.uniform(-1, 1, (5, 3)))


def loss_fn():
    return tmean(sigmoid(matmul(Tensor(x), w)))


analytic = grad(loss_fn(), [w])[0]
step = 1e-5
numeric = np.zeros_like(w.data)
for i in range(w.data.size):
    orig = w.data.flat[i]
    w.data.flat[i] = orig + step
    hi = loss_fn().item()
    w.data.flat[i] = orig - step
    lo = loss_fn().item()
    w.data.flat[i] = orig
    numeric.flat[i] = (hi - lo) / (2 * step)
print(f"max |analytic - finite difference| = "
      f"{np.max(np.abs(analytic - numeric)):.2e}")

# 2. train the graph teacher on the demo pool and watch the loss fall
with tempfile.TemporaryDirectory() as tmp:
    csv_path = Path(tmp) / "demo.csv"
    write_pool_csv(csv_path)
    task = TaskSpec(name="demo", task_kind="classification",
                    smiles_column="smiles", label_columns=("y",),
                    prompt_description="demo pool")
    ds = load_csv(csv_path, task)

split = scaffold_split(ds, (0.8, 0.1, 0.1), "scaffold", 0)
cfg = DistillConfig(epochs=25, batch_size=16, lr=0.01, patience=50, seed=0,
                    hidden=16, layers=3)
model, artifacts, result = train_gnn_teacher(ds, split, cfg)

print("\nepoch  train loss   val ROCAUC")
for e in range(0, len(result.train_losses), 4):
    print(f"{e:>5}  {result.train_losses[e]:>10.4f}   {result.val_metrics[e]:.4f}")
test = evaluate_split(model, ds, split.test, "test")
print(f"\nbest val {result.best_val:.4f} at epoch {result.best_epoch}, "
      f"test {test.mean:.4f}")
print(f"teacher artifacts: soft targets {artifacts.y_gnn.shape}, "
      f"representations {artifacts.h_gnn.shape}")
