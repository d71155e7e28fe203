"""End-to-end distillation on the demo pool: teachers in, fast student out.

Trains the graph teacher, fabricates a confident language-model teacher,
distills both into the MLP student, and compares quality and speed.

Run:  python3 demos/06_full_distillation.py
"""

from pathlib import Path
import tempfile

import numpy as np

from _common import write_pool_csv

from moldistill.data import TaskSpec, load_csv, scaffold_split
from moldistill.distill import (
    DistillConfig,
    TeacherArtifacts,
    train_gnn_teacher,
    train_mlp,
    train_student,
)
from moldistill.metrics import bench_inference, evaluate_split

with tempfile.TemporaryDirectory() as tmp:
    csv_path = Path(tmp) / "demo.csv"
    write_pool_csv(csv_path)
    task = TaskSpec(name="demo", task_kind="classification",
                    smiles_column="smiles", label_columns=("y",),
                    prompt_description="demo pool")
    ds = load_csv(csv_path, task)

split = scaffold_split(ds, (0.8, 0.1, 0.1), "scaffold", 0)
cfg = DistillConfig(epochs=30, batch_size=16, lr=0.01, patience=50, seed=0,
                    hidden=16, layers=3)

print("1) graph teacher")
gcn, gnn_artifacts, gnn_result = train_gnn_teacher(ds, split, cfg)
print(f"   best val {gnn_result.best_val:.4f}")

print("2) language-model teacher (synthetic, confident at the true labels)")
teachers = TeacherArtifacts(
    y_lm=np.where(ds.labels > 0.5, 6.0, -6.0),
    h_lm=np.zeros((len(ds), 8)),
).merged_with(gnn_artifacts)

print("3) plain student (no distillation)")
plain, plain_result = train_mlp(ds, split, cfg)

print("4) distilled student (both teachers)")
from dataclasses import replace

student, _, student_result = train_student(
    ds, split, teachers, replace(cfg, alpha=0.5, beta=0.5))

rows = [
    ("GCN teacher", gcn, gnn_result.best_val),
    ("plain MLP", plain, plain_result.best_val),
    ("distilled MLP", student, student_result.best_val),
]
print(f"\n{'model':<15} {'val':>7} {'test':>7} {'ms/pass':>9} {'params':>7}")
for name, model, val in rows:
    test = evaluate_split(model, ds, split.test, "test").mean
    bench = bench_inference(model, ds, repeats=50)
    print(f"{name:<15} {val:>7.4f} {test:>7.4f} "
          f"{bench.mean_ms_per_pass:>9.2f} {bench.parameter_count:>7}")
print("\nthe student keeps the accuracy while skipping the adjacency work")
