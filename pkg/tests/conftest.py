"""Shared fixtures: synthetic molecule pools and CSV builders.

Real benchmark CSVs are looked up under MOLDISTILL_DATA_DIR (default
``<repo>/data``); tests that need them skip when the files are absent.
"""

import os
from pathlib import Path

import pytest

from moldistill.data import TASKS, TaskSpec, load_csv

REPO_ROOT = Path(__file__).resolve().parent.parent


def data_dir() -> Path:
    return Path(os.environ.get("MOLDISTILL_DATA_DIR", REPO_ROOT / "data"))


def real_dataset_path(name: str) -> Path:
    return data_dir() / f"{name}.csv"


def require_dataset(name: str) -> Path:
    path = real_dataset_path(name)
    if not path.exists():
        pytest.skip(
            f"benchmark CSV {path} not present (no dataset mirror in this "
            f"environment); place the MoleculeNet file there to enable"
        )
    return path


# Scaffold-diverse synthetic pool. Label rule: 1 when the molecule contains
# nitrogen, else 0 -- learnable from atom features alone.
SYNTH_MOLS = [
    ("c1ccccc1", 0), ("Cc1ccccc1", 0), ("CCc1ccccc1", 0), ("OCc1ccccc1", 0),
    ("c1ccncc1", 1), ("Cc1ccncc1", 1), ("CCc1ccncc1", 1), ("OCc1ccncc1", 1),
    ("C1CCCCC1", 0), ("CC1CCCCC1", 0), ("OC1CCCCC1", 0), ("CCC1CCCCC1", 0),
    ("C1CCNCC1", 1), ("CC1CCNCC1", 1), ("OC1CCNCC1", 1), ("CCC1CCNCC1", 1),
    ("C1CCOC1", 0), ("CC1CCOC1", 0), ("CCC1CCOC1", 0), ("OCC1CCOC1", 0),
    ("C1CCNC1", 1), ("CC1CCNC1", 1), ("CCC1CCNC1", 1), ("OCC1CCNC1", 1),
    ("CCCCCC", 0), ("CCCCCCO", 0), ("CCCCCCC", 0), ("CC(C)CCO", 0),
    ("CCCCN", 1), ("CCCCCN", 1), ("NCCCCO", 1), ("CC(C)CN", 1),
    ("c1ccc2ccccc2c1", 0), ("Cc1ccc2ccccc2c1", 0),
    ("c1ccc2ncccc2c1", 1), ("Cc1ccc2ncccc2c1", 1),
    ("C1CC1", 0), ("CC1CC1", 0), ("C1CN1", 1), ("CC1CN1", 1),
]


def write_synth_csv(path: Path, kind: str = "classification") -> TaskSpec:
    lines = ["smiles,y"]
    for smiles, label in SYNTH_MOLS:
        value = label if kind == "classification" else (label * 2.0 - 1.0) * 1.5 + 0.25
        lines.append(f"{smiles},{value}")
    path.write_text("\n".join(lines) + "\n")
    return TaskSpec(
        name="synth",
        task_kind=kind,
        smiles_column="smiles",
        label_columns=("y",),
        prompt_description="Synthetic screening collection for pipeline tests.",
    )


@pytest.fixture
def synth_csv(tmp_path):
    path = tmp_path / "synth.csv"
    task = write_synth_csv(path)
    return path, task


@pytest.fixture
def synth_dataset(synth_csv):
    path, task = synth_csv
    return load_csv(path, task)


@pytest.fixture
def synth_regression(tmp_path):
    path = tmp_path / "synth_reg.csv"
    task = write_synth_csv(path, kind="regression")
    return load_csv(path, task)


@pytest.fixture
def bace_dataset():
    path = require_dataset("bace")
    return load_csv(path, TASKS["bace"])
