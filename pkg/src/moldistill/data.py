"""Dataset ingestion, task metadata, and scaffold-grouped splits.

CSV files follow the MoleculeNet column conventions; the registry below
carries per-dataset column names, task kind, and the dataset-specific prompt
description used when querying the language-model teacher. Rows whose SMILES
fail to parse are dropped and logged, never fatal, so reported molecule
counts stay comparable to the published statistics.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .featurize import FEATURE_WIDTH, N_ATTRIBUTES, featurize
from .rng import Rng
from .scaffold import ScaffoldKey, molecule_scaffold_key
from .smiles import MolGraph, parse_smiles

logger = logging.getLogger(__name__)

CLASSIFICATION = "classification"
REGRESSION = "regression"

SCAFFOLD = "scaffold"
RANDOM_SCAFFOLD = "random_scaffold"


@dataclass(frozen=True)
class TaskSpec:
    name: str
    task_kind: str                    # classification | regression
    smiles_column: str
    label_columns: tuple[str, ...]
    prompt_description: str
    default_llm: str = "gpt-4-vision-preview"

    @property
    def n_tasks(self) -> int:
        return len(self.label_columns)

    @property
    def metric(self) -> str:
        return "ROCAUC" if self.task_kind == CLASSIFICATION else "RMSE"

    def __post_init__(self):
        if self.task_kind not in (CLASSIFICATION, REGRESSION):
            raise DataError(f"unknown task kind {self.task_kind!r}")
        if not self.label_columns:
            raise DataError("at least one label column required")


TASKS: dict[str, TaskSpec] = {
    "bace": TaskSpec(
        name="bace",
        task_kind=CLASSIFICATION,
        smiles_column="mol",
        label_columns=("Class",),
        prompt_description=(
            "The BACE dataset provides and binary label binding results for a "
            "set of inhibitors of human beta-secretase 1 (BACE-1). Based on the "
            "following inputs, please analyze the property of the molecule "
            "(e.g. Functional groups, Structural characteristics) and analyze "
            "the binding results for a set of inhibitors of human beta-secretase "
            "(BACE-1)?"
        ),
    ),
    "bbbp": TaskSpec(
        name="bbbp",
        task_kind=CLASSIFICATION,
        smiles_column="smiles",
        label_columns=("p_np",),
        prompt_description=(
            "As a membrane separating circulating blood and brain extracellular "
            "fluid the blood-brain barrier blocks most drugs, hormones, and "
            "neurotransmitters. Based on these inputs, please analyze the "
            "property of the molecule (e.g. Functional groups, Structural "
            "characteristics) and analyze if the molecule is permeable to the "
            "blood-brain barrier?"
        ),
    ),
    "clintox": TaskSpec(
        name="clintox",
        task_kind=CLASSIFICATION,
        smiles_column="smiles",
        label_columns=("FDA_APPROVED", "CT_TOX"),
        prompt_description=(
            "Could you analyze the given molecule based on the provided inputs "
            "and detail the factors influencing its potential for clinical "
            "trial toxicity or non-toxicity? Additionally, please assess "
            "factors that might impact its FDA approval status."
        ),
    ),
    "hiv": TaskSpec(
        name="hiv",
        task_kind=CLASSIFICATION,
        smiles_column="smiles",
        label_columns=("HIV_active",),
        prompt_description=(
            "The HIV dataset tests the ability to inhibit HIV replication for "
            "over 40,000 compounds. Based on the following inputs, please "
            "analyze the property of the molecule (e.g. Functional groups, "
            "Structural characteristics) with focusing on its ability to "
            "inhibit HIV replication. Then make your guess or prediction "
            "(active or inactive)."
        ),
        default_llm="claude-3-haiku-20240307",
    ),
    "esol": TaskSpec(
        name="esol",
        task_kind=REGRESSION,
        smiles_column="smiles",
        label_columns=("measured log solubility in mols per litre",),
        prompt_description=(
            "Based on these inputs, please analyze the property of the molecule "
            "(e.g. Functional groups, Structural characteristics), and which "
            "properties of the molecule can affect its water solubility? Also "
            "try to guess its solubility."
        ),
    ),
    "freesolv": TaskSpec(
        name="freesolv",
        task_kind=REGRESSION,
        smiles_column="smiles",
        label_columns=("expt",),
        prompt_description=(
            "Free Solvation Database (FreeSolv) provides experimental and "
            "calculated hydration free energy of small molecules in water. "
            "Based on the following inputs, please analyze the property of the "
            "molecule (e.g. Functional groups, Structural characteristics) with "
            "focusing on its hydration free energy. Then make your guess or "
            "prediction about its hydration free energy."
        ),
    ),
    "lipo": TaskSpec(
        name="lipo",
        task_kind=REGRESSION,
        smiles_column="smiles",
        label_columns=("exp",),
        prompt_description=(
            "Lipophilicity is an important feature of drug molecules that "
            "affects both membrane permeability and solubility. Based on the "
            "following inputs, please analyze the molecule and give some "
            "details of factors that can affect octanol/water distribution "
            "coefficient (logD at pH 7.4). Then make your guess or prediction "
            "about its lipophilicity."
        ),
        default_llm="claude-3-haiku-20240307",
    ),
}

# Published reference molecule counts, used by loaders to sanity-log drops.
EXPECTED_COUNTS = {
    "bace": 1513, "bbbp": 2050, "clintox": 1484, "hiv": 41127,
    "esol": 1128, "freesolv": 642, "lipo": 4200,
}


@dataclass
class MoleculeDataset:
    molecules: list[MolGraph]
    labels: np.ndarray            # (n_mols, n_tasks) float64
    mask: np.ndarray              # (n_mols, n_tasks) bool, True = label present
    task: TaskSpec
    dropped_rows: list[tuple[int, str]] = field(default_factory=list)
    _features: list[np.ndarray] | None = None
    _scaffold_keys: list[ScaffoldKey] | None = None

    def __post_init__(self):
        if self.labels.shape[0] != len(self.molecules):
            raise DataError("label row count must equal molecule count")
        if self.labels.shape != self.mask.shape:
            raise DataError("mask shape must match labels")

    def __len__(self) -> int:
        return len(self.molecules)

    def feature_rows(self, i: int) -> np.ndarray:
        """Per-atom feature rows of molecule i, memoized."""
        if self._features is None:
            self._features = [None] * len(self.molecules)
        if self._features[i] is None:
            self._features[i] = featurize(self.molecules[i]).values
        return self._features[i]

    def scaffold_keys(self) -> list[ScaffoldKey]:
        if self._scaffold_keys is None:
            self._scaffold_keys = [
                molecule_scaffold_key(m) for m in self.molecules
            ]
        return self._scaffold_keys


@dataclass
class SplitIndices:
    train: list[int]
    valid: list[int]
    test: list[int]
    mode: str
    seed: int

    def validate(self, n: int) -> None:
        combined = sorted(self.train + self.valid + self.test)
        if combined != list(range(n)):
            raise DataError("split partitions must cover all indices exactly once")

    def to_json(self) -> str:
        return json.dumps(
            {
                "mode": self.mode,
                "seed": self.seed,
                "train": self.train,
                "valid": self.valid,
                "test": self.test,
            },
            indent=None,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitIndices":
        obj = json.loads(text)
        return cls(
            train=list(obj["train"]),
            valid=list(obj["valid"]),
            test=list(obj["test"]),
            mode=obj["mode"],
            seed=int(obj["seed"]),
        )


def load_csv(path: str | Path, task: TaskSpec) -> MoleculeDataset:
    """Load a MoleculeNet-style CSV; unparseable SMILES rows are dropped and logged."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"empty file: {path}")
        if task.smiles_column not in reader.fieldnames:
            raise DataError(
                f"missing SMILES column {task.smiles_column!r} in {path}"
            )
        for col in task.label_columns:
            if col not in reader.fieldnames:
                raise DataError(f"missing label column {col!r} in {path}")
        rows = list(reader)
    if not rows:
        raise DataError(f"no data rows in {path}")

    molecules: list[MolGraph] = []
    labels: list[list[float]] = []
    dropped: list[tuple[int, str]] = []
    for row_no, row in enumerate(rows, start=2):  # 1 = header line
        smiles = (row.get(task.smiles_column) or "").strip()
        try:
            mol = parse_smiles(smiles)
        except Exception as exc:
            dropped.append((row_no, str(exc)))
            logger.warning("dropping row %d of %s: %s", row_no, path.name, exc)
            continue
        values = []
        for col in task.label_columns:
            raw = (row.get(col) or "").strip()
            try:
                values.append(float(raw))
            except ValueError:
                values.append(math.nan)
        molecules.append(mol)
        labels.append(values)

    if not molecules:
        raise DataError(f"no parseable molecules in {path}")
    label_arr = np.asarray(labels, dtype=np.float64)
    mask = np.isfinite(label_arr)
    label_arr = np.where(mask, label_arr, 0.0)
    expected = EXPECTED_COUNTS.get(task.name)
    if expected is not None:
        logger.info(
            "%s: parsed %d molecules (reference count %d, dropped %d)",
            task.name, len(molecules), expected, len(dropped),
        )
    return MoleculeDataset(molecules, label_arr, mask, task, dropped)


def scaffold_split(
    ds: MoleculeDataset,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    mode: str = SCAFFOLD,
    seed: int = 0,
) -> SplitIndices:
    """Group molecules by scaffold key and fill train/valid/test without
    splitting any group.

    Deterministic mode orders groups by (size desc, key asc); random-scaffold
    mode shuffles group order with the seeded generator. Groups are assigned
    to train until it holds >= ratios[0] of the molecules, then to valid
    until train+valid hold >= ratios[0]+ratios[1], and the remainder to test.
    """
    if len(ds) == 0:
        raise DataError("cannot split an empty dataset")
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise DataError(f"ratios must be non-negative and sum to 1, got {ratios}")

    groups: dict[str, list[int]] = {}
    for i, key in enumerate(ds.scaffold_keys()):
        groups.setdefault(key.digest, []).append(i)

    if mode == SCAFFOLD:
        ordered = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0]))
    elif mode == RANDOM_SCAFFOLD:
        ordered = sorted(groups.items(), key=lambda kv: kv[0])
        rng = Rng(seed)
        rng.shuffle(ordered)
    else:
        raise DataError(f"unknown split mode {mode!r}")

    n = len(ds)
    train_target = ratios[0] * n
    valid_target = (ratios[0] + ratios[1]) * n
    train: list[int] = []
    valid: list[int] = []
    test: list[int] = []
    for _, members in ordered:
        if len(train) < train_target:
            train.extend(members)
        elif len(train) + len(valid) < valid_target:
            valid.extend(members)
        else:
            test.extend(members)

    split = SplitIndices(
        train=sorted(train), valid=sorted(valid), test=sorted(test),
        mode=mode, seed=seed,
    )
    split.validate(n)
    return split


@dataclass
class Stats:
    name: str
    n_graphs: int
    avg_nodes: float
    avg_bonds: float
    avg_directed_edges: float
    n_attributes: int
    feature_width: int
    n_tasks: int
    task_kind: str
    n_dropped: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def dataset_stats(ds: MoleculeDataset) -> Stats:
    """Summary statistics in the style of published dataset tables."""
    nodes = [m.n for m in ds.molecules]
    bonds = [len(m.bonds) for m in ds.molecules]
    return Stats(
        name=ds.task.name,
        n_graphs=len(ds),
        avg_nodes=float(np.mean(nodes)),
        avg_bonds=float(np.mean(bonds)),
        avg_directed_edges=float(2.0 * np.mean(bonds)),
        n_attributes=N_ATTRIBUTES,
        feature_width=FEATURE_WIDTH,
        n_tasks=ds.task.n_tasks,
        task_kind=ds.task.task_kind,
        n_dropped=len(ds.dropped_rows),
    )
