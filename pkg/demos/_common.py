"""Shared bits for the demo scripts: a synthetic molecule collection.

Molecules are assembled from ring cores and chain linkers, so the pool has
genuine scaffold diversity. Label rule: 1 when the molecule contains an
aromatic nitrogen or both fluorine and an amide, flipped for 10% of rows to
keep the task honest. Learnable from atom features alone, which is the whole
premise of the structure-free student.
"""

from pathlib import Path

from moldistill.rng import Rng

OUTPUT_DIR = Path(__file__).resolve().parent / "output"

CORES = [
    "Cc1ccccc1", "Cc1ccncc1", "CC1CCCCC1", "Cc1ccc2ccccc2c1", "CC1CCNCC1",
    "Cc1ccsc1", "Cc1ccc(F)cc1", "Cc1ccc(Cl)cc1", "CC1CCOC1", "Cc1cnc2ccccc2c1",
]
LINKS = [
    "C", "CC", "CCC", "CCOC", "CC(=O)NC", "CC(C)C", "CCSC", "CCN(C)C",
    "CC(F)(F)C", "CC(=O)C",
]


def build_pool(n: int = 240, seed: int = 7) -> list[tuple[str, int]]:
    rng = Rng(seed)
    pool = []
    for _ in range(n):
        n_frag = 2 + rng.integers(3)
        parts = []
        for j in range(n_frag):
            source = CORES if j % 2 == 0 else LINKS
            parts.append(source[rng.integers(len(source))])
        smiles = "".join(parts)
        active = ("n" in smiles) or ("F" in smiles and "C(=O)N" in smiles)
        label = int(active)
        if rng.random() < 0.10:
            label = 1 - label
        pool.append((smiles, label))
    return pool


def write_pool_csv(path: Path, n: int = 240, seed: int = 7) -> None:
    lines = ["smiles,y"] + [f"{s},{y}" for s, y in build_pool(n, seed)]
    path.write_text("\n".join(lines) + "\n")
