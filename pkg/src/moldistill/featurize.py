"""Atom featurization: 9 categorical attributes, one-hot encoded per block.

Block layout (fixed order, widths include a trailing "misc" bucket unless the
attribute is boolean):

    atomic number       1..118            + misc   (119)
    chirality           none, cw, ccw     + misc     (4)
    heavy degree        0..10             + misc    (12)
    formal charge       -5..+5            + misc    (12)
    total hydrogens     0..8              + misc    (10)
    radical electrons   0..4              + misc     (6)
    hybridization       sp, sp2, sp3      + misc     (4)
    aromatic            no, yes                      (2)
    in ring             no, yes                      (2)

Total width 171. Out-of-range values land in their block's misc bucket, so
featurization is total on any parsed molecule.

Hybridization is assigned heuristically from the bond pattern: aromatic
atoms are sp2; an incident triple bond or two incident doubles gives sp;
one incident double gives sp2; otherwise organic-subset atoms are sp3 and
everything else is misc.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .smiles import (
    CHI_CCW,
    CHI_CW,
    CHI_NONE,
    DOUBLE,
    TRIPLE,
    VALENCES,
    MolGraph,
    total_h,
)

ATOMIC_NUM_CHOICES = list(range(1, 119))
CHIRALITY_CHOICES = [CHI_NONE, CHI_CW, CHI_CCW]
DEGREE_CHOICES = list(range(0, 11))
FORMAL_CHARGE_CHOICES = list(range(-5, 6))
TOTAL_H_CHOICES = list(range(0, 9))
RADICAL_CHOICES = list(range(0, 5))
HYBRIDIZATION_CHOICES = ["sp", "sp2", "sp3"]
BOOL_CHOICES = [False, True]

# (name, choices, has_misc_bucket)
FEATURE_BLOCKS = [
    ("atomic_number", ATOMIC_NUM_CHOICES, True),
    ("chirality", CHIRALITY_CHOICES, True),
    ("heavy_degree", DEGREE_CHOICES, True),
    ("formal_charge", FORMAL_CHARGE_CHOICES, True),
    ("total_h", TOTAL_H_CHOICES, True),
    ("radical_electrons", RADICAL_CHOICES, True),
    ("hybridization", HYBRIDIZATION_CHOICES, True),
    ("aromatic", BOOL_CHOICES, False),
    ("in_ring", BOOL_CHOICES, False),
]

FEATURE_WIDTH = sum(len(c) + int(m) for _, c, m in FEATURE_BLOCKS)

N_ATTRIBUTES = len(FEATURE_BLOCKS)


def block_slices() -> dict[str, slice]:
    """Column range of each one-hot block within a feature row."""
    out = {}
    start = 0
    for name, choices, misc in FEATURE_BLOCKS:
        width = len(choices) + int(misc)
        out[name] = slice(start, start + width)
        start += width
    return out


@dataclass
class FeatureMatrix:
    """Per-atom one-hot features, one row per atom."""

    values: np.ndarray  # (n_atoms, FEATURE_WIDTH) float64

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]


def _one_hot_index(value, choices, misc: bool) -> int:
    try:
        return choices.index(value)
    except ValueError:
        if not misc:
            raise
        return len(choices)


def hybridization(mol: MolGraph, i: int) -> str:
    atom = mol.atoms[i]
    if atom.aromatic:
        return "sp2"
    orders = [order for _, order in mol.neighbors(i)]
    doubles = sum(1 for o in orders if o == DOUBLE)
    if TRIPLE in orders or doubles >= 2:
        return "sp"
    if doubles == 1:
        return "sp2"
    if atom.symbol in VALENCES:
        return "sp3"
    return "misc"


def featurize(mol: MolGraph) -> FeatureMatrix:
    """One feature row per atom of ``mol``."""
    rows = np.zeros((mol.n, FEATURE_WIDTH), dtype=np.float64)
    for i, atom in enumerate(mol.atoms):
        raw = [
            atom.element,
            atom.chirality,
            atom.heavy_degree,
            atom.formal_charge,
            total_h(mol, i),
            atom.radical_electrons,
            hybridization(mol, i),
            atom.aromatic,
            atom.in_ring,
        ]
        offset = 0
        for value, (name, choices, misc) in zip(raw, FEATURE_BLOCKS):
            width = len(choices) + int(misc)
            rows[i, offset + _one_hot_index(value, choices, misc)] = 1.0
            offset += width
    return FeatureMatrix(rows)
