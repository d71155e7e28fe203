"""Molecular scaffolds and scaffold identity keys.

The scaffold of a molecule is what remains after iteratively pruning
heavy atoms of degree <= 1: ring systems plus the linkers between them.
Acyclic molecules reduce to the empty graph.

Scaffold identity uses a Weisfeiler-Lehman refinement hash over
(element, aromatic, formal charge) atom labels and bond orders, rather
than canonical SMILES. Isomorphic relabelings hash identically; chirality
tags are ignored so mirror-image scaffolds share a key. All acyclic
molecules share the designated empty-scaffold sentinel key.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass

from .smiles import MolGraph, _ring_atoms

WL_ROUNDS = 3

_EMPTY_DIGEST = hashlib.sha256(b"moldistill:empty-scaffold").hexdigest()[:32]


@dataclass(frozen=True, order=True)
class ScaffoldKey:
    """Fixed-width digest identifying a scaffold up to graph isomorphism."""

    digest: str

    @property
    def is_empty(self) -> bool:
        return self.digest == _EMPTY_DIGEST


EMPTY_SCAFFOLD_KEY = ScaffoldKey(_EMPTY_DIGEST)


def murcko_scaffold(mol: MolGraph) -> MolGraph:
    """Iteratively delete heavy atoms of degree <= 1 until fixpoint."""
    keep = set(range(mol.n))
    degree = {i: 0 for i in keep}
    adj: dict[int, set[int]] = {i: set() for i in keep}
    for a, b, _ in mol.bonds:
        adj[a].add(b)
        adj[b].add(a)
    for i in keep:
        degree[i] = len(adj[i])

    frontier = [i for i in keep if degree[i] <= 1]
    while frontier:
        nxt = []
        for i in frontier:
            if i not in keep or degree[i] > 1:
                continue
            keep.discard(i)
            for j in adj[i]:
                if j in keep:
                    degree[j] -= 1
                    if degree[j] <= 1:
                        nxt.append(j)
        frontier = nxt

    index = {old: new for new, old in enumerate(sorted(keep))}
    atoms = [copy.deepcopy(mol.atoms[old]) for old in sorted(keep)]
    bonds = [
        (index[a], index[b], order)
        for a, b, order in mol.bonds
        if a in keep and b in keep
    ]
    heavy = [0] * len(atoms)
    for a, b, _ in bonds:
        if atoms[b].element > 1:
            heavy[a] += 1
        if atoms[a].element > 1:
            heavy[b] += 1
    scaffold = MolGraph(atoms, bonds, smiles="")
    ring = _ring_atoms(scaffold)
    for i, atom in enumerate(atoms):
        atom.heavy_degree = heavy[i]
        atom.in_ring = i in ring
    return scaffold


def scaffold_key(mol: MolGraph) -> ScaffoldKey:
    """WL-refinement hash of a graph; empty graphs map to the sentinel key."""
    if mol.n == 0:
        return EMPTY_SCAFFOLD_KEY

    def h(data: bytes) -> bytes:
        return hashlib.sha256(data).digest()[:16]

    labels = [
        h(f"{a.element}|{int(a.aromatic)}|{a.formal_charge}".encode())
        for a in mol.atoms
    ]
    neighbors: list[list[tuple[int, str]]] = [[] for _ in range(mol.n)]
    for a, b, order in mol.bonds:
        neighbors[a].append((b, order))
        neighbors[b].append((a, order))

    for _ in range(WL_ROUNDS):
        new_labels = []
        for i in range(mol.n):
            parts = sorted(h(order.encode() + labels[j]) for j, order in neighbors[i])
            new_labels.append(h(labels[i] + b"".join(parts)))
        labels = new_labels

    digest = hashlib.sha256(b"".join(sorted(labels))).hexdigest()[:32]
    return ScaffoldKey(digest)


def molecule_scaffold_key(mol: MolGraph) -> ScaffoldKey:
    """Key of a molecule's scaffold (the grouping used for dataset splits)."""
    return scaffold_key(murcko_scaffold(mol))
