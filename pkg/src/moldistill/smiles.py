"""SMILES parsing into molecular graphs.

Covers the organic subset, bracket atoms (isotope, chirality, H count,
charge, atom class), branches, ring closures (including ``%nn`` and reuse),
aromatic lowercase notation, and ``.``-separated fragments. Directional
bond symbols ``/`` and ``\\`` are accepted and treated as single bonds;
atom-level chirality tags are kept, bond stereo is not modelled.

Implicit hydrogens follow the organic-subset valence table (B 3, C 4, N 3,
O 2, P 3/5, S 2/4/6, halogens 1); bracket atoms carry only their explicit H
count. Aromatic bonds count 1.5 toward an atom's bond-order sum, which
reproduces kekulized H counts on the usual aromatic systems.

Errors raise :class:`~moldistill.errors.SmilesError` with the byte offset of
the offending token.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import GraphError, SmilesError

SINGLE = "single"
DOUBLE = "double"
TRIPLE = "triple"
AROMATIC = "aromatic"

BOND_ORDERS = (SINGLE, DOUBLE, TRIPLE, AROMATIC)

CHI_NONE = "none"
CHI_CW = "cw"    # @@
CHI_CCW = "ccw"  # @

# fmt: off
ELEMENTS = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al",
    "Si", "P", "S", "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe",
    "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr",
    "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm",
    "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",
    "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn",
    "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf",
    "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds",
    "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
]
# fmt: on

ATOMIC_NUMBER = {symbol: i + 1 for i, symbol in enumerate(ELEMENTS)}

# Organic subset: atoms writable without brackets, with implicit hydrogens
# filled from this valence table.
VALENCES = {
    "B": (3,),
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

_ORGANIC_TWO = ("Cl", "Br")
_ORGANIC_ONE = set("BCNOPSFI")
_AROMATIC_ORGANIC = set("bcnops")
_AROMATIC_BRACKET = {"b", "c", "n", "o", "p", "s", "se", "as", "te"}

_BOND_CHARS = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE, ":": AROMATIC}

_BOND_VALENCE = {SINGLE: 1.0, DOUBLE: 2.0, TRIPLE: 3.0, AROMATIC: 1.5}


@dataclass
class Atom:
    """One heavy (or explicit-hydrogen) atom of a molecular graph."""

    element: int
    symbol: str
    aromatic: bool = False
    chirality: str = CHI_NONE
    formal_charge: int = 0
    explicit_h: int | None = None
    isotope: int | None = None
    radical_electrons: int = 0
    heavy_degree: int = 0
    implicit_h: int = 0
    in_ring: bool = False


@dataclass
class MolGraph:
    """Molecular graph: atoms, undirected typed bonds, and the source SMILES."""

    atoms: list[Atom]
    bonds: list[tuple[int, int, str]]
    smiles: str

    @property
    def n(self) -> int:
        return len(self.atoms)

    def neighbors(self, i: int) -> list[tuple[int, str]]:
        out = []
        for a, b, order in self.bonds:
            if a == i:
                out.append((b, order))
            elif b == i:
                out.append((a, order))
        return out

    def validate(self) -> None:
        """Check structural invariants; raises GraphError on violation."""
        n = self.n
        seen = set()
        for a, b, order in self.bonds:
            if not (0 <= a < n and 0 <= b < n):
                raise GraphError(f"bond ({a},{b}) endpoint out of range")
            if a == b:
                raise GraphError(f"self-loop on atom {a}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise GraphError(f"duplicate bond {key}")
            seen.add(key)
            if order == AROMATIC and not (
                self.atoms[a].aromatic and self.atoms[b].aromatic
            ):
                raise GraphError(f"aromatic bond {key} joins non-aromatic atoms")
        for i, atom in enumerate(self.atoms):
            incident = sum(1 for a, b, _ in self.bonds if i in (a, b))
            if atom.heavy_degree > incident:
                raise GraphError(f"atom {i} heavy_degree exceeds incident bonds")
            if atom.implicit_h < 0:
                raise GraphError(f"atom {i} negative implicit hydrogen count")


def total_h(mol: MolGraph, i: int) -> int:
    """Total hydrogen count of atom i: implicit + bracket H + explicit H nodes."""
    atom = mol.atoms[i]
    h = atom.implicit_h + (atom.explicit_h or 0)
    for j, _ in mol.neighbors(i):
        if mol.atoms[j].element == 1:
            h += 1
    return h


@dataclass
class _PendingRing:
    atom: int
    order: str | None
    offset: int


def parse_smiles(text: str) -> MolGraph:
    """Parse a SMILES string into a :class:`MolGraph`."""
    if not text:
        raise SmilesError("empty SMILES", 0)
    parser = _Parser(text)
    return parser.run()


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.atoms: list[Atom] = []
        self.bonds: list[tuple[int, int, str]] = []
        self.bond_keys: set[tuple[int, int]] = set()
        self.anchor: int | None = None
        self.branch_stack: list[tuple[int | None, int]] = []  # (anchor, offset)
        self.pending_bond: str | None = None
        self.pending_bond_offset = 0
        self.rings: dict[int, _PendingRing] = {}

    # -- character helpers -------------------------------------------------

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self) -> str:
        ch = self.peek()
        self.pos += 1
        return ch

    def fail(self, message: str, offset: int | None = None):
        raise SmilesError(message, self.pos if offset is None else offset)

    # -- main loop ---------------------------------------------------------

    def run(self) -> MolGraph:
        while self.pos < len(self.text):
            ch = self.peek()
            if ch == "[":
                self.add_atom(self.read_bracket_atom())
            elif ch.isalpha() or ch == "*":
                self.add_atom(self.read_organic_atom())
            elif ch in _BOND_CHARS:
                self.set_pending_bond(_BOND_CHARS[ch])
                self.pos += 1
            elif ch in "/\\":
                # directional single bond; direction discarded
                self.set_pending_bond(SINGLE)
                self.pos += 1
            elif ch == "(":
                if self.anchor is None:
                    self.fail("branch opened before any atom")
                self.branch_stack.append((self.anchor, self.pos))
                self.pos += 1
            elif ch == ")":
                if not self.branch_stack:
                    self.fail("unbalanced ')'")
                if self.pending_bond is not None:
                    self.fail("dangling bond symbol before ')'",
                              self.pending_bond_offset)
                self.anchor = self.branch_stack.pop()[0]
                self.pos += 1
            elif ch.isdigit():
                self.close_or_open_ring(int(ch), self.pos)
                self.pos += 1
            elif ch == "%":
                start = self.pos
                self.pos += 1
                digits = self.text[self.pos:self.pos + 2]
                if len(digits) != 2 or not digits.isdigit():
                    self.fail("'%' must be followed by two digits", start)
                self.close_or_open_ring(int(digits), start)
                self.pos += 2
            elif ch == ".":
                if self.pending_bond is not None:
                    self.fail("bond symbol before '.'", self.pending_bond_offset)
                self.anchor = None
                self.pos += 1
            elif ch.isspace():
                # trailing whitespace ends the molecule (SMILES line convention)
                if self.text[self.pos:].strip():
                    self.fail("embedded whitespace")
                break
            else:
                self.fail(f"unexpected character {ch!r}")

        if self.branch_stack:
            self.fail("unclosed '('", self.branch_stack[-1][1])
        if self.rings:
            num, pending = min(self.rings.items())
            self.fail(f"ring closure {num} never closed", pending.offset)
        if self.pending_bond is not None:
            self.fail("dangling bond symbol at end", self.pending_bond_offset)
        if not self.atoms:
            self.fail("no atoms in SMILES", 0)

        mol = MolGraph(self.atoms, self.bonds, self.text)
        _finalize(mol)
        mol.validate()
        return mol

    # -- token readers -----------------------------------------------------

    def read_organic_atom(self) -> Atom:
        start = self.pos
        two = self.text[self.pos:self.pos + 2]
        if two in _ORGANIC_TWO:
            self.pos += 2
            return Atom(element=ATOMIC_NUMBER[two], symbol=two)
        ch = self.take()
        if ch in _ORGANIC_ONE:
            return Atom(element=ATOMIC_NUMBER[ch], symbol=ch)
        if ch in _AROMATIC_ORGANIC:
            symbol = ch.upper()
            return Atom(element=ATOMIC_NUMBER[symbol], symbol=symbol, aromatic=True)
        self.fail(f"unknown element symbol {ch!r}", start)

    def read_bracket_atom(self) -> Atom:
        start = self.pos
        self.pos += 1  # consume '['
        isotope = self.read_int()

        sym_start = self.pos
        symbol = None
        aromatic = False
        two = self.text[self.pos:self.pos + 2]
        if two and two[0].islower() and two in _AROMATIC_BRACKET:
            symbol, aromatic = two.capitalize(), True
            self.pos += 2
        elif len(two) == 2 and two[0].isupper() and two[1].islower() \
                and two in ATOMIC_NUMBER:
            symbol = two
            self.pos += 2
        else:
            ch = self.peek()
            if ch and ch.isupper() and ch in ATOMIC_NUMBER:
                symbol = ch
                self.pos += 1
            elif ch and ch.islower() and ch in _AROMATIC_BRACKET:
                symbol, aromatic = ch.upper(), True
                self.pos += 1
            else:
                self.fail("unknown element symbol in bracket", sym_start)

        chirality = CHI_NONE
        if self.peek() == "@":
            self.pos += 1
            if self.peek() == "@":
                self.pos += 1
                chirality = CHI_CW
            else:
                chirality = CHI_CCW

        explicit_h = 0
        if self.peek() == "H":
            self.pos += 1
            count = self.read_int()
            explicit_h = 1 if count is None else count

        charge = 0
        if self.peek() in "+-":
            sign = 1 if self.take() == "+" else -1
            count = self.read_int()
            if count is None:
                count = 1
                while self.peek() == ("+" if sign > 0 else "-"):
                    self.take()
                    count += 1
            charge = sign * count

        if self.peek() == ":":
            self.pos += 1
            if self.read_int() is None:
                self.fail("atom class ':' must be followed by digits")

        if self.peek() != "]":
            self.fail("expected ']'", start)
        self.pos += 1

        return Atom(
            element=ATOMIC_NUMBER[symbol],
            symbol=symbol,
            aromatic=aromatic,
            chirality=chirality,
            formal_charge=charge,
            explicit_h=explicit_h,
            isotope=isotope,
        )

    def read_int(self) -> int | None:
        start = self.pos
        while self.peek().isdigit():
            self.pos += 1
        if self.pos == start:
            return None
        return int(self.text[start:self.pos])

    # -- graph assembly ----------------------------------------------------

    def set_pending_bond(self, order: str):
        if self.pending_bond is not None:
            self.fail("two consecutive bond symbols")
        if self.anchor is None:
            self.fail("bond symbol before any atom")
        self.pending_bond = order
        self.pending_bond_offset = self.pos

    def add_atom(self, atom: Atom):
        idx = len(self.atoms)
        self.atoms.append(atom)
        if self.anchor is not None:
            order = self.pending_bond
            if order is None:
                order = self.default_order(self.anchor, idx)
            self.add_bond(self.anchor, idx, order, self.pos)
        elif self.pending_bond is not None:
            self.fail("bond symbol with no preceding atom",
                      self.pending_bond_offset)
        self.pending_bond = None
        self.anchor = idx

    def default_order(self, a: int, b: int) -> str:
        if self.atoms[a].aromatic and self.atoms[b].aromatic:
            return AROMATIC
        return SINGLE

    def add_bond(self, a: int, b: int, order: str, offset: int):
        if a == b:
            self.fail("ring closure bonds an atom to itself", offset)
        key = (min(a, b), max(a, b))
        if key in self.bond_keys:
            self.fail(f"duplicate bond between atoms {a} and {b}", offset)
        if order == AROMATIC and not (
            self.atoms[a].aromatic and self.atoms[b].aromatic
        ):
            self.fail("aromatic bond between non-aromatic atoms", offset)
        self.bond_keys.add(key)
        self.bonds.append((a, b, order))

    def close_or_open_ring(self, num: int, offset: int):
        if self.anchor is None:
            self.fail("ring closure digit before any atom", offset)
        if num in self.rings:
            pending = self.rings.pop(num)
            order = self.pending_bond
            if order is not None and pending.order is not None and order != pending.order:
                self.fail(f"conflicting bond orders for ring closure {num}", offset)
            if order is None:
                order = pending.order
            if order is None:
                order = self.default_order(pending.atom, self.anchor)
            self.add_bond(pending.atom, self.anchor, order, offset)
            self.pending_bond = None
        else:
            self.rings[num] = _PendingRing(self.anchor, self.pending_bond, offset)
            self.pending_bond = None


def _finalize(mol: MolGraph) -> None:
    """Fill the derived atom fields: degree, implicit H, radicals, ring flags."""
    incident: list[list[str]] = [[] for _ in range(mol.n)]
    heavy = [0] * mol.n
    for a, b, order in mol.bonds:
        incident[a].append(order)
        incident[b].append(order)
        if mol.atoms[b].element > 1:
            heavy[a] += 1
        if mol.atoms[a].element > 1:
            heavy[b] += 1

    ring_atoms = _ring_atoms(mol)

    for i, atom in enumerate(mol.atoms):
        atom.heavy_degree = heavy[i]
        atom.in_ring = i in ring_atoms
        bond_sum = sum(_BOND_VALENCE[o] for o in incident[i])
        if atom.explicit_h is not None:
            # bracket atom: explicit H only
            atom.implicit_h = 0
            if atom.formal_charge == 0 and atom.symbol in VALENCES:
                used = bond_sum + atom.explicit_h
                table = VALENCES[atom.symbol]
                fits = [v for v in table if v >= used]
                atom.radical_electrons = int(fits[0] - used) if fits else 0
        else:
            table = VALENCES.get(atom.symbol)
            if table is None:
                atom.implicit_h = 0
            else:
                need = math.ceil(bond_sum)
                fits = [v for v in table if v >= need]
                atom.implicit_h = int(fits[0] - need) if fits else 0


def _ring_atoms(mol: MolGraph) -> set[int]:
    """Atoms lying on a cycle = endpoints of non-bridge edges (iterative Tarjan)."""
    n = mol.n
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for e, (a, b, _) in enumerate(mol.bonds):
        adj[a].append((b, e))
        adj[b].append((a, e))

    disc = [-1] * n
    low = [0] * n
    bridges = set()
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        stack = [(root, -1, iter(adj[root]))]
        disc[root] = low[root] = timer
        timer += 1
        while stack:
            node, parent_edge, it = stack[-1]
            advanced = False
            for nbr, edge in it:
                if edge == parent_edge:
                    continue
                if disc[nbr] == -1:
                    disc[nbr] = low[nbr] = timer
                    timer += 1
                    stack.append((nbr, edge, iter(adj[nbr])))
                    advanced = True
                    break
                low[node] = min(low[node], disc[nbr])
            if not advanced:
                stack.pop()
                if stack:
                    pnode = stack[-1][0]
                    low[pnode] = min(low[pnode], low[node])
                    if low[node] > disc[pnode]:
                        bridges.add(parent_edge)

    atoms = set()
    for e, (a, b, _) in enumerate(mol.bonds):
        if e not in bridges:
            atoms.add(a)
            atoms.add(b)
    return atoms


def edge_text(mol: MolGraph) -> str:
    """Bond list as text, one ``Atom a (X) - Atom b (Y): ORDER`` line per bond."""
    lines = []
    for a, b, order in sorted(
        (min(a, b), max(a, b), order) for a, b, order in mol.bonds
    ):
        lines.append(
            f"Atom {a} ({mol.atoms[a].symbol}) - Atom {b} ({mol.atoms[b].symbol}): "
            f"{order.upper()}"
        )
    return "\n".join(lines)
