import pytest

from moldistill.errors import SmilesError
from moldistill.smiles import (
    AROMATIC,
    DOUBLE,
    SINGLE,
    edge_text,
    parse_smiles,
    total_h,
)


def test_methane():
    mol = parse_smiles("C")
    assert mol.n == 1
    assert mol.atoms[0].element == 6
    assert mol.bonds == []
    assert mol.atoms[0].implicit_h == 4


def test_acetic_acid_bond_orders():
    mol = parse_smiles("CC(=O)O")
    assert mol.n == 4
    orders = sorted(order for _, _, order in mol.bonds)
    assert orders == sorted([SINGLE, DOUBLE, SINGLE])
    assert len(mol.bonds) == 3


def test_benzene():
    mol = parse_smiles("c1ccccc1")
    assert mol.n == 6
    assert len(mol.bonds) == 6
    assert all(order == AROMATIC for _, _, order in mol.bonds)
    for atom in mol.atoms:
        assert atom.aromatic
        assert atom.heavy_degree == 2
        assert atom.in_ring
        assert atom.implicit_h == 1


def test_unclosed_ring_is_error():
    with pytest.raises(SmilesError) as err:
        parse_smiles("C1CC")
    assert "ring closure" in str(err.value)
    assert err.value.offset == 1


def test_unbalanced_parens():
    with pytest.raises(SmilesError):
        parse_smiles("CC(C")
    with pytest.raises(SmilesError):
        parse_smiles("CC)C")


def test_unknown_element_offset():
    with pytest.raises(SmilesError) as err:
        parse_smiles("CCQ")
    assert err.value.offset == 2


def test_bracket_atom_fields():
    mol = parse_smiles("[13CH3-]")
    atom = mol.atoms[0]
    assert atom.isotope == 13
    assert atom.explicit_h == 3
    assert atom.formal_charge == -1
    assert atom.implicit_h == 0


def test_bracket_charge_forms():
    assert parse_smiles("[NH2+]").atoms[0].formal_charge == 1
    assert parse_smiles("[O-2]").atoms[0].formal_charge == -2
    assert parse_smiles("[Fe++]").atoms[0].formal_charge == 2
    assert parse_smiles("[nH]").atoms[0].aromatic


def test_chirality_tags():
    mol = parse_smiles("N[C@@H](C)C(=O)O")
    assert mol.atoms[1].chirality == "cw"
    mol = parse_smiles("N[C@H](C)C(=O)O")
    assert mol.atoms[1].chirality == "ccw"


def test_two_letter_elements():
    mol = parse_smiles("ClCBr")
    assert [a.symbol for a in mol.atoms] == ["Cl", "C", "Br"]
    assert mol.atoms[0].element == 17
    assert mol.atoms[2].element == 35


def test_ring_closure_percent_and_reuse():
    mol = parse_smiles("C%12CC%12")  # two-digit ring number
    assert len(mol.bonds) == 3
    # a digit may be reused once closed: two cyclopropanes joined by a bond
    mol = parse_smiles("C1CC1C1CC1")
    assert len(mol.bonds) == 7


def test_dot_separated_fragments():
    mol = parse_smiles("CC(=O)O.[Na+]")
    assert mol.n == 5
    assert len(mol.bonds) == 3
    assert mol.atoms[4].symbol == "Na"


def test_directional_bonds_become_single():
    mol = parse_smiles("C/C=C/C")
    orders = [order for _, _, order in mol.bonds]
    assert orders.count(SINGLE) == 2
    assert orders.count(DOUBLE) == 1


def test_implicit_h_valence_table():
    # N 3, O 2, S 2, P 3, halogen 1
    assert parse_smiles("N").atoms[0].implicit_h == 3
    assert parse_smiles("O").atoms[0].implicit_h == 2
    assert parse_smiles("S").atoms[0].implicit_h == 2
    assert parse_smiles("P").atoms[0].implicit_h == 3
    assert parse_smiles("I").atoms[0].implicit_h == 1
    # sulfate-style S exercises the 2/4/6 ladder
    mol = parse_smiles("OS(=O)(=O)O")
    assert mol.atoms[1].implicit_h == 0


def test_total_h_counts_explicit_h_nodes():
    mol = parse_smiles("[H]O[H]")
    assert total_h(mol, 1) == 2
    assert mol.atoms[1].implicit_h == 0


def test_fused_ring_membership():
    mol = parse_smiles("c1ccc2ccccc2c1")  # naphthalene
    assert all(a.in_ring for a in mol.atoms)
    mol = parse_smiles("CCc1ccccc1")
    assert [a.in_ring for a in mol.atoms] == [False, False] + [True] * 6


def test_aromatic_bond_requires_aromatic_atoms():
    with pytest.raises(SmilesError):
        parse_smiles("C:C")


def test_atom_count_matches_atom_tokens():
    cases = {
        "CC(=O)Oc1ccccc1C(=O)O": 13,             # aspirin
        "CN1C=NC2=C1C(=O)N(C)C(=O)N2C": 14,      # caffeine, uppercase ring
        "[Na+].[Cl-]": 2,
    }
    for smiles, count in cases.items():
        assert parse_smiles(smiles).n == count


def test_edge_text_format():
    assert edge_text(parse_smiles("CO")) == "Atom 0 (C) - Atom 1 (O): SINGLE"
    assert edge_text(parse_smiles("C=O")) == "Atom 0 (C) - Atom 1 (O): DOUBLE"
    lines = edge_text(parse_smiles("c1ccccc1")).split("\n")
    assert len(lines) == 6
    assert all(line.endswith("AROMATIC") for line in lines)


def test_edge_text_deterministic():
    mol = parse_smiles("CC(=O)Oc1ccccc1C(=O)O")
    assert edge_text(mol) == edge_text(mol)
    assert edge_text(mol) == edge_text(parse_smiles("CC(=O)Oc1ccccc1C(=O)O"))


def test_parse_is_pure():
    # parsing the same text twice yields structurally identical graphs
    a = parse_smiles("S1(=O)CC1")
    b = parse_smiles("S1(=O)CC1")
    assert a.bonds == b.bonds
    assert [vars(x) for x in a.atoms] == [vars(x) for x in b.atoms]


def test_drug_like_strings_parse_clean():
    pool = [
        "CC(C)Cc1ccc(cc1)C(C)C(=O)O",                     # ibuprofen
        "CC(=O)Nc1ccc(O)cc1",                             # paracetamol
        "OC(=O)c1ccccc1O",                                # salicylic acid
        "Clc1ccccc1",                                     # chlorobenzene
        "C1CCC(CC1)N",                                    # cyclohexylamine
        "N[C@@H](Cc1ccc(O)cc1)C(=O)O",                    # tyrosine
        "O=C(O)CCCCC(=O)O",                               # adipic acid
        "c1ccc2c(c1)cccc2O",                              # naphthol
    ]
    for smiles in pool:
        mol = parse_smiles(smiles)
        mol.validate()
        assert mol.n > 0
        for i, atom in enumerate(mol.atoms):
            incident = sum(1 for a, b, _ in mol.bonds if i in (a, b))
            assert atom.heavy_degree == incident  # no explicit H nodes here
