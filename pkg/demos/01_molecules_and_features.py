"""Parse SMILES into graphs and inspect atoms, features, and scaffolds.

Run:  python3 demos/01_molecules_and_features.py
"""

from moldistill.featurize import FEATURE_BLOCKS, FEATURE_WIDTH, featurize
from moldistill.scaffold import molecule_scaffold_key, murcko_scaffold
from moldistill.smiles import edge_text, parse_smiles

ASPIRIN = "CC(=O)Oc1ccccc1C(=O)O"

mol = parse_smiles(ASPIRIN)
print(f"aspirin: {mol.n} atoms, {len(mol.bonds)} bonds")
for i, atom in enumerate(mol.atoms[:5]):
    print(f"  atom {i}: {atom.symbol}, degree {atom.heavy_degree}, "
          f"H {atom.implicit_h}, aromatic {atom.aromatic}, ring {atom.in_ring}")

print("\nbond list as prompt text:")
print(edge_text(mol))

features = featurize(mol)
print(f"\nfeature matrix: {features.values.shape} "
      f"({len(FEATURE_BLOCKS)} one-hot blocks, total width {FEATURE_WIDTH})")
for name, choices, misc in FEATURE_BLOCKS:
    width = len(choices) + int(misc)
    print(f"  {name:<18} {width} columns")

scaffold = murcko_scaffold(mol)
print(f"\nscaffold of aspirin: {scaffold.n} atoms "
      f"(the benzene core; both side chains pruned)")
print(f"scaffold key: {molecule_scaffold_key(mol).digest}")
print(f"toluene shares it: "
      f"{molecule_scaffold_key(parse_smiles('Cc1ccccc1')) == molecule_scaffold_key(mol)}")
print(f"hexane is acyclic -> sentinel: "
      f"{molecule_scaffold_key(parse_smiles('CCCCCC')).is_empty}")
