"""Render 2D structure diagrams as SVG and PNG.

Run:  python3 demos/02_depiction.py
Outputs land in demos/output/.
"""

from _common import OUTPUT_DIR

from moldistill.depict import depict, render_png
from moldistill.smiles import parse_smiles

MOLECULES = {
    "benzene": "c1ccccc1",
    "aspirin": "CC(=O)Oc1ccccc1C(=O)O",
    "caffeine": "CN1C=NC2=C1C(=O)N(C)C(=O)N2C",
    "naphthalene": "c1ccc2ccccc2c1",
    "ibuprofen": "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
}

OUTPUT_DIR.mkdir(exist_ok=True)
for name, smiles in MOLECULES.items():
    mol = parse_smiles(smiles)
    svg = depict(mol)
    (OUTPUT_DIR / f"{name}.svg").write_text(svg)
    (OUTPUT_DIR / f"{name}.png").write_bytes(render_png(mol))
    print(f"{name:<12} {mol.n:>3} atoms -> {name}.svg / {name}.png")

# determinism: rendering twice gives identical bytes
a = depict(parse_smiles(MOLECULES["aspirin"]))
b = depict(parse_smiles(MOLECULES["aspirin"]))
print(f"\nbyte-identical rerender: {a == b}")
print(f"wrote files to {OUTPUT_DIR}")
