import numpy as np
import pytest

from moldistill.autodiff import SparseMatrix
from moldistill.featurize import FEATURE_WIDTH
from moldistill.models import (
    Gcn,
    GraphBatch,
    Mlp,
    ProjectionHeads,
    make_batch,
    normalize_adjacency,
    parameter_count_formula,
)
from moldistill.rng import Rng
from moldistill.smiles import MolGraph, parse_smiles


def batch_of(ds, idxs):
    return make_batch(ds, idxs)


def test_normalize_adjacency_single_atom():
    a = normalize_adjacency(parse_smiles("C"))
    assert np.allclose(a.to_dense(), [[1.0]])


def test_normalize_adjacency_two_node_path():
    a = normalize_adjacency(parse_smiles("CC"))
    assert np.allclose(a.to_dense(), 0.5 * np.ones((2, 2)))


def test_normalize_adjacency_triangle():
    a = normalize_adjacency(parse_smiles("C1CC1"))
    assert np.allclose(a.to_dense(), np.ones((3, 3)) / 3.0)


def test_zero_weights_give_bias_output(synth_dataset):
    rng = Rng(0)
    model = Gcn.init(FEATURE_WIDTH, 1, rng)
    for w in model.weights:
        w.data = np.zeros_like(w.data)
    model.head_w.data = np.zeros_like(model.head_w.data)
    model.head_b.data = np.array([0.7])
    batch = batch_of(synth_dataset, [0, 1, 2])
    _, logits = model.forward(batch)
    assert np.allclose(logits.data, 0.7)


def permuted_batch(ds, idx: int, perm: list[int]) -> GraphBatch:
    """Single-molecule batch with atoms re-indexed by perm."""
    mol = ds.molecules[idx]
    feats = ds.feature_rows(idx)[np.argsort(perm)]
    atoms = [None] * mol.n
    for old, new in enumerate(perm):
        atoms[new] = mol.atoms[old]
    bonds = [(perm[a], perm[b], o) for a, b, o in mol.bonds]
    permuted = MolGraph(atoms, bonds, mol.smiles)
    return GraphBatch(
        features=feats,
        graph_ids=np.zeros(mol.n, dtype=np.int64),
        adjacency=normalize_adjacency(permuted),
        labels=ds.labels[[idx]],
        mask=ds.mask[[idx]],
        indices=np.array([idx]),
    )


def test_permutation_invariance_of_pooled_outputs(synth_dataset):
    rng = Rng(11)
    gcn = Gcn.init(FEATURE_WIDTH, 1, rng.spawn("g"))
    mlp = Mlp.init(FEATURE_WIDTH, 1, rng.spawn("m"))
    perm_rng = Rng(99)
    for idx in range(10):
        mol = synth_dataset.molecules[idx]
        base = batch_of(synth_dataset, [idx])
        h_g, y_g = gcn.forward(base)
        h_m, y_m = mlp.forward(base)
        for _ in range(10):
            perm = list(perm_rng.permutation(mol.n))
            pb = permuted_batch(synth_dataset, idx, perm)
            h_g2, y_g2 = gcn.forward(pb)
            h_m2, y_m2 = mlp.forward(pb)
            assert np.max(np.abs(h_g2.data - h_g.data)) < 1e-9
            assert np.max(np.abs(y_g2.data - y_g.data)) < 1e-9
            assert np.max(np.abs(h_m2.data - h_m.data)) < 1e-9
            assert np.max(np.abs(y_m2.data - y_m.data)) < 1e-9


def test_duplicate_molecule_rows_identical(synth_dataset):
    rng = Rng(5)
    model = Gcn.init(FEATURE_WIDTH, 1, rng)
    batch = batch_of(synth_dataset, [3, 3])
    h, y = model.forward(batch)
    assert np.allclose(h.data[0], h.data[1], atol=1e-12)
    assert np.allclose(y.data[0], y.data[1], atol=1e-12)


def test_single_atom_graph_pooling_is_identity(tmp_path):
    from moldistill.data import load_csv
    from tests.conftest import write_synth_csv

    p = tmp_path / "one.csv"
    p.write_text("smiles,y\nC,1\n")
    task = write_synth_csv(tmp_path / "unused.csv")
    ds = load_csv(p, task)
    model = Mlp.init(FEATURE_WIDTH, 1, Rng(3), hidden=8, layers=2)
    batch = batch_of(ds, [0])
    h, _ = model.forward(batch)
    # with one atom, the pooled vector equals the atom's final activation
    from moldistill.autodiff import Tensor, matmul, relu

    x = Tensor(batch.features)
    a = relu(matmul(x, model.weights[0]) + model.biases[0])
    a = matmul(a, model.weights[1]) + model.biases[1]
    assert np.array_equal(h.data, a.data)


def test_mlp_ignores_adjacency(synth_dataset):
    rng = Rng(6)
    model = Mlp.init(FEATURE_WIDTH, 1, rng)
    batch = batch_of(synth_dataset, [0, 1])
    h1, y1 = model.forward(batch)
    total = batch.features.shape[0]
    scrambled = GraphBatch(
        features=batch.features,
        graph_ids=batch.graph_ids,
        adjacency=SparseMatrix.identity(total),
        labels=batch.labels,
        mask=batch.mask,
        indices=batch.indices,
    )
    h2, y2 = model.forward(scrambled)
    assert np.array_equal(h1.data, h2.data)
    assert np.array_equal(y1.data, y2.data)


def test_gcn_with_identity_adjacency_equals_mlp(synth_dataset):
    rng = Rng(21)
    gcn = Gcn.init(FEATURE_WIDTH, 1, rng)
    mlp = Mlp(gcn.weights, gcn.biases, gcn.head_w, gcn.head_b)
    batch = batch_of(synth_dataset, [2])
    eye = SparseMatrix.identity(batch.features.shape[0])
    batch_eye = GraphBatch(batch.features, batch.graph_ids, eye,
                           batch.labels, batch.mask, batch.indices)
    h_g, y_g = gcn.forward(batch_eye)
    h_m, y_m = mlp.forward(batch_eye)
    assert np.max(np.abs(h_g.data - h_m.data)) <= 1e-12
    assert np.max(np.abs(y_g.data - y_m.data)) <= 1e-12


def test_init_deterministic_and_glorot_bounded():
    a = Gcn.init(10, 2, Rng(123), hidden=8, layers=3)
    b = Gcn.init(10, 2, Rng(123), hidden=8, layers=3)
    for pa, pb in zip(a.parameters, b.parameters):
        assert np.array_equal(pa.data, pb.data)
    c = Gcn.init(10, 2, Rng(124), hidden=8, layers=3)
    assert any(
        not np.array_equal(pa.data, pc.data)
        for pa, pc in zip(a.parameters, c.parameters)
    )
    bound = np.sqrt(6.0 / (10 + 8))
    assert np.max(np.abs(a.weights[0].data)) <= bound


def test_parameter_count_matches_formula():
    f, h, layers, d = FEATURE_WIDTH, 32, 3, 1
    model = Gcn.init(f, d, Rng(0), hidden=h, layers=layers)
    expected = f * h + h + (h * h + h) * 2 + h * d + d
    assert model.parameter_count() == expected
    assert parameter_count_formula(f, h, layers, d) == expected
    mlp = Mlp.init(f, d, Rng(0), hidden=h, layers=layers)
    assert mlp.parameter_count() == expected


def test_init_rejects_bad_widths():
    with pytest.raises(ValueError):
        Gcn.init(0, 1, Rng(0))
    with pytest.raises(ValueError):
        Mlp.init(4, -1, Rng(0))


def test_projection_heads_orthogonal_and_frozen():
    heads = ProjectionHeads.init(hidden=32, lm_dim=256, rng=Rng(77), latent=32)
    assert heads.u_lm.requires_grad is False
    assert heads.u_gnn.requires_grad is False
    assert heads.u_mlp.requires_grad is True
    assert heads.parameters == [heads.u_mlp]
    # columns orthonormal: U^T U = I
    u = heads.u_lm.data
    assert np.allclose(u.T @ u, np.eye(32), atol=1e-10)
    g = heads.u_gnn.data
    assert np.allclose(g.T @ g, np.eye(32), atol=1e-10)


def test_projection_heads_trainable_flag():
    heads = ProjectionHeads.init(32, 256, Rng(1), teacher_heads_trainable=True)
    assert len(heads.parameters) == 3
    assert heads.u_lm.requires_grad


def test_state_dict_roundtrip(synth_dataset):
    model = Gcn.init(FEATURE_WIDTH, 1, Rng(9))
    state = model.state_dict()
    clone = Gcn.init(FEATURE_WIDTH, 1, Rng(10))
    clone.load_state_dict(state)
    batch = batch_of(synth_dataset, [0, 4])
    _, y1 = model.forward(batch)
    _, y2 = clone.forward(batch)
    assert np.array_equal(y1.data, y2.data)


def test_feature_width_mismatch_raises(synth_dataset):
    model = Gcn.init(10, 1, Rng(0))
    with pytest.raises(ValueError):
        model.forward(batch_of(synth_dataset, [0]))
