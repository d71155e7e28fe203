import numpy as np
import pytest

from moldistill.autodiff import (
    SparseMatrix,
    Tensor,
    grad,
    log,
    log_softmax,
    matmul,
    mul,
    relu,
    segment_mean,
    sigmoid,
    softplus,
    spmm,
    sqrt,
    tmean,
    tsum,
)
from moldistill.checkpoint import load_params, save_params
from moldistill.errors import NonFiniteError
from moldistill.optim import Adam, adam_update
from moldistill.rng import Rng


def central_diff(build_loss, params, step=1e-5):
    """Finite-difference oracle: perturb each entry of each parameter."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = build_loss().item()
            flat[i] = orig - step
            lo = build_loss().item()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def rel_err(a, b):
    return np.max(np.abs(a - b) / (np.abs(a) + np.abs(b) + 1e-8))


def test_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    loss = mul(x, x)
    loss.backward()
    assert x.grad == pytest.approx(6.0)


def test_constant_loss_zero_gradients():
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = Tensor(5.0) * Tensor(2.0)
    gs = grad(tsum(loss), [x])
    assert np.all(gs[0] == 0.0)


def test_two_layer_net_matches_finite_differences():
    rng = Rng(42)
    w1 = Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True)
    b1 = Tensor(rng.uniform(-1, 1, (4,)), requires_grad=True)
    w2 = Tensor(rng.uniform(-1, 1, (4, 1)), requires_grad=True)
    x = np.asarray(rng.uniform(-1, 1, (5, 3)))
    params = [w1, b1, w2]

    def build_loss():
        h = sigmoid(matmul(Tensor(x), w1) + b1)
        return tmean(matmul(h, w2))

    analytic = grad(build_loss(), params)
    numeric = central_diff(build_loss, params)
    for a, n in zip(analytic, numeric):
        assert rel_err(a, n) < 1e-4


def test_twenty_random_small_networks_gradcheck():
    for trial in range(20):
        rng = Rng(1000 + trial)
        layers = 1 + rng.integers(3)
        widths = [1 + rng.integers(8) for _ in range(layers + 1)]
        params = []
        for i in range(layers):
            params.append(Tensor(rng.uniform(-1, 1, (widths[i], widths[i + 1])),
                                 requires_grad=True))
            params.append(Tensor(rng.uniform(-0.5, 0.5, (widths[i + 1],)),
                                 requires_grad=True))
        x = np.asarray(rng.uniform(-1, 1, (4, widths[0])))

        def build_loss():
            h = Tensor(x)
            for i in range(layers):
                h = matmul(h, params[2 * i]) + params[2 * i + 1]
                if i + 1 < layers:
                    h = relu(h)
            return tmean(softplus(h))

        analytic = grad(build_loss(), params)
        numeric = central_diff(build_loss, params)
        for a, n in zip(analytic, numeric):
            assert rel_err(a, n) < 1e-4, f"trial {trial}"


def test_spmm_identity():
    h = Tensor(np.arange(6.0).reshape(3, 2))
    out = spmm(SparseMatrix.identity(3), h)
    assert np.array_equal(out.data, h.data)


def test_spmm_two_node_path():
    # normalized adjacency of a 2-node path: all entries 1/2
    a = SparseMatrix.from_coo([0, 0, 1, 1], [0, 1, 0, 1], [0.5] * 4, (2, 2))
    out = spmm(a, Tensor([[1.0], [0.0]]))
    assert np.allclose(out.data, [[0.5], [0.5]])


def test_spmm_zero_matrix():
    a = SparseMatrix(np.zeros(4, dtype=np.int64), [], [], (3, 3))
    out = spmm(a, Tensor(np.ones((3, 2))))
    assert np.all(out.data == 0.0)


def test_spmm_matches_dense_on_random_matrices():
    rng = Rng(7)
    for _ in range(50):
        n = 2 + rng.integers(8)
        m = 2 + rng.integers(8)
        dense = np.zeros((n, m))
        nnz = rng.integers(n * m) + 1
        for _ in range(nnz):
            dense[rng.integers(n), rng.integers(m)] = rng.random() * 2 - 1
        rows, cols = np.nonzero(dense)
        a = SparseMatrix.from_coo(rows, cols, dense[rows, cols], (n, m))
        h = np.asarray(rng.uniform(-1, 1, (m, 3)))
        out = spmm(a, Tensor(h))
        assert np.max(np.abs(out.data - dense @ h)) <= 1e-12


def test_spmm_gradient():
    a = SparseMatrix.from_coo([0, 1, 1], [1, 0, 1], [2.0, 3.0, 4.0], (2, 2))
    h = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)

    def build_loss():
        return tsum(spmm(a, h))

    analytic = grad(build_loss(), [h])
    numeric = central_diff(build_loss, [h])
    assert rel_err(analytic[0], numeric[0]) < 1e-6


def test_spmm_shape_mismatch():
    with pytest.raises(ValueError):
        spmm(SparseMatrix.identity(3), Tensor(np.ones((4, 2))))


def test_segment_mean_basic():
    out = segment_mean(Tensor([[2.0], [4.0], [6.0]]), [0, 0, 1], 2)
    assert np.allclose(out.data, [[3.0], [6.0]])


def test_segment_mean_identical_rows():
    z = Tensor(np.tile([1.5, -2.0], (5, 1)))
    out = segment_mean(z, [0, 0, 1, 1, 1], 2)
    assert np.allclose(out.data, np.tile([1.5, -2.0], (2, 1)))


def test_segment_mean_single_segment_is_column_mean():
    z = np.arange(12.0).reshape(4, 3)
    out = segment_mean(Tensor(z), [0, 0, 0, 0], 1)
    assert np.allclose(out.data, z.mean(axis=0, keepdims=True))


def test_segment_mean_permutation_within_segment():
    rng = Rng(5)
    z = np.asarray(rng.uniform(-1, 1, (6, 4)))
    ids = [0, 0, 0, 1, 1, 1]
    base = segment_mean(Tensor(z), ids, 2).data
    for _ in range(20):
        p1 = list(rng.permutation(3))
        p2 = [3 + int(i) for i in rng.permutation(3)]
        zp = z[p1 + p2]
        assert np.allclose(segment_mean(Tensor(zp), ids, 2).data, base)


def test_segment_mean_errors():
    with pytest.raises(ValueError):
        segment_mean(Tensor(np.ones((3, 1))), [0, 1, 0], 2)  # unsorted
    with pytest.raises(ValueError):
        segment_mean(Tensor(np.ones((2, 1))), [0, 0], 2)  # empty segment


def test_segment_mean_gradient():
    z = Tensor(np.arange(8.0).reshape(4, 2), requires_grad=True)

    def build_loss():
        return tsum(mul(segment_mean(z, [0, 0, 1, 1], 2), Tensor([[1.0, 2.0], [3.0, 4.0]])))

    analytic = grad(build_loss(), [z])
    numeric = central_diff(build_loss, [z])
    assert rel_err(analytic[0], numeric[0]) < 1e-6


def test_log_softmax_rows_normalize():
    x = Tensor([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]], requires_grad=True)
    out = log_softmax(x)
    assert np.allclose(np.exp(out.data).sum(axis=1), 1.0)

    def build_loss():
        return tmean(mul(log_softmax(x), Tensor([[1.0, -1.0, 0.5], [2.0, 0.0, 1.0]])))

    analytic = grad(build_loss(), [x])
    numeric = central_diff(build_loss, [x])
    assert rel_err(analytic[0], numeric[0]) < 1e-5


def test_backward_requires_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError):
        (x + x).backward()


def test_non_finite_raises():
    with pytest.raises(NonFiniteError):
        log(Tensor([-1.0]))
    with pytest.raises(NonFiniteError):
        sqrt(Tensor([-4.0]))


def test_reused_node_accumulates_gradient():
    x = Tensor(2.0, requires_grad=True)
    y = mul(x, x)  # x used twice
    z = y + x
    z.backward()
    assert x.grad == pytest.approx(5.0)  # 2x + 1


def test_adam_zero_gradient_no_change():
    p = Tensor([1.0, -2.0], requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad = np.zeros(2)
    before = p.data.copy()
    opt.step()
    assert np.array_equal(p.data, before)


def test_adam_first_step_hand_computed():
    # g=1, lr=0.1: m_hat = v_hat = 1 after bias correction, so the step is
    # -0.1 / (1 + eps)
    p = Tensor([0.0], requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad = np.ones(1)
    opt.step()
    assert p.data[0] == pytest.approx(-0.1, abs=1e-6)


def test_adam_deterministic():
    def run():
        p = Tensor([0.5, -0.5], requires_grad=True)
        opt = Adam([p], lr=0.01)
        for t in range(10):
            p.grad = np.array([0.1 * (t + 1), -0.2])
            opt.step()
        return p.data.copy()

    assert np.array_equal(run(), run())


def test_adam_rejects_bad_gradients():
    with pytest.raises(NonFiniteError):
        adam_update(np.ones(2), np.array([np.nan, 1.0]), np.zeros(2),
                    np.zeros(2), 1, 0.001, 0.9, 0.999, 1e-8)
    with pytest.raises(ValueError):
        adam_update(np.ones(2), np.ones(3), np.zeros(2), np.zeros(2),
                    1, 0.001, 0.9, 0.999, 1e-8)


def test_sparse_invariants_enforced():
    with pytest.raises(ValueError):
        SparseMatrix([0, 2, 1], [0, 1], [1.0, 1.0], (2, 2))  # non-monotone
    with pytest.raises(ValueError):
        SparseMatrix([0, 2], [1, 0], [1.0, 1.0], (1, 2))  # unsorted columns


def test_block_diag():
    a = SparseMatrix.identity(2)
    b = SparseMatrix.from_coo([0], [0], [3.0], (1, 1))
    blk = SparseMatrix.block_diag([a, b])
    dense = blk.to_dense()
    assert dense.shape == (3, 3)
    assert dense[2, 2] == 3.0
    assert dense[0, 0] == 1.0 and dense[1, 1] == 1.0
    assert np.count_nonzero(dense) == 3


def test_checkpoint_roundtrip(tmp_path):
    rng = Rng(3)
    params = {
        "layer0/w": np.asarray(rng.uniform(-1, 1, (4, 3))),
        "layer0/b": np.zeros(3),
        "head/w": np.asarray(rng.uniform(-1, 1, (3, 1))),
    }
    path = tmp_path / "model.ckpt"
    save_params(path, params)
    loaded = load_params(path)
    assert set(loaded) == set(params)
    for k in params:
        assert np.array_equal(loaded[k], params[k])
    manifest = (tmp_path / "model.ckpt.json").read_text()
    assert "layer0/w" in manifest
