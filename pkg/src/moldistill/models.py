"""The three parametric models: GCN teacher, student MLP, and projection heads.

Both graph models share the same parameter shape: three hidden layers of
width 32 by default, ReLU between layers (none after the last), mean pooling
over atoms, then a linear prediction head mapping the pooled vector to one
logit per task (classification) or a single value (regression). The GCN
additionally multiplies by the symmetric-normalized adjacency with self
loops before each linear layer; the MLP ignores graph structure entirely,
which is what makes it cheap at inference time.

Projection heads map student and teacher representations into a shared
latent space for representation distillation. Teacher-side maps default to
frozen random orthogonal matrices; training all three jointly admits a
collapse to zero, so only the student-side map is trainable unless
explicitly configured otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import SparseMatrix, Tensor, matmul, relu, segment_mean, spmm
from .data import MoleculeDataset
from .rng import Rng
from .smiles import MolGraph

DEFAULT_HIDDEN = 32
DEFAULT_LAYERS = 3
DEFAULT_LATENT = 32


def normalize_adjacency(mol: MolGraph) -> SparseMatrix:
    """D^-1/2 (A + I) D^-1/2 for one molecule."""
    n = mol.n
    degree = np.zeros(n)
    for a, b, _ in mol.bonds:
        degree[a] += 1
        degree[b] += 1
    inv_sqrt = 1.0 / np.sqrt(degree + 1.0)
    rows, cols, vals = [], [], []
    for i in range(n):
        rows.append(i)
        cols.append(i)
        vals.append(inv_sqrt[i] * inv_sqrt[i])
    for a, b, _ in mol.bonds:
        w = inv_sqrt[a] * inv_sqrt[b]
        rows.extend([a, b])
        cols.extend([b, a])
        vals.extend([w, w])
    return SparseMatrix.from_coo(rows, cols, vals, (n, n))


@dataclass
class GraphBatch:
    """A stack of molecules: features, segment ids, block-diagonal adjacency."""

    features: np.ndarray          # (total_atoms, F)
    graph_ids: np.ndarray         # (total_atoms,) sorted
    adjacency: SparseMatrix       # block diagonal, total_atoms square
    labels: np.ndarray            # (n_graphs, n_tasks)
    mask: np.ndarray              # (n_graphs, n_tasks) bool
    indices: np.ndarray           # dataset indices of the graphs, in batch order

    @property
    def n_graphs(self) -> int:
        return len(self.indices)


def make_batch(ds: MoleculeDataset, indices) -> GraphBatch:
    indices = np.asarray(indices, dtype=np.int64)
    feats = [ds.feature_rows(int(i)) for i in indices]
    blocks = [normalize_adjacency(ds.molecules[int(i)]) for i in indices]
    graph_ids = np.concatenate(
        [np.full(f.shape[0], g, dtype=np.int64) for g, f in enumerate(feats)]
    )
    return GraphBatch(
        features=np.concatenate(feats, axis=0),
        graph_ids=graph_ids,
        adjacency=SparseMatrix.block_diag(blocks),
        labels=ds.labels[indices],
        mask=ds.mask[indices],
        indices=indices,
    )


class _LayeredModel:
    """Shared structure of the GCN and MLP: named parameter tensors."""

    kind = "model"

    def __init__(self, weights: list[Tensor], biases: list[Tensor],
                 head_w: Tensor, head_b: Tensor):
        self.weights = weights
        self.biases = biases
        self.head_w = head_w
        self.head_b = head_b

    @classmethod
    def init(cls, f_in: int, d_out: int, rng: Rng,
             hidden: int = DEFAULT_HIDDEN, layers: int = DEFAULT_LAYERS):
        """Glorot-uniform weights, zero biases, deterministic per (config, seed)."""
        if f_in <= 0 or d_out <= 0 or hidden <= 0 or layers <= 0:
            raise ValueError("model widths must be positive")
        widths = [f_in] + [hidden] * layers
        weights, biases = [], []
        for i in range(layers):
            weights.append(Tensor(rng.glorot_uniform(widths[i], widths[i + 1]),
                                  requires_grad=True))
            biases.append(Tensor(np.zeros(widths[i + 1]), requires_grad=True))
        head_w = Tensor(rng.glorot_uniform(hidden, d_out), requires_grad=True)
        head_b = Tensor(np.zeros(d_out), requires_grad=True)
        return cls(weights, biases, head_w, head_b)

    @property
    def parameters(self) -> list[Tensor]:
        return [*self.weights, *self.biases, self.head_w, self.head_b]

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"layer{i}/w"] = w
            out[f"layer{i}/b"] = b
        out["head/w"] = self.head_w
        out["head/b"] = self.head_b
        return out

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, v in self.named_parameters().items():
            if k not in state:
                raise KeyError(f"missing parameter {k}")
            if state[k].shape != v.data.shape:
                raise ValueError(f"shape mismatch for {k}")
            v.data = state[k].astype(np.float64).copy()

    def _propagate(self, batch: GraphBatch, use_adjacency: bool):
        if batch.features.shape[1] != self.weights[0].shape[0]:
            raise ValueError(
                f"feature width {batch.features.shape[1]} does not match "
                f"model input width {self.weights[0].shape[0]}"
            )
        h = Tensor(batch.features)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if use_adjacency:
                h = spmm(batch.adjacency, h)
            h = matmul(h, w) + b
            if i != last:
                h = relu(h)
        pooled = segment_mean(h, batch.graph_ids, batch.n_graphs)
        logits = matmul(pooled, self.head_w) + self.head_b
        return pooled, logits


class Gcn(_LayeredModel):
    """Graph-convolutional teacher: propagate, pool, predict."""

    kind = "gcn"

    def forward(self, batch: GraphBatch) -> tuple[Tensor, Tensor]:
        return self._propagate(batch, use_adjacency=True)


class Mlp(_LayeredModel):
    """Structure-free student: per-atom MLP, pool, predict."""

    kind = "mlp"

    def forward(self, batch: GraphBatch) -> tuple[Tensor, Tensor]:
        return self._propagate(batch, use_adjacency=False)


def parameter_count_formula(f_in: int, hidden: int, layers: int, d_out: int) -> int:
    """Closed-form parameter count for either model."""
    total = f_in * hidden + hidden
    for _ in range(layers - 1):
        total += hidden * hidden + hidden
    total += hidden * d_out + d_out
    return total


def _random_orthogonal(rng: Rng, n_in: int, n_out: int) -> np.ndarray:
    """(n_in, n_out) map with orthonormal columns (n_in >= n_out) or rows."""
    gauss = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(gauss)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0  # fix QR sign ambiguity for determinism
    return q * signs if n_in >= n_out else (q * signs).T


@dataclass
class ProjectionHeads:
    """Maps into the shared latent space used by representation distillation."""

    u_mlp: Tensor
    u_lm: Tensor
    u_gnn: Tensor
    teacher_heads_trainable: bool = False

    @classmethod
    def init(cls, hidden: int, lm_dim: int, rng: Rng,
             latent: int = DEFAULT_LATENT,
             teacher_heads_trainable: bool = False) -> "ProjectionHeads":
        if hidden <= 0 or lm_dim <= 0 or latent <= 0:
            raise ValueError("projection widths must be positive")
        u_mlp = Tensor(rng.glorot_uniform(hidden, latent), requires_grad=True)
        u_lm = Tensor(_random_orthogonal(rng, lm_dim, latent),
                      requires_grad=teacher_heads_trainable)
        u_gnn = Tensor(_random_orthogonal(rng, hidden, latent),
                       requires_grad=teacher_heads_trainable)
        return cls(u_mlp, u_lm, u_gnn, teacher_heads_trainable)

    @property
    def parameters(self) -> list[Tensor]:
        out = [self.u_mlp]
        if self.teacher_heads_trainable:
            out += [self.u_lm, self.u_gnn]
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {
            "proj/u_mlp": self.u_mlp.data.copy(),
            "proj/u_lm": self.u_lm.data.copy(),
            "proj/u_gnn": self.u_gnn.data.copy(),
        }
