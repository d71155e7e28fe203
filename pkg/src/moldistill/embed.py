"""Text embedding of teacher responses, and the trainable prediction head.

The teacher's textual analysis and the molecule's SMILES string are embedded
together (``response ++ separator ++ smiles``) so both the interpretive and
the structural signal reach the vector. Three providers:

* ``hashed-trigram``: deterministic character-trigram feature hashing into
  256 buckets, L2-normalized. No network, no model files, identical bytes on
  every platform; the default for desk-scale runs.
* ``file``: precomputed vectors, either a JSON object ``{index: [floats]}``
  or a raw little-endian float32 matrix with a JSON manifest.
* ``remote``: an embeddings HTTP endpoint (OpenAI-compatible wire format).

The prediction head is a linear map (optionally one hidden layer) trained on
the frozen embeddings with the task loss, early-stopped on the validation
metric.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor, matmul, relu
from .data import CLASSIFICATION, MoleculeDataset, SplitIndices
from .errors import DataError, NetworkError
from .llm import LlmResponse
from .metrics import AucUndefinedError, rmse, rocauc
from .optim import Adam
from .rng import Rng, derive_seed

EMBED_SEPARATOR = "\n\n---\n\n"
TRIGRAM_DIM = 256
TRIGRAM_PROVIDER_ID = "hashed-trigram-v1"


@dataclass
class TextEmbedding:
    vector: np.ndarray
    provider_id: str
    source_digest: str


class HashedTrigramEmbedder:
    """Character-trigram feature hashing; pure function of the input text."""

    provider_id = TRIGRAM_PROVIDER_ID
    dim = TRIGRAM_DIM

    def embed(self, text: str) -> np.ndarray:
        padded = "\x02" + text + "\x03"
        counts = np.zeros(self.dim, dtype=np.float64)
        if len(padded) < 3:
            counts[zlib.crc32(padded.encode()) % self.dim] += 1.0
        for i in range(len(padded) - 2):
            bucket = zlib.crc32(padded[i:i + 3].encode()) % self.dim
            counts[bucket] += 1.0
        norm = np.linalg.norm(counts)
        return counts / norm if norm > 0 else counts


class FileEmbedder:
    """Embeddings precomputed elsewhere, looked up by molecule index."""

    def __init__(self, matrix: np.ndarray, provider_id: str):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.provider_id = provider_id
        self.dim = self.matrix.shape[1]

    @classmethod
    def from_file(cls, path: str | Path) -> "FileEmbedder":
        path = Path(path)
        if not path.exists():
            raise DataError(f"embedding file not found: {path}")
        if path.suffix == ".json":
            obj = json.loads(path.read_text())
            if "shape" in obj:  # manifest pointing at a binary matrix
                return cls._from_manifest(path, obj)
            indices = sorted(int(k) for k in obj)
            if indices != list(range(len(indices))):
                raise DataError("embedding JSON must cover indices 0..n-1")
            matrix = np.asarray([obj[str(i)] for i in indices], dtype=np.float64)
            return cls(matrix, f"file:{path.name}")
        manifest_path = Path(str(path) + ".json")
        if not manifest_path.exists():
            raise DataError(f"missing manifest {manifest_path}")
        return cls._from_manifest(manifest_path, json.loads(manifest_path.read_text()),
                                  binary_path=path)

    @classmethod
    def _from_manifest(cls, manifest_path: Path, manifest: dict,
                       binary_path: Path | None = None) -> "FileEmbedder":
        shape = tuple(manifest["shape"])
        if binary_path is None:
            binary_path = manifest_path.parent / manifest["file"]
        raw = np.fromfile(binary_path, dtype="<f4")
        if raw.size != shape[0] * shape[1]:
            raise DataError(
                f"embedding matrix size {raw.size} != manifest shape {shape}"
            )
        provider = manifest.get("provider_id", f"file:{binary_path.name}")
        return cls(raw.reshape(shape).astype(np.float64), provider)

    def embed_index(self, index: int) -> np.ndarray:
        if not 0 <= index < len(self.matrix):
            raise DataError(f"no embedding for molecule index {index}")
        return self.matrix[index]


def save_embedding_matrix(path: str | Path, matrix: np.ndarray,
                          provider_id: str) -> None:
    """Binary f32 matrix + JSON manifest, the on-disk embedding format."""
    path = Path(path)
    arr = np.ascontiguousarray(matrix, dtype="<f4")
    arr.tofile(path)
    manifest = {
        "file": path.name,
        "shape": list(arr.shape),
        "dtype": "float32",
        "provider_id": provider_id,
    }
    Path(str(path) + ".json").write_text(json.dumps(manifest, indent=2))


class RemoteEmbedder:
    """OpenAI-compatible embeddings endpoint."""

    def __init__(self, endpoint: str, model: str, dim: int,
                 api_key_env: str = "MOLDISTILL_API_KEY",
                 timeout_s: float = 60.0):
        self.endpoint = endpoint
        self.model = model
        self.dim = dim
        self.provider_id = f"remote:{model}"
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s

    def embed(self, text: str) -> np.ndarray:
        import requests

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = requests.post(
                self.endpoint,
                json={"model": self.model, "input": [text]},
                headers=headers,
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise NetworkError(f"embedding call failed: {exc}")
        if resp.status_code != 200:
            raise NetworkError(f"embedding endpoint returned {resp.status_code}")
        vector = np.asarray(resp.json()["data"][0]["embedding"], dtype=np.float64)
        if vector.shape != (self.dim,):
            raise DataError(
                f"provider returned width {vector.shape}, registry says {self.dim}"
            )
        return vector


def embed_text(response: LlmResponse, smiles: str, provider,
               index: int | None = None) -> TextEmbedding:
    """Embed ``response.text ++ separator ++ smiles`` with the given provider."""
    if isinstance(provider, FileEmbedder):
        if index is None:
            raise DataError("file provider needs the molecule index")
        vector = provider.embed_index(index)
    else:
        vector = provider.embed(response.text + EMBED_SEPARATOR + smiles)
    if not np.all(np.isfinite(vector)):
        raise DataError("provider produced non-finite embedding values")
    if vector.shape != (provider.dim,):
        raise DataError(
            f"embedding width {vector.shape} != provider dim {provider.dim}"
        )
    return TextEmbedding(
        vector=vector,
        provider_id=provider.provider_id,
        source_digest=response.prompt_digest,
    )


@dataclass
class LmHead:
    """Linear (optionally one hidden layer) head over frozen embeddings."""

    weights: list[Tensor]
    biases: list[Tensor]

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: Rng, hidden: int = 0) -> "LmHead":
        widths = [in_dim] + ([hidden] if hidden else []) + [out_dim]
        weights, biases = [], []
        for i in range(len(widths) - 1):
            if hidden:
                w = rng.glorot_uniform(widths[i], widths[i + 1])
            else:
                # a lone linear layer has no symmetry to break; zero start
                # makes the zero-epoch predictions exactly the bias
                w = np.zeros((widths[i], widths[i + 1]))
            weights.append(Tensor(w, requires_grad=True))
            biases.append(Tensor(np.zeros(widths[i + 1]), requires_grad=True))
        return cls(weights, biases)

    @property
    def parameters(self) -> list[Tensor]:
        return [*self.weights, *self.biases]

    def forward(self, x) -> Tensor:
        h = x if isinstance(x, Tensor) else Tensor(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = matmul(h, w) + b
            if i != last:
                h = relu(h)
        return h

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"lm_head/layer{i}/w"] = w.data.copy()
            out[f"lm_head/layer{i}/b"] = b.data.copy()
        return out


def train_lm_head(
    embeddings: np.ndarray,
    ds: MoleculeDataset,
    split: SplitIndices,
    seed: int = 0,
    epochs: int = 100,
    batch_size: int = 64,
    lr: float = 1e-3,
    patience: int = 20,
    hidden: int = 0,
) -> tuple[LmHead, np.ndarray]:
    """Fit the head on the train split; returns it plus predictions for all
    molecules (logits for classification, values for regression)."""
    from .distill import pred_loss  # shared loss definitions

    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.shape[0] != len(ds):
        raise DataError("need one embedding per molecule")
    n_tasks = ds.task.n_tasks
    head = LmHead.init(embeddings.shape[1], n_tasks, Rng(derive_seed(seed, "lm-head-init")),
                       hidden=hidden)
    opt = Adam(head.parameters, lr=lr)
    shuffle_rng = Rng(derive_seed(seed, "lm-head-batches"))
    train_idx = np.asarray(split.train, dtype=np.int64)
    is_classification = ds.task.task_kind == CLASSIFICATION

    if is_classification:
        train_labels = ds.labels[train_idx]
        train_mask = ds.mask[train_idx]
        for t in range(n_tasks):
            present = np.unique(train_labels[train_mask[:, t], t])
            if len(present) < 2:
                import logging

                logging.getLogger(__name__).warning(
                    "task %d has a single class in train; AUC will be undefined", t
                )

    def val_metric() -> float:
        idx = np.asarray(split.valid, dtype=np.int64)
        if len(idx) == 0:
            idx = train_idx
        logits = head.forward(embeddings[idx]).data
        labels, mask = ds.labels[idx], ds.mask[idx]
        values = []
        for t in range(n_tasks):
            m = mask[:, t]
            if is_classification:
                try:
                    values.append(rocauc(logits[m, t], labels[m, t].astype(int)))
                except AucUndefinedError:
                    continue
            else:
                if m.sum():
                    values.append(rmse(logits[m, t], labels[m, t]))
        if not values:
            return 0.0 if is_classification else float("inf")
        return float(np.mean(values))

    better = (lambda a, b: a > b) if is_classification else (lambda a, b: a < b)
    best_state = head.state_dict()
    best_val = val_metric()
    bad = 0
    for _ in range(epochs):
        order = shuffle_rng.permutation(len(train_idx))
        for start in range(0, len(order), batch_size):
            rows = train_idx[order[start:start + batch_size]]
            x = embeddings[rows]
            logits = head.forward(x)
            loss = pred_loss(logits, ds.labels[rows], ds.mask[rows],
                             ds.task.task_kind)
            opt.zero_grad()
            loss.backward()
            opt.step()
        current = val_metric()
        if better(current, best_val):
            best_val = current
            best_state = head.state_dict()
            bad = 0
        else:
            bad += 1
            if bad > patience:
                break
    for i, (w, b) in enumerate(zip(head.weights, head.biases)):
        w.data = best_state[f"lm_head/layer{i}/w"].copy()
        b.data = best_state[f"lm_head/layer{i}/b"].copy()
    predictions = head.forward(embeddings).data
    return head, predictions
