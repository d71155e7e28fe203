import numpy as np
import pytest

from moldistill.featurize import FEATURE_WIDTH
from moldistill.metrics import (
    AucUndefinedError,
    BenchReport,
    bench_inference,
    evaluate_split,
    plot_data_row,
    rmse,
    rocauc,
)
from moldistill.models import Gcn, Mlp
from moldistill.rng import Rng


def brute_force_auc(scores, labels):
    """O(n^2) pair counting with half credit for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = np.where(labels == 1)[0]
    neg = np.where(labels != 1)[0]
    total = 0.0
    for i in pos:
        for j in neg:
            if scores[i] > scores[j]:
                total += 1.0
            elif scores[i] == scores[j]:
                total += 0.5
    return total / (len(pos) * len(neg))


def test_worked_example():
    # pairs: (.35,.1) ok, (.35,.4) wrong, (.8,.1) ok, (.8,.4) ok -> 3/4
    value = rocauc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    assert value == 0.75
    assert brute_force_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_perfect_separation():
    assert rocauc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0


def test_all_ties_give_half():
    assert rocauc([0.5] * 6, [0, 1, 0, 1, 0, 1]) == 0.5


def test_single_class_raises():
    with pytest.raises(AucUndefinedError):
        rocauc([0.1, 0.2], [1, 1])


def test_matches_brute_force_on_1000_random_instances():
    rng = Rng(2024)
    for trial in range(1000):
        n = 2 + rng.integers(199)
        # coarse score grid to provoke ties
        scores = np.array([rng.integers(20) / 10.0 for _ in range(n)])
        labels = np.array([rng.integers(2) for _ in range(n)])
        if labels.sum() in (0, n):
            labels[rng.integers(n)] = 1 - labels[0]
            if labels.sum() in (0, n):
                continue
        assert rocauc(scores, labels) == brute_force_auc(scores, labels), trial


def test_invariant_under_monotone_transforms():
    rng = Rng(31)
    scores = np.array([rng.random() for _ in range(50)])
    labels = np.array([rng.integers(2) for _ in range(50)])
    labels[0], labels[1] = 0, 1
    base = rocauc(scores, labels)
    transforms = [
        lambda s: 3 * s + 2,
        np.exp,
        lambda s: np.tan(np.clip(s, 0, 0.99) * 1.5),
        lambda s: s ** 3 + s,
    ]
    for f in transforms:
        assert rocauc(f(scores), labels) == pytest.approx(base, abs=1e-12)


def test_negated_scores_complement():
    rng = Rng(17)
    scores = np.array([rng.random() for _ in range(101)])  # ties ~impossible
    labels = np.array([rng.integers(2) for _ in range(101)])
    labels[:2] = [0, 1]
    assert rocauc(scores, labels) + rocauc(-scores, labels) == pytest.approx(1.0)


def test_rmse_values():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))
    assert rmse([0.0, 0.0], [3.0, 4.0], mask=[False, True]) == 4.0


def test_rmse_properties():
    rng = Rng(8)
    x = np.array([rng.random() for _ in range(20)])
    y = np.array([rng.random() for _ in range(20)])
    assert rmse(x, y) == rmse(y, x)
    assert rmse(3 * x, 3 * y) == pytest.approx(3 * rmse(x, y))
    with pytest.raises(ValueError):
        rmse(x, y, mask=np.zeros(20, dtype=bool))


def test_evaluate_oracle_model(synth_dataset):
    class Oracle:
        kind = "oracle"

        def forward(self, batch):
            from moldistill.autodiff import Tensor

            return Tensor(np.zeros((batch.n_graphs, 1))), Tensor(batch.labels.copy())

        def parameter_count(self):
            return 0

    report = evaluate_split(Oracle(), synth_dataset, range(len(synth_dataset)), "all")
    assert report.mean == 1.0
    assert report.metric == "ROCAUC"


def test_evaluate_constant_regressor_rmse_is_std(synth_regression):
    ds = synth_regression
    idx = np.arange(len(ds))
    mean_label = ds.labels[:, 0].mean()

    class Constant:
        kind = "const"

        def forward(self, batch):
            from moldistill.autodiff import Tensor

            n = batch.n_graphs
            return Tensor(np.zeros((n, 1))), Tensor(np.full((n, 1), mean_label))

        def parameter_count(self):
            return 0

    report = evaluate_split(Constant(), ds, idx, "all")
    assert report.metric == "RMSE"
    assert report.mean == pytest.approx(float(ds.labels[:, 0].std()))


def test_single_class_task_excluded(tmp_path):
    from moldistill.data import load_csv
    from tests.conftest import write_synth_csv

    p = tmp_path / "onec.csv"
    p.write_text("smiles,y\nCC,1\nCCC,1\nCCCC,1\n")
    task = write_synth_csv(tmp_path / "unused.csv")
    ds = load_csv(p, task)

    class Zero:
        kind = "zero"

        def forward(self, batch):
            from moldistill.autodiff import Tensor

            n = batch.n_graphs
            return Tensor(np.zeros((n, 1))), Tensor(np.zeros((n, 1)))

        def parameter_count(self):
            return 0

    report = evaluate_split(Zero(), ds, [0, 1, 2], "all")
    assert report.per_task == [None]
    assert report.excluded_tasks == [0]
    assert np.isnan(report.mean)


def test_bench_repeats_and_counts(synth_dataset):
    model = Mlp.init(FEATURE_WIDTH, 1, Rng(0))
    report = bench_inference(model, synth_dataset, repeats=1)
    assert isinstance(report, BenchReport)
    assert len(report.times_ms) == 1
    assert report.mean_ms_per_pass == report.times_ms[0]
    assert report.parameter_count == model.parameter_count()
    row = plot_data_row(report, auc=0.5)
    assert row["log_params"] == pytest.approx(np.log10(report.parameter_count))


def test_bench_mlp_faster_than_gcn(tmp_path):
    # needs molecules big enough that the adjacency product is measurable
    from moldistill.data import load_csv
    from tests.conftest import write_synth_csv

    smiles = "c1ccccc1" + "C" * 40 + "c1ccncc1"
    p = tmp_path / "big.csv"
    p.write_text("smiles,y\n" + "\n".join(f"{smiles},{i % 2}" for i in range(80)) + "\n")
    task = write_synth_csv(tmp_path / "unused.csv")
    ds = load_csv(p, task)

    gcn = Gcn.init(FEATURE_WIDTH, 1, Rng(0))
    mlp = Mlp.init(FEATURE_WIDTH, 1, Rng(0))
    g = bench_inference(gcn, ds, repeats=30)
    m = bench_inference(mlp, ds, repeats=30)
    assert m.mean_ms_per_pass < g.mean_ms_per_pass
