import json

import pytest

from moldistill.cli import main
from moldistill.config import apply_overrides, load_config, validate_config
from moldistill.errors import ConfigError
from tests.conftest import write_synth_csv
from tests.mock_llm import MockLlmServer


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    write_synth_csv(tmp_path / "synth.csv")
    return tmp_path


def base_args(workdir, *extra):
    sets = [
        "--set", "dataset.name=synth",
        "--set", "dataset.csv=synth.csv",
        "--set", "dataset.smiles_column=smiles",
        "--set", "dataset.label_columns=[y]",
        "--set", "dataset.task_kind=classification",
        "--set", "dataset.prompt_description=Synthetic screening collection.",
        "--set", "teachers.gnn.epochs=4",
        "--set", "teachers.gnn.hidden=8",
        "--set", "teachers.gnn.layers=2",
        "--set", "teachers.lm.epochs=4",
        "--set", "student.epochs=4",
        "--set", "student.hidden=8",
        "--set", "student.layers=2",
        "--set", "eval.bench_repeats=2",
        "--set", "llm.requests_per_minute=100000",
        "--out-dir", "out",
        "--quiet",
    ]
    return list(extra) + sets


def test_config_validation_paths():
    config = load_config(None)
    with pytest.raises(ConfigError) as err:
        apply_overrides(config, ["split.nonsense=1"])
    assert "split.nonsense" in str(err.value)
    bad = apply_overrides(config, ["split.mode=bogus"])
    with pytest.raises(ConfigError) as err:
        validate_config(bad)
    assert "split.mode" in str(err.value)


def test_config_error_exit_code(workdir):
    assert main(["split", "--set", "split.mode=bogus", "--quiet"]) == 2
    assert main(["split", "--set", "no.such.key=1", "--quiet"]) == 2


def test_data_error_exit_code(workdir):
    # dataset.csv not set
    assert main(["split", "--set", "dataset.name=bace", "--quiet"]) == 3
    # missing file
    assert main([
        "split", "--set", "dataset.name=bace",
        "--set", "dataset.csv=missing.csv", "--quiet",
    ]) == 3


def test_split_deterministic_bytes(workdir):
    assert main(base_args(workdir, "split")) == 0
    first = (workdir / "out/split.json").read_bytes()
    assert main(base_args(workdir, "split", "--force")) == 0
    assert (workdir / "out/split.json").read_bytes() == first


def test_stage_skipped_when_up_to_date(workdir, caplog):
    assert main(base_args(workdir, "split")) == 0
    marker = (workdir / "out/split.manifest.json").stat().st_mtime_ns
    assert main(base_args(workdir, "split")) == 0
    assert (workdir / "out/split.manifest.json").stat().st_mtime_ns == marker


def test_featurize_outputs(workdir):
    assert main(base_args(workdir, "featurize")) == 0
    stats = json.loads((workdir / "out/dataset_stats.json").read_text())
    assert stats["n_graphs"] == 40
    assert stats["n_attributes"] == 9
    offsets = json.loads((workdir / "out/features_offsets.json").read_text())
    assert len(offsets) == 41


def test_full_gnn_student_pipeline_no_llm(workdir):
    # alpha=0, beta>0: pipeline trains the graph teacher then distills
    args = base_args(workdir, "pipeline") + [
        "--set", "distill.beta=0.5", "--set", "distill.alpha=0",
    ]
    assert main(args) == 0
    out = workdir / "out"
    assert (out / "gnn.ckpt").exists()
    assert not (out / "responses.jsonl").exists()  # LM path skipped
    result = json.loads((out / "student_result.json").read_text())
    assert result["beta"] == 0.5
    assert "test" in result["metrics"]


def test_pipeline_reduction_matches_standalone_mlp(workdir):
    args = base_args(workdir, "pipeline") + [
        "--set", "distill.alpha=0", "--set", "distill.beta=0",
    ]
    assert main(args) == 0
    student_a = (workdir / "out/student.ckpt").read_bytes()

    args2 = base_args(workdir, "distill")
    args2[args2.index("out")] = "out2"  # fresh directory, same seed
    # distill alone needs the split artifact first
    split_args = base_args(workdir, "split")
    split_args[split_args.index("out")] = "out2"
    assert main(split_args) == 0
    assert main(args2) == 0
    student_b = (workdir / "out2/student.ckpt").read_bytes()
    assert student_a == student_b


def test_llm_path_and_distill(workdir):
    with MockLlmServer() as server:
        args = base_args(workdir, "pipeline") + [
            "--set", f"llm.endpoint={server.endpoint}",
            "--set", "llm.model=mock-model",
            "--set", "llm.cache_dir=cache",
            "--set", "llm.use_image=false",
            "--set", "distill.alpha=0.5",
            "--set", "distill.beta=0.5",
        ]
        assert main(args) == 0
        hits_after_first = server.hits
        assert hits_after_first == 40
        # warm rerun: stages skip, zero new network calls
        assert main(args) == 0
        assert server.hits == hits_after_first
        # offline forced re-query against the warm cache also stays local
        offline_query = base_args(workdir, "query", "--force", "--offline") + [
            "--set", "llm.model=mock-model",
            "--set", "llm.cache_dir=cache",
            "--set", "llm.use_image=false",
        ]
        assert main(offline_query) == 0
        assert server.hits == hits_after_first
    out = workdir / "out"
    for artifact in ("prompts.jsonl", "responses.jsonl", "embeddings.f32",
                     "lm_artifacts.bin", "gnn_artifacts.bin", "student.ckpt"):
        assert (out / artifact).exists(), artifact


def test_query_offline_cold_cache_exit_code(workdir):
    args = base_args(workdir, "query", "--offline") + [
        "--set", "llm.use_image=false",
    ]
    assert main(args) == 4


def test_eval_and_bench(workdir):
    pipeline = base_args(workdir, "pipeline") + [
        "--set", "distill.beta=0.1", "--set", "distill.alpha=0",
    ]
    assert main(pipeline) == 0
    assert main(base_args(workdir, "eval")) == 0
    report = json.loads((workdir / "out/eval.json").read_text())
    assert report["model"] == "student"
    assert "test" in report["metrics"]
    assert main(base_args(workdir, "bench")) == 0
    bench = json.loads((workdir / "out/bench.json").read_text())
    assert set(bench) == {"gnn", "student"}
    assert bench["student"]["repeats"] == 2
    plot = (workdir / "out/plot_data.csv").read_text().splitlines()
    assert plot[0] == "model,rocauc,log_time_ms,log_params"
    assert len(plot) == 3


def test_grid_subcommand(workdir):
    setup = base_args(workdir, "pipeline") + [
        "--set", "distill.beta=0.1", "--set", "distill.alpha=0",
    ]
    assert main(setup) == 0
    with MockLlmServer() as server:
        lm_args = base_args(workdir, "query") + [
            "--set", f"llm.endpoint={server.endpoint}",
            "--set", "llm.use_image=false",
        ]
        assert main(lm_args) == 0
        for stage in ("embed", "train-lm-head"):
            stage_args = base_args(workdir, stage) + [
                "--set", f"llm.endpoint={server.endpoint}",
                "--set", "llm.use_image=false",
            ]
            assert main(stage_args) == 0
    grid_args = base_args(workdir, "grid") + [
        "--set", "distill.grid=[0, 0.5]",
        "--set", "student.epochs=1",
    ]
    assert main(grid_args) == 0
    table = (workdir / "out/grid.csv").read_text().splitlines()
    assert table[0] == "alpha,beta,val_metric,test_metric,seed"
    assert len(table) == 5  # 2x2 grid
    best = json.loads((workdir / "out/grid_best.json").read_text())
    assert set(best) == {"alpha", "beta"}


def test_json_log_lines(workdir, capsys):
    import logging

    from moldistill.cli import setup_logging

    setup_logging(quiet=False)
    logging.getLogger("moldistill").info("hello %s", "world")
    err = capsys.readouterr().err.strip()
    record = json.loads(err.splitlines()[-1])
    assert record["msg"] == "hello world"
    assert record["level"] == "info"


def test_print_config(workdir, capsys):
    assert main(["split", "--print-config", "--quiet"]) == 0
    out = capsys.readouterr().out
    assert "alpha" in out and "scaffold" in out


def test_custom_seed_changes_split(workdir):
    args = base_args(workdir, "split") + [
        "--set", "split.mode=random_scaffold", "--seed", "1",
    ]
    assert main(args) == 0
    first = (workdir / "out/split.json").read_text()
    args = base_args(workdir, "split", "--force") + [
        "--set", "split.mode=random_scaffold", "--seed", "2",
    ]
    assert main(args) == 0
    assert (workdir / "out/split.json").read_text() != first
