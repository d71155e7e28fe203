"""Pipeline orchestration.

Subcommands: featurize, split, prompt, query, embed, train-gnn,
train-lm-head, distill, grid, eval, bench, and pipeline (which chains the
stages, skipping any whose inputs are unchanged by digest).

Exit codes: 0 success, 2 config error, 3 data error, 4 network error.
Logs are line-delimited JSON on stderr; ``--quiet`` switches to plain text.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import apply_overrides, dump_config, load_config, validate_config
from .data import (
    TASKS,
    MoleculeDataset,
    SplitIndices,
    TaskSpec,
    dataset_stats,
    load_csv,
    scaffold_split,
)
from .distill import (
    DistillConfig,
    TeacherArtifacts,
    grid_search,
    train_gnn_teacher,
    train_student,
)
from .checkpoint import load_params, save_params
from .embed import (
    FileEmbedder,
    HashedTrigramEmbedder,
    RemoteEmbedder,
    save_embedding_matrix,
    train_lm_head,
)
from .errors import ConfigError, DataError, MoldistillError, NetworkError
from .featurize import FEATURE_WIDTH
from .llm import ClientConfig, PromptFlags, ResponseCache, build_prompt, query_many
from .manifest import stage_up_to_date, write_manifest
from .metrics import bench_inference, evaluate_split, plot_data_row
from .models import Gcn, Mlp
from .rng import Rng, derive_seed

logger = logging.getLogger("moldistill")

SUBCOMMANDS = [
    "featurize", "split", "prompt", "query", "embed", "train-gnn",
    "train-lm-head", "distill", "grid", "eval", "bench", "pipeline",
]


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        payload = {"level": record.levelname.lower(), "msg": record.getMessage()}
        if record.name != "root":
            payload["logger"] = record.name
        return json.dumps(payload)


def setup_logging(quiet: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(
        logging.Formatter("%(message)s") if quiet else _JsonFormatter()
    )
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(logging.INFO)


# -- shared context -----------------------------------------------------------


class Context:
    def __init__(self, config: dict, force: bool = False, jobs: int = 1):
        self.config = config
        self.force = force
        self.jobs = jobs
        self.out_dir = Path(config["out_dir"])
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._dataset: MoleculeDataset | None = None

    # resolution helpers

    def task(self) -> TaskSpec:
        section = self.config["dataset"]
        name = section["name"]
        if name in TASKS:
            base = TASKS[name]
        else:
            base = TaskSpec(
                name=name,
                task_kind=section["task_kind"],
                smiles_column=section["smiles_column"],
                label_columns=tuple(section["label_columns"]),
                prompt_description=section["prompt_description"] or "",
            )
        if section["smiles_column"]:
            base = replace(base, smiles_column=section["smiles_column"])
        if section["label_columns"]:
            base = replace(base, label_columns=tuple(section["label_columns"]))
        if section["prompt_description"]:
            base = replace(base, prompt_description=section["prompt_description"])
        return base

    def csv_path(self) -> Path:
        path = self.config["dataset"]["csv"]
        if path is None:
            raise DataError(
                "dataset.csv is not set; point it at the MoleculeNet CSV file"
            )
        return Path(path)

    def dataset(self) -> MoleculeDataset:
        if self._dataset is None:
            self._dataset = load_csv(self.csv_path(), self.task())
        return self._dataset

    def stage_seed(self, stage: str) -> int:
        return derive_seed(int(self.config["seed"]), stage)

    def llm_config(self) -> ClientConfig:
        section = self.config["llm"]
        model = section["model"] or self.task().default_llm
        return ClientConfig(
            endpoint=section["endpoint"],
            model=model,
            api_key_env=section["api_key_env"],
            offline=bool(section["offline"]),
            max_tries=int(section["max_tries"]),
            max_in_flight=int(section["max_in_flight"]),
            requests_per_minute=int(section["requests_per_minute"]),
            max_tokens=int(section["max_tokens"]),
        )

    def prompt_flags(self) -> PromptFlags:
        return PromptFlags(
            use_image=bool(self.config["llm"]["use_image"]),
            use_graph_text=bool(self.config["llm"]["use_graph_text"]),
        )

    def distill_config(self, stage: str, section: dict | None = None,
                       **overrides) -> DistillConfig:
        student = self.config["student"]
        distill = self.config["distill"]
        section = section or student
        cfg = DistillConfig(
            alpha=float(distill["alpha"]),
            beta=float(distill["beta"]),
            mode=distill["mode"],
            grid=tuple(distill["grid"]),
            epochs=int(section["epochs"]),
            batch_size=int(section["batch_size"]),
            lr=float(section["lr"]),
            patience=int(section["patience"]),
            seed=self.stage_seed(stage),
            hidden=int(section.get("hidden", student["hidden"])),
            layers=int(section.get("layers", student["layers"])),
            latent=int(student["latent"]),
            teacher_heads_trainable=bool(student["teacher_heads_trainable"]),
        )
        return replace(cfg, **overrides) if overrides else cfg

    # artifact paths

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def run_stage(self, stage: str, inputs: list[Path], outputs: list[Path],
                  fn) -> bool:
        """Digest-gated execution; returns True when work was done."""
        if not self.force and stage_up_to_date(self.out_dir, stage, self.config,
                                               inputs):
            logger.info("stage %s is up to date, skipping", stage)
            return False
        fn()
        missing = [p for p in outputs if not Path(p).exists()]
        if missing:
            raise DataError(f"stage {stage} did not produce {missing}")
        write_manifest(self.out_dir, stage, self.config,
                       int(self.config["seed"]), inputs, outputs)
        logger.info("stage %s complete", stage)
        return True


# -- stages -------------------------------------------------------------------


def stage_featurize(ctx: Context) -> None:
    outputs = [ctx.path("dataset_stats.json"), ctx.path("features.f32"),
               ctx.path("features.f32.json"), ctx.path("features_offsets.json")]

    def work():
        ds = ctx.dataset()
        stats = dataset_stats(ds)
        ctx.path("dataset_stats.json").write_text(
            json.dumps(stats.to_dict(), indent=2, sort_keys=True)
        )
        rows = [ds.feature_rows(i) for i in range(len(ds))]
        offsets = np.cumsum([0] + [r.shape[0] for r in rows]).tolist()
        matrix = np.concatenate(rows, axis=0) if rows else np.zeros((0, FEATURE_WIDTH))
        save_embedding_matrix(ctx.path("features.f32"), matrix, "atom-features-v1")
        ctx.path("features_offsets.json").write_text(json.dumps(offsets))
        logger.info("featurized %d molecules, %d atom rows, width %d",
                    len(ds), matrix.shape[0], matrix.shape[1])

    ctx.run_stage("featurize", [ctx.csv_path()], outputs, work)


def stage_split(ctx: Context) -> None:
    split_path = ctx.path("split.json")

    def work():
        ds = ctx.dataset()
        section = ctx.config["split"]
        split = scaffold_split(
            ds, tuple(section["ratios"]), section["mode"],
            seed=ctx.stage_seed("split"),
        )
        split_path.write_text(split.to_json())
        logger.info("split sizes: train %d / valid %d / test %d",
                    len(split.train), len(split.valid), len(split.test))

    ctx.run_stage("split", [ctx.csv_path()], [split_path], work)


def _load_split(ctx: Context) -> SplitIndices:
    path = ctx.path("split.json")
    if not path.exists():
        raise DataError(f"missing {path}; run the split stage first")
    split = SplitIndices.from_json(path.read_text())
    split.validate(len(ctx.dataset()))
    return split


def stage_prompt(ctx: Context) -> None:
    out = ctx.path("prompts.jsonl")

    def work():
        ds = ctx.dataset()
        client = ctx.llm_config()
        flags = ctx.prompt_flags()
        with open(out, "w") as fh:
            for i, mol in enumerate(ds.molecules):
                prompt = build_prompt(mol, ds.task, flags)
                fh.write(json.dumps({
                    "index": i,
                    "digest": prompt.digest(client.model),
                    "model": client.model,
                    "has_image": prompt.image is not None,
                    "has_graph_text": prompt.edge_text is not None,
                    "text": prompt.text,
                }) + "\n")
        logger.info("wrote %d prompts", len(ds))

    ctx.run_stage("prompt", [ctx.csv_path()], [out], work)


def stage_query(ctx: Context) -> None:
    out = ctx.path("responses.jsonl")

    def work():
        ds = ctx.dataset()
        client = ctx.llm_config()
        flags = ctx.prompt_flags()
        cache = ResponseCache(ctx.config["llm"]["cache_dir"])
        prompts = [build_prompt(m, ds.task, flags) for m in ds.molecules]
        responses = query_many(prompts, client, cache)
        hits = sum(1 for r in responses if r.cache_hit)
        with open(out, "w") as fh:
            for i, resp in enumerate(responses):
                fh.write(json.dumps({
                    "index": i,
                    "digest": resp.prompt_digest,
                    "cache_hit": resp.cache_hit,
                    "text": resp.text,
                }) + "\n")
        logger.info("queried %d molecules (%d cache hits)", len(ds), hits)

    ctx.run_stage("query", [ctx.csv_path()], [out], work)


def stage_embed(ctx: Context) -> None:
    out = ctx.path("embeddings.f32")
    outputs = [out, Path(str(out) + ".json")]
    section = ctx.config["teachers"]["lm"]
    responses_path = ctx.path("responses.jsonl")
    inputs = [ctx.csv_path()]
    if section["provider"] == "hashed-trigram":
        inputs.append(responses_path)
    elif section["provider"] == "file":
        inputs.append(Path(section["embedding_file"]))

    def work():
        ds = ctx.dataset()
        provider_name = section["provider"]
        if provider_name == "file":
            embedder = FileEmbedder.from_file(section["embedding_file"])
            matrix = np.stack([embedder.embed_index(i) for i in range(len(ds))])
        else:
            if not responses_path.exists():
                raise DataError(
                    f"missing {responses_path}; run the query stage first"
                )
            texts = {}
            with open(responses_path) as fh:
                for line in fh:
                    record = json.loads(line)
                    texts[record["index"]] = record["text"]
            missing = [i for i in range(len(ds)) if i not in texts]
            if missing:
                raise DataError(
                    f"{len(missing)} molecules lack responses (first: {missing[:5]})"
                )
            if provider_name == "remote":
                embedder = RemoteEmbedder(
                    section["remote_endpoint"], section["remote_model"],
                    int(section["dim"]),
                    api_key_env=ctx.config["llm"]["api_key_env"],
                )
            else:
                embedder = HashedTrigramEmbedder()
            from .embed import EMBED_SEPARATOR

            matrix = np.stack([
                embedder.embed(texts[i] + EMBED_SEPARATOR + ds.molecules[i].smiles)
                for i in range(len(ds))
            ])
        save_embedding_matrix(out, matrix, embedder.provider_id)
        logger.info("embedded %d molecules at width %d", *matrix.shape)

    ctx.run_stage("embed", inputs, outputs, work)


def stage_train_gnn(ctx: Context) -> None:
    outputs = [ctx.path("gnn.ckpt"), ctx.path("gnn_artifacts.bin"),
               ctx.path("gnn_curves.json")]
    split_path = ctx.path("split.json")

    def work():
        ds = ctx.dataset()
        split = _load_split(ctx)
        cfg = ctx.distill_config("train-gnn", ctx.config["teachers"]["gnn"])
        model, artifacts, result = train_gnn_teacher(ds, split, cfg)
        save_params(ctx.path("gnn.ckpt"), model.state_dict())
        artifacts.provenance["dataset"] = ds.task.name
        artifacts.save(ctx.path("gnn_artifacts.bin"))
        ctx.path("gnn_curves.json").write_text(
            json.dumps(result.to_dict(), indent=2)
        )
        test = evaluate_split(model, ds, split.test, "test")
        logger.info("gnn teacher: best val %.4f, test %.4f",
                    result.best_val, test.mean)

    ctx.run_stage("train-gnn", [ctx.csv_path(), split_path], outputs, work)


def stage_train_lm_head(ctx: Context) -> None:
    outputs = [ctx.path("lm_head.ckpt"), ctx.path("lm_artifacts.bin"),
               ctx.path("lm_curves.json")]
    emb_path = ctx.path("embeddings.f32")
    split_path = ctx.path("split.json")

    def work():
        ds = ctx.dataset()
        split = _load_split(ctx)
        if not emb_path.exists():
            raise DataError(f"missing {emb_path}; run the embed stage first")
        embedder = FileEmbedder.from_file(emb_path)
        section = ctx.config["teachers"]["lm"]
        head, predictions = train_lm_head(
            embedder.matrix, ds, split,
            seed=ctx.stage_seed("train-lm-head"),
            epochs=int(section["epochs"]),
            batch_size=int(section["batch_size"]),
            lr=float(section["lr"]),
            patience=int(section["patience"]),
            hidden=int(section["head_hidden"]),
        )
        save_params(ctx.path("lm_head.ckpt"), head.state_dict())
        artifacts = TeacherArtifacts(
            y_lm=predictions, h_lm=embedder.matrix,
            provenance={"provider": embedder.provider_id, "dataset": ds.task.name},
        )
        artifacts.save(ctx.path("lm_artifacts.bin"))
        from .metrics import score_predictions

        val = score_predictions(predictions[split.valid], ds, split.valid, "valid")
        ctx.path("lm_curves.json").write_text(json.dumps({"val": val.to_dict()}))
        logger.info("lm head: valid %.4f %s", val.mean, val.metric)

    ctx.run_stage("train-lm-head", [ctx.csv_path(), split_path, emb_path],
                  outputs, work)


def _load_teachers(ctx: Context, need_lm: bool, need_gnn: bool) -> TeacherArtifacts | None:
    if not (need_lm or need_gnn):
        return None
    artifacts = TeacherArtifacts()
    if need_gnn:
        path = ctx.path("gnn_artifacts.bin")
        if not path.exists():
            raise DataError(f"missing {path}; run train-gnn first")
        artifacts = artifacts.merged_with(TeacherArtifacts.load(path))
    if need_lm:
        path = ctx.path("lm_artifacts.bin")
        if not path.exists():
            raise DataError(f"missing {path}; run train-lm-head first")
        artifacts = artifacts.merged_with(TeacherArtifacts.load(path))
    return artifacts


def stage_distill(ctx: Context) -> None:
    outputs = [ctx.path("student.ckpt"), ctx.path("student_result.json")]
    split_path = ctx.path("split.json")
    cfg = ctx.distill_config("distill")
    inputs = [ctx.csv_path(), split_path]
    if cfg.beta > 0:
        inputs.append(ctx.path("gnn_artifacts.bin"))
    if cfg.alpha > 0:
        inputs.append(ctx.path("lm_artifacts.bin"))

    def work():
        ds = ctx.dataset()
        split = _load_split(ctx)
        teachers = _load_teachers(ctx, cfg.alpha > 0, cfg.beta > 0)
        model, heads, result = train_student(ds, split, teachers, cfg)
        state = model.state_dict()
        if heads is not None:
            state.update(heads.state_dict())
        save_params(ctx.path("student.ckpt"), state)
        reports = {
            name: evaluate_split(model, ds, idx, name).to_dict()
            for name, idx in (("train", split.train), ("valid", split.valid),
                              ("test", split.test))
            if len(idx)
        }
        ctx.path("student_result.json").write_text(json.dumps({
            "alpha": cfg.alpha, "beta": cfg.beta,
            "mode": cfg.resolved_mode(ds.task.task_kind),
            "train_result": result.to_dict(),
            "metrics": reports,
        }, indent=2))
        test_mean = reports.get("test", {}).get("mean")
        logger.info("student: best val %.4f, test %s", result.best_val, test_mean)

    ctx.run_stage("distill", inputs, outputs, work)


def stage_grid(ctx: Context) -> None:
    outputs = [ctx.path("grid.csv"), ctx.path("grid_best.json")]
    split_path = ctx.path("split.json")
    cfg = ctx.distill_config("grid")
    grid = cfg.grid
    need_lm = any(v > 0 for v in grid)
    need_gnn = need_lm
    inputs = [ctx.csv_path(), split_path, ctx.path("gnn_artifacts.bin"),
              ctx.path("lm_artifacts.bin")]

    def work():
        ds = ctx.dataset()
        split = _load_split(ctx)
        teachers = _load_teachers(ctx, need_lm, need_gnn)
        result = grid_search(ds, split, teachers, cfg, jobs=ctx.jobs)
        ctx.path("grid.csv").write_text(result.to_csv())
        ctx.path("grid_best.json").write_text(json.dumps({
            "alpha": result.best_alpha, "beta": result.best_beta,
        }, indent=2))
        logger.info("grid best (alpha, beta) = (%s, %s)",
                    result.best_alpha, result.best_beta)

    ctx.run_stage("grid", inputs, outputs, work)


def _load_model(ctx: Context, which: str):
    ds = ctx.dataset()
    f_in = ds.feature_rows(0).shape[1]
    if which == "gnn":
        section = ctx.config["teachers"]["gnn"]
        model = Gcn.init(f_in, ds.task.n_tasks, Rng(0),
                         hidden=int(section["hidden"]),
                         layers=int(section["layers"]))
        state = load_params(ctx.path("gnn.ckpt"))
    else:
        section = ctx.config["student"]
        model = Mlp.init(f_in, ds.task.n_tasks, Rng(0),
                         hidden=int(section["hidden"]),
                         layers=int(section["layers"]))
        state = load_params(ctx.path("student.ckpt"))
        state = {k: v for k, v in state.items() if not k.startswith("proj/")}
    model.load_state_dict(state)
    return model


def stage_eval(ctx: Context) -> None:
    outputs = [ctx.path("eval.json"), ctx.path("eval.csv")]
    which = ctx.config["eval"]["model"]
    ckpt = ctx.path("gnn.ckpt" if which == "gnn" else "student.ckpt")

    def work():
        ds = ctx.dataset()
        split = _load_split(ctx)
        if not ckpt.exists():
            raise DataError(f"missing {ckpt}; train the {which} first")
        model = _load_model(ctx, which)
        reports = {}
        for name, idx in (("train", split.train), ("valid", split.valid),
                          ("test", split.test)):
            if len(idx):
                reports[name] = evaluate_split(
                    model, ds, idx, name,
                    batch_size=int(ctx.config["eval"]["batch_size"]),
                ).to_dict()
        ctx.path("eval.json").write_text(json.dumps({
            "model": which, "metrics": reports,
        }, indent=2))
        lines = ["model,split,metric,mean,n"]
        for name, report in reports.items():
            lines.append(
                f"{which},{name},{report['metric']},{report['mean']:.6f},"
                f"{report['n_evaluated']}"
            )
        ctx.path("eval.csv").write_text("\n".join(lines) + "\n")
        logger.info("eval %s: %s", which,
                    {k: round(v["mean"], 4) for k, v in reports.items()})

    ctx.run_stage("eval", [ctx.csv_path(), ctx.path("split.json"), ckpt],
                  outputs, work)


def stage_bench(ctx: Context) -> None:
    outputs = [ctx.path("bench.json"), ctx.path("plot_data.csv")]
    inputs = [ctx.csv_path(), ctx.path("split.json"),
              ctx.path("gnn.ckpt"), ctx.path("student.ckpt")]

    def work():
        ds = ctx.dataset()
        split = _load_split(ctx)
        repeats = int(ctx.config["eval"]["bench_repeats"])
        rows = []
        results = {}
        for which in ("gnn", "student"):
            ckpt = ctx.path("gnn.ckpt" if which == "gnn" else "student.ckpt")
            if not ckpt.exists():
                raise DataError(f"missing {ckpt}; train the {which} first")
            model = _load_model(ctx, which)
            report = bench_inference(model, ds, repeats=repeats)
            try:
                auc = evaluate_split(model, ds, split.test, "test").mean
            except MoldistillError:
                auc = float("nan")
            results[which] = report.to_dict()
            rows.append(plot_data_row(report, auc))
        ctx.path("bench.json").write_text(json.dumps(results, indent=2))
        lines = ["model,rocauc,log_time_ms,log_params"]
        for row in rows:
            lines.append(
                f"{row['model']},{row['rocauc']:.6f},{row['log_time_ms']:.6f},"
                f"{row['log_params']:.6f}"
            )
        ctx.path("plot_data.csv").write_text("\n".join(lines) + "\n")
        logger.info("bench: %s", {
            k: round(v["mean_ms_per_pass"], 3) for k, v in results.items()
        })

    ctx.run_stage("bench", inputs, outputs, work)


def stage_pipeline(ctx: Context) -> None:
    stage_split(ctx)
    cfg = ctx.distill_config("distill")
    if cfg.beta > 0:
        stage_train_gnn(ctx)
    if cfg.alpha > 0:
        stage_prompt(ctx)
        stage_query(ctx)
        stage_embed(ctx)
        stage_train_lm_head(ctx)
    stage_distill(ctx)
    stage_eval(ctx)


STAGES = {
    "featurize": stage_featurize,
    "split": stage_split,
    "prompt": stage_prompt,
    "query": stage_query,
    "embed": stage_embed,
    "train-gnn": stage_train_gnn,
    "train-lm-head": stage_train_lm_head,
    "distill": stage_distill,
    "grid": stage_grid,
    "eval": stage_eval,
    "bench": stage_bench,
    "pipeline": stage_pipeline,
}


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moldistill",
        description="Distill graph and language-model teachers into a fast "
                    "property-prediction MLP.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=str, default=None,
                        help="YAML config file (defaults apply when omitted)")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key")
    parser.add_argument("--offline", action="store_true",
                        help="never touch the network; cold cache is an error")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel cells for the grid subcommand")
    parser.add_argument("--out-dir", type=str, default=None)
    parser.add_argument("--quiet", action="store_true",
                        help="plain log lines instead of JSON")
    parser.add_argument("--force", action="store_true",
                        help="re-run even when digests say up to date")
    parser.add_argument("--print-config", action="store_true",
                        help="dump the resolved config and exit")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.quiet)
    try:
        config = load_config(args.config)
        if args.overrides:
            config = apply_overrides(config, args.overrides)
        if args.seed is not None:
            config["seed"] = args.seed
        if args.offline:
            config["llm"]["offline"] = True
        if args.out_dir is not None:
            config["out_dir"] = args.out_dir
        validate_config(config)
        if args.print_config:
            print(dump_config(config))
            return 0
        ctx = Context(config, force=args.force, jobs=args.jobs)
        STAGES[args.subcommand](ctx)
        return 0
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return 2
    except NetworkError as exc:
        logger.error("network error: %s", exc)
        return 4
    except DataError as exc:
        logger.error("data error: %s", exc)
        return 3
    except MoldistillError as exc:
        logger.error("error: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
