"""Experiment configuration: one nested YAML file, defaults baked in.

Every constant the pipeline depends on (3 layers, hidden width 32, the
80/10/10 split, the hyperparameter grid) appears here as an explicit
default. ``--set a.b.c=value`` overrides parse their value as YAML.
"""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .data import RANDOM_SCAFFOLD, SCAFFOLD, TASKS
from .errors import ConfigError

DEFAULT_CONFIG: dict = {
    "out_dir": "runs/default",
    "seed": 0,
    "dataset": {
        "name": "bace",            # key into the registry, or "custom"
        "csv": None,               # path to the CSV file
        "smiles_column": None,     # registry default when None
        "label_columns": None,
        "task_kind": None,
        "prompt_description": None,
    },
    "split": {
        "mode": "scaffold",        # scaffold | random_scaffold
        "ratios": [0.8, 0.1, 0.1],
    },
    "teachers": {
        "gnn": {
            "layers": 3,
            "hidden": 32,
            "epochs": 100,
            "batch_size": 64,
            "lr": 1.0e-3,
            "patience": 20,
        },
        "lm": {
            "provider": "hashed-trigram",   # hashed-trigram | file | remote
            "embedding_file": None,
            "remote_endpoint": None,
            "remote_model": None,
            "dim": 256,
            "head_hidden": 0,
            "epochs": 100,
            "batch_size": 64,
            "lr": 1.0e-3,
            "patience": 20,
        },
    },
    "student": {
        "layers": 3,
        "hidden": 32,
        "epochs": 100,
        "batch_size": 64,
        "lr": 1.0e-3,
        "patience": 20,
        "latent": 32,
        "teacher_heads_trainable": False,
    },
    "distill": {
        "alpha": 0.0,
        "beta": 0.0,
        "mode": None,              # null -> label for classification, repr for regression
        "grid": [0, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0],
    },
    "eval": {
        "model": "student",        # student | gnn
        "bench_repeats": 100,
        "batch_size": 256,
    },
    "llm": {
        "endpoint": "https://api.openai.com/v1/chat/completions",
        "model": None,             # registry default when None
        "api_key_env": "MOLDISTILL_API_KEY",
        "offline": False,
        "cache_dir": "cache",
        "use_image": True,
        "use_graph_text": True,
        "max_tries": 5,
        "max_in_flight": 4,
        "requests_per_minute": 60,
        "max_tokens": 1024,
    },
}


def _deep_merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError("unknown key", where)
        if isinstance(base[key], dict) and base[key]:
            if not isinstance(value, dict):
                raise ConfigError("expected a mapping", where)
            out[key] = _deep_merge(base[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None) -> dict:
    """Defaults, overlaid with the YAML file at ``path`` when given."""
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        loaded = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}")
    if not isinstance(loaded, dict):
        raise ConfigError("config root must be a mapping")
    return _deep_merge(DEFAULT_CONFIG, loaded)


def apply_overrides(config: dict, assignments: list[str]) -> dict:
    """Apply ``key.path=value`` overrides; values parse as YAML scalars."""
    out = copy.deepcopy(config)
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"override must look like key=value: {assignment!r}")
        key, _, raw = assignment.partition("=")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            value = raw
        node = out
        parts = key.strip().split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError("unknown key", key)
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError("unknown key", key)
        node[parts[-1]] = value
    return out


def validate_config(config: dict) -> None:
    """Schema checks with the dotted path of the offending key."""
    def expect(cond: bool, key: str, message: str):
        if not cond:
            raise ConfigError(message, key)

    name = config["dataset"]["name"]
    expect(isinstance(name, str) and name, "dataset.name", "must be a dataset name")
    if name not in TASKS:
        expect(config["dataset"]["smiles_column"] is not None,
               "dataset.smiles_column", f"required for unregistered dataset {name!r}")
        expect(config["dataset"]["label_columns"] is not None,
               "dataset.label_columns", "required for unregistered dataset")
        expect(config["dataset"]["task_kind"] in ("classification", "regression"),
               "dataset.task_kind", "must be classification or regression")

    mode = config["split"]["mode"]
    expect(mode in (SCAFFOLD, RANDOM_SCAFFOLD), "split.mode",
           f"must be scaffold or random_scaffold, got {mode!r}")
    ratios = config["split"]["ratios"]
    expect(isinstance(ratios, (list, tuple)) and len(ratios) == 3,
           "split.ratios", "must be three numbers")
    expect(abs(sum(ratios) - 1.0) < 1e-9 and all(r >= 0 for r in ratios),
           "split.ratios", "must be non-negative and sum to 1")

    for section in ("gnn", "lm"):
        for key in ("epochs", "batch_size", "patience"):
            value = config["teachers"][section][key]
            expect(isinstance(value, int) and value >= 0,
                   f"teachers.{section}.{key}", "must be a non-negative integer")
    for key in ("epochs", "batch_size", "patience", "layers", "hidden", "latent"):
        value = config["student"][key]
        expect(isinstance(value, int) and value >= 0,
               f"student.{key}", "must be a non-negative integer")

    alpha, beta = config["distill"]["alpha"], config["distill"]["beta"]
    expect(isinstance(alpha, (int, float)) and alpha >= 0, "distill.alpha",
           "must be a non-negative number")
    expect(isinstance(beta, (int, float)) and beta >= 0, "distill.beta",
           "must be a non-negative number")
    expect(config["distill"]["mode"] in (None, "label", "representation"),
           "distill.mode", "must be null, label, or representation")
    expect(len(config["distill"]["grid"]) > 0, "distill.grid", "must be non-empty")

    provider = config["teachers"]["lm"]["provider"]
    expect(provider in ("hashed-trigram", "file", "remote"),
           "teachers.lm.provider", f"unknown provider {provider!r}")
    if provider == "file":
        expect(config["teachers"]["lm"]["embedding_file"] is not None,
               "teachers.lm.embedding_file", "required for the file provider")
    if provider == "remote":
        expect(config["teachers"]["lm"]["remote_endpoint"] is not None,
               "teachers.lm.remote_endpoint", "required for the remote provider")
        expect(config["teachers"]["lm"]["remote_model"] is not None,
               "teachers.lm.remote_model", "required for the remote provider")

    expect(config["eval"]["model"] in ("student", "gnn"), "eval.model",
           "must be student or gnn")


def dump_config(config: dict) -> str:
    return yaml.safe_dump(config, sort_keys=True, default_flow_style=False)
