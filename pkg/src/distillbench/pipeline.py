"""Configuration-driven experiment pipeline with cached, seeded stages.

A run is five stages executed in order inside one output directory:

    expert    -> expert.model, expert_log.json
    dataset   -> train.dataset.csv, test.dataset.csv
    students  -> models/<label>.model per swept student
    evaluate  -> reports.json
    report    -> metrics.csv, plot-data CSVs, rendered figures

Every stage derives its own seed from the master seed by hashing
``"<master_seed>/<stage name>"``, so stages stay reproducible in
isolation and adding a stage never shifts another stage's randomness.
``stages.json`` records a content hash per completed stage (chained to
its upstream stage), and a stage is skipped when its hash matches and
its artifacts are still on disk.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    balance_classes,
    collect_demonstrations,
    load_dataset_csv,
    save_dataset_csv,
    stratified_split,
)
from .dqn import DqnConfig, train_dqn
from .envs import make_env
from .hard_tree import train_hard_tree
from .kernel_machine import KmConfig, train_kernel_machine
from .metrics import EvalConfig, MetricsReport, evaluate_all
from .persistence import load_model, save_model
from .soft_tree import SdtConfig, train_soft_tree

STAGE_ORDER = ("expert", "dataset", "students", "evaluate", "report")

ENV_SEED_VAR = "DISTILLBENCH_SEED"
ENV_OUT_VAR = "DISTILLBENCH_OUT"


class StageError(RuntimeError):
    """A pipeline stage that failed; earlier stages remain recorded."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a full run needs; mirrors the JSON config schema."""

    env: str = "mountaincar"
    master_seed: int = 0
    out_dir: str = "run_out"
    expert: DqnConfig = field(default_factory=DqnConfig)
    dataset_episodes: int = 500
    balance: bool = True
    split_ratio: float = 0.9
    hdt_depths: tuple[int, ...] = (2, 3, 4, 5, 6, 7, 8, 9)
    sdt_depths: tuple[int, ...] = (2, 3, 4, 5, 6, 7, 8, 9)
    sdt: SdtConfig = field(default_factory=SdtConfig)
    km_grid: tuple[tuple[float, float], ...] = ()   # (gamma, C) pairs
    km: KmConfig = field(default_factory=KmConfig)
    km_subsample: int = 2000
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self) -> None:
        if self.env not in ("mountaincar", "cartpole"):
            raise ValueError(f"unknown env {self.env!r}")
        if self.dataset_episodes < 1:
            raise ValueError("dataset_episodes must be >= 1")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must lie in (0, 1)")
        for d in (*self.hdt_depths, *self.sdt_depths):
            if d < 1:
                raise ValueError(f"student depths must be >= 1, got {d}")
        for pair in self.km_grid:
            if len(pair) != 2:
                raise ValueError("km_grid entries must be (gamma, C) pairs")
        if self.km_subsample < 1:
            raise ValueError("km_subsample must be >= 1")


_SECTION_TYPES = {"expert": DqnConfig, "sdt": SdtConfig, "km": KmConfig, "eval": EvalConfig}
_TUPLE_FIELDS = ("hdt_depths", "sdt_depths")


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build a config from parsed JSON, rejecting unknown keys loudly."""
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs: dict = {}
    for key, value in doc.items():
        if key in _SECTION_TYPES:
            section = _SECTION_TYPES[key]
            if not isinstance(value, dict):
                raise ValueError(f"config section {key!r} must be an object")
            bad = set(value) - set(section.__dataclass_fields__)
            if bad:
                raise ValueError(f"unknown keys in config section {key!r}: {sorted(bad)}")
            value = {k: tuple(v) if isinstance(v, list) else v for k, v in value.items()}
            kwargs[key] = section(**value)
        elif key in _TUPLE_FIELDS:
            kwargs[key] = tuple(int(d) for d in value)
        elif key == "km_grid":
            kwargs[key] = tuple((float(g), float(c)) for g, c in value)
        else:
            kwargs[key] = value
    return ExperimentConfig(**kwargs)


def load_config(path=None, seed: int | None = None, out_dir: str | None = None,
                env: str | None = None) -> ExperimentConfig:
    """Load a JSON config file and apply overrides.

    Precedence, lowest to highest: file values, the DISTILLBENCH_SEED /
    DISTILLBENCH_OUT environment variables, then explicit arguments
    (the CLI's flags).
    """
    doc: dict = {}
    if path is not None:
        raw = Path(path).read_text()
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file {path} is not valid JSON: {exc}") from exc
    cfg = config_from_dict(doc)
    env_seed = os.environ.get(ENV_SEED_VAR)
    if env_seed is not None:
        cfg = replace(cfg, master_seed=int(env_seed))
    env_out = os.environ.get(ENV_OUT_VAR)
    if env_out is not None:
        cfg = replace(cfg, out_dir=env_out)
    if seed is not None:
        cfg = replace(cfg, master_seed=seed)
    if out_dir is not None:
        cfg = replace(cfg, out_dir=out_dir)
    if env is not None:
        cfg = replace(cfg, env=env)
    return cfg


def stage_seed(master_seed: int, stage: str) -> int:
    """Deterministic per-stage seed: first 8 bytes of sha256('<seed>/<stage>')."""
    digest = hashlib.sha256(f"{master_seed}/{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _config_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def stage_hashes(cfg: ExperimentConfig) -> dict[str, str]:
    """Chained content hashes: each stage's hash covers all upstream config."""
    hashes: dict[str, str] = {}
    hashes["expert"] = _config_hash({
        "env": cfg.env, "master_seed": cfg.master_seed, "expert": asdict(cfg.expert),
    })
    hashes["dataset"] = _config_hash({
        "upstream": hashes["expert"],
        "episodes": cfg.dataset_episodes, "balance": cfg.balance,
        "split_ratio": cfg.split_ratio,
    })
    hashes["students"] = _config_hash({
        "upstream": hashes["dataset"],
        "hdt_depths": list(cfg.hdt_depths), "sdt_depths": list(cfg.sdt_depths),
        "sdt": asdict(cfg.sdt), "km_grid": [list(p) for p in cfg.km_grid],
        "km": asdict(cfg.km), "km_subsample": cfg.km_subsample,
    })
    hashes["evaluate"] = _config_hash({
        "upstream": hashes["students"], "eval": asdict(cfg.eval),
    })
    hashes["report"] = _config_hash({"upstream": hashes["evaluate"]})
    return hashes


class StageLedger:
    """Persistent record of completed stages inside one output directory."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / "stages.json"
        self.entries: dict[str, dict] = {}
        if self.path.exists():
            self.entries = json.loads(self.path.read_text())

    def is_current(self, stage: str, content_hash: str, out_dir: Path) -> bool:
        entry = self.entries.get(stage)
        if entry is None or entry["hash"] != content_hash:
            return False
        return all((out_dir / rel).exists() for rel in entry["artifacts"])

    def record(self, stage: str, content_hash: str, artifacts: list[str]) -> None:
        self.entries[stage] = {
            "hash": content_hash,
            "artifacts": artifacts,
            "completed_at": datetime.now(timezone.utc).isoformat(),
        }
        self.path.write_text(json.dumps(self.entries, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# stages; each returns artifact paths relative to the output directory


def run_expert_stage(cfg: ExperimentConfig, out: Path) -> list[str]:
    env = make_env(cfg.env)
    policy, log = train_dqn(env, cfg.expert, stage_seed(cfg.master_seed, "expert"))
    save_model(policy, out / "expert.model")
    (out / "expert_log.json").write_text(json.dumps({
        "episode_rewards": log.episode_rewards,
        "episode_epsilons": log.episode_epsilons,
        "evaluations": log.evaluations,
        "best_eval": log.best_eval,
        "gradient_steps": log.gradient_steps,
    }, indent=1) + "\n")
    return ["expert.model", "expert_log.json"]


def run_dataset_stage(cfg: ExperimentConfig, out: Path) -> list[str]:
    env = make_env(cfg.env)
    expert = load_model(out / "expert.model", env_spec=env.spec)
    ds = collect_demonstrations(env, expert, cfg.dataset_episodes,
                                stage_seed(cfg.master_seed, "dataset"))
    if cfg.balance:
        ds = balance_classes(ds, stage_seed(cfg.master_seed, "dataset.balance"))
    split = stratified_split(ds, cfg.split_ratio, stage_seed(cfg.master_seed, "dataset.split"))
    save_dataset_csv(split.train, out / "train.dataset.csv")
    save_dataset_csv(split.validation, out / "test.dataset.csv")
    return ["train.dataset.csv", "test.dataset.csv"]


def _km_label(gamma: float, c: float) -> str:
    return f"km_g{gamma:g}_c{c:g}"


def run_students_stage(cfg: ExperimentConfig, out: Path) -> list[str]:
    env = make_env(cfg.env)
    train = load_dataset_csv(out / "train.dataset.csv", n_classes=env.spec.action_count)
    models_dir = out / "models"
    models_dir.mkdir(exist_ok=True)
    artifacts: list[str] = []

    def save(model, name: str) -> None:
        save_model(model, models_dir / f"{name}.model")
        artifacts.append(f"models/{name}.model")

    for depth in cfg.hdt_depths:
        tree = train_hard_tree(train.states, train.labels, max_depth=depth,
                               n_classes=train.n_classes, label=f"hdt_d{depth}")
        save(tree, f"hdt_d{depth}")
    for depth in cfg.sdt_depths:
        tree, _ = train_soft_tree(train.states, train.labels, depth=depth,
                                  n_classes=train.n_classes, config=cfg.sdt,
                                  seed=stage_seed(cfg.master_seed, f"sdt_d{depth}"),
                                  label=f"sdt_d{depth}")
        save(tree, f"sdt_d{depth}")
    for gamma, c in cfg.km_grid:
        label = _km_label(gamma, c)
        states, labels = train.states, train.labels
        if len(states) > cfg.km_subsample:
            rng = np.random.default_rng(stage_seed(cfg.master_seed, f"{label}.subsample"))
            keep = rng.choice(len(states), size=cfg.km_subsample, replace=False)
            states, labels = states[keep], labels[keep]
        km = train_kernel_machine(states, labels, n_classes=train.n_classes,
                                  config=replace(cfg.km, gamma=gamma, c=c), label=label)
        save(km, label)
    return artifacts


def run_evaluate_stage(cfg: ExperimentConfig, out: Path, ledger: StageLedger) -> list[str]:
    env = make_env(cfg.env)
    expert = load_model(out / "expert.model", env_spec=env.spec)
    students_entry = ledger.entries.get("students")
    if students_entry is None:
        raise FileNotFoundError("students stage has not run; no models to evaluate")
    students = [load_model(out / rel, env_spec=env.spec)
                for rel in students_entry["artifacts"]]
    reports = evaluate_all(env, expert, students, cfg.eval)
    (out / "reports.json").write_text(
        json.dumps([asdict(r) for r in reports], indent=1) + "\n")
    return ["reports.json"]


def run_report_stage(cfg: ExperimentConfig, out: Path) -> list[str]:
    from .report import emit_report  # matplotlib import deferred to the report path

    raw = json.loads((out / "reports.json").read_text())
    reports = [MetricsReport(**entry) for entry in raw]
    written = emit_report(reports, out)
    return [str(p.relative_to(out)) for p in written]


def run_pipeline(cfg: ExperimentConfig, only: tuple[str, ...] | None = None,
                 force: bool = False) -> dict:
    """Execute the requested stages (all by default) and write the manifest.

    Cached stages are skipped unless ``force`` is set.  On a stage failure
    the manifest still records everything that completed, then a
    :class:`StageError` propagates so callers can exit nonzero.
    """
    selected = STAGE_ORDER if only is None else tuple(only)
    for name in selected:
        if name not in STAGE_ORDER:
            raise ValueError(f"unknown stage {name!r}")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ledger = StageLedger(out)
    hashes = stage_hashes(cfg)

    runners = {
        "expert": lambda: run_expert_stage(cfg, out),
        "dataset": lambda: run_dataset_stage(cfg, out),
        "students": lambda: run_students_stage(cfg, out),
        "evaluate": lambda: run_evaluate_stage(cfg, out, ledger),
        "report": lambda: run_report_stage(cfg, out),
    }
    try:
        for name in STAGE_ORDER:
            if name not in selected:
                continue
            if not force and ledger.is_current(name, hashes[name], out):
                continue
            try:
                artifacts = runners[name]()
            except Exception as exc:
                raise StageError(name, exc) from exc
            ledger.record(name, hashes[name], artifacts)
    finally:
        manifest = build_manifest(cfg, ledger, hashes)
        (out / "run.manifest").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def build_manifest(cfg: ExperimentConfig, ledger: StageLedger,
                   hashes: dict[str, str]) -> dict:
    """Summarize a run: config hash, per-stage seeds/artifacts, versions."""
    out = Path(cfg.out_dir)
    stages: dict[str, dict] = {}
    timestamps: dict[str, str] = {}
    for name, entry in ledger.entries.items():
        missing = [rel for rel in entry["artifacts"] if not (out / rel).exists()]
        if missing:
            raise RuntimeError(f"stage {name!r} lists missing artifacts: {missing}")
        stages[name] = {"hash": entry["hash"], "artifacts": entry["artifacts"]}
        timestamps[name] = entry["completed_at"]
    config_doc = asdict(cfg)
    config_doc.pop("out_dir")  # a run's identity is what it computes, not where
    return {
        "config_hash": _config_hash(config_doc),
        "env": cfg.env,
        "master_seed": cfg.master_seed,
        "stage_seeds": {name: stage_seed(cfg.master_seed, name) for name in STAGE_ORDER},
        "stages": stages,
        "timestamps": timestamps,
        "versions": {
            "distillbench": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }
