"""Experiment orchestration: INI config parsing, method wiring, seeded runs.

A method name selects the supervised loss, the consistency loss, and whether
the labeled pool is resampled: the nine names cover plain supervised training,
the UDA baseline, and every imbalance-handling combination from the study.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import losses, trainer
from .data import (Dataset, GaussianMixtureSpec, SplitDatasets, apply_sampling_baseline,
                   class_frequencies, default_noise_sigma, generate_gaussian_mixture,
                   load_csv, split_labeled_unlabeled, stratified_split)
from .errors import ConfigError
from .losses import ConsistencyConfig
from .metrics import MetricsReport, evaluate
from .trainer import TrainConfig, TrainHistory, train

# method -> (supervised loss, consistency kind or None, resample labeled pool)
METHODS: dict[str, tuple[str, str | None, bool]] = {
    "supervised": (trainer.CE, None, False),
    "uda": (trainer.CE, losses.CL, False),
    "uda-sampling": (trainer.CE, losses.CL, True),
    "uda-weightedce": (trainer.WEIGHTED_CE, losses.CL, False),
    "uda-focal": (trainer.FOCAL, losses.CL, False),
    "uda-scl": (trainer.CE, losses.SCL, False),
    "uda-abcl": (trainer.CE, losses.ABCL, False),
    "uda-weightedce-scl": (trainer.WEIGHTED_CE, losses.SCL, False),
    "uda-weightedce-abcl": (trainer.WEIGHTED_CE, losses.ABCL, False),
}

SEED_ENV_VAR = "IMBASSL_SEED"


@dataclass
class ExperimentConfig:
    """Everything one `imba-ssl` command needs, parsed from an INI file."""

    # dataset: either a generator spec or a CSV path
    gm_spec: GaussianMixtureSpec | None = None
    data_csv: str | None = None
    unlabeled_csv: str | None = None
    labeled_fraction: float = 0.1
    noise_sigma: float | None = None
    # model
    dims: list[int] = field(default_factory=lambda: [2, 16, 2])
    # training
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    gamma: float = 0.4
    beta: float = 0.8
    blending: str = losses.ALWAYS_ON
    unsup_weight: float = 1.0
    # experiment
    method: str = "uda-abcl"
    seeds: list[int] = field(default_factory=lambda: [0])


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip() != ""]


def _parse_ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip() != ""]


def load_experiment_config(path) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as err:
        raise ConfigError(f"{path}: {err}") from err
    cfg = ExperimentConfig()
    try:
        _read_dataset_section(parser, cfg)
        _read_model_section(parser, cfg)
        _read_train_section(parser, cfg)
        _read_experiment_section(parser, cfg)
    except (ValueError, KeyError) as err:
        if isinstance(err, ConfigError):
            raise ConfigError(f"{path}: {err}") from err
        raise ConfigError(f"{path}: malformed value ({err})") from err
    env_seeds = os.environ.get(SEED_ENV_VAR)
    if env_seeds:
        cfg.seeds = _parse_ints(env_seeds)
    return cfg


def _read_dataset_section(parser, cfg: ExperimentConfig) -> None:
    if not parser.has_section("dataset"):
        raise ConfigError("missing [dataset] section")
    sec = parser["dataset"]
    if "data_csv" in sec:
        cfg.data_csv = sec["data_csv"]
        cfg.unlabeled_csv = sec.get("unlabeled_csv") or None
        cfg.labeled_fraction = sec.getfloat("labeled_fraction", cfg.labeled_fraction)
    else:
        fractions = np.array(_parse_floats(sec["class_fractions"]))
        n_features = sec.getint("n_features", 2)
        means = None
        if sec.get("means"):
            rows = [r for r in sec["means"].split(";") if r.strip()]
            means = np.array([_parse_floats(r) for r in rows])
        cfg.gm_spec = GaussianMixtureSpec(
            class_fractions=fractions,
            means=means,
            cov_scale=sec.getfloat("cov_scale", 1.0),
            n_labeled=sec.getint("n_labeled", 100),
            n_unlabeled=sec.getint("n_unlabeled", 1000),
            n_val=sec.getint("n_val", 200),
            n_test=sec.getint("n_test", 400),
            n_features=n_features,
        )
    if sec.get("noise_sigma"):
        cfg.noise_sigma = sec.getfloat("noise_sigma")


def _read_model_section(parser, cfg: ExperimentConfig) -> None:
    if not parser.has_section("model"):
        raise ConfigError("missing [model] section")
    cfg.dims = _parse_ints(parser["model"]["dims"])


def _read_train_section(parser, cfg: ExperimentConfig) -> None:
    sec = parser["train"] if parser.has_section("train") else {}
    getf = lambda key, default: float(sec[key]) if key in sec else default
    geti = lambda key, default: int(sec[key]) if key in sec else default
    base = TrainConfig()
    cfg.train_cfg = TrainConfig(
        epochs=geti("epochs", base.epochs),
        lr=getf("lr", base.lr),
        momentum=getf("momentum", base.momentum),
        weight_decay=getf("weight_decay", base.weight_decay),
        batch_labeled=geti("batch_labeled", base.batch_labeled),
        batch_unlabeled=geti("batch_unlabeled", base.batch_unlabeled),
        focal_gamma=getf("focal_gamma", base.focal_gamma),
    )
    cfg.gamma = getf("gamma", cfg.gamma)
    cfg.beta = getf("beta", cfg.beta)
    cfg.unsup_weight = getf("unsup_weight", cfg.unsup_weight)
    if "blending" in sec:
        cfg.blending = normalize_blending(sec["blending"])


def _read_experiment_section(parser, cfg: ExperimentConfig) -> None:
    if not parser.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    sec = parser["experiment"]
    cfg.method = sec.get("method", cfg.method).strip()
    if cfg.method not in METHODS:
        raise ConfigError(f"unknown method {cfg.method!r}; valid: {', '.join(sorted(METHODS))}")
    if "seeds" in sec:
        cfg.seeds = _parse_ints(sec["seeds"])
    if not cfg.seeds:
        raise ConfigError("seeds list is empty")


def normalize_blending(token: str) -> str:
    token = token.strip().lower()
    if token in ("always", "always-on", "always_on"):
        return losses.ALWAYS_ON
    if token == "selective":
        return losses.SELECTIVE
    raise ConfigError(f"unknown blending mode {token!r} (use always or selective)")


def build_splits(cfg: ExperimentConfig, seed: int) -> SplitDatasets:
    """Deterministic per-seed datasets; stream 0 of the master seed drives the data."""
    state = np.random.SeedSequence(seed).generate_state(5)
    data_seed = int(state[0])
    if cfg.gm_spec is not None:
        return generate_gaussian_mixture(replace(cfg.gm_spec, seed=data_seed))
    full = load_csv(cfg.data_csv)
    if full.labels is None:
        raise ConfigError(f"{cfg.data_csv}: the main CSV must carry labels")
    train_split, test, val = stratified_split(full.features, full.labels,
                                              (0.70, 0.20, 0.10), seed=data_seed)
    if cfg.unlabeled_csv:
        unlabeled = load_csv(cfg.unlabeled_csv, n_classes=full.n_classes)
        labeled = train_split
        if unlabeled.labels is not None:
            unlabeled = Dataset(unlabeled.features, None, full.n_classes)
    else:
        labeled, unlabeled = split_labeled_unlabeled(train_split, cfg.labeled_fraction,
                                                     seed=data_seed)
    return SplitDatasets(labeled=labeled, unlabeled=unlabeled, val=val, test=test)


@dataclass
class RunResult:
    seed: int
    report: MetricsReport
    history: TrainHistory
    model: object


def consistency_for(cfg: ExperimentConfig, kind: str | None,
                    gamma: float | None = None,
                    blending: str | None = None) -> ConsistencyConfig | None:
    if kind is None:
        return None
    return ConsistencyConfig(
        kind=kind,
        gamma=cfg.gamma if gamma is None else gamma,
        beta=cfg.beta,
        blending=cfg.blending if blending is None else blending,
        unsup_weight=cfg.unsup_weight,
    )


def run_method(cfg: ExperimentConfig, method: str, seed: int,
               gamma: float | None = None, blending: str | None = None,
               aug_scale: float = 1.0) -> RunResult:
    """Train one method on one master seed and evaluate on the test split.

    aug_scale multiplies the perturbation sigma (3.0 realizes the strong
    setting for the vector datasets).
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; valid: {', '.join(sorted(METHODS))}")
    sup_loss, cons_kind, resample = METHODS[method]
    splits = build_splits(cfg, seed)
    if resample:
        sampling_rng = np.random.default_rng(int(np.random.SeedSequence(seed).generate_state(5)[4]))
        splits = SplitDatasets(
            labeled=apply_sampling_baseline(splits.labeled, rng=sampling_rng),
            unlabeled=splits.unlabeled, val=splits.val, test=splits.test,
        )
    sigma = cfg.noise_sigma if cfg.noise_sigma is not None else default_noise_sigma(splits.labeled)
    train_cfg = replace(cfg.train_cfg,
                        supervised_loss=sup_loss,
                        consistency=consistency_for(cfg, cons_kind, gamma, blending),
                        seed=seed)
    model, history = train(train_cfg, splits, cfg.dims, noise_sigma=sigma * aug_scale)
    report = evaluate(model, splits.test)
    return RunResult(seed=seed, report=report, history=history, model=model)


def run_seeds(cfg: ExperimentConfig, method: str, seeds=None,
              gamma: float | None = None, blending: str | None = None,
              aug_scale: float = 1.0) -> list[RunResult]:
    seeds = cfg.seeds if seeds is None else seeds
    return [run_method(cfg, method, s, gamma, blending, aug_scale) for s in seeds]


def summarize(method: str, results: list[RunResult]) -> dict:
    """Per-seed metrics plus elementwise mean and (population) std."""
    per_seed = [{
        "seed": r.seed,
        "uar": r.report.uar,
        "g_mean": r.report.g_mean,
        "avg_auc": r.report.avg_auc,
        "per_class_recall": r.report.per_class_recall,
    } for r in results]
    keys = ("uar", "g_mean", "avg_auc")
    mean = {k: float(np.mean([p[k] for p in per_seed])) for k in keys}
    std = {k: float(np.std([p[k] for p in per_seed])) for k in keys}
    recalls = np.array([p["per_class_recall"] for p in per_seed])
    mean["per_class_recall"] = [float(v) for v in recalls.mean(axis=0)]
    std["per_class_recall"] = [float(v) for v in recalls.std(axis=0)]
    return {
        "method": method,
        "seeds": [r.seed for r in results],
        "per_seed": per_seed,
        "mean": mean,
        "std": std,
    }
