"""Semi-supervised training loop: supervised loss on the labeled half of each
batch, consistency loss on the unlabeled half, SGD with momentum and weight
decay, early stopping on validation UAR.

All randomness derives from one master seed. Stream layout (reserved order):
stream 0 = data generation, 1 = parameter init, 2 = augmentation, 3 = batch
composition; the trainer consumes streams 1-3 and leaves 0 to whoever built
the datasets.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .augment import PerturbSpec, VECTOR
from .data import Batch, SplitDatasets, batch_stream, class_frequencies, default_noise_sigma
from .errors import ConfigError, DivergenceError, NumericError, ShapeError
from .losses import (ClassFrequencyTable, ConsistencyConfig, consistency_loss,
                     cross_entropy, focal_loss, weighted_ce)
from .metrics import MetricsReport, evaluate
from .model import MlpClassifier

CE = "ce"
WEIGHTED_CE = "weighted_ce"
FOCAL = "focal"

LOSS_CAP = 1e6  # divergence guard


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_labeled: int = 8
    batch_unlabeled: int = 22
    supervised_loss: str = CE
    focal_gamma: float = 1.0
    consistency: ConsistencyConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr <= 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("lr must be > 0; momentum and weight_decay must be >= 0")
        if self.batch_labeled < 1 or self.batch_unlabeled < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.supervised_loss not in (CE, WEIGHTED_CE, FOCAL):
            raise ConfigError(f"unknown supervised loss {self.supervised_loss!r}")


@dataclass
class OptimizerState:
    """Velocity buffer per parameter array, zero-initialized."""

    velocities: list[np.ndarray]

    @classmethod
    def for_params(cls, params) -> "OptimizerState":
        return cls([np.zeros_like(p.value) for p in params])


@dataclass
class EpochRecord:
    epoch: int
    sup_loss: float
    cons_loss: float
    val: MetricsReport


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_uar: float = float("-inf")
    failed: bool = False
    failure: str | None = None


def sgd_step(params, state: OptimizerState, cfg: TrainConfig) -> None:
    """v <- momentum v + (grad + wd * param); param <- param - lr * v."""
    if len(params) != len(state.velocities):
        raise ShapeError("optimizer state does not match parameter list")
    for p, v in zip(params, state.velocities):
        grad = p.grad if p.grad is not None else np.zeros_like(p.value)
        if not np.all(np.isfinite(grad)):
            raise DivergenceError("NaN/Inf gradient in sgd_step")
        v *= cfg.momentum
        v += grad + cfg.weight_decay * p.value
        p.value = p.value - cfg.lr * v


def _supervised_term(model: MlpClassifier, batch: Batch, table: ClassFrequencyTable,
                     cfg: TrainConfig) -> ad.Tensor:
    probs = model.predict_proba_batch(batch.labeled_x)
    losses = []
    for i, label in enumerate(batch.labeled_y):
        p = ad.row(probs, i)
        if cfg.supervised_loss == CE:
            losses.append(cross_entropy(p, int(label)))
        elif cfg.supervised_loss == WEIGHTED_CE:
            losses.append(weighted_ce(p, int(label), table))
        else:
            losses.append(focal_loss(p, int(label), cfg.focal_gamma))
    total = losses[0]
    for term in losses[1:]:
        total = total + term
    return total * (1.0 / len(losses))


def _consistency_term(model: MlpClassifier, batch: Batch, table: ClassFrequencyTable,
                      ccfg: ConsistencyConfig) -> ad.Tensor:
    probs_orig = model.predict_proba_batch(batch.unlabeled_x)
    probs_aug = model.predict_proba_batch(batch.unlabeled_aug)
    losses = []
    for i in range(batch.unlabeled_x.shape[0]):
        z = ad.row(probs_orig, i)
        z_hat = ad.row(probs_aug, i)
        losses.append(consistency_loss(z, z_hat, table, ccfg))
    total = losses[0]
    for term in losses[1:]:
        total = total + term
    if ccfg.reduction == "mean":
        total = total * (1.0 / len(losses))
    return total


def train_step(model: MlpClassifier, batch: Batch, table: ClassFrequencyTable,
               cfg: TrainConfig, state: OptimizerState) -> tuple[float, float]:
    """One combined forward/backward pass and one SGD update.

    Returns the supervised and consistency loss values for bookkeeping.
    """
    sup = _supervised_term(model, batch, table, cfg)
    if cfg.consistency is not None:
        cons = _consistency_term(model, batch, table, cfg.consistency)
        total = sup + cfg.consistency.unsup_weight * cons
        cons_value = cons.item()
    else:
        total = sup
        cons_value = 0.0
    total_value = total.item()
    if not math.isfinite(total_value) or total_value > LOSS_CAP:
        raise DivergenceError(f"loss diverged: {total_value}")
    model.zero_grad()
    ad.backward(total)
    sgd_step(model.parameters(), state, cfg)
    return sup.item(), cons_value


def train(cfg: TrainConfig, data: SplitDatasets, dims,
          freq_table: ClassFrequencyTable | None = None,
          noise_sigma: float | None = None) -> tuple[MlpClassifier, TrainHistory]:
    """Run the full loop and return the best-validation-UAR snapshot.

    The frequency table driving weighted CE / SCL / ABCL defaults to the
    labeled-training distribution; pass freq_table to override.
    """
    dims = [int(d) for d in dims]
    if dims[-1] != data.labeled.n_classes:
        raise ConfigError(f"model output dim {dims[-1]} != {data.labeled.n_classes} classes")
    if dims[0] != data.labeled.n_features:
        raise ConfigError(f"model input dim {dims[0]} != {data.labeled.n_features} features")
    _, init_seed, augment_seed, batch_seed = np.random.SeedSequence(cfg.seed).generate_state(4)
    model = MlpClassifier(dims, seed=int(init_seed))
    history = TrainHistory()
    if cfg.epochs == 0:
        return model, history
    if freq_table is None:
        freq_table = class_frequencies(data.labeled.labels, data.labeled.n_classes)
    if noise_sigma is None:
        noise_sigma = default_noise_sigma(data.labeled)
    spec = PerturbSpec(mode=VECTOR, noise_sigma=noise_sigma, rng_seed=int(augment_seed))
    batches = batch_stream(
        data.labeled, data.unlabeled, spec,
        rng=np.random.default_rng(int(batch_seed)),
        batch_labeled=cfg.batch_labeled,
        batch_unlabeled=cfg.batch_unlabeled,
        augment_rng=np.random.default_rng(int(augment_seed)),
    )
    state = OptimizerState.for_params(model.parameters())
    steps_per_epoch = math.ceil(len(data.labeled) / cfg.batch_labeled)
    best_state = model.get_state()
    for epoch in range(1, cfg.epochs + 1):
        sup_sum = cons_sum = 0.0
        for step in range(steps_per_epoch):
            try:
                sup, cons = train_step(model, next(batches), freq_table, cfg, state)
            except (DivergenceError, NumericError) as err:
                history.failed = True
                history.failure = f"epoch {epoch} step {step + 1}: {err}"
                model.set_state(best_state)
                return model, history
            sup_sum += sup
            cons_sum += cons
        val_report = evaluate(model, data.val)
        history.epochs.append(EpochRecord(
            epoch=epoch,
            sup_loss=sup_sum / steps_per_epoch,
            cons_loss=cons_sum / steps_per_epoch,
            val=val_report,
        ))
        if val_report.uar > history.best_val_uar:
            history.best_val_uar = val_report.uar
            history.best_epoch = epoch
            best_state = model.get_state()
    model.set_state(best_state)
    return model, history


def write_history_csv(history: TrainHistory, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "sup_loss", "cons_loss", "val_uar", "val_gmean", "val_avg_auc"])
        for rec in history.epochs:
            writer.writerow([rec.epoch, repr(rec.sup_loss), repr(rec.cons_loss),
                             repr(rec.val.uar), repr(rec.val.g_mean), repr(rec.val.avg_auc)])
