"""Adam optimizer and the single-regularizer training loop.

train() runs minibatch Adam on one model under exactly one regularization
mode. The modes are mutually exclusive by design; comparing them head to head
is the whole point of the harness:

    none             plain training
    weight_decay     adds alpha_w * sum ||W||^2 over dense/conv weights
    dropout          expects the model to carry dropout layers (the builders
                     insert them when a rate is requested)
    label_smoothing  blends targets toward uniform before the loss
    early_stopping   patience-based stop on a validation metric, restoring
                     the best epoch's parameters
    pruning          one-shot structured pruning after a warmup, then
                     fine-tuning (the optimizer state restarts: the old
                     moments refer to removed coordinates)
    quantization     fake-quantized forward with straight-through gradients

always_early_stop adds the early-stopping protocol on top of any mode (the
multi-task table protocol). When pruning fires while early stopping is
active, the stopper and its best-parameter snapshot reset at the pruning
boundary: pre-pruning snapshots have incompatible shapes, and the comparison
of record lengths stays meaningful because rows keep accumulating.

Randomness: the per-epoch shuffle stream and the dropout stream are spawned
from the run seed with distinct spawn keys, so runs are reproducible and the
streams never collide. Dataset noise uses its own NoiseSpec seed upstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, TrainingError
from .layers import Model, forward
from .losses import binary_ce_loss, cross_entropy_loss, one_hot
from .metrics import accuracy, binary_accuracy, f1_per_task
from .pruning import PruneSpec, prune_model
from .quantization import QuantConfig, wrap_model
from .records import EpochRow, RunRecord
from .regularization import EarlyStopper, RegularizerConfig, smooth_labels, weight_decay_loss
from .tensor import Node

MODES = (
    "none",
    "weight_decay",
    "dropout",
    "label_smoothing",
    "early_stopping",
    "pruning",
    "quantization",
)

EVAL_BATCH = 512


class Adam(object):
    """Adam with bias correction; moments start at zero."""

    def __init__(self, params: list[tuple[str, Node]], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0.0:
            raise ContractError(f"learning rate must be >= 0, got {lr}")
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ContractError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        if eps <= 0.0:
            raise ContractError(f"eps must be > 0, got {eps}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for _, p in self.params]
        self.v = [np.zeros_like(p.value) for _, p in self.params]

    def step(self) -> None:
        """Apply one update from the gradients currently on the parameters."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for i, (name, p) in enumerate(self.params):
            g = p._grad
            if g is None:
                g = np.zeros_like(p.value)
            elif not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for parameter '{name}'")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            p.value = p.value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainSettings:
    mode: str = "none"
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    reg: RegularizerConfig = field(default_factory=RegularizerConfig)
    quant: QuantConfig | None = None
    prune: PruneSpec | None = None
    always_early_stop: bool = False
    seed: int = 0
    fingerprint: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"unknown mode '{self.mode}', expected one of {MODES}")
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0.0:
            raise ContractError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.mode == "quantization" and self.quant is None:
            raise ContractError("quantization mode needs a QuantConfig")
        if self.mode == "pruning" and self.prune is None:
            raise ContractError("pruning mode needs a PruneSpec")


@dataclass
class TrainResult:
    model: Model
    record: RunRecord
    stopped_early: bool


def evaluate(model: Model, ds) -> tuple[float, float, np.ndarray | None, float | None]:
    """Eval-mode loss and metrics: (loss, accuracy, per-task F1, F1 average)."""
    was_training = model.train_mode
    model.train_mode = False
    logits = np.empty((ds.n, model.out_dim))
    for start in range(0, ds.n, EVAL_BATCH):
        stop = min(start + EVAL_BATCH, ds.n)
        logits[start:stop] = forward(model, ds.features[start:stop]).value
    model.train_mode = was_training
    node = T.constant(logits)
    if ds.is_multitask:
        loss = float(binary_ce_loss(node, ds.labels.astype(np.float64)).value)
        f1, f1_avg = f1_per_task(logits, ds.labels)
        return loss, binary_accuracy(logits, ds.labels), f1, f1_avg
    loss = float(cross_entropy_loss(node, one_hot(ds.labels, ds.num_classes)).value)
    return loss, accuracy(logits, ds.labels), None, None


def _targets(ds, settings: TrainSettings) -> np.ndarray:
    if ds.is_multitask:
        y = ds.labels.astype(np.float64)
        if settings.mode == "label_smoothing":
            y = smooth_labels(y, settings.reg.label_smoothing, 2)
        return y
    y = one_hot(ds.labels, ds.num_classes)
    if settings.mode == "label_smoothing":
        y = smooth_labels(y, settings.reg.label_smoothing, ds.num_classes)
    return y


def train(model: Model, train_ds, val_ds, test_ds, settings: TrainSettings) -> TrainResult:
    """Optimize the model for settings.epochs; returns the final model and record.

    The returned model is the object to keep using: quantization wraps and
    pruning rebuilds, so it may differ from the argument. On divergence
    (non-finite loss or gradients) raises TrainingError whose .record holds
    the rows of all fully completed epochs.
    """
    if train_ds.is_multitask != (model.head == "sigmoid"):
        raise ContractError("dataset task structure does not match the model head")
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(settings.seed, spawn_key=(1,)))
    dropout_rng = np.random.default_rng(np.random.SeedSequence(settings.seed, spawn_key=(2,)))

    if settings.mode == "quantization":
        model = wrap_model(model, settings.quant)
    prune_at = None
    if settings.mode == "pruning":
        # clamp so at least one fine-tuning epoch remains
        prune_at = min(settings.prune.warmup_epochs, settings.epochs - 1)

    opt = Adam(model.named_parameters(), settings.learning_rate,
               settings.beta1, settings.beta2, settings.adam_eps)
    stopping = settings.mode == "early_stopping" or settings.always_early_stop
    stopper = EarlyStopper(settings.reg.early_stop_patience, settings.reg.early_stop_metric) if stopping else None
    best_state = None
    stopper_offset = 0  # rows recorded before the current stopper came alive

    record = RunRecord(
        fingerprint=settings.fingerprint,
        seed=settings.seed,
        num_tasks=train_ds.num_tasks,
    )
    targets = _targets(train_ds, settings)
    decayed = model.weight_nodes() if settings.mode == "weight_decay" else None
    stopped_early = False

    for epoch in range(1, settings.epochs + 1):
        if prune_at is not None and epoch == prune_at + 1:
            model = prune_model(model, settings.prune)
            opt = Adam(model.named_parameters(), settings.learning_rate,
                       settings.beta1, settings.beta2, settings.adam_eps)
            if stopper is not None:
                stopper = EarlyStopper(settings.reg.early_stop_patience, settings.reg.early_stop_metric)
                best_state = None
                stopper_offset = len(record.rows)
        model.train_mode = True
        perm = shuffle_rng.permutation(train_ds.n)
        batch_losses = []
        for start in range(0, train_ds.n, settings.batch_size):
            ids = perm[start : start + settings.batch_size]
            logits = forward(model, train_ds.features[ids], rng=dropout_rng)
            if train_ds.is_multitask:
                data_loss = binary_ce_loss(logits, targets[ids])
            else:
                data_loss = cross_entropy_loss(logits, targets[ids])
            if not np.isfinite(data_loss.value):
                model.train_mode = False
                raise TrainingError(
                    f"loss diverged in epoch {epoch}", record=record
                )
            loss = data_loss
            if decayed is not None:
                loss = T.add(loss, weight_decay_loss(decayed, settings.reg.weight_decay))
            for _, p in opt.params:
                p.zero_grad()
            T.backward(loss)
            try:
                opt.step()
            except TrainingError as e:
                model.train_mode = False
                e.record = record
                raise
            batch_losses.append(float(data_loss.value))
        model.train_mode = False

        train_loss = float(np.mean(batch_losses))
        val_loss, val_acc, _, _ = evaluate(model, val_ds)
        _, train_acc, _, _ = evaluate(model, train_ds)
        test_loss, test_acc, f1, f1_avg = evaluate(model, test_ds)
        row = EpochRow(
            epoch=epoch,
            train_loss=train_loss,
            val_loss=val_loss,
            train_acc=train_acc,
            val_acc=val_acc,
            test_acc=test_acc,
            f1=tuple(f1) if f1 is not None else None,
            f1_avg=f1_avg,
        )
        if not all(np.isfinite(v) for v in row.metrics().values()):
            raise TrainingError(f"metrics diverged in epoch {epoch}", record=record)
        record.rows.append(row)

        if stopper is not None:
            metric = val_loss if stopper.metric == "val_loss" else val_acc
            stop = stopper.step(metric)
            if stopper.best_epoch == stopper.epoch:
                best_state = model.state_dict()
            if stop:
                stopped_early = True
                break

    if stopper is not None and best_state is not None:
        model.load_state_dict(best_state)
        record.best_epoch = stopper_offset + stopper.best_epoch
    else:
        record.best_epoch = len(record.rows)
    return TrainResult(model=model, record=record, stopped_early=stopped_early)
