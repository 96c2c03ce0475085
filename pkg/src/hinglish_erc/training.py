"""Training: AdamW with encoder/main parameter groups, reduce-on-plateau
learning-rate schedule, early stopping on validation weighted F1."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import neuralcore as nc
from .corpus import Conversation
from .errors import DataError, NumericalError
from .evalmetrics import EvalReport, evaluate
from .models import GRU, SIMPLE_AUG, Ensemble, ModelBundle, batch_size_for, predict_conversation
from .neuralcore import ENCODER_GROUP, MAIN_GROUP, Parameter
from .seeding import component_rng

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    max_epochs: int = 50
    batch_size: int | None = None
    patience: int = 5
    scheduler_factor: float = 0.5
    scheduler_patience: int = 2
    seed: int = 0
    grad_clip_norm: float | None = 5.0
    encoder_lr: float = 5e-6
    main_lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    train_on_all: bool = False
    # stop as soon as validation accuracy reaches this value
    target_accuracy: float | None = None

    def __post_init__(self):
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    def resolved_batch_size(self, kind: str) -> int:
        return self.batch_size if self.batch_size is not None else batch_size_for(kind)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)


def adamw_step(theta, grad, m, v, step, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01):
    """One AdamW update in place; returns ``theta``.

    Weight decay is decoupled: it shrinks the old parameter value directly
    instead of entering the moment estimates.
    """
    m *= beta1
    m += (1 - beta1) * grad
    v *= beta2
    v += (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1**step)
    v_hat = v / (1 - beta2**step)
    update = lr * m_hat / (np.sqrt(v_hat) + eps) + lr * weight_decay * theta
    theta -= update
    return theta


class AdamW:
    def __init__(self, params: Sequence[Parameter], lrs: dict[str, float], betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = list(params)
        self.lrs = dict(lrs)
        missing = {p.group for p in self.params} - set(self.lrs)
        if missing:
            raise ValueError(f"no learning rate for parameter groups {sorted(missing)}")
        self.betas, self.eps, self.weight_decay = betas, eps, weight_decay
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}
        self.step_count = 0

    def step(self) -> None:
        for p in self.params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise NumericalError(f"non-finite gradient for parameter {p.name!r} at step {self.step_count + 1}")
        self.step_count += 1
        b1, b2 = self.betas
        for p in self.params:
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            adamw_step(p.data, grad, self.m[p.name], self.v[p.name], self.step_count, self.lrs[p.group], b1, b2, self.eps, self.weight_decay)

    def scale_lrs(self, factor: float) -> None:
        for g in self.lrs:
            self.lrs[g] *= factor


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


class ReduceOnPlateau:
    """Scale every group's learning rate by ``factor`` once the metric has
    failed to improve for more than ``patience`` consecutive epochs."""

    def __init__(self, optimizer: AdamW, factor: float = 0.5, patience: int = 2):
        self.optimizer, self.factor, self.patience = optimizer, factor, patience
        self.best = -math.inf
        self.bad_epochs = 0

    def step(self, metric: float) -> bool:
        if metric > self.best:
            self.best = metric
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs > self.patience:
            self.optimizer.scale_lrs(self.factor)
            self.bad_epochs = 0
            return True
        return False


class EarlyStopping:
    def __init__(self, patience: int = 5):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch: int | None = None
        self.since_best = 0

    def update(self, metric: float, epoch: int) -> bool:
        """Record one epoch's metric; True when it is a new best."""
        if metric > self.best:
            self.best, self.best_epoch, self.since_best = metric, epoch, 0
            return True
        self.since_best += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.since_best >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_weighted_f1: float | None
    val_accuracy: float | None
    lrs: dict[str, float]
    best: bool = False


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    stop_reason: str = ""

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(e), sort_keys=True) + "\n" for e in self.epochs)

    def summary(self) -> str:
        lines = [f"epochs run: {len(self.epochs)}  best epoch: {self.best_epoch}  stop: {self.stop_reason}"]
        for e in self.epochs:
            f1 = "-" if e.val_weighted_f1 is None else f"{e.val_weighted_f1:.4f}"
            acc = "-" if e.val_accuracy is None else f"{e.val_accuracy:.4f}"
            mark = " *" if e.best else ""
            lines.append(f"epoch {e.epoch:4d}  loss {e.train_loss:.5f}  val_f1 {f1}  val_acc {acc}  main_lr {e.lrs[MAIN_GROUP]:.3g}{mark}")
        return "\n".join(lines) + "\n"


def evaluate_model(model: ModelBundle | Ensemble, convs: Sequence[Conversation]) -> EvalReport:
    """Chained (inference-mode) predictions scored against gold labels."""
    preds, golds = [], []
    for conv in convs:
        out = model.predict_conversation(conv) if isinstance(model, Ensemble) else predict_conversation(conv, model)
        preds.extend(p.label for p in out)
        golds.extend(u.gold for u in conv.utterances)
    return evaluate(preds, golds, model.members[0].labels if isinstance(model, Ensemble) else model.labels)


def make_optimizer(bundle: ModelBundle, cfg: TrainConfig) -> AdamW:
    return AdamW(
        list(bundle.store),
        {ENCODER_GROUP: cfg.encoder_lr, MAIN_GROUP: cfg.main_lr},
        (cfg.beta1, cfg.beta2),
        cfg.eps,
        cfg.weight_decay,
    )


def _training_windows(bundle: ModelBundle, convs: Sequence[Conversation]):
    per_conv = []
    for conv in convs:
        wins = bundle.windows(conv, teacher_forcing=True, include_synthetic=bundle.kind == SIMPLE_AUG)
        per_conv.append([w for w in wins if w.gold is not None])
    return [w for w in per_conv if w]


def _epoch_order(bundle: ModelBundle, per_conv, rng: np.random.Generator):
    if bundle.kind == GRU:
        return [w for c in rng.permutation(len(per_conv)) for w in per_conv[c]]
    flat = [w for ws in per_conv for w in ws]
    return [flat[i] for i in rng.permutation(len(flat))]


def train_model(
    bundle: ModelBundle,
    train_convs: Sequence[Conversation],
    val_convs: Sequence[Conversation] | None,
    cfg: TrainConfig | None = None,
    score_fn: Callable[[ModelBundle, int], float] | None = None,
) -> tuple[ModelBundle, TrainLog]:
    """Train ``bundle`` in place and return it restored to its best epoch.

    ``score_fn(bundle, epoch)`` replaces the validation weighted F1 (used to
    drive early stopping from crafted metric traces).
    """
    cfg = cfg or TrainConfig()
    train_convs = list(train_convs)
    val_convs = list(val_convs or [])
    if cfg.train_on_all:
        train_convs += val_convs
        val_convs = []
    per_conv = _training_windows(bundle, train_convs)
    if not per_conv:
        raise DataError("no gold-labelled training utterances")
    validate = score_fn is not None or bool(val_convs)
    batch_size = cfg.resolved_batch_size(bundle.kind)
    rng = component_rng(cfg.seed, "train")
    opt = make_optimizer(bundle, cfg)
    scheduler = ReduceOnPlateau(opt, cfg.scheduler_factor, cfg.scheduler_patience)
    stopper = EarlyStopping(cfg.patience)
    trainlog = TrainLog()
    best_snapshot = None
    params = list(bundle.store)
    for epoch in range(1, cfg.max_epochs + 1):
        order = _epoch_order(bundle, per_conv, rng)
        losses = []
        for b, start in enumerate(range(0, len(order), batch_size)):
            batch = order[start : start + batch_size]
            bundle.store.zero_grad()
            try:
                out = bundle.forward(batch, training=True, rng=rng)
                loss = nc.cross_entropy(out.logits, [bundle.labels.index(w.gold) for w in batch])
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}, batch {b}: {exc}") from None
            if not math.isfinite(loss.item()):
                raise NumericalError(f"loss diverged at epoch {epoch}, batch {b}")
            loss.backward()
            if cfg.grad_clip_norm:
                clip_grad_norm(params, cfg.grad_clip_norm)
            opt.step()
            losses.append(loss.item() * len(batch))
        train_loss = sum(losses) / len(order)
        record = EpochRecord(epoch, train_loss, None, None, dict(opt.lrs))
        trainlog.epochs.append(record)
        if not validate:
            continue
        if score_fn is not None:
            score, acc = score_fn(bundle, epoch), None
        else:
            report = evaluate_model(bundle, val_convs)
            score, acc = report.weighted_f1, report.accuracy
        record.val_weighted_f1, record.val_accuracy = score, acc
        scheduler.step(score)
        if stopper.update(score, epoch):
            record.best = True
            best_snapshot = bundle.store.snapshot()
        log.info("epoch %d loss %.5f val_f1 %.4f", epoch, train_loss, score)
        if cfg.target_accuracy is not None and acc is not None and acc >= cfg.target_accuracy:
            trainlog.stop_reason = "target accuracy reached"
            break
        if stopper.should_stop:
            trainlog.stop_reason = "early stopping"
            break
    else:
        trainlog.stop_reason = "max epochs"
    if best_snapshot is not None:
        bundle.store.restore(best_snapshot)
        trainlog.best_epoch = stopper.best_epoch
    else:
        trainlog.best_epoch = len(trainlog.epochs)
        trainlog.epochs[-1].best = True
    bundle.meta["best_epoch"] = trainlog.best_epoch
    return bundle, trainlog
