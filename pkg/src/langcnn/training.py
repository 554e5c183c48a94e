"""Training loop: Adam, cosine warm restarts, clipping, CIDEr stopping.

Each epoch shuffles the training records with a seeded generator, sums
teacher-forced losses over minibatches (mean per record), clips the
global gradient norm, and applies one Adam update per batch. Validation
runs beam decoding and scores CIDEr/BLEU-4; the best-CIDEr checkpoint is
kept and training stops once the epochs since the best exceed the
patience. Identical seed and config reproduce the loss trajectory
bit for bit on a single thread.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import checkpoint as ckpt
from . import decoding, metrics
from .autograd import Tensor
from .data import CaptionRecord, FeatureStore, Vocabulary, decode_caption
from .errors import DivergenceError, GradientError
from .model import CaptionerModel, sequence_loss

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )


def adam_update(params: dict[str, Tensor], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam step, in place; the step counter moves once.

    A non-finite gradient aborts before any parameter is touched.
    """
    for name, p in params.items():
        if not np.all(np.isfinite(p.grad)):
            raise GradientError(name)
    state.step += 1
    t = state.step
    correct1 = 1.0 - ADAM_BETA1**t
    correct2 = 1.0 - ADAM_BETA2**t
    for name, p in params.items():
        g = p.grad
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        p.data -= lr * (m / correct1) / (np.sqrt(v / correct2) + ADAM_EPS)


def clip_gradients(params: dict[str, Tensor], clip_norm: float | None) -> float:
    """Scale all gradients so their global norm is at most clip_norm.

    Returns the pre-clip norm. clip_norm of None or 0 disables clipping.
    """
    sq = 0.0
    for p in params.values():
        sq += float(np.dot(p.grad.reshape(-1), p.grad.reshape(-1)))
    norm = math.sqrt(sq)
    if clip_norm and norm > clip_norm:
        scale = clip_norm / norm
        for p in params.values():
            p.grad *= scale
    return norm


@dataclass
class RestartSchedule:
    """Cosine decay from base_lr to floor, restarting with growing periods."""

    base_lr: float
    period: int = 5
    period_mult: int = 2
    floor: float | None = None  # defaults to base_lr / 100

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.period < 1 or self.period_mult < 1:
            raise ValueError("period and period_mult must be >= 1")
        if self.floor is None:
            self.floor = self.base_lr / 100.0
        if not (0 <= self.floor <= self.base_lr):
            raise ValueError("floor must sit within [0, base_lr]")

    def lr_at(self, epoch: float) -> float:
        if epoch < 0:
            raise ValueError(f"epoch must be >= 0, got {epoch}")
        offset = float(epoch)
        length = float(self.period)
        while offset >= length:
            offset -= length
            length *= self.period_mult
        return self.floor + 0.5 * (self.base_lr - self.floor) * (
            1.0 + math.cos(math.pi * offset / length)
        )


@dataclass
class TrainConfig:
    base_lr: float = 2e-4
    epochs: int = 20
    batch_size: int = 16
    clip_norm: float | None = 5.0
    patience: int = 5
    beam_size: int = 2
    seed: int = 0
    eval_every: int = 1
    restart_period: int = 5
    restart_mult: int = 2
    lr_floor: float | None = None
    max_decode_len: int = 16

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.patience < 0 or self.eval_every < 1:
            raise ValueError("patience must be >= 0 and eval_every >= 1")

    def schedule(self) -> RestartSchedule:
        return RestartSchedule(
            base_lr=self.base_lr,
            period=self.restart_period,
            period_mult=self.restart_mult,
            floor=self.lr_floor,
        )


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float  # mean cross-entropy per predicted token
    val_cider: float  # nan when validation was skipped this epoch
    val_bleu4: float


@dataclass
class TrainReport:
    epochs: list[EpochLog] = field(default_factory=list)
    best_epoch: int = -1
    best_cider: float = -math.inf
    stopped_early: bool = False

    def rows(self) -> list[tuple]:
        return [
            (e.epoch, e.lr, e.train_loss, e.val_cider, e.val_bleu4)
            for e in self.epochs
        ]


REPORT_HEADER = ("epoch", "lr", "train_loss", "val_CIDEr", "val_BLEU4")


def save_report(path, report: TrainReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(REPORT_HEADER) + "\n")
        for e in report.epochs:
            fh.write(
                f"{e.epoch}\t{e.lr!r}\t{e.train_loss!r}\t"
                f"{e.val_cider!r}\t{e.val_bleu4!r}\n"
            )


def _validate(
    model: CaptionerModel,
    vocab: Vocabulary,
    val_records: list[CaptionRecord],
    features: FeatureStore,
    config: TrainConfig,
) -> tuple[float, float]:
    """Beam-decode every unique validation image and score the captions."""
    refs_by_image: dict[str, list[str]] = {}
    for rec in val_records:
        refs_by_image.setdefault(rec.image_id, []).append(
            decode_caption(vocab, rec.tokens)
        )
    was_training = model.training
    model.training = False
    try:
        candidates = []
        reference_sets = []
        for image_id, refs in refs_by_image.items():
            hyps = decoding.beam_search(
                model,
                features.get(image_id),
                k=config.beam_size,
                max_len=config.max_decode_len,
            )
            candidates.append(decode_caption(vocab, hyps[0].tokens))
            reference_sets.append(refs)
    finally:
        model.training = was_training
    val_cider = metrics.cider(candidates, reference_sets)
    val_bleu4 = metrics.bleu(candidates, reference_sets, max_n=4)
    return val_cider, val_bleu4


def train(
    model: CaptionerModel,
    vocab: Vocabulary,
    train_records: list[CaptionRecord],
    val_records: list[CaptionRecord],
    features: FeatureStore,
    config: TrainConfig,
    out_dir=None,
) -> TrainReport:
    if not train_records or not val_records:
        raise ValueError("train and validation splits must both be non-empty")
    for rec in train_records + val_records:
        features.get(rec.image_id)  # raises MissingFeatureError up front
    ss = np.random.SeedSequence(config.seed)
    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    model.set_training(True, dropout_rng)
    schedule = config.schedule()
    adam = AdamState.for_params(model.params)
    report = TrainReport()
    best_dir = os.path.join(out_dir, "checkpoint_best") if out_dir else None
    since_best = 0
    try:
        for epoch in range(config.epochs):
            lr = schedule.lr_at(epoch)
            order = shuffle_rng.permutation(len(train_records))
            epoch_loss = 0.0
            epoch_tokens = 0
            for at in range(0, len(order), config.batch_size):
                batch = [train_records[i] for i in order[at : at + config.batch_size]]
                model.zero_grads()
                total = None
                for rec in batch:
                    loss = sequence_loss(model, rec, features.get(rec.image_id))
                    epoch_loss += loss.item()
                    epoch_tokens += len(rec.tokens)
                    total = loss if total is None else ag.add(total, loss)
                if not math.isfinite(total.item()):
                    raise DivergenceError(
                        f"training loss became non-finite at epoch {epoch}",
                        best_checkpoint=best_dir if report.best_epoch >= 0 else None,
                    )
                ag.backward(ag.scale_shift(total, 1.0 / len(batch)))
                clip_gradients(model.params, config.clip_norm)
                adam_update(model.params, adam, lr)
            train_loss = epoch_loss / epoch_tokens
            is_last = epoch == config.epochs - 1
            evaluate = (epoch % config.eval_every == 0) or is_last
            val_cider = val_bleu4 = math.nan
            if evaluate:
                val_cider, val_bleu4 = _validate(
                    model, vocab, val_records, features, config
                )
                if val_cider > report.best_cider:
                    report.best_cider = val_cider
                    report.best_epoch = epoch
                    since_best = 0
                    if best_dir:
                        ckpt.save_checkpoint(best_dir, model, vocab)
                else:
                    since_best += 1
            report.epochs.append(
                EpochLog(epoch, lr, train_loss, val_cider, val_bleu4)
            )
            if evaluate and since_best > config.patience:
                report.stopped_early = True
                break
    finally:
        model.set_training(False)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        save_report(os.path.join(out_dir, "report.tsv"), report)
        from .figures import save_training_curves

        save_training_curves(report, os.path.join(out_dir, "training_curves.png"))
    return report
