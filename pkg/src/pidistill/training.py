"""Losses, Adam, and the four training methods.

Methods: ``teacher`` fits the privileged image+text classifier with plain
cross-entropy; ``pi_distill`` trains the image-only student against
(1 - lambda) * CE(f, y) + lambda * CE(f, softmax(teacher_logits / tau));
``self_distill`` is the same recipe with an image-only teacher; and
``image_only`` is plain supervised training. Teacher targets are computed in
eval mode with no gradient flow and no RNG draws, so a lambda=0 distillation
run follows the image-only run's float path exactly.

Checkpoints keep the epoch with the highest validation AUC (epoch 0 is the
untrained initialization); ties go to the earlier epoch.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, config_fingerprint
from .data import EmbeddingDataset, SplitPlan, split_hash
from .errors import ConfigError, DataError, TrainingError
from .heads import StudentClassifier, TeacherClassifier, assign_parameters
from .metrics import ScoredSet, auc_binary, auc_multiclass, auprc
from .rng import fisher_yates, stream
from .tensor import GradTape, Matrix

METHODS = ("image_only", "teacher", "pi_distill", "self_distill")
LP_VARIANTS = ("mean_lp", "cls_lp")
DEFAULT_LR = 1e-4
DEFAULT_LP_LR = 1e-3


@dataclass(frozen=True)
class TrainConfig:
    method: str
    epochs: int
    seed: int
    lam: float = 0.75
    tau: float = 0.25
    learning_rate: float | None = None
    batch_size: int = 64
    head_variant: str = "attention"
    dropout_p: float = 0.2
    qkv_bias: bool = False
    scale_scores: bool = True
    auc_averaging: str = "micro"  # multiclass checkpoint-selection metric
    eval_train: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lam}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.auc_averaging not in ("micro", "ovr"):
            raise ConfigError(
                f"auc_averaging must be micro or ovr, got {self.auc_averaging!r}")

    @property
    def lr(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return DEFAULT_LP_LR if self.head_variant in LP_VARIANTS else DEFAULT_LR

    def to_dict(self) -> dict:
        return {
            "method": self.method, "epochs": self.epochs, "seed": self.seed,
            "lam": self.lam, "tau": self.tau, "learning_rate": self.lr,
            "batch_size": self.batch_size, "head_variant": self.head_variant,
            "dropout_p": self.dropout_p, "qkv_bias": self.qkv_bias,
            "scale_scores": self.scale_scores,
            "auc_averaging": self.auc_averaging,
        }


class Adam:
    """Bias-corrected Adam over named parameters."""

    def __init__(self, named_params, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.named = list(named_params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.named}
        self.v = {name: np.zeros_like(p.data) for name, p in self.named}

    def step(self, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.named:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.isfinite(g).all():
                raise TrainingError(f"non-finite gradient in parameter {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        for _, p in self.named:
            p.zero_grad()


def distillation_loss(student_probs: Matrix, label: int,
                      teacher_logits: np.ndarray, lam: float, tau: float,
                      tape: GradTape | None = None) -> Matrix:
    """(1 - lam) * CE(student, label) + lam * CE(student, teacher^tau).

    The teacher target softmax(teacher_logits / tau) is a constant. The
    combination is written so lam=0 reproduces the plain cross-entropy
    bit-for-bit: scaling by 1.0 and adding 0.0 are exact.
    """
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {lam}")
    hard = T.cross_entropy(student_probs, label, tape)
    target = T.softmax_rows(Matrix(np.asarray(teacher_logits,
                                              dtype=np.float64).reshape(1, -1)),
                            tau).data[0]
    soft = T.soft_cross_entropy(student_probs, target, tape)
    return T.add(T.scale(hard, 1.0 - lam, tape), T.scale(soft, lam, tape), tape)


# ---------------------------------------------------------------------------
# evaluation


def collect_scores(model, dataset: EmbeddingDataset, indices) -> ScoredSet:
    """Eval-mode class probabilities over the given sample indices."""
    rng = np.random.default_rng(0)  # never consumed in eval mode
    rows = []
    labels = []
    is_teacher = isinstance(model, TeacherClassifier)
    for i in indices:
        rec = dataset.records[i]
        if is_teacher:
            probs = model.forward(Matrix(rec.image), Matrix(rec.text), rng,
                                  training=False)
        else:
            probs = model.forward(Matrix(rec.image), rng, training=False)
        rows.append(probs.data[0])
        labels.append(rec.label)
    return ScoredSet(np.vstack(rows), np.asarray(labels, dtype=np.int64))


def score_metrics(scored: ScoredSet, auc_averaging: str = "micro"
                  ) -> dict[str, float]:
    """AUC and AUPRC with binary tasks collapsing to the positive column."""
    if scored.n_classes == 2:
        return {
            "auc": auc_binary(scored.scores[:, 1], scored.labels == 1),
            "auprc": auprc(scored, "binary"),
        }
    return {
        "auc": auc_multiclass(scored, auc_averaging),
        "auprc": auprc(scored, "micro"),
    }


# ---------------------------------------------------------------------------
# training engine


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list[tuple[int, str, str, float]]
    best_epoch: int
    best_val: dict[str, float]
    wall_s: float


def _build_student(dataset: EmbeddingDataset, config: TrainConfig
                   ) -> StudentClassifier:
    if config.head_variant == "cls_lp" and not dataset.has_cls.get("image"):
        raise ConfigError(
            "cls_lp head requires a dataset with a leading image CLS token")
    model = StudentClassifier(dataset.d_image, dataset.n_classes,
                              variant=config.head_variant,
                              dropout_p=config.dropout_p,
                              qkv_bias=config.qkv_bias,
                              scale_scores=config.scale_scores)
    return model.init(stream(config.seed, "init:student"))


def _build_teacher(dataset: EmbeddingDataset, config: TrainConfig
                   ) -> TeacherClassifier:
    if not dataset.has_text:
        raise DataError("teacher training requires text tokens")
    model = TeacherClassifier(dataset.d_image, dataset.d_text,
                              dataset.n_classes, dropout_p=config.dropout_p,
                              qkv_bias=config.qkv_bias,
                              scale_scores=config.scale_scores)
    return model.init(stream(config.seed, "init:teacher"))


def rebuild_model(ckpt: Checkpoint):
    """Reconstruct a model object from checkpoint metadata + parameters."""
    meta = ckpt.meta
    try:
        kind = meta["kind"]
        if kind == "teacher":
            model = TeacherClassifier(
                meta["d_visual"], meta["d_text"], meta["n_classes"],
                dropout_p=meta["dropout_p"], qkv_bias=meta["qkv_bias"],
                scale_scores=meta["scale_scores"])
        elif kind == "student":
            model = StudentClassifier(
                meta["d_visual"], meta["n_classes"], variant=meta["variant"],
                dropout_p=meta["dropout_p"], qkv_bias=meta["qkv_bias"],
                scale_scores=meta["scale_scores"])
        else:
            raise ConfigError(f"unknown checkpoint kind {kind!r}")
    except KeyError as exc:
        raise ConfigError(f"checkpoint metadata missing {exc}") from exc
    assign_parameters(model, ckpt.params)
    return model


def _model_meta(model, config: TrainConfig) -> dict:
    if isinstance(model, TeacherClassifier):
        return {"kind": "teacher", "d_visual": model.d_visual,
                "d_text": model.d_text, "n_classes": model.n_classes,
                "dropout_p": model.visual.dropout_p,
                "qkv_bias": model.visual.qkv_bias,
                "scale_scores": model.visual.scale_scores,
                "method": config.method}
    return {"kind": "student", "d_visual": model.d, "variant": model.variant,
            "n_classes": model.n_classes, "dropout_p": config.dropout_p,
            "qkv_bias": config.qkv_bias, "scale_scores": config.scale_scores,
            "method": config.method}


def _teacher_logit_fn(config: TrainConfig, dataset: EmbeddingDataset,
                      teacher_ckpt: Checkpoint | None):
    """Frozen per-sample teacher logits for distillation targets.

    Eval mode consumes no RNG and the teacher is constant, so logits are
    cached per sample index.
    """
    if config.method == "image_only":
        if teacher_ckpt is not None:
            raise ConfigError("image_only takes no teacher checkpoint")
        return None
    if config.method == "teacher":
        return None
    if teacher_ckpt is None:
        raise ConfigError(f"{config.method} requires a teacher checkpoint")
    teacher = rebuild_model(teacher_ckpt)
    expected = "teacher" if config.method == "pi_distill" else "student"
    if teacher_ckpt.meta.get("kind") != expected:
        raise ConfigError(
            f"{config.method} needs a {expected!r} checkpoint, "
            f"got {teacher_ckpt.meta.get('kind')!r}")
    if config.method == "pi_distill" and not dataset.has_text:
        raise DataError("pi_distill requires a dataset with text tokens")
    rng = np.random.default_rng(0)  # never consumed in eval mode
    cache: dict[int, np.ndarray] = {}

    def logits_for(index: int) -> np.ndarray:
        if index not in cache:
            rec = dataset.records[index]
            if isinstance(teacher, TeacherClassifier):
                out = teacher.logits(Matrix(rec.image), Matrix(rec.text), rng,
                                     training=False)
            else:
                out = teacher.logits(Matrix(rec.image), rng, training=False)
            cache[index] = out.data[0].copy()
        return cache[index]

    return logits_for


def _fingerprint(config: TrainConfig, dataset: EmbeddingDataset,
                 split: SplitPlan) -> str:
    return config_fingerprint({
        "config": config.to_dict(),
        "n_samples": dataset.n_samples,
        "n_classes": dataset.n_classes,
        "d_image": dataset.d_image,
        "d_text": dataset.d_text,
        "split": split_hash(split),
    })


def _train_run(dataset: EmbeddingDataset, split: SplitPlan,
               config: TrainConfig,
               teacher_ckpt: Checkpoint | None) -> TrainResult:
    start = time.perf_counter()
    if config.method == "teacher":
        model = _build_teacher(dataset, config)
    else:
        model = _build_student(dataset, config)
    logits_for = _teacher_logit_fn(config, dataset, teacher_ckpt)
    train_idx = list(split.train)
    if not train_idx:
        raise ConfigError("empty training split")
    optimizer = Adam(model.parameters())
    dropout_rng = stream(config.seed, "dropout")
    log: list[tuple[int, str, str, float]] = []
    best: tuple[float, int] | None = None
    best_params: dict[str, np.ndarray] | None = None
    best_metrics: dict[str, float] = {}
    meta = _model_meta(model, config)
    fingerprint = _fingerprint(config, dataset, split)

    def evaluate_epoch(epoch: int) -> None:
        nonlocal best, best_params, best_metrics
        if config.eval_train:
            train_scored = collect_scores(model, dataset, sorted(train_idx))
            for name, value in score_metrics(
                    train_scored, config.auc_averaging).items():
                log.append((epoch, "train", name, value))
        scored = collect_scores(model, dataset, split.validation)
        metrics = score_metrics(scored, config.auc_averaging)
        for name, value in metrics.items():
            log.append((epoch, "val", name, value))
        if best is None or metrics["auc"] > best[0]:
            best = (metrics["auc"], epoch)
            best_params = {name: p.data.copy() for name, p in model.parameters()}
            best_metrics = dict(metrics)

    def run_epoch(epoch: int) -> float:
        order = fisher_yates(train_idx, stream(config.seed, f"shuffle/{epoch}"))
        loss_total = 0.0
        for b0 in range(0, len(order), config.batch_size):
            batch = order[b0: b0 + config.batch_size]
            tape = GradTape()
            optimizer.zero_grad()
            acc: Matrix | None = None
            for i in batch:
                rec = dataset.records[i]
                if config.method == "teacher":
                    probs = model.forward(Matrix(rec.image), Matrix(rec.text),
                                          dropout_rng, True, tape)
                    loss = T.cross_entropy(probs, rec.label, tape)
                else:
                    probs = model.forward(Matrix(rec.image), dropout_rng, True,
                                          tape)
                    if logits_for is None:
                        loss = T.cross_entropy(probs, rec.label, tape)
                    else:
                        loss = distillation_loss(probs, rec.label,
                                                 logits_for(i), config.lam,
                                                 config.tau, tape)
                acc = loss if acc is None else T.add(acc, loss, tape)
            batch_loss = T.scale(acc, 1.0 / len(batch), tape)
            value = batch_loss.item()
            if not math.isfinite(value):
                raise TrainingError(
                    f"non-finite loss in epoch {epoch}, "
                    f"batch starting at sample {b0}")
            tape.backward(batch_loss)
            optimizer.step(config.lr)
            loss_total += value * len(batch)
        return loss_total / len(order)

    evaluate_epoch(0)
    for epoch in range(1, config.epochs + 1):
        mean_loss = run_epoch(epoch)
        log.append((epoch, "train", "loss", mean_loss))
        evaluate_epoch(epoch)

    assert best is not None and best_params is not None
    ckpt = Checkpoint(params=best_params, epoch=best[1], val_auc=best[0],
                      config_fingerprint=fingerprint, meta=meta)
    return TrainResult(checkpoint=ckpt, log=log, best_epoch=best[1],
                       best_val=best_metrics,
                       wall_s=time.perf_counter() - start)


def train_teacher(dataset: EmbeddingDataset, split: SplitPlan,
                  config: TrainConfig) -> TrainResult:
    if config.method != "teacher":
        config = replace(config, method="teacher")
    return _train_run(dataset, split, config, None)


def train_student(dataset: EmbeddingDataset, split: SplitPlan,
                  config: TrainConfig,
                  teacher: Checkpoint | None = None) -> TrainResult:
    if config.method == "teacher":
        raise ConfigError("train_student cannot run the teacher method")
    return _train_run(dataset, split, config, teacher)
