"""Classifier heads over frozen token embeddings.

The student consumes image tokens only; the privileged teacher attends over
image and text streams, layer-norms each pooled feature, and classifies the
concatenation [visual || text]. Head variants: ``attention`` (Q/K/V
self-attention then mean pooling, the default), ``mean_lp`` (mean pooling +
linear probe), and ``cls_lp`` (linear probe on token 0, datasets must carry
a leading CLS token).

Incoming token vectors are layer-normalized (no learnable affine) before any
pooling. Attention scores are scaled by 1/sqrt(d) and Q/K/V carry no bias;
both choices sit behind flags.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError, ShapeError
from .tensor import GradTape, Matrix

HEAD_VARIANTS = ("attention", "mean_lp", "cls_lp")
DEFAULT_DROPOUT_P = 0.2


def _uniform_init(rng: np.random.Generator, rows: int, cols: int,
                  fan_in: int) -> Matrix:
    bound = 1.0 / math.sqrt(fan_in)
    return Matrix(rng.uniform(-bound, bound, size=(rows, cols)))


class AttentionPoolHead:
    """Single-head self-attention over a token sequence, mean-pooled.

    Draw order per forward call in training mode: dropout consumes one
    uniform per attention-weight entry, row-major; eval consumes none.
    """

    def __init__(self, d: int, dropout_p: float = DEFAULT_DROPOUT_P,
                 qkv_bias: bool = False, scale_scores: bool = True):
        if d < 1:
            raise ConfigError(f"token width must be >= 1, got {d}")
        if not 0.0 <= dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {dropout_p}")
        self.d = d
        self.dropout_p = dropout_p
        self.qkv_bias = qkv_bias
        self.scale_scores = scale_scores
        self.wq = Matrix.zeros(d, d)
        self.wk = Matrix.zeros(d, d)
        self.wv = Matrix.zeros(d, d)
        if qkv_bias:
            self.bq = Matrix.zeros(1, d)
            self.bk = Matrix.zeros(1, d)
            self.bv = Matrix.zeros(1, d)

    def init(self, rng: np.random.Generator) -> "AttentionPoolHead":
        # weights drawn in parameters() order; biases stay zero
        for name, p in self.parameters():
            if not name.startswith("b"):
                p.data[...] = _uniform_init(rng, *p.shape, fan_in=self.d).data
        return self

    def parameters(self) -> list[tuple[str, Matrix]]:
        named = [("wq", self.wq), ("wk", self.wk), ("wv", self.wv)]
        if self.qkv_bias:
            named += [("bq", self.bq), ("bk", self.bk), ("bv", self.bv)]
        return named

    def forward(self, tokens: Matrix, rng: np.random.Generator,
                training: bool, tape: GradTape | None = None) -> Matrix:
        if tokens.cols != self.d:
            raise DataError(
                f"token width {tokens.cols} does not match head width {self.d}")
        q = T.matmul(tokens, self.wq, tape)
        k = T.matmul(tokens, self.wk, tape)
        v = T.matmul(tokens, self.wv, tape)
        if self.qkv_bias:
            q = T.add_row(q, self.bq, tape)
            k = T.add_row(k, self.bk, tape)
            v = T.add_row(v, self.bv, tape)
        scores = T.matmul(q, T.transpose(k, tape), tape)
        if self.scale_scores:
            scores = T.scale(scores, 1.0 / math.sqrt(self.d), tape)
        weights = T.softmax_rows(scores, 1.0, tape)
        weights = T.dropout(weights, self.dropout_p, rng, training, tape)
        return T.mean_pool_rows(T.matmul(weights, v, tape), tape)


class LinearClassifier:
    def __init__(self, d_in: int, n_classes: int):
        if d_in < 1 or n_classes < 2:
            raise ConfigError(
                f"classifier needs d_in >= 1 and >= 2 classes, "
                f"got {d_in} and {n_classes}")
        self.d_in = d_in
        self.n_classes = n_classes
        self.w = Matrix.zeros(d_in, n_classes)
        self.b = Matrix.zeros(1, n_classes)

    def init(self, rng: np.random.Generator) -> "LinearClassifier":
        self.w.data[...] = _uniform_init(
            rng, self.d_in, self.n_classes, fan_in=self.d_in).data
        return self

    def parameters(self) -> list[tuple[str, Matrix]]:
        return [("w", self.w), ("b", self.b)]

    def forward(self, features: Matrix, tape: GradTape | None = None) -> Matrix:
        return T.add_row(T.matmul(features, self.w, tape), self.b, tape)


def _prefixed(prefix: str, named: list[tuple[str, Matrix]]
              ) -> list[tuple[str, Matrix]]:
    return [(f"{prefix}.{name}", p) for name, p in named]


class StudentClassifier:
    """Image-only classifier f: pool image tokens, linear map, softmax."""

    def __init__(self, d: int, n_classes: int, variant: str = "attention",
                 dropout_p: float = DEFAULT_DROPOUT_P, qkv_bias: bool = False,
                 scale_scores: bool = True):
        if variant not in HEAD_VARIANTS:
            raise ConfigError(
                f"unknown head variant {variant!r}, expected one of {HEAD_VARIANTS}")
        self.d = d
        self.n_classes = n_classes
        self.variant = variant
        self.visual = (AttentionPoolHead(d, dropout_p, qkv_bias, scale_scores)
                       if variant == "attention" else None)
        self.classifier = LinearClassifier(d, n_classes)

    def init(self, rng: np.random.Generator) -> "StudentClassifier":
        if self.visual is not None:
            self.visual.init(rng)
        self.classifier.init(rng)
        return self

    def parameters(self) -> list[tuple[str, Matrix]]:
        named = []
        if self.visual is not None:
            named += _prefixed("visual", self.visual.parameters())
        named += _prefixed("classifier", self.classifier.parameters())
        return named

    def n_parameters(self) -> int:
        return sum(p.data.size for _, p in self.parameters())

    def logits(self, x_tokens: Matrix, rng: np.random.Generator,
               training: bool, tape: GradTape | None = None) -> Matrix:
        normed = T.layer_norm_rows(x_tokens, tape=tape)
        if self.variant == "attention":
            pooled = self.visual.forward(normed, rng, training, tape)
        elif self.variant == "mean_lp":
            pooled = T.mean_pool_rows(normed, tape)
        else:  # cls_lp
            pooled = T.take_row(normed, 0, tape)
        return self.classifier.forward(pooled, tape)

    def forward(self, x_tokens: Matrix, rng: np.random.Generator,
                training: bool, tape: GradTape | None = None) -> Matrix:
        return T.softmax_rows(self.logits(x_tokens, rng, training, tape),
                              1.0, tape)


class TeacherClassifier:
    """Privileged classifier g over image and text token streams.

    Forward: layer-norm each stream, attention-pool each, layer-norm each
    pooled feature, concatenate [visual || text], linear classify.
    Dropout draws are consumed visual stream first, then text.
    """

    def __init__(self, d_visual: int, d_text: int, n_classes: int,
                 dropout_p: float = DEFAULT_DROPOUT_P, qkv_bias: bool = False,
                 scale_scores: bool = True):
        if d_text < 1:
            raise ConfigError("teacher requires a text stream (d_text >= 1)")
        self.d_visual = d_visual
        self.d_text = d_text
        self.n_classes = n_classes
        self.visual = AttentionPoolHead(d_visual, dropout_p, qkv_bias,
                                        scale_scores)
        self.text = AttentionPoolHead(d_text, dropout_p, qkv_bias,
                                      scale_scores)
        self.classifier = LinearClassifier(d_visual + d_text, n_classes)

    def init(self, rng: np.random.Generator) -> "TeacherClassifier":
        self.visual.init(rng)
        self.text.init(rng)
        self.classifier.init(rng)
        return self

    def parameters(self) -> list[tuple[str, Matrix]]:
        return (_prefixed("visual", self.visual.parameters())
                + _prefixed("text", self.text.parameters())
                + _prefixed("classifier", self.classifier.parameters()))

    def n_parameters(self) -> int:
        return sum(p.data.size for _, p in self.parameters())

    def logits(self, x_tokens: Matrix, z_tokens: Matrix,
               rng: np.random.Generator, training: bool,
               tape: GradTape | None = None) -> Matrix:
        if z_tokens is None:
            raise DataError("teacher requires text tokens")
        pooled_v = self.visual.forward(
            T.layer_norm_rows(x_tokens, tape=tape), rng, training, tape)
        pooled_t = self.text.forward(
            T.layer_norm_rows(z_tokens, tape=tape), rng, training, tape)
        joint = T.concat_cols(T.layer_norm_rows(pooled_v, tape=tape),
                              T.layer_norm_rows(pooled_t, tape=tape), tape)
        return self.classifier.forward(joint, tape)

    def forward(self, x_tokens: Matrix, z_tokens: Matrix,
                rng: np.random.Generator, training: bool,
                tape: GradTape | None = None) -> Matrix:
        return T.softmax_rows(
            self.logits(x_tokens, z_tokens, rng, training, tape), 1.0, tape)


def assign_parameters(model, values: dict[str, np.ndarray]) -> None:
    """Overwrite a model's parameters from a name -> array mapping."""
    named = dict(model.parameters())
    missing = set(named) - set(values)
    extra = set(values) - set(named)
    if missing or extra:
        raise ShapeError(
            f"parameter names mismatch: missing {sorted(missing)}, "
            f"unexpected {sorted(extra)}")
    for name, p in named.items():
        arr = np.asarray(values[name], dtype=np.float64)
        if arr.shape != p.shape:
            raise ShapeError(
                f"parameter {name}: shape {arr.shape} != expected {p.shape}")
        p.data[...] = arr
