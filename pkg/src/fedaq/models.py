"""Desk-scale classifiers on flat parameter vectors: softmax regression and a ReLU MLP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .params import ParamVector

LOGISTIC = "logistic"
MLP = "mlp"


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    classes: int
    hidden_dim: int = 0

    def __post_init__(self):
        if self.kind not in (LOGISTIC, MLP):
            raise InvalidArgument(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1 or self.classes < 2:
            raise InvalidArgument("need input_dim >= 1 and classes >= 2")
        if self.kind == MLP and self.hidden_dim < 1:
            raise InvalidArgument("mlp needs hidden_dim >= 1")

    @property
    def d(self) -> int:
        F, C, H = self.input_dim, self.classes, self.hidden_dim
        if self.kind == LOGISTIC:
            return F * C + C
        return F * H + H + H * C + C

    def unpack(self, w: np.ndarray) -> tuple[np.ndarray, ...]:
        """Views into ``w``: ``(W, b)`` or ``(W1, b1, W2, b2)``; weights are row-major (in, out)."""
        F, C, H = self.input_dim, self.classes, self.hidden_dim
        if w.shape != (self.d,):
            raise InvalidArgument(f"parameter vector has length {w.size}, model needs {self.d}")
        if self.kind == LOGISTIC:
            return w[: F * C].reshape(F, C), w[F * C:]
        o1 = F * H
        o2 = o1 + H
        o3 = o2 + H * C
        return w[:o1].reshape(F, H), w[o1:o2], w[o2:o3].reshape(H, C), w[o3:]


def init_params(spec: ModelSpec, seed: int) -> ParamVector:
    """Zeros for logistic regression; the MLP draws every weight and bias of a
    layer from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    if spec.kind == LOGISTIC:
        return ParamVector.zeros(spec.d)
    rng = np.random.default_rng(seed)
    F, H, C = spec.input_dim, spec.hidden_dim, spec.classes
    a1, a2 = 1.0 / np.sqrt(F), 1.0 / np.sqrt(H)
    parts = [
        rng.uniform(-a1, a1, F * H), rng.uniform(-a1, a1, H),
        rng.uniform(-a2, a2, H * C), rng.uniform(-a2, a2, C),
    ]
    return ParamVector(np.concatenate(parts))


def _softmax_xent(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    denom = ez.sum(axis=1, keepdims=True)
    logp = z - np.log(denom)
    B = logits.shape[0]
    loss = -logp[np.arange(B), y].mean()
    g = ez / denom
    g[np.arange(B), y] -= 1.0
    return float(loss), g / B


def forward_logits(spec: ModelSpec, w: np.ndarray, X: np.ndarray) -> np.ndarray:
    if spec.kind == LOGISTIC:
        W, b = spec.unpack(w)
        return X @ W + b
    W1, b1, W2, b2 = spec.unpack(w)
    return np.maximum(X @ W1 + b1, 0.0) @ W2 + b2


def loss_grad_array(spec: ModelSpec, w: np.ndarray, X: np.ndarray, y: np.ndarray):
    """Array-level ``(loss, grad)``; the hot path used by local training."""
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgument("batch must be a non-empty 2-D feature matrix")
    if X.shape[1] != spec.input_dim:
        raise InvalidArgument(f"features have {X.shape[1]} columns, model expects {spec.input_dim}")
    if spec.kind == LOGISTIC:
        W, b = spec.unpack(w)
        loss, gz = _softmax_xent(X @ W + b, y)
        return loss, np.concatenate([(X.T @ gz).ravel(), gz.sum(axis=0)])
    W1, b1, W2, b2 = spec.unpack(w)
    pre = X @ W1 + b1
    h = np.maximum(pre, 0.0)
    loss, gz = _softmax_xent(h @ W2 + b2, y)
    gh = (gz @ W2.T) * (pre > 0)
    return loss, np.concatenate(
        [(X.T @ gh).ravel(), gh.sum(axis=0), (h.T @ gz).ravel(), gz.sum(axis=0)]
    )


def loss_and_grad(spec: ModelSpec, w, X, y) -> tuple[float, ParamVector]:
    """Mean softmax cross-entropy over a batch and its exact gradient."""
    wv = w.values if isinstance(w, ParamVector) else np.asarray(w, dtype=np.float64)
    loss, g = loss_grad_array(spec, wv, np.asarray(X, dtype=np.float64), np.asarray(y))
    return loss, ParamVector(g)


def evaluate(spec: ModelSpec, w, X, y) -> dict:
    """Argmax accuracy (ties go to the lowest class index) and mean loss."""
    wv = w.values if isinstance(w, ParamVector) else np.asarray(w, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    logits = forward_logits(spec, wv, X)
    loss, _ = _softmax_xent(logits, y)
    acc = float(np.mean(np.argmax(logits, axis=1) == y))
    return {"accuracy": acc, "loss": loss}
