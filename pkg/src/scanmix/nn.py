"""A small range-image CNN with hand-rolled forward and backward passes.

The stack is fixed by construction: 3x3 same-padding convolutions with
ReLU, then a 1x1 convolution to K class logits per pixel. Parameters are
float64 so gradients can be checked against finite differences tightly.
Convolutions run as one im2col matmul per layer; reductions happen in a
fixed order, so repeated runs are bit-identical on one machine.
"""

from __future__ import annotations

import numpy as np


class SegModel:
    """Per-pixel classifier: conv3x3+ReLU blocks, then a 1x1 logit head."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need matching weight/bias lists")
        self.weights = weights
        self.biases = biases

    @property
    def in_channels(self) -> int:
        return self.weights[0].shape[1]

    @property
    def k_classes(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "SegModel":
        return SegModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.parameters())


def init_model(
    k_classes: int,
    channels=(8, 16),
    in_channels: int = 3,
    seed: int = 0,
) -> SegModel:
    """He-initialized model; `channels` lists the hidden conv widths."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    c_in = in_channels
    for c_out in channels:
        fan_in = c_in * 9
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), (c_out, c_in, 3, 3)))
        biases.append(np.zeros(c_out))
        c_in = c_out
    weights.append(rng.normal(0.0, np.sqrt(2.0 / c_in), (k_classes, c_in, 1, 1)))
    biases.append(np.zeros(k_classes))
    return SegModel(weights, biases)


# Convolutions run internally in a (C, B, H, W) layout: the im2col matrix
# and each layer's output then come out of one GEMM already contiguous in
# the layout the next layer wants, so no per-tap transposes are needed.


def _im2col3(x: np.ndarray) -> np.ndarray:
    """(C, B, H, W) -> (C*9, B*H*W) patch matrix for a 3x3 same conv."""
    c, b, h, w = x.shape
    xp = np.zeros((c, b, h + 2, w + 2), x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    cols = np.empty((c, 9, b, h, w), x.dtype)
    k = 0
    for di in range(3):
        for dj in range(3):
            cols[:, k] = xp[:, :, di : di + h, dj : dj + w]
            k += 1
    return cols.reshape(c * 9, b * h * w)


def _col2im3(dcols: np.ndarray, shape) -> np.ndarray:
    """Adjoint of _im2col3: scatter-add patch gradients back to the input."""
    c, b, h, w = shape
    dxp = np.zeros((c, b, h + 2, w + 2), dcols.dtype)
    dcols = dcols.reshape(c, 9, b, h, w)
    k = 0
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di : di + h, dj : dj + w] += dcols[:, k]
            k += 1
    return dxp[:, :, 1:-1, 1:-1]


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    c, bs, h, wd = x.shape
    f = w.shape[0]
    cols = x.reshape(c, -1) if w.shape[2] == 1 else _im2col3(x)
    y = w.reshape(f, -1) @ cols + b[:, None]
    return y.reshape(f, bs, h, wd), cols


def _conv_backward(dy: np.ndarray, x_shape, w: np.ndarray, cols: np.ndarray):
    c = x_shape[0]
    f = w.shape[0]
    dy_mat = dy.reshape(f, -1)
    dw = (dy_mat @ cols.T).reshape(w.shape)
    db = dy_mat.sum(axis=1)
    dcols = w.reshape(f, -1).T @ dy_mat
    if w.shape[2] == 1:
        dx = dcols.reshape(x_shape)
    else:
        dx = _col2im3(dcols, x_shape)
    return dx, dw, db


def forward_logits(model: SegModel, feats: np.ndarray):
    """Logits plus the cache needed by backward. feats: (B, C, h, w)."""
    feats = np.asarray(feats, np.float64)
    squeeze = feats.ndim == 3
    if squeeze:
        feats = feats[None]
    x = np.ascontiguousarray(feats.transpose(1, 0, 2, 3))
    cache = []
    last = model.num_layers - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        y, cols = _conv_forward(x, w, b)
        if i < last:
            mask = y > 0
            out = y * mask
        else:
            mask = None
            out = y
        cache.append((x.shape, cols, mask))
        x = out
    logits = x.transpose(1, 0, 2, 3)
    logits = logits[0] if squeeze else logits
    return logits, cache


def backward(model: SegModel, cache, dlogits: np.ndarray):
    """Parameter gradients for a batch, given dL/dlogits."""
    dy = np.asarray(dlogits, np.float64)
    if dy.ndim == 3:
        dy = dy[None]
    dy = np.ascontiguousarray(dy.transpose(1, 0, 2, 3))
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * model.num_layers
    for i in range(model.num_layers - 1, -1, -1):
        x_shape, cols, mask = cache[i]
        if mask is not None:
            dy = dy * mask
        dy, dw, db = _conv_backward(dy, x_shape, model.weights[i], cols)
        grads[i] = (dw, db)
    return grads


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the class axis (axis -3)."""
    z = logits - logits.max(axis=-3, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-3, keepdims=True)


def softmax_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    """dL/dlogits from dL/dprobs through the softmax Jacobian."""
    inner = (dprobs * probs).sum(axis=-3, keepdims=True)
    return probs * (dprobs - inner)


def forward(model: SegModel, feats: np.ndarray) -> np.ndarray:
    """Per-pixel class probabilities for one image or a batch."""
    feats = np.asarray(feats)
    expect = (model.in_channels,)
    if feats.shape[-3:-2] != expect:
        raise ValueError(
            f"expected {model.in_channels} input channels, got {feats.shape}"
        )
    logits, _ = forward_logits(model, feats)
    return softmax(logits)


def sgd_step(model: SegModel, grads, lr: float) -> None:
    for i, (dw, db) in enumerate(grads):
        model.weights[i] -= lr * dw
        model.biases[i] -= lr * db
