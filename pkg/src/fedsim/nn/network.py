"""Parameter containers, initialization, forward pass, backprop, SGD, evaluation.

Gradients are computed by hand, layer by layer, in reverse order; there is no
autodiff anywhere. Parameters and activations are float32, loss bookkeeping is
float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, DataError, NumericFault
from . import ops
from .spec import Conv, Dense, Dropout, Flatten, MaxPool, ModelSpec, Relu, Softmax, infer_shapes

LOG_CLAMP = 1e-12


@dataclass
class LayerParams:
    layer_id: int
    weights: np.ndarray
    biases: np.ndarray


@dataclass
class ParameterSet:
    """Ordered (layer id, weights, biases) triples for the parameterized layers."""

    entries: list[LayerParams]

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            [LayerParams(e.layer_id, e.weights.copy(), e.biases.copy()) for e in self.entries]
        )

    def scalar_count(self) -> int:
        return sum(e.weights.size + e.biases.size for e in self.entries)

    def by_layer(self) -> dict[int, LayerParams]:
        return {e.layer_id: e for e in self.entries}


# gradients share the parameter layout
Gradients = ParameterSet


def init_parameters(spec: ModelSpec, seed: int) -> ParameterSet:
    """Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights, zero biases."""
    shapes = infer_shapes(spec)
    rng = np.random.default_rng(seed)
    entries: list[LayerParams] = []
    shape: tuple[int, ...] = spec.input_shape
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            c_in = shape[2]
            fan_in = 9 * c_in
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(3, 3, c_in, layer.filters)).astype(np.float32)
            b = np.zeros(layer.filters, dtype=np.float32)
            entries.append(LayerParams(i, w, b))
        elif isinstance(layer, Dense):
            fan_in = shape[0]
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, layer.units)).astype(np.float32)
            b = np.zeros(layer.units, dtype=np.float32)
            entries.append(LayerParams(i, w, b))
        shape = shapes[i]
    return ParameterSet(entries)


def _check_finite(arr: np.ndarray, layer_id: int, layer) -> None:
    if not np.isfinite(arr).all():
        raise NumericFault(f"non-finite activation after layer {layer_id} ({type(layer).__name__})")


def forward(
    spec: ModelSpec,
    params: ParameterSet,
    batch: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
):
    """Run the stack on a (N, H, W, C) batch.

    Returns (probabilities (N, n_classes), caches). In train mode dropout is
    active and draws its masks from `rng`; eval mode is deterministic and
    side-effect free.
    """
    if mode not in ("train", "eval"):
        raise ConfigurationError(f"mode must be 'train' or 'eval', got {mode!r}")
    if batch.ndim != 4 or batch.shape[1:] != spec.input_shape:
        raise ConfigurationError(
            f"batch shape {batch.shape} does not match model input {spec.input_shape}"
        )
    by_layer = params.by_layer()
    x = batch
    caches: list = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            e = by_layer[i]
            in_shape = x.shape
            x, cols = ops.conv2d_forward(x, e.weights, e.biases)
            caches.append((cols, in_shape))
        elif isinstance(layer, MaxPool):
            in_shape = x.shape
            x, idx = ops.maxpool2_forward(x)
            caches.append((idx, in_shape))
        elif isinstance(layer, Relu):
            x, mask = ops.relu_forward(x)
            caches.append(mask)
        elif isinstance(layer, Dropout):
            if mode == "train" and layer.rate > 0.0:
                if rng is None:
                    raise ConfigurationError("train-mode forward through dropout requires an rng")
                x, mask = ops.dropout_forward(x, layer.rate, rng)
                caches.append(mask)
            else:
                caches.append(None)
        elif isinstance(layer, Flatten):
            in_shape = x.shape
            x = x.reshape(x.shape[0], -1)
            caches.append(in_shape)
        elif isinstance(layer, Dense):
            e = by_layer[i]
            caches.append(x)
            x = x @ e.weights + e.biases
        elif isinstance(layer, Softmax):
            x = ops.softmax(x)
            caches.append(None)
        _check_finite(x, i, layer)
    return x, caches


def loss_and_grad(
    spec: ModelSpec,
    params: ParameterSet,
    batch: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator | None = None,
):
    """Mean cross-entropy over the batch plus gradients for every parameter.

    The softmax/cross-entropy pair is differentiated jointly, so backprop
    starts from (p - onehot)/N at the output dense layer.
    """
    probs, caches = forward(spec, params, batch, mode="train", rng=rng)
    n = batch.shape[0]
    picked = probs[np.arange(n), labels].astype(np.float64)
    loss = float(-np.log(np.clip(picked, LOG_CLAMP, None)).mean())

    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n

    by_layer = params.by_layer()
    grad_entries: dict[int, LayerParams] = {}
    for i in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[i]
        cache = caches[i]
        if isinstance(layer, Softmax):
            continue  # folded into the initial grad
        if isinstance(layer, Dense):
            e = by_layer[i]
            x_in = cache
            dw = x_in.T @ grad
            db = grad.sum(axis=0)
            grad = grad @ e.weights.T
            grad_entries[i] = LayerParams(i, dw, db)
        elif isinstance(layer, Flatten):
            grad = grad.reshape(cache)
        elif isinstance(layer, Dropout):
            if cache is not None:
                grad = ops.dropout_backward(grad, cache)
        elif isinstance(layer, Relu):
            grad = ops.relu_backward(grad, cache)
        elif isinstance(layer, MaxPool):
            idx, in_shape = cache
            grad = ops.maxpool2_backward(grad, idx, in_shape)
        elif isinstance(layer, Conv):
            e = by_layer[i]
            cols, in_shape = cache
            grad, dw, db = ops.conv2d_backward(grad, cols, in_shape, e.weights)
            grad_entries[i] = LayerParams(i, dw, db)

    grads = ParameterSet([grad_entries[e.layer_id] for e in params.entries])
    for e in grads.entries:
        if not (np.isfinite(e.weights).all() and np.isfinite(e.biases).all()):
            raise NumericFault(f"non-finite gradient at layer {e.layer_id}")
    return loss, grads


def sgd_step(params: ParameterSet, grads: Gradients, lr: float) -> ParameterSet:
    """Plain SGD: w <- w - lr * g. No momentum, no weight decay."""
    entries = []
    for p, g in zip(params.entries, grads.entries):
        if p.layer_id != g.layer_id:
            raise ConfigurationError("gradient layout does not match parameters")
        w = (p.weights - lr * g.weights).astype(np.float32, copy=False)
        b = (p.biases - lr * g.biases).astype(np.float32, copy=False)
        entries.append(LayerParams(p.layer_id, w, b))
    return ParameterSet(entries)


def evaluate(
    spec: ModelSpec,
    params: ParameterSet,
    images: np.ndarray,
    labels: np.ndarray,
    batch_size: int = 64,
):
    """Eval-mode accuracy and mean cross-entropy over a labeled array pair.

    Ties in the predicted distribution resolve to the lowest class id.
    """
    n = len(images)
    if n == 0:
        raise DataError("cannot evaluate on an empty dataset")
    correct = 0
    loss_sum = 0.0
    for start in range(0, n, batch_size):
        xb = images[start:start + batch_size]
        yb = labels[start:start + batch_size]
        probs, _ = forward(spec, params, xb, mode="eval")
        correct += int((probs.argmax(axis=1) == yb).sum())
        picked = probs[np.arange(len(yb)), yb].astype(np.float64)
        loss_sum += float(-np.log(np.clip(picked, LOG_CLAMP, None)).sum())
    return correct / n, loss_sum / n
