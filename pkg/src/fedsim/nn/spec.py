"""Model descriptions: layer descriptors, shape validation, default architecture."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from ..errors import ConfigurationError


@dataclass(frozen=True)
class Conv:
    """3x3 convolution, stride 1, zero-padded so spatial dims are preserved."""

    filters: int
    kernel: int = 3
    stride: int = 1


@dataclass(frozen=True)
class MaxPool:
    """2x2 max pooling with stride 2 (floor on odd dims)."""

    size: int = 2
    stride: int = 2


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class Dropout:
    rate: float


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    units: int


@dataclass(frozen=True)
class Softmax:
    pass


Layer = Union[Conv, MaxPool, Relu, Dropout, Flatten, Dense, Softmax]


@dataclass(frozen=True)
class ModelSpec:
    """An ordered layer stack applied to images of `input_shape` (H, W, C)."""

    input_shape: tuple[int, int, int]
    layers: tuple[Layer, ...]

    @property
    def n_classes(self) -> int:
        for layer in reversed(self.layers):
            if isinstance(layer, Dense):
                return layer.units
        raise ConfigurationError("model has no dense output layer")


def infer_shapes(spec: ModelSpec) -> list[tuple[int, ...]]:
    """Walk the layer stack and return each layer's output shape.

    Raises ConfigurationError for inconsistent stacks (dense before flatten,
    pooling a 1-D tensor, non-positive sizes, softmax not last, ...).
    """
    if len(spec.input_shape) != 3:
        raise ConfigurationError(f"input shape must be (H, W, C), got {spec.input_shape}")
    if any(d < 1 for d in spec.input_shape):
        raise ConfigurationError(f"input dims must be positive, got {spec.input_shape}")
    if not spec.layers:
        raise ConfigurationError("model has no layers")

    shape: tuple[int, ...] = spec.input_shape
    shapes: list[tuple[int, ...]] = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Softmax) and i != len(spec.layers) - 1:
            raise ConfigurationError(f"layer {i}: softmax must be the final layer")
        if isinstance(layer, Conv):
            if layer.kernel != 3 or layer.stride != 1:
                raise ConfigurationError(f"layer {i}: only 3x3 stride-1 convolutions are supported")
            if layer.filters < 1:
                raise ConfigurationError(f"layer {i}: filters must be positive")
            if len(shape) != 3:
                raise ConfigurationError(f"layer {i}: conv requires an (H, W, C) input, got {shape}")
            shape = (shape[0], shape[1], layer.filters)
        elif isinstance(layer, MaxPool):
            if layer.size != 2 or layer.stride != 2:
                raise ConfigurationError(f"layer {i}: only 2x2 stride-2 pooling is supported")
            if len(shape) != 3:
                raise ConfigurationError(f"layer {i}: maxpool requires an (H, W, C) input, got {shape}")
            if shape[0] < 2 or shape[1] < 2:
                raise ConfigurationError(f"layer {i}: maxpool needs spatial dims >= 2, got {shape}")
            shape = (shape[0] // 2, shape[1] // 2, shape[2])
        elif isinstance(layer, Relu):
            pass
        elif isinstance(layer, Dropout):
            if not 0.0 <= layer.rate < 1.0:
                raise ConfigurationError(f"layer {i}: dropout rate must be in [0, 1), got {layer.rate}")
        elif isinstance(layer, Flatten):
            if len(shape) != 3:
                raise ConfigurationError(f"layer {i}: flatten requires an (H, W, C) input, got {shape}")
            shape = (shape[0] * shape[1] * shape[2],)
        elif isinstance(layer, Dense):
            if len(shape) != 1:
                raise ConfigurationError(f"layer {i}: dense requires a flattened input, got {shape}")
            if layer.units < 1:
                raise ConfigurationError(f"layer {i}: units must be positive")
            shape = (layer.units,)
        elif isinstance(layer, Softmax):
            if len(shape) != 1:
                raise ConfigurationError(f"layer {i}: softmax requires a flattened input, got {shape}")
        else:  # pragma: no cover - exhaustive over Layer
            raise ConfigurationError(f"layer {i}: unknown layer {layer!r}")
        shapes.append(shape)

    if not isinstance(spec.layers[-1], Softmax):
        raise ConfigurationError("final layer must be softmax")
    return shapes


def default_cnn_spec(
    input_side: int = 128,
    channels: int = 3,
    n_classes: int = 11,
    conv_filters: tuple[int, int, int, int] = (32, 32, 64, 64),
    dense_units: int = 128,
    conv_dropout: float = 0.25,
    dense_dropout: float = 0.5,
) -> ModelSpec:
    """Four conv blocks (three pooled), two dense layers, softmax output."""
    f1, f2, f3, f4 = conv_filters
    spec = ModelSpec(
        input_shape=(input_side, input_side, channels),
        layers=(
            Conv(f1), Relu(), MaxPool(),
            Conv(f2), Relu(), MaxPool(),
            Conv(f3), Relu(), MaxPool(),
            Conv(f4), Relu(),
            Dropout(conv_dropout),
            Flatten(),
            Dense(dense_units), Relu(),
            Dropout(dense_dropout),
            Dense(n_classes),
            Softmax(),
        ),
    )
    infer_shapes(spec)
    return spec
