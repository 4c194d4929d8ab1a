from .network import (
    Gradients,
    LayerParams,
    ParameterSet,
    evaluate,
    forward,
    init_parameters,
    loss_and_grad,
    sgd_step,
)
from .ops import conv2d, maxpool2, softmax
from .spec import (
    Conv,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool,
    ModelSpec,
    Relu,
    Softmax,
    default_cnn_spec,
    infer_shapes,
)

__all__ = [
    "Conv", "Dense", "Dropout", "Flatten", "Layer", "MaxPool", "ModelSpec", "Relu",
    "Softmax", "default_cnn_spec", "infer_shapes",
    "Gradients", "LayerParams", "ParameterSet",
    "init_parameters", "forward", "loss_and_grad", "sgd_step", "evaluate",
    "conv2d", "maxpool2", "softmax",
]
