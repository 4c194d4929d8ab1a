"""Shared test utilities: the finite-difference oracle and kink-margin guard."""
import numpy as np

from fedsim.nn import ops
from fedsim.nn.network import LayerParams, ParameterSet, loss_and_grad
from fedsim.nn.spec import Conv


def numeric_gradient(f, arr, h=1e-3):
    """Central finite differences of scalar f at float64 array arr."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + h
        lp = f()
        arr[idx] = old - h
        lm = f()
        arr[idx] = old
        g[idx] = (lp - lm) / (2.0 * h)
    return g


def params_as_float64(params):
    return ParameterSet(
        [LayerParams(e.layer_id, e.weights.astype(np.float64), e.biases.astype(np.float64))
         for e in params.entries]
    )


def check_model_gradients(spec, params, x, y, h=1e-3, rtol=1e-3, atol=1e-6):
    """Compare every backprop gradient coordinate against the FD oracle.

    Returns (bad_count, total_count, worst_error_over_limit).
    """
    _, grads = loss_and_grad(spec, params, x, y)
    base = params_as_float64(params)

    def f():
        loss, _ = loss_and_grad(spec, base, x.astype(np.float64), y)
        return loss

    bad, total, worst = 0, 0, 0.0
    for ei, e in enumerate(base.entries):
        for name in ("weights", "biases"):
            fd = numeric_gradient(f, getattr(e, name), h=h)
            bp = getattr(grads.entries[ei], name).astype(np.float64)
            err = np.abs(bp - fd)
            lim = rtol * np.maximum(np.abs(bp), np.abs(fd)) + atol
            bad += int((err > lim).sum())
            total += err.size
            worst = max(worst, float((err / lim).max()))
    return bad, total, worst


def kink_margins(spec, params, x):
    """Distance of the first conv block's relu inputs from 0 and of its pool
    windows from a max tie. FD with step h is only trustworthy when both
    margins comfortably exceed h times the patch magnitude."""
    conv_id = next(i for i, l in enumerate(spec.layers) if isinstance(l, Conv))
    e = params.by_layer()[conv_id]
    z, _ = ops.conv2d_forward(
        x.astype(np.float64), e.weights.astype(np.float64), e.biases.astype(np.float64)
    )
    relu_margin = float(np.abs(z).min())
    a = np.maximum(z, 0)
    n, h, w, c = a.shape
    win = (
        a[:, : h // 2 * 2, : w // 2 * 2, :]
        .reshape(n, h // 2, 2, w // 2, 2, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, h // 2, w // 2, c, 4)
    )
    s = np.sort(win, axis=-1)
    top, second = s[..., 3], s[..., 2]
    active = top > 0
    pool_margin = float((top - second)[active].min()) if active.any() else float("inf")
    return relu_margin, pool_margin
