"""Dense float64 layers with matching analytic backward passes.

Everything operates on (N, C, H, W) batches. Convolutions go through
im2col so the heavy lifting is a single matmul; the transposed
convolution is implemented as the exact adjoint (col2im of the weight
product), which is what makes the gradient checks in the test suite
close to machine precision.

Each forward returns (output, cache); the paired backward consumes the
cache and returns gradients for every input.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _im2col(x, k, stride, pad, out_hw):
    """Patches of x as (N, C*k*k, out_h*out_w)."""
    n, c, _, _ = x.shape
    oh, ow = out_hw
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    win = win[:, :, :oh, :ow]
    # (N, C, oh, ow, k, k) -> (N, C, k, k, oh, ow)
    win = win.transpose(0, 1, 4, 5, 2, 3)
    return np.ascontiguousarray(win).reshape(n, c * k * k, oh * ow)


def _col2im(cols, plane_hw, k, stride, pad, out_hw):
    """Adjoint of _im2col: scatter-add patches back onto the plane."""
    n = cols.shape[0]
    c = cols.shape[1] // (k * k)
    h, w = plane_hw
    oh, ow = out_hw
    cols6 = cols.reshape(n, c, k, k, oh, ow)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for a in range(k):
        for b in range(k):
            xp[:, :, a : a + stride * oh : stride,
               b : b + stride * ow : stride] += cols6[:, :, a, b]
    return xp[:, :, pad : pad + h, pad : pad + w]


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------


def conv2d_forward(x, w, b, stride=1, pad=1):
    """y[n,o] = sum_c w[o,c] * x[n,c] + b[o]; w is (O, C, k, k)."""
    n, c, h, wd = x.shape
    o, c2, k, k2 = w.shape
    if c2 != c or k != k2:
        raise ValueError("weight shape does not match input channels")
    oh = conv_out_size(h, k, stride, pad)
    ow = conv_out_size(wd, k, stride, pad)
    cols = _im2col(x, k, stride, pad, (oh, ow))
    y = np.einsum("op,npl->nol", w.reshape(o, -1), cols, optimize=True)
    y += b[None, :, None]
    cache = (x.shape, w, cols, stride, pad, (oh, ow))
    return y.reshape(n, o, oh, ow), cache


def conv2d_backward(grad_y, cache):
    x_shape, w, cols, stride, pad, out_hw = cache
    n, o = grad_y.shape[:2]
    k = w.shape[2]
    g = grad_y.reshape(n, o, -1)
    grad_w = np.einsum("nol,npl->op", g, cols, optimize=True).reshape(w.shape)
    grad_b = g.sum(axis=(0, 2))
    gcols = np.einsum("op,nol->npl", w.reshape(o, -1), g, optimize=True)
    grad_x = _col2im(gcols, x_shape[2:], k, stride, pad, out_hw)
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# Transposed convolution
# ---------------------------------------------------------------------------


def tconv2d_forward(x, w, b, stride, pad, out_hw):
    """Adjoint convolution; w is (C_in, C_out, k, k), output size explicit.

    out_hw must be conv-consistent: conv(out_hw, k, stride, pad) gives
    back the input plane. For stride 2 both 2n-1 and 2n qualify, which
    is how odd pyramid sizes (15 -> 8 -> 15) survive a round trip.
    """
    n, c, h, wd = x.shape
    c2, o, k, _ = w.shape
    if c2 != c:
        raise ValueError("weight shape does not match input channels")
    oh, ow = out_hw
    if conv_out_size(oh, k, stride, pad) != h or conv_out_size(ow, k, stride, pad) != wd:
        raise ValueError(f"output size {out_hw} is not conv-consistent with input")
    cols = np.einsum("cp,ncl->npl", w.reshape(c, -1), x.reshape(n, c, -1),
                     optimize=True)
    y = _col2im(cols, (oh, ow), k, stride, pad, (h, wd))
    y += b[None, :, None, None]
    cache = (x, w, stride, pad, (h, wd), out_hw)
    return y, cache


def tconv2d_backward(grad_y, cache):
    x, w, stride, pad, in_hw, out_hw = cache
    n, c = x.shape[:2]
    k = w.shape[2]
    gcols = _im2col(grad_y, k, stride, pad, in_hw)
    grad_x = np.einsum("cp,npl->ncl", w.reshape(c, -1), gcols,
                       optimize=True).reshape(x.shape)
    grad_w = np.einsum("ncl,npl->cp", x.reshape(n, c, -1), gcols,
                       optimize=True).reshape(w.shape)
    grad_b = grad_y.sum(axis=(0, 2, 3))
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# Dense
# ---------------------------------------------------------------------------


def linear_forward(x, w, b):
    """x (N, F_in) @ w (F_out, F_in)^T + b."""
    return x @ w.T + b, (x, w)


def linear_backward(grad_y, cache):
    x, w = cache
    return grad_y @ w, grad_y.T @ x, grad_y.sum(axis=0)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


def relu_forward(x):
    y = np.maximum(x, 0.0)
    return y, x


def relu_backward(grad_y, cache):
    return grad_y * (cache > 0)


def elu_forward(x, alpha=1.0):
    y = np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))
    return y, (y, x, alpha)


def elu_backward(grad_y, cache):
    y, x, alpha = cache
    return grad_y * np.where(x > 0, 1.0, y + alpha)


def sigmoid_forward(x):
    # exp(-|x|) never overflows; rebuild both halves from it
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return y, y


def sigmoid_backward(grad_y, cache):
    y = cache
    return grad_y * y * (1.0 - y)
