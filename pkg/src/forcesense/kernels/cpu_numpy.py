"""Pure-numpy kernels: convolutions as patch-matrix GEMMs, max-pool via argmax.

Fallback path for machines without numba; also the faster path when a tuned
BLAS is available and batch GEMMs dominate.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "numpy"


def _cols1d(x: np.ndarray, d: int):
    """Patch matrix for a same-length 1-D conv.

    x: (B, C, T) -> (B*T, d*C) rows of flattened (tap, channel) patches.
    """
    B, C, T = x.shape
    h = (d - 1) // 2
    xp = np.zeros((B, C, T + 2 * h), dtype=x.dtype)
    xp[:, :, h:h + T] = x
    win = sliding_window_view(xp, d, axis=2)            # (B, C, T, d)
    cols = win.transpose(0, 2, 3, 1)                    # (B, T, d, C)
    return np.ascontiguousarray(cols).reshape(B * T, d * C)


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-length temporal convolution with symmetric zero padding.

    x: (B, C, T), w: (F, d, C) with d odd, b: (F,).  Returns (B, F, T).
    """
    B, C, T = x.shape
    F, d, _ = w.shape
    y = _cols1d(x, d) @ w.reshape(F, d * C).T           # (B*T, F)
    y += b
    return np.ascontiguousarray(y.reshape(B, T, F).transpose(0, 2, 1))


def conv1d_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    """Gradients of conv1d_forward. Returns (dx, dw, db)."""
    B, C, T = x.shape
    F, d, _ = w.shape
    h = (d - 1) // 2
    dy_mat = np.ascontiguousarray(dy.transpose(0, 2, 1)).reshape(B * T, F)
    db = dy_mat.sum(axis=0)
    dw = (dy_mat.T @ _cols1d(x, d)).reshape(F, d, C)
    dcols = (dy_mat @ w.reshape(F, d * C)).reshape(B, T, d, C)
    dxp = np.zeros((B, C, T + 2 * h), dtype=x.dtype)
    for k in range(d):
        # scatter each tap's contribution back onto the padded input
        dxp[:, :, k:k + T] += dcols[:, :, k, :].transpose(0, 2, 1)
    return dxp[:, :, h:h + T], dw, db


def _conv2d_out_hw(H: int, W: int, kh: int, kw: int, stride: int):
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    return (H + 2 * ph - kh) // stride + 1, (W + 2 * pw - kw) // stride + 1


def _cols2d(x: np.ndarray, kh: int, kw: int, stride: int):
    """Patch matrix for a half-padded strided 2-D conv.

    x: (B, C, H, W) -> (B*OH*OW, kh*kw*C) rows of flattened patches.
    """
    B, C, H, W = x.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.zeros((B, C, H + 2 * ph, W + 2 * pw), dtype=x.dtype)
    xp[:, :, ph:ph + H, pw:pw + W] = x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = win.transpose(0, 2, 3, 4, 5, 1)              # (B, OH, OW, kh, kw, C)
    OH, OW = cols.shape[1], cols.shape[2]
    return np.ascontiguousarray(cols).reshape(B * OH * OW, kh * kw * C)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    """Strided 2-D convolution with half padding.

    x: (B, C, H, W), w: (F, kh, kw, C) with kh, kw odd, b: (F,).
    Returns (B, F, OH, OW) with OH = (H + 2*(kh-1)//2 - kh)//stride + 1.
    """
    B, C, H, W = x.shape
    F, kh, kw, _ = w.shape
    OH, OW = _conv2d_out_hw(H, W, kh, kw, stride)
    y = _cols2d(x, kh, kw, stride) @ w.reshape(F, kh * kw * C).T
    y += b
    return np.ascontiguousarray(y.reshape(B, OH, OW, F).transpose(0, 3, 1, 2))


def conv2d_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray, stride: int):
    """Gradients of conv2d_forward. Returns (dx, dw, db)."""
    B, C, H, W = x.shape
    F, kh, kw, _ = w.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    OH, OW = dy.shape[2], dy.shape[3]
    dy_mat = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(B * OH * OW, F)
    db = dy_mat.sum(axis=0)
    dw = (dy_mat.T @ _cols2d(x, kh, kw, stride)).reshape(F, kh, kw, C)
    dcols = (dy_mat @ w.reshape(F, kh * kw * C)).reshape(B, OH, OW, kh, kw, C)
    dxp = np.zeros((B, C, H + 2 * ph, W + 2 * pw), dtype=x.dtype)
    he, we = stride * (OH - 1) + 1, stride * (OW - 1) + 1
    for a in range(kh):
        for bb in range(kw):
            dxp[:, :, a:a + he:stride, bb:bb + we:stride] += \
                dcols[:, :, :, a, bb, :].transpose(0, 3, 1, 2)
    return dxp[:, :, ph:ph + H, pw:pw + W], dw, db


def maxpool_points_forward(x: np.ndarray):
    """Channel-wise max over the point axis.

    x: (B, P, C).  Returns (y (B, C), idx (B, C)); ties resolve to the lowest
    point index (argmax first occurrence), which fixes the subgradient.
    """
    idx = np.argmax(x, axis=1)
    y = np.take_along_axis(x, idx[:, None, :], axis=1)[:, 0, :]
    return y, idx


def maxpool_points_backward(dy: np.ndarray, idx: np.ndarray, num_points: int) -> np.ndarray:
    """Route dy back to the argmax points. Returns dx (B, P, C)."""
    B, C = dy.shape
    dx = np.zeros((B, num_points, C), dtype=dy.dtype)
    bi = np.repeat(np.arange(B), C)
    ci = np.tile(np.arange(C), B)
    dx[bi, idx.ravel(), ci] = dy.ravel()
    return dx
