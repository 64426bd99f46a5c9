"""Numba-compiled kernels: explicit loops, parallelized over axes that carry
no cross-thread reduction so results are bitwise reproducible at any thread
count.
"""

import numpy as np
from numba import njit, prange

NAME = "numba"


@njit(cache=True, parallel=True)
def _conv1d_fwd(x, w, b, y):
    B, C, T = x.shape
    F, d, _ = w.shape
    h = (d - 1) // 2
    for n in prange(B):
        for f in range(F):
            for t in range(T):
                acc = b[f]
                for k in range(d):
                    tt = t + k - h
                    if 0 <= tt < T:
                        for c in range(C):
                            acc += w[f, k, c] * x[n, c, tt]
                y[n, f, t] = acc


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = np.empty((x.shape[0], w.shape[0], x.shape[2]), dtype=x.dtype)
    _conv1d_fwd(x, w, b, y)
    return y


@njit(cache=True, parallel=True)
def _conv1d_bwd_dx(w, dy, dx):
    B, F, T = dy.shape
    _, d, C = w.shape
    h = (d - 1) // 2
    for n in prange(B):
        for c in range(C):
            for t in range(T):
                acc = 0.0
                for k in range(d):
                    # tap k reads input t' = t, writes output t' - k + h
                    to = t - k + h
                    if 0 <= to < T:
                        for f in range(F):
                            acc += w[f, k, c] * dy[n, f, to]
                dx[n, c, t] = acc


@njit(cache=True, parallel=True)
def _conv1d_bwd_dw(x, dy, dw, db):
    B, C, T = x.shape
    F, d, _ = dw.shape
    h = (d - 1) // 2
    for f in prange(F):
        s = 0.0
        for n in range(B):
            for t in range(T):
                s += dy[n, f, t]
        db[f] = s
        for k in range(d):
            for c in range(C):
                acc = 0.0
                for n in range(B):
                    for t in range(T):
                        tt = t + k - h
                        if 0 <= tt < T:
                            acc += dy[n, f, t] * x[n, c, tt]
                dw[f, k, c] = acc


def conv1d_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    dx = np.empty_like(x)
    dw = np.empty_like(w)
    db = np.empty(w.shape[0], dtype=w.dtype)
    _conv1d_bwd_dx(w, dy, dx)
    _conv1d_bwd_dw(x, dy, dw, db)
    return dx, dw, db


@njit(cache=True, parallel=True)
def _conv2d_fwd(x, w, b, stride, y):
    B, C, H, W = x.shape
    F, kh, kw, _ = w.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    OH, OW = y.shape[2], y.shape[3]
    for n in prange(B):
        for f in range(F):
            for i in range(OH):
                for j in range(OW):
                    acc = b[f]
                    for a in range(kh):
                        ii = i * stride + a - ph
                        if ii < 0 or ii >= H:
                            continue
                        for bb in range(kw):
                            jj = j * stride + bb - pw
                            if jj < 0 or jj >= W:
                                continue
                            for c in range(C):
                                acc += w[f, a, bb, c] * x[n, c, ii, jj]
                    y[n, f, i, j] = acc


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    kh, kw = w.shape[1], w.shape[2]
    OH = (x.shape[2] + 2 * ((kh - 1) // 2) - kh) // stride + 1
    OW = (x.shape[3] + 2 * ((kw - 1) // 2) - kw) // stride + 1
    y = np.empty((x.shape[0], w.shape[0], OH, OW), dtype=x.dtype)
    _conv2d_fwd(x, w, b, stride, y)
    return y


@njit(cache=True, parallel=True)
def _conv2d_bwd_dx(w, dy, stride, dx):
    B, C, H, W = dx.shape
    F, kh, kw, _ = w.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    OH, OW = dy.shape[2], dy.shape[3]
    for n in prange(B):
        for c in range(C):
            for ii in range(H):
                for jj in range(W):
                    acc = 0.0
                    for a in range(kh):
                        num = ii + ph - a
                        if num < 0 or num % stride != 0:
                            continue
                        i = num // stride
                        if i >= OH:
                            continue
                        for bb in range(kw):
                            numj = jj + pw - bb
                            if numj < 0 or numj % stride != 0:
                                continue
                            j = numj // stride
                            if j >= OW:
                                continue
                            for f in range(F):
                                acc += w[f, a, bb, c] * dy[n, f, i, j]
                    dx[n, c, ii, jj] = acc


@njit(cache=True, parallel=True)
def _conv2d_bwd_dw(x, dy, stride, dw, db):
    B, C, H, W = x.shape
    F, kh, kw, _ = dw.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    OH, OW = dy.shape[2], dy.shape[3]
    for f in prange(F):
        s = 0.0
        for n in range(B):
            for i in range(OH):
                for j in range(OW):
                    s += dy[n, f, i, j]
        db[f] = s
        for a in range(kh):
            for bb in range(kw):
                for c in range(C):
                    acc = 0.0
                    for n in range(B):
                        for i in range(OH):
                            ii = i * stride + a - ph
                            if ii < 0 or ii >= H:
                                continue
                            for j in range(OW):
                                jj = j * stride + bb - pw
                                if jj < 0 or jj >= W:
                                    continue
                                acc += dy[n, f, i, j] * x[n, c, ii, jj]
                    dw[f, a, bb, c] = acc


def conv2d_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray, stride: int):
    dx = np.empty_like(x)
    dw = np.empty_like(w)
    db = np.empty(w.shape[0], dtype=w.dtype)
    _conv2d_bwd_dx(w, dy, stride, dx)
    _conv2d_bwd_dw(x, dy, stride, dw, db)
    return dx, dw, db


@njit(cache=True, parallel=True)
def _maxpool_fwd(x, y, idx):
    B, P, C = x.shape
    for n in prange(B):
        for c in range(C):
            best = x[n, 0, c]
            bi = 0
            for p in range(1, P):
                v = x[n, p, c]
                if v > best:  # strict: ties keep the lowest index
                    best = v
                    bi = p
            y[n, c] = best
            idx[n, c] = bi


def maxpool_points_forward(x: np.ndarray):
    B, P, C = x.shape
    y = np.empty((B, C), dtype=x.dtype)
    idx = np.empty((B, C), dtype=np.int64)
    _maxpool_fwd(x, y, idx)
    return y, idx


@njit(cache=True, parallel=True)
def _maxpool_bwd(dy, idx, dx):
    B, C = dy.shape
    for n in prange(B):
        for c in range(C):
            dx[n, idx[n, c], c] = dy[n, c]


def maxpool_points_backward(dy: np.ndarray, idx: np.ndarray, num_points: int) -> np.ndarray:
    dx = np.zeros((dy.shape[0], num_points, dy.shape[1]), dtype=dy.dtype)
    _maxpool_bwd(dy, idx, dx)
    return dx
