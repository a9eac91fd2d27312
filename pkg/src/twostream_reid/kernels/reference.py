"""Pure-numpy reference kernels.

Import-time fallback for the compiled extension in ``_native``; both
implementations must stay numerically identical (same summation order at
the GEMM boundary, same argmax tie-breaking).
"""

import numpy as np

BACKEND = "pure-python"


def im2col3(x):
    """Unfold 3x3 neighborhoods (pad 1, stride 1) of a (B,C,H,W) array.

    Returns (B, C*9, H*W); column k*9+(di*3+dj) holds the input shifted
    by the kernel offset (di-1, dj-1), zero-padded at the borders.
    """
    b, c, h, w = x.shape
    xp = np.zeros((b, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1 : h + 1, 1 : w + 1] = x
    cols = np.empty((b, c, 9, h, w), dtype=x.dtype)
    for di in range(3):
        for dj in range(3):
            cols[:, :, di * 3 + dj] = xp[:, :, di : di + h, dj : dj + w]
    return np.ascontiguousarray(cols.reshape(b, c * 9, h * w))


def col2im3(cols, c, h, w):
    """Adjoint of im2col3: scatter-add (B, C*9, H*W) back to (B,C,H,W)."""
    b = cols.shape[0]
    cols = cols.reshape(b, c, 9, h, w)
    xp = np.zeros((b, c, h + 2, w + 2), dtype=cols.dtype)
    for di in range(3):
        for dj in range(3):
            xp[:, :, di : di + h, dj : dj + w] += cols[:, :, di * 3 + dj]
    return np.ascontiguousarray(xp[:, :, 1 : h + 1, 1 : w + 1])


def maxpool2x2_forward(x):
    """Non-overlapping 2x2 max pool with floor semantics on (B,C,H,W).

    Returns (out, idx) where idx in {0,1,2,3} is the row-major window
    position of the max, first occurrence winning ties.
    """
    b, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    win = (
        x[:, :, : h2 * 2, : w2 * 2]
        .reshape(b, c, h2, 2, w2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h2, w2, 4)
    )
    idx = win.argmax(axis=4).astype(np.uint8)
    out = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=4)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2x2_backward(grad_out, idx, h, w):
    """Route pooled gradients back to the argmax cells of a (B,C,h,w) input."""
    b, c, h2, w2 = grad_out.shape
    grad_win = np.zeros((b, c, h2, w2, 4), dtype=grad_out.dtype)
    np.put_along_axis(grad_win, idx[..., None].astype(np.intp), grad_out[..., None], axis=4)
    gx = np.zeros((b, c, h, w), dtype=grad_out.dtype)
    gx[:, :, : h2 * 2, : w2 * 2] = (
        grad_win.reshape(b, c, h2, w2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h2 * 2, w2 * 2)
    )
    return gx
