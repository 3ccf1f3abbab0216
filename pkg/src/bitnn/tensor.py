"""Dense tensor helpers: conv lowering to GEMM and a reference kernel.

``im2col`` unrolls convolution inputs so that every convolution in this
package is a plain matrix product: filters flatten to the left operand
[F, C*kh*kw] and patches form the right operand [C*kh*kw, B*oh*ow].
``gemm_f32`` is the deliberately naive float32 triple loop that the
bit-packed kernels are benchmarked against; it is the correctness
baseline, not a fast path.
"""

import numba
import numpy as np


def conv_output_hw(h: int, w: int, kh: int, kw: int, stride=(1, 1), pad=(0, 0)):
    """Output spatial size of a convolution; raises if it would be empty."""
    sh, sw = stride
    ph, pw = pad
    if min(h, w, kh, kw) < 1 or min(sh, sw) < 1 or min(ph, pw) < 0:
        raise ValueError("invalid convolution geometry")
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    if oh < 1 or ow < 1:
        raise ValueError(
            f"kernel {kh}x{kw} does not fit input {h}x{w} with pad {ph},{pw}"
        )
    return oh, ow


@numba.njit(cache=True, nogil=True)
def _im2col_fill(xp, cols, kh, kw, sh, sw, oh, ow):
    b, c, _, _ = xp.shape
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ci * kh + i) * kw + j
                for bi in range(b):
                    for oy in range(oh):
                        iy = oy * sh + i
                        col = (bi * oh + oy) * ow
                        for ox in range(ow):
                            cols[row, col + ox] = xp[bi, ci, iy, ox * sw + j]


@numba.njit(cache=True, nogil=True)
def _col2im_add(cols, dxp, kh, kw, sh, sw, oh, ow):
    b, c, _, _ = dxp.shape
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ci * kh + i) * kw + j
                for bi in range(b):
                    for oy in range(oh):
                        iy = oy * sh + i
                        col = (bi * oh + oy) * ow
                        for ox in range(ow):
                            dxp[bi, ci, iy, ox * sw + j] += cols[row, col + ox]


def im2col(x: np.ndarray, kh: int, kw: int, stride=(1, 1), pad=(0, 0)) -> np.ndarray:
    """Unroll [B, C, H, W] into patch columns [C*kh*kw, B*oh*ow].

    Row order is channel-major (c, i, j) over the kernel window; column
    order is (batch, oy, ox). With filters flattened the same way,
    ``W_flat @ im2col(x)`` equals the convolution's output columns.
    """
    if x.ndim != 4:
        raise ValueError(f"expected [B, C, H, W] input, got ndim={x.ndim}")
    b, c, h, w = x.shape
    sh, sw = stride
    oh, ow = conv_output_hw(h, w, kh, kw, stride, pad)
    ph, pw = pad
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    x = np.ascontiguousarray(x)
    cols = np.empty((c * kh * kw, b * oh * ow), dtype=x.dtype)
    _im2col_fill(x, cols, kh, kw, sh, sw, oh, ow)
    return cols


def col2im(
    cols: np.ndarray,
    x_shape,
    kh: int,
    kw: int,
    stride=(1, 1),
    pad=(0, 0),
) -> np.ndarray:
    """Adjoint of ``im2col``: scatter-add patch columns back to [B, C, H, W].

    Used for convolution input gradients; overlapping window positions
    accumulate.
    """
    b, c, h, w = x_shape
    sh, sw = stride
    ph, pw = pad
    oh, ow = conv_output_hw(h, w, kh, kw, stride, pad)
    dxp = np.zeros((b, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    _col2im_add(np.ascontiguousarray(cols), dxp, kh, kw, sh, sw, oh, ow)
    if ph or pw:
        dxp = np.ascontiguousarray(dxp[:, :, ph : ph + h, pw : pw + w])
    return dxp


@numba.njit(cache=True, nogil=True)
def _gemm_f32_kernel(a, b, c):
    m, k = a.shape
    n = b.shape[1]
    for i in range(m):
        for p in range(k):
            apart = a[i, p]
            for j in range(n):
                c[i, j] += apart * b[p, j]


def gemm_f32(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Naive float32 matrix product, accumulated in float32.

    Loop order is row, reduction, column with the left element hoisted,
    mirroring the structure of the xnor kernels so timing comparisons
    measure the arithmetic, not a different traversal.
    """
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("gemm_f32 expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    a = np.ascontiguousarray(a, dtype=np.float32)
    b = np.ascontiguousarray(b, dtype=np.float32)
    c = np.zeros((a.shape[0], b.shape[1]), dtype=np.float32)
    _gemm_f32_kernel(a, b, c)
    return c
