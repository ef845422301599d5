"""Naive reference implementations used as ground truth.

Everything here is deliberately loop-based and independent of the
vectorized production paths it checks. Shared by the test suite and the
``selftest`` command.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "conv2d_direct",
    "transposed_conv2d_zero_stuff",
    "gap_direct",
    "dft2d_naive",
    "adam_scalar_steps",
    "ssim_naive",
    "mse_direct",
    "fd_gradient",
    "rel_err",
    "rel_err_elementwise",
]


def rel_err(a, b, floor: float = 1e-12) -> float:
    """Max absolute difference relative to the overall value scale.

    Scale-relative (not elementwise) so cancellation to a near-zero sum
    does not blow up an otherwise exact kernel comparison.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), floor)
    return float(np.max(np.abs(a - b))) / scale


def rel_err_elementwise(a, b, floor: float = 1e-6) -> float:
    """Per-entry relative error with a noise floor; for gradient checks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def conv2d_direct(x, w, b=None, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Quadruple-loop cross-correlation with zero padding."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    N, Cin, H, W = x.shape
    Cout, _, kh, kw = w.shape
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    out = np.zeros((N, Cout, Ho, Wo))
    for n in range(N):
        for o in range(Cout):
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0
                    for c in range(Cin):
                        for u in range(kh):
                            for v in range(kw):
                                hi = i * stride + u - padding
                                wi = j * stride + v - padding
                                if 0 <= hi < H and 0 <= wi < W:
                                    acc += w[o, c, u, v] * x[n, c, hi, wi]
                    out[n, o, i, j] = acc + (b[o] if b is not None else 0.0)
    return out


def transposed_conv2d_zero_stuff(x, w, b=None, stride: int = 2) -> np.ndarray:
    """Zero-insertion followed by a direct full convolution."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    N, Cin, H, W = x.shape
    _, Cout, kh, kw = w.shape
    pad_eff = kh - 1 - (kh - stride) // 2
    Hd, Wd = (H - 1) * stride + 1, (W - 1) * stride + 1
    stuffed = np.zeros((N, Cin, Hd, Wd))
    for n in range(N):
        for c in range(Cin):
            for i in range(H):
                for j in range(W):
                    stuffed[n, c, i * stride, j * stride] = x[n, c, i, j]
    # full conv with the spatially flipped kernel, channel roles swapped
    wf = np.transpose(w[:, :, ::-1, ::-1], (1, 0, 2, 3))
    out = conv2d_direct(stuffed, wf, stride=1, padding=pad_eff)
    if b is not None:
        out = out + np.asarray(b)[None, :, None, None]
    return out


def gap_direct(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    N, C, H, W = x.shape
    out = np.zeros((N, C, 1, 1))
    for n in range(N):
        for c in range(C):
            acc = 0.0
            for i in range(H):
                for j in range(W):
                    acc += x[n, c, i, j]
            out[n, c, 0, 0] = acc / (H * W)
    return out


def dft2d_naive(x) -> np.ndarray:
    """O(N^2)-per-axis unnormalized DFT of each channel; returns complex."""
    x = np.asarray(x)
    N, C, H, W = x.shape
    out = np.zeros((N, C, H, W), dtype=np.complex128)
    for n in range(N):
        for c in range(C):
            plane = x[n, c].astype(np.complex128)
            tmp = np.zeros((H, W), dtype=np.complex128)
            for u in range(H):
                for i in range(H):
                    tmp[u] += plane[i] * np.exp(-2j * np.pi * u * i / H)
            for v in range(W):
                for j in range(W):
                    out[n, c, :, v] += tmp[:, j] * np.exp(-2j * np.pi * v * j / W)
    return out


def adam_scalar_steps(
    grad_fn,
    p0: float,
    steps: int,
    lr0: float,
    lr_min: float,
    total: int,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> list[float]:
    """Plain-float Adam trajectory with the cosine schedule; returns params after each step."""
    import math

    p, m, v = p0, 0.0, 0.0
    out = []
    for t in range(steps):
        w = 0.5 * (1.0 + math.cos(math.pi * t / total))
        lr = lr0 * w + lr_min * (1.0 - w)
        g = grad_fn(p)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        mh = m / (1.0 - beta1 ** (t + 1))
        vh = v / (1.0 - beta2 ** (t + 1))
        p = p - lr * mh / (math.sqrt(vh) + eps)
        out.append(p)
    return out


def mse_direct(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    acc = 0.0
    for i in range(a.size):
        acc += (a[i] - b[i]) ** 2
    return acc / a.size


def ssim_naive(a, b, peak: float = 1.0) -> float:
    """Sliding-window SSIM with explicit per-window loops on luma."""
    luma = np.array([0.299, 0.587, 0.114])

    def to_luma(img):
        img = np.asarray(img, dtype=np.float64)
        if img.ndim == 3:
            return np.tensordot(luma, img, axes=([0], [0]))
        return img

    xa, xb = to_luma(a), to_luma(b)
    win, sigma = 11, 1.5
    ax = np.arange(win) - (win - 1) / 2.0
    w = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma * sigma))
    w = w / w.sum()
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    H, W = xa.shape
    vals = []
    for i in range(H - win + 1):
        for j in range(W - win + 1):
            pa = xa[i : i + win, j : j + win]
            pb = xb[i : i + win, j : j + win]
            mu_a = (w * pa).sum()
            mu_b = (w * pb).sum()
            va = (w * pa * pa).sum() - mu_a**2
            vb = (w * pb * pb).sum() - mu_b**2
            cov = (w * pa * pb).sum() - mu_a * mu_b
            vals.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))
            )
    return float(np.mean(vals))


def fd_gradient(f, x: np.ndarray, h: float = 1e-5, indices=None) -> np.ndarray:
    """Central finite differences of scalar f at selected flat indices of x.

    Returns an array shaped like ``indices`` (all entries when None).
    ``x`` is modified in place and restored, so ``f`` may close over it.
    """
    flat = x.reshape(-1)
    if indices is None:
        indices = np.arange(flat.size)
    out = np.zeros(len(indices))
    for n, idx in enumerate(indices):
        orig = flat[idx]
        flat[idx] = orig + h
        fp = f()
        flat[idx] = orig - h
        fm = f()
        flat[idx] = orig
        out[n] = (fp - fm) / (2.0 * h)
    return out
