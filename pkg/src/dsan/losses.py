"""Dual-domain L1 objective over the multi-scale outputs.

Per output: L = L_s + lambda * L_f, where L_s is the mean absolute pixel
difference and L_f the mean absolute difference of the real and imaginary
spectral components. The three per-scale losses are summed. Both sides of
the frequency term are zero-padded identically to the next power of two, so
the padding contributes nothing at the optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .fourier import _complex_dtype, _fft2_complex, next_pow2
from .tensor import ShapeError, Tensor, apply_op

__all__ = ["LossReport", "spatial_l1", "frequency_l1", "total_loss"]


@dataclass
class LossReport:
    """Scalar summary of one loss evaluation; ``tensor`` backpropagates."""

    spatial_terms: tuple[float, ...]
    frequency_terms: tuple[float, ...]
    lam: float
    total: float
    tensor: Tensor


def spatial_l1(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference over all elements."""
    if pred.data.shape != target.data.shape:
        raise ShapeError(f"shape mismatch {pred.data.shape} vs {target.data.shape}")
    return T.mean_all(T.abs_val(T.sub(pred, target)))


def frequency_l1(pred: Tensor, target: Tensor) -> Tensor:
    """Mean L1 distance between the spectra of pred and target.

    The normalizer counts every real and imaginary component of the padded
    spectrum. Differentiable w.r.t. both arguments through the DFT adjoint.
    """
    if pred.data.shape != target.data.shape:
        raise ShapeError(f"shape mismatch {pred.data.shape} vs {target.data.shape}")
    if pred.data.ndim != 4:
        raise ShapeError("frequency_l1 expects 4-d NCHW tensors")
    N, C, H, W = pred.data.shape
    Hp, Wp = next_pow2(H), next_pow2(W)

    def padded(arr):
        if (Hp, Wp) == (H, W):
            return arr
        return np.pad(arr, ((0, 0), (0, 0), (0, Hp - H), (0, Wp - W)))

    cdtype = _complex_dtype(pred.dtype)
    diff = _fft2_complex(padded(pred.data).astype(cdtype)) - _fft2_complex(
        padded(target.data).astype(cdtype)
    )
    S = 2 * diff.size
    val = (np.abs(diff.real).sum(dtype=np.float64) + np.abs(diff.imag).sum(dtype=np.float64)) / S

    def bw(g):
        gs = float(g) / S
        gc = np.sign(diff.real) * gs + 1j * (np.sign(diff.imag) * gs)
        # adjoint of the unnormalized DFT: Re(F^H y) = Re(F conj(y))
        gp = _fft2_complex(np.conj(gc)).real[:, :, :H, :W]
        gp = np.ascontiguousarray(gp).astype(pred.dtype, copy=False)
        return gp, -gp

    return apply_op(np.asarray(val, dtype=pred.dtype).reshape(()), (pred, target), bw)


def total_loss(outputs: list[Tensor], targets: list[Tensor], lam: float = 0.1) -> LossReport:
    """Sum of per-scale dual-domain losses; differentiable end to end."""
    if len(outputs) != len(targets):
        raise ShapeError(f"{len(outputs)} outputs vs {len(targets)} targets")
    if not outputs:
        raise ShapeError("empty output list")
    spatial = []
    freq = []
    total: Tensor | None = None
    for out, tgt in zip(outputs, targets):
        ls = spatial_l1(out, tgt)
        lf = frequency_l1(out, tgt)
        spatial.append(ls.item())
        freq.append(lf.item())
        term = T.add(ls, T.mul(lf, float(lam)))
        total = term if total is None else T.add(total, term)
    return LossReport(
        spatial_terms=tuple(spatial),
        frequency_terms=tuple(freq),
        lam=float(lam),
        total=total.item(),
        tensor=total,
    )
