"""PSNR and single-scale SSIM for restoration quality reporting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor import ShapeError

__all__ = ["MetricReport", "psnr", "ssim", "PSNR_CAP_DB"]

PSNR_CAP_DB = 100.0  # reported for exact equality instead of infinity

_LUMA = np.array([0.299, 0.587, 0.114])  # Rec.601


def _as_image(x) -> np.ndarray:
    arr = x.data if hasattr(x, "data") else np.asarray(x)
    return np.asarray(arr, dtype=np.float64)


def psnr(a, b, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE), capped at 100 dB for identical inputs."""
    a, b = _as_image(a), _as_image(b)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def _to_luma(arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 3 and arr.shape[0] == 3:
        return np.tensordot(_LUMA, arr, axes=([0], [0]))
    if arr.ndim == 2:
        return arr
    raise ShapeError(f"expected (3,H,W) or (H,W) image, got {arr.shape}")


def ssim(a, b, peak: float = 1.0) -> float:
    """Mean local SSIM on Rec.601 luma, 11x11 Gaussian window, sigma 1.5.

    Windows are valid-mode only (no padding); C1=(0.01*peak)^2, C2=(0.03*peak)^2.
    """
    xa, xb = _to_luma(_as_image(a)), _to_luma(_as_image(b))
    if xa.shape != xb.shape:
        raise ShapeError(f"shape mismatch {xa.shape} vs {xb.shape}")
    win = 11
    if xa.shape[0] < win or xa.shape[1] < win:
        raise ShapeError(f"image {xa.shape} smaller than the {win}x{win} window")
    w = _gaussian_window(win, 1.5)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2

    def local(img):
        v = np.lib.stride_tricks.sliding_window_view(img, (win, win))
        return np.tensordot(v, w, axes=([2, 3], [0, 1]))

    mu_a = local(xa)
    mu_b = local(xb)
    ea2 = local(xa * xa)
    eb2 = local(xb * xb)
    eab = local(xa * xb)
    va = ea2 - mu_a * mu_a
    vb = eb2 - mu_b * mu_b
    cov = eab - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    """Per-image PSNR/SSIM rows plus their means."""

    rows: list[tuple[str, float, float]] = field(default_factory=list)

    def add(self, name: str, psnr_db: float, ssim_val: float) -> None:
        self.rows.append((name, float(psnr_db), float(ssim_val)))

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r[1] for r in self.rows])) if self.rows else float("nan")

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r[2] for r in self.rows])) if self.rows else float("nan")

    def write_csv(self, path) -> None:
        # repr round-trips exactly, so the mean row can be recomputed from rows
        with open(Path(path), "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["image", "psnr_db", "ssim"])
            for name, p, s in self.rows:
                out.writerow([name, repr(p), repr(s)])
            out.writerow(["mean", repr(self.mean_psnr), repr(self.mean_ssim)])
