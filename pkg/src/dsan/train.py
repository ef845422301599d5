"""Training loop: patches in, dual-domain loss, Adam, CSV log, checkpoints."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as D
from . import tensor as T
from .checkpoint import save_train_state
from .config import RunConfig
from .losses import total_loss
from .metrics import psnr
from .model import DsanModel, build_dsan, forward
from .optim import AdamState, adam_step
from .tensor import NumericalError, Tensor, no_grad

__all__ = ["TrainRun", "run_training", "restore_image", "dataset_spec", "evaluate_pairs"]


@dataclass
class TrainRun:
    cfg: RunConfig
    model: DsanModel
    state: AdamState
    history: list[dict] = field(default_factory=list)
    checkpoint_path: Path | None = None
    log_path: Path | None = None


def dataset_spec(cfg: RunConfig) -> D.DegradationSpec:
    """The degradation recipe implied by the configured task."""
    kind = {"dehaze": "haze", "deblur": "blur", "desnow": "snow"}[cfg.task]
    return D.DegradationSpec(kind=kind, seed=cfg.seed)


def _dtype(cfg: RunConfig):
    return np.float32 if cfg.precision == "f32" else np.float64


def restore_image(model: DsanModel, img: np.ndarray) -> np.ndarray:
    """Run one (3,H,W) image through the model; pad to /4 and crop back."""
    H, W = img.shape[1], img.shape[2]
    ph = (4 - H % 4) % 4
    pw = (4 - W % 4) % 4
    x = np.pad(img, ((0, 0), (0, ph), (0, pw)))[None]
    with no_grad():
        out = forward(model, Tensor(x.astype(model.dtype)))[0]
    return np.clip(out.data[0, :, :H, :W].astype(np.float64), 0.0, 1.0)


def evaluate_pairs(model: DsanModel, pairs) -> tuple[float, float]:
    """(mean restored PSNR, mean identity-baseline PSNR) over image pairs."""
    restored, baseline = [], []
    for clean, deg in pairs:
        out = restore_image(model, deg.data)
        restored.append(psnr(clean.data, out))
        baseline.append(psnr(clean.data, deg.data))
    return float(np.mean(restored)), float(np.mean(baseline))


def _targets(clean_batch: Tensor) -> list[Tensor]:
    half = T.downsample2x(clean_batch)
    return [clean_batch, half, T.downsample2x(half)]


def run_training(cfg: RunConfig, out_dir, log_name: str = "train_log.csv") -> TrainRun:
    """Train per the config; returns the finished run.

    Writes ``checkpoint.dsan`` and a CSV log with one row per step:
    step, lr, L_s, L_f, L, psnr_val (validation PSNR filled on eval steps).
    Fully reproducible from (config, seed).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "checkpoint.dsan"
    log_path = out_dir / log_name

    pair_paths = D.prepare_dataset(cfg.data_root, dataset_spec(cfg))
    train_paths, val_paths = D.split_pairs(pair_paths)
    train_pairs = D.load_pairs(train_paths)
    val_pairs = D.load_pairs(val_paths)
    if not train_pairs:
        raise FileNotFoundError(f"no training images under {cfg.data_root}")

    dtype = _dtype(cfg)
    model = build_dsan(
        c0=cfg.c0,
        num_blocks=cfg.num_blocks,
        dilation=cfg.dilation,
        strip_lengths=cfg.strip_lengths,
        use_dsam=cfg.use_dsam,
        seed=cfg.seed,
        dtype=dtype,
    )
    state = AdamState.init(model.params, lr0=cfg.lr0, lr_min=cfg.lr_min, total_steps=cfg.steps)
    rng = np.random.default_rng([cfg.seed, 0xDA7A])
    run = TrainRun(cfg=cfg, model=model, state=state, checkpoint_path=ckpt_path, log_path=log_path)

    with open(log_path, "w", newline="") as fh:
        log = csv.writer(fh)
        log.writerow(["step", "lr", "L_s", "L_f", "L", "psnr_val"])
        for step in range(cfg.steps):
            clean_np, deg_np = D.sample_patches(train_pairs, cfg.patch_size, rng, cfg.batch_size)
            clean_np, deg_np = D.hflip_augment((clean_np, deg_np), rng)
            x = Tensor(deg_np.astype(dtype))
            targets = _targets(Tensor(clean_np.astype(dtype)))

            outputs = forward(model, x)
            report = total_loss(outputs, targets, cfg.lambda_freq)
            if not np.isfinite(report.total):
                save_train_state(model, state, ckpt_path)
                raise NumericalError(f"non-finite loss {report.total} at step {step}")
            T.backward(report.tensor)
            lr = adam_step(model.params, state)

            row = {
                "step": step,
                "lr": lr,
                "L_s": float(np.sum(report.spatial_terms)),
                "L_f": float(np.sum(report.frequency_terms)),
                "L": report.total,
                "psnr_val": "",
            }
            if (step + 1) % cfg.eval_interval == 0 or step == cfg.steps - 1:
                if val_pairs:
                    row["psnr_val"] = repr(evaluate_pairs(model, val_pairs)[0])
                save_train_state(model, state, ckpt_path)
            log.writerow(
                [row["step"], repr(row["lr"]), repr(row["L_s"]), repr(row["L_f"]), repr(row["L"]), row["psnr_val"]]
            )
            run.history.append(row)
    save_train_state(model, state, ckpt_path)
    return run
