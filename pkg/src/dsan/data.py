"""Image I/O, synthetic degradations, patch sampling, augmentation.

Images are (3, H, W) float arrays in [0, 1]. Binary PPM (P6) is the
mandatory format; PNG works when Pillow is importable. Degradations are
seeded stand-ins for real haze/blur/snow corpora: generated pairs are
cached under ``root/degraded/<spec-hash>/`` next to ``root/clean/``.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import ShapeError

__all__ = [
    "ImageBuffer",
    "DegradationSpec",
    "DataError",
    "load_image",
    "save_image",
    "synth_haze",
    "synth_blur",
    "synth_snow",
    "degrade",
    "sample_patches",
    "hflip_augment",
    "spec_hash",
    "prepare_dataset",
    "load_pairs",
    "split_pairs",
    "generate_clean_images",
]


class DataError(ValueError):
    """Malformed image file or out-of-range degradation parameter."""


@dataclass
class ImageBuffer:
    """3-channel float image in [0,1], shape (3, H, W)."""

    data: np.ndarray
    provenance: str = "clean"  # clean | degraded

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[0] != 3:
            raise DataError(f"image must be (3,H,W), got {self.data.shape}")

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


# ---------------------------------------------------------------------------
# PPM (P6)
# ---------------------------------------------------------------------------


def _read_header_tokens(buf: bytes, count: int) -> tuple[list[int], int]:
    """Read whitespace/comment-separated integer tokens; return (tokens, offset)."""
    tokens: list[int] = []
    i = 0
    n = len(buf)
    while len(tokens) < count:
        while i < n and buf[i : i + 1].isspace():
            i += 1
        if i < n and buf[i] == ord("#"):
            while i < n and buf[i] != ord("\n"):
                i += 1
            continue
        j = i
        while j < n and not buf[j : j + 1].isspace():
            j += 1
        if j == i:
            raise DataError("malformed PPM header: ran out of tokens")
        try:
            tokens.append(int(buf[i:j]))
        except ValueError as e:
            raise DataError(f"malformed PPM header token {buf[i:j]!r}") from e
        i = j
    if i >= n or not buf[i : i + 1].isspace():
        raise DataError("malformed PPM header: missing separator before raster")
    return tokens, i + 1


def load_image(path) -> ImageBuffer:
    """Load a binary PPM (P6), or PNG when Pillow is available."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        return _load_png(path)
    raw = path.read_bytes()
    if raw[:2] != b"P6":
        raise DataError(f"{path}: not a binary PPM (P6)")
    (w, h, maxval), off = _read_header_tokens(raw[2:], 3)
    off += 2
    if w < 1 or h < 1:
        raise DataError(f"{path}: bad dimensions {w}x{h}")
    if maxval == 255:
        need = w * h * 3
        payload = raw[off : off + need]
        if len(payload) < need:
            raise DataError(f"{path}: truncated payload ({len(payload)} of {need} bytes)")
        arr = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    elif maxval == 65535:
        need = w * h * 6
        payload = raw[off : off + need]
        if len(payload) < need:
            raise DataError(f"{path}: truncated payload ({len(payload)} of {need} bytes)")
        arr = np.frombuffer(payload, dtype=">u2").astype(np.float64) / 65535.0
    else:
        raise DataError(f"{path}: unsupported maxval {maxval} (want 255 or 65535)")
    data = arr.reshape(h, w, 3).transpose(2, 0, 1)
    return ImageBuffer(np.ascontiguousarray(data))


def save_image(img: ImageBuffer, path, maxval: int = 65535) -> None:
    """Write binary PPM; quantization rounds half up, 1.0 maps to maxval."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        _save_png(img, path)
        return
    if maxval not in (255, 65535):
        raise DataError(f"unsupported maxval {maxval}")
    hwc = img.data.transpose(1, 2, 0)
    q = np.floor(np.clip(hwc, 0.0, 1.0) * maxval + 0.5)
    header = f"P6\n{img.width} {img.height}\n{maxval}\n".encode()
    if maxval == 255:
        payload = q.astype(np.uint8).tobytes()
    else:
        payload = q.astype(">u2").tobytes()
    path.write_bytes(header + payload)


def _load_png(path: Path) -> ImageBuffer:
    try:
        from PIL import Image
    except ImportError as e:
        raise DataError("PNG support requires Pillow (pip install dsan[png])") from e
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return ImageBuffer(np.ascontiguousarray(arr.transpose(2, 0, 1)))


def _save_png(img: ImageBuffer, path: Path) -> None:
    try:
        from PIL import Image
    except ImportError as e:
        raise DataError("PNG support requires Pillow (pip install dsan[png])") from e
    q = np.floor(np.clip(img.data.transpose(1, 2, 0), 0.0, 1.0) * 255 + 0.5).astype(np.uint8)
    Image.fromarray(q, mode="RGB").save(path)


# ---------------------------------------------------------------------------
# degradations
# ---------------------------------------------------------------------------


@dataclass
class DegradationSpec:
    """Seeded degradation recipe; the canonical text keys the cache dir."""

    kind: str  # haze | blur | snow
    t_min: float = 0.4
    t_max: float = 0.8
    airlight: tuple[float, float, float] = (0.8, 0.85, 0.9)
    blur_length: int = 7
    blur_angle: float = 30.0
    snow_density: float = 0.25
    flake_size: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("haze", "blur", "snow"):
            raise DataError(f"unknown degradation kind {self.kind!r}")
        if not (0.0 < self.t_min <= self.t_max <= 1.0):
            raise DataError(f"transmission range ({self.t_min}, {self.t_max}) outside (0, 1]")
        if any(not 0.0 <= a <= 1.0 for a in self.airlight):
            raise DataError(f"airlight {self.airlight} outside [0,1]^3")
        if self.blur_length < 1:
            raise DataError(f"blur kernel length {self.blur_length} < 1")
        if not 0.0 <= self.snow_density <= 1.0:
            raise DataError(f"snow density {self.snow_density} outside [0,1]")

    def canonical_text(self) -> str:
        al = ",".join(f"{a:.6g}" for a in self.airlight)
        return (
            f"kind={self.kind}\n"
            f"t_min={self.t_min:.6g}\nt_max={self.t_max:.6g}\nairlight={al}\n"
            f"blur_length={self.blur_length}\nblur_angle={self.blur_angle:.6g}\n"
            f"snow_density={self.snow_density:.6g}\nflake_size={self.flake_size:.6g}\n"
            f"seed={self.seed}\n"
        )


def spec_hash(spec: DegradationSpec) -> str:
    return f"{zlib.crc32(spec.canonical_text().encode()):08x}"


def synth_haze(clean: ImageBuffer, t, airlight) -> ImageBuffer:
    """Atmospheric scattering: I = J*t + A*(1 - t), t in (0, 1]."""
    a = np.asarray(airlight, dtype=np.float64)
    if a.shape != (3,) or a.min() < 0 or a.max() > 1:
        raise DataError(f"airlight must be 3 values in [0,1], got {airlight}")
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        tmap = np.full((clean.height, clean.width), float(t))
    elif t.shape == (clean.height, clean.width):
        tmap = t
    else:
        raise DataError(f"transmission must be scalar or (H,W), got shape {t.shape}")
    if tmap.min() <= 0.0 or tmap.max() > 1.0:
        raise DataError("transmission values must lie in (0, 1]")
    out = clean.data * tmap[None] + a[:, None, None] * (1.0 - tmap[None])
    return ImageBuffer(np.clip(out, 0.0, 1.0), provenance="degraded")


def _motion_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Unit-mass line kernel: bilinear splat of `length` samples through center."""
    if length < 1:
        raise DataError(f"kernel length {length} < 1")
    if length == 1:
        return np.ones((1, 1))
    size = length if length % 2 else length + 1
    k = np.zeros((size, size))
    c = (size - 1) / 2.0
    th = np.deg2rad(angle_deg)
    dx, dy = np.cos(th), np.sin(th)
    for i in range(length):
        off = i - (length - 1) / 2.0
        px, py = c + off * dx, c + off * dy
        x0, y0 = int(np.floor(px)), int(np.floor(py))
        fx, fy = px - x0, py - y0
        for (xx, yy, wgt) in (
            (x0, y0, (1 - fx) * (1 - fy)),
            (x0 + 1, y0, fx * (1 - fy)),
            (x0, y0 + 1, (1 - fx) * fy),
            (x0 + 1, y0 + 1, fx * fy),
        ):
            if 0 <= xx < size and 0 <= yy < size:
                k[yy, xx] += wgt
    return k / k.sum()


def synth_blur(clean: ImageBuffer, length: int, angle_deg: float) -> ImageBuffer:
    """Linear motion blur with a normalized kernel; zero padding at borders."""
    k = _motion_kernel(length, angle_deg)
    if k.shape == (1, 1):
        return ImageBuffer(clean.data.copy(), provenance="degraded")
    from .tensor import _corr  # raw conv helper; kernel is point-symmetric

    size = k.shape[0]
    x = clean.data[None]  # (1,3,H,W)
    w = np.zeros((3, 3, size, size))
    for c in range(3):
        w[c, c] = k
    out = _corr(x, w, 1, size // 2, size // 2)[0]
    return ImageBuffer(np.clip(out, 0.0, 1.0), provenance="degraded")


def synth_snow(clean: ImageBuffer, density: float, size: float, seed: int) -> ImageBuffer:
    """Seeded white ellipses alpha-composited onto the image."""
    if not 0.0 <= density <= 1.0:
        raise DataError(f"snow density {density} outside [0,1]")
    if density == 0.0:
        return ImageBuffer(clean.data.copy(), provenance="degraded")
    rng = np.random.default_rng(seed)
    H, W = clean.height, clean.width
    out = clean.data.copy()
    n_flakes = max(1, int(round(density * H * W / 60.0)))
    yy, xx = np.mgrid[0:H, 0:W]
    for _ in range(n_flakes):
        cy, cx = rng.uniform(0, H), rng.uniform(0, W)
        ry = max(0.5, size * rng.uniform(0.5, 1.2))
        rx = max(0.5, size * rng.uniform(0.3, 0.8))
        th = rng.uniform(0, np.pi)
        alpha = rng.uniform(0.55, 0.95)
        dy, dx = yy - cy, xx - cx
        u = dx * np.cos(th) + dy * np.sin(th)
        v = -dx * np.sin(th) + dy * np.cos(th)
        mask = (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
        out[:, mask] = out[:, mask] * (1.0 - alpha) + alpha
    return ImageBuffer(np.clip(out, 0.0, 1.0), provenance="degraded")


def degrade(clean: ImageBuffer, spec: DegradationSpec, name: str = "") -> ImageBuffer:
    """Apply the spec to one image; per-image randomness keyed on (seed, name)."""
    rng = np.random.default_rng([spec.seed, zlib.crc32(name.encode())])
    if spec.kind == "haze":
        t = rng.uniform(spec.t_min, spec.t_max)
        return synth_haze(clean, t, spec.airlight)
    if spec.kind == "blur":
        angle = spec.blur_angle + rng.uniform(-15.0, 15.0)
        return synth_blur(clean, spec.blur_length, angle)
    return synth_snow(clean, spec.snow_density, spec.flake_size, int(rng.integers(2**31)))


# ---------------------------------------------------------------------------
# sampling and augmentation
# ---------------------------------------------------------------------------


def sample_patches(
    pairs: list[tuple[ImageBuffer, ImageBuffer]],
    patch: int,
    rng: np.random.Generator | int,
    batch_size: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Aligned random crops; returns (clean, degraded) arrays (B,3,patch,patch)."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    if patch % 4:
        raise DataError(f"patch size {patch} not divisible by 4")
    clean_out = np.empty((batch_size, 3, patch, patch))
    deg_out = np.empty_like(clean_out)
    for i in range(batch_size):
        clean, deg = pairs[int(rng.integers(len(pairs)))]
        H, W = clean.height, clean.width
        if patch > H or patch > W:
            raise DataError(f"patch {patch} exceeds image {H}x{W}")
        top = int(rng.integers(H - patch + 1))
        left = int(rng.integers(W - patch + 1))
        clean_out[i] = clean.data[:, top : top + patch, left : left + patch]
        deg_out[i] = deg.data[:, top : top + patch, left : left + patch]
    return clean_out, deg_out


def hflip_augment(
    batch: tuple[np.ndarray, np.ndarray],
    rng: np.random.Generator | int,
    p: float = 0.5,
) -> tuple[np.ndarray, np.ndarray]:
    """Flip clean and degraded together (or neither), per sample."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    clean, deg = batch
    clean = clean.copy()
    deg = deg.copy()
    for i in range(clean.shape[0]):
        if rng.uniform() < p:
            clean[i] = clean[i, :, :, ::-1]
            deg[i] = deg[i, :, :, ::-1]
    return clean, deg


# ---------------------------------------------------------------------------
# dataset directory management
# ---------------------------------------------------------------------------


def prepare_dataset(root, spec: DegradationSpec) -> list[tuple[Path, Path]]:
    """Ensure the degraded cache exists; return sorted (clean, degraded) paths."""
    root = Path(root)
    clean_dir = root / "clean"
    if not clean_dir.is_dir():
        raise FileNotFoundError(f"no clean/ directory under {root}")
    clean_paths = sorted(clean_dir.glob("*.ppm"))
    if not clean_paths:
        raise FileNotFoundError(f"no .ppm images in {clean_dir}")
    cache = root / "degraded" / spec_hash(spec)
    cache.mkdir(parents=True, exist_ok=True)
    out = []
    for cp in clean_paths:
        dp = cache / cp.name
        if not dp.exists():
            save_image(degrade(load_image(cp), spec, cp.name), dp)
        out.append((cp, dp))
    return out


def load_pairs(pairs: list[tuple[Path, Path]]) -> list[tuple[ImageBuffer, ImageBuffer]]:
    return [(load_image(c), load_image(d)) for c, d in pairs]


def split_pairs(items: list) -> tuple[list, list]:
    """Fixed 80/20 split by sorted order; the tail 20% validates."""
    n = len(items)
    n_val = max(1, round(0.2 * n)) if n > 1 else 0
    return items[: n - n_val], items[n - n_val :]


def generate_clean_images(n: int, size: int, seed: int) -> list[ImageBuffer]:
    """Procedural clean images: smooth color fields plus crisp shapes."""
    rng = np.random.default_rng(seed)
    images = []
    for _ in range(n):
        coarse = rng.uniform(0.1, 0.9, size=(3, 5, 5))
        img = _bilinear_resize(coarse, size, size)
        for _ in range(int(rng.integers(3, 7))):
            color = rng.uniform(0.0, 1.0, size=3)
            cy, cx = rng.uniform(0, size, size=2)
            ry, rx = rng.uniform(size * 0.05, size * 0.25, size=2)
            yy, xx = np.mgrid[0:size, 0:size]
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
            img[:, mask] = color[:, None]
        images.append(ImageBuffer(np.clip(img, 0.0, 1.0)))
    return images


def _bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    c, h, w = img.shape
    ys = np.linspace(0, h - 1, out_h)
    xs = np.linspace(0, w - 1, out_w)
    y0 = np.floor(ys).astype(int).clip(0, h - 2)
    x0 = np.floor(xs).astype(int).clip(0, w - 2)
    fy = (ys - y0)[None, :, None]
    fx = (xs - x0)[None, None, :]
    a = img[:, y0][:, :, x0]
    b = img[:, y0][:, :, x0 + 1]
    cc = img[:, y0 + 1][:, :, x0]
    d = img[:, y0 + 1][:, :, x0 + 1]
    return a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + cc * fy * (1 - fx) + d * fy * fx
