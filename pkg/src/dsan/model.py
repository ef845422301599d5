"""Six-scale encoder-decoder with strip-attention residual blocks.

Topology: shallow 3x3 conv, three encoder scales at widths (C0, 2*C0, 4*C0)
with stride-2 downsampling between them, three decoder scales mirroring back
up with 2x2 transposed convolutions. Half- and quarter-resolution copies of
the input are embedded and fused into encoder scales 2 and 3; decoder scales
emit a restored image each (quarter, half, full), always as a residual on
top of the correspondingly downsampled input. Every scale stacks N residual
blocks and the last block of each scale carries the attention module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import NumericalError, ShapeError, Tensor
from .strip import DsamConfig, dsam

__all__ = ["ResidualBlock", "DsanModel", "build_dsan", "forward", "param_count"]


@dataclass
class ResidualBlock:
    """y = x + conv2(relu(conv1(x))), attention inserted after the ReLU."""

    conv1_w: Tensor
    conv1_b: Tensor
    conv2_w: Tensor
    conv2_b: Tensor
    dsam: DsamConfig | None = None

    def forward(self, x: Tensor) -> Tensor:
        h = T.relu(T.conv2d(x, self.conv1_w, self.conv1_b, padding=1))
        if self.dsam is not None:
            h = dsam(h, self.dsam)
        return T.add(x, T.conv2d(h, self.conv2_w, self.conv2_b, padding=1))


@dataclass
class DsanModel:
    c0: int
    num_blocks: int
    dilation: int
    strip_lengths: tuple[int, ...]
    in_channels: int
    use_dsam: bool
    seed: int
    dtype: np.dtype
    params: dict[str, Tensor] = field(default_factory=dict)
    layers: dict = field(default_factory=dict)

    def parameter_names(self) -> list[str]:
        return list(self.params.keys())

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad = None


def _split_groups(c: int, strip_lengths: tuple[int, ...]) -> tuple[tuple[int, int], ...]:
    g = len(strip_lengths)
    if c % g != 0:
        raise ShapeError(f"channel width {c} not divisible into {g} groups")
    return tuple((c // g, k) for k in strip_lengths)


class _Builder:
    def __init__(self, rng: np.random.Generator, dtype):
        self.rng = rng
        self.dtype = dtype
        self.params: dict[str, Tensor] = {}

    def _register(self, name: str, arr: np.ndarray) -> Tensor:
        t = Tensor(arr.astype(self.dtype), requires_grad=True)
        if name in self.params:
            raise ShapeError(f"duplicate parameter {name}")
        self.params[name] = t
        return t

    def conv(self, name: str, cin: int, cout: int, k: int) -> tuple[Tensor, Tensor]:
        bound = 1.0 / np.sqrt(cin * k * k)
        w = self._register(f"{name}.w", self.rng.uniform(-bound, bound, size=(cout, cin, k, k)))
        b = self._register(f"{name}.b", np.zeros(cout))
        return w, b

    def tconv(self, name: str, cin: int, cout: int, k: int) -> tuple[Tensor, Tensor]:
        bound = 1.0 / np.sqrt(cin * k * k)
        w = self._register(f"{name}.w", self.rng.uniform(-bound, bound, size=(cin, cout, k, k)))
        b = self._register(f"{name}.b", np.zeros(cout))
        return w, b

    def dsam_cfg(self, name: str, c: int, strip_lengths: tuple[int, ...], dilation: int) -> DsamConfig:
        cfg = DsamConfig(_split_groups(c, strip_lengths), dilation).init_params(self.rng, self.dtype)
        for pname, tensor in cfg.parameters():
            if f"{name}.{pname}" in self.params:
                raise ShapeError(f"duplicate parameter {name}.{pname}")
            self.params[f"{name}.{pname}"] = tensor
        return cfg

    def block(self, name: str, c: int, with_dsam: bool, strip_lengths, dilation) -> ResidualBlock:
        c1w, c1b = self.conv(f"{name}.conv1", c, c, 3)
        cfg = self.dsam_cfg(f"{name}.dsam", c, strip_lengths, dilation) if with_dsam else None
        c2w, c2b = self.conv(f"{name}.conv2", c, c, 3)
        return ResidualBlock(c1w, c1b, c2w, c2b, cfg)

    def stage(self, name: str, c: int, n: int, use_dsam: bool, strip_lengths, dilation) -> list[ResidualBlock]:
        return [
            self.block(f"{name}.b{i}", c, use_dsam and i == n - 1, strip_lengths, dilation)
            for i in range(n)
        ]


def build_dsan(
    c0: int,
    num_blocks: int,
    dilation: int,
    strip_lengths: tuple[int, ...] = (3, 5, 7, 9),
    in_channels: int = 3,
    use_dsam: bool = True,
    seed: int = 0,
    dtype=np.float64,
) -> DsanModel:
    """Deterministically initialize the network from a seed.

    Conv weights are uniform in +-1/sqrt(fan_in); biases start at zero.
    The same seed always yields bitwise-identical parameters.
    """
    if num_blocks < 1:
        raise ShapeError(f"num_blocks must be >= 1, got {num_blocks}")
    if dilation < 1:
        raise ShapeError(f"dilation must be >= 1, got {dilation}")
    for k in strip_lengths:
        if k < 1 or k % 2 == 0:
            raise ShapeError(f"strip lengths must be odd, got {strip_lengths}")
    for c in (c0, 2 * c0, 4 * c0):
        _split_groups(c, tuple(strip_lengths))  # raises on bad partition

    dtype = np.dtype(dtype)
    b = _Builder(np.random.default_rng(seed), dtype)
    sl = tuple(strip_lengths)
    c1, c2, c4 = c0, 2 * c0, 4 * c0
    d = dilation
    u = use_dsam

    layers = {}
    # downsample kernels are 4x4 (stride 2, pad 1): with even H a 3x3 kernel
    # cannot satisfy conv2d's exact-division output contract
    layers["shallow"] = b.conv("shallow", in_channels, c1, 3)
    layers["enc1"] = b.stage("enc1", c1, num_blocks, u, sl, d)
    layers["down1"] = b.conv("down1", c1, c2, 4)
    layers["embed2"] = b.conv("embed2", in_channels, c2, 3)
    layers["fuse_in2"] = b.conv("fuse_in2", 2 * c2, c2, 1)
    layers["enc2"] = b.stage("enc2", c2, num_blocks, u, sl, d)
    layers["down2"] = b.conv("down2", c2, c4, 4)
    layers["embed3"] = b.conv("embed3", in_channels, c4, 3)
    layers["fuse_in3"] = b.conv("fuse_in3", 2 * c4, c4, 1)
    layers["enc3"] = b.stage("enc3", c4, num_blocks, u, sl, d)
    layers["dec4"] = b.stage("dec4", c4, num_blocks, u, sl, d)
    layers["head4"] = b.conv("head4", c4, in_channels, 3)
    layers["up5"] = b.tconv("up5", c4, c2, 2)
    layers["fuse5"] = b.conv("fuse5", 2 * c2, c2, 1)
    layers["dec5"] = b.stage("dec5", c2, num_blocks, u, sl, d)
    layers["head5"] = b.conv("head5", c2, in_channels, 3)
    layers["up6"] = b.tconv("up6", c2, c1, 2)
    layers["fuse6"] = b.conv("fuse6", 2 * c1, c1, 1)
    layers["dec6"] = b.stage("dec6", c1, num_blocks, u, sl, d)
    layers["head6"] = b.conv("head6", c1, in_channels, 3)

    return DsanModel(
        c0=c0,
        num_blocks=num_blocks,
        dilation=dilation,
        strip_lengths=sl,
        in_channels=in_channels,
        use_dsam=use_dsam,
        seed=seed,
        dtype=dtype,
        params=b.params,
        layers=layers,
    )


def _run_stage(blocks: list[ResidualBlock], x: Tensor) -> Tensor:
    for blk in blocks:
        x = blk.forward(x)
    return x


def forward(m: DsanModel, image: Tensor) -> list[Tensor]:
    """Restore at three scales: [full, half, quarter] resolution outputs.

    Each output is head(features) + the input downsampled to that scale,
    so zeroed heads reproduce the input exactly. Raises NumericalError as
    soon as any scale output stops being finite.
    """
    if image.data.ndim != 4 or image.data.shape[1] != m.in_channels:
        raise ShapeError(f"expected (N,{m.in_channels},H,W) input, got {image.data.shape}")
    N, C, H, W = image.data.shape
    if H % 4 or W % 4:
        raise ShapeError(f"spatial dims must be divisible by 4, got {H}x{W}")
    if image.dtype != m.dtype:
        image = Tensor(image.data.astype(m.dtype), requires_grad=image.requires_grad)

    L = m.layers
    img2 = T.downsample2x(image)
    img4 = T.downsample2x(img2)

    x = T.relu(T.conv2d(image, *L["shallow"], padding=1))
    e1 = T.check_finite(_run_stage(L["enc1"], x), "enc1")

    x = T.relu(T.conv2d(e1, *L["down1"], stride=2, padding=1))
    emb2 = T.relu(T.conv2d(img2, *L["embed2"], padding=1))
    x = T.conv2d(T.concat_channels([x, emb2]), *L["fuse_in2"])
    e2 = T.check_finite(_run_stage(L["enc2"], x), "enc2")

    x = T.relu(T.conv2d(e2, *L["down2"], stride=2, padding=1))
    emb3 = T.relu(T.conv2d(img4, *L["embed3"], padding=1))
    x = T.conv2d(T.concat_channels([x, emb3]), *L["fuse_in3"])
    e3 = T.check_finite(_run_stage(L["enc3"], x), "enc3")

    d4 = T.check_finite(_run_stage(L["dec4"], e3), "dec4")
    out4 = T.add(T.conv2d(d4, *L["head4"], padding=1), img4)

    x = T.transposed_conv2d(d4, *L["up5"])
    x = T.conv2d(T.concat_channels([x, e2]), *L["fuse5"])
    d5 = T.check_finite(_run_stage(L["dec5"], x), "dec5")
    out5 = T.add(T.conv2d(d5, *L["head5"], padding=1), img2)

    x = T.transposed_conv2d(d5, *L["up6"])
    x = T.conv2d(T.concat_channels([x, e1]), *L["fuse6"])
    d6 = T.check_finite(_run_stage(L["dec6"], x), "dec6")
    out6 = T.add(T.conv2d(d6, *L["head6"], padding=1), image)

    for out, name in ((out6, "out_full"), (out5, "out_half"), (out4, "out_quarter")):
        T.check_finite(out, name)
    return [out6, out5, out4]


def param_count(m: DsanModel) -> int:
    return sum(p.data.size for p in m.params.values())
