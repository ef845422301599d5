"""Strip attention operators: plain, dilated, and the two-pass module.

The aggregation is a per-pixel weighted sum over K taps along one row or
column, taps spaced ``dilation`` pixels apart, weights shared across all
pixels of a (sample, channel-group) and produced dynamically by a squeeze
branch: sigmoid(W_1x1(GAP(x)) + b). Borders read as zero.

``dsa`` takes raw weight values so exact coefficients can be injected;
``dsa_oracle`` is the naive reference evaluation used as ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor, apply_op

__all__ = [
    "StripWeights",
    "DsamConfig",
    "compute_strip_weights",
    "sa",
    "dsa",
    "dsam",
    "sam",
    "dsa_oracle",
    "receptive_field_footprint",
]

_AXIS = {"horizontal": 3, "vertical": 2}


@dataclass
class StripWeights:
    """Per-sample, per-group strip coefficients, (N, G, K)."""

    values: Tensor
    direction: str
    K: int
    G: int


@dataclass
class DsamConfig:
    """Everything that determines one module instance's behavior.

    group_strip_lengths: (channel_count, K) pairs; the counts sum to the
    channel width the module is applied at. Each pass (horizontal, then
    vertical on the horizontal output) has its own squeeze branch: a 1x1
    projection C -> sum(K) plus bias. Parameter count depends only on
    (C, sum(K)), never on the dilation.
    """

    group_strip_lengths: tuple[tuple[int, int], ...]
    dilation: int
    h_weight: Tensor | None = None
    h_bias: Tensor | None = None
    v_weight: Tensor | None = None
    v_bias: Tensor | None = None

    def __post_init__(self):
        if self.dilation < 1:
            raise ShapeError(f"dilation must be >= 1, got {self.dilation}")
        if not self.group_strip_lengths:
            raise ShapeError("group_strip_lengths is empty")
        for ch, k in self.group_strip_lengths:
            if ch < 1:
                raise ShapeError(f"group channel count {ch} < 1")
            if k < 1 or k % 2 == 0:
                raise ShapeError(f"strip length must be odd and >= 1, got {k}")

    @property
    def channels(self) -> int:
        return sum(ch for ch, _ in self.group_strip_lengths)

    @property
    def total_taps(self) -> int:
        return sum(k for _, k in self.group_strip_lengths)

    def param_count(self) -> int:
        # two branches, each C*sum(K) projection weights + sum(K) biases
        return 2 * self.total_taps * (self.channels + 1)

    def init_params(self, rng: np.random.Generator, dtype=np.float64) -> "DsamConfig":
        c, taps = self.channels, self.total_taps
        bound = 1.0 / np.sqrt(c)
        def w():
            return Tensor(rng.uniform(-bound, bound, size=(taps, c, 1, 1)).astype(dtype), requires_grad=True)
        def b():
            return Tensor(np.zeros(taps, dtype=dtype), requires_grad=True)
        return replace(self, h_weight=w(), h_bias=b(), v_weight=w(), v_bias=b())

    def parameters(self) -> list[tuple[str, Tensor]]:
        if self.h_weight is None:
            raise ShapeError("DSAM parameters not initialized")
        return [
            ("h_weight", self.h_weight),
            ("h_bias", self.h_bias),
            ("v_weight", self.v_weight),
            ("v_bias", self.v_bias),
        ]


def receptive_field_footprint(K: int, d: int) -> set[tuple[int, int]]:
    """Input offsets reaching one output pixel through the two-pass module.

    K^2 points on a d-spaced grid spanning a (d*(K-1)+1)^2 square.
    """
    if K < 1 or K % 2 == 0:
        raise ShapeError(f"K must be odd and >= 1, got {K}")
    if d < 1:
        raise ShapeError(f"d must be >= 1, got {d}")
    half = K // 2
    return {(a * d, b * d) for a in range(-half, half + 1) for b in range(-half, half + 1)}


def _group_index(C: int, G: int) -> np.ndarray:
    if C % G != 0:
        raise ShapeError(f"C={C} not divisible into {G} equal groups")
    return np.repeat(np.arange(G), C // G)


def _shift_slices(ndim: int, axis: int, off: int, L: int) -> tuple[tuple, tuple] | None:
    """(dst, src) index tuples realizing out[..., i] = x[..., i + off].

    None when the shift moves everything out of range.
    """
    if abs(off) >= L:
        return None
    src = [slice(None)] * ndim
    dst = [slice(None)] * ndim
    if off > 0:
        src[axis] = slice(off, L)
        dst[axis] = slice(0, L - off)
    elif off < 0:
        src[axis] = slice(0, L + off)
        dst[axis] = slice(-off, L)
    return tuple(dst), tuple(src)


def dsa(x: Tensor, a: Tensor | np.ndarray, K: int, d: int, direction: str) -> Tensor:
    """Dilated strip aggregation along one direction.

    out[n,c,h,w] = sum_k a[n,g(c),k] * x at offset (k - K//2)*d along the
    strip axis, zero beyond borders. ``a`` holds raw (already activated)
    weights of shape (N, G, K); channels are split into G equal groups.
    """
    if direction not in _AXIS:
        raise ShapeError(f"direction must be horizontal|vertical, got {direction!r}")
    if K < 1 or K % 2 == 0:
        raise ShapeError(f"K must be odd and >= 1, got {K}")
    if d < 1:
        raise ShapeError(f"d must be >= 1, got {d}")
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=x.dtype))
    T._check_dtype(x, a)
    if x.data.ndim != 4:
        raise ShapeError("dsa expects a 4-d NCHW tensor")
    N, C, H, W = x.data.shape
    if a.data.ndim != 3 or a.data.shape[0] != N or a.data.shape[2] != K:
        raise ShapeError(f"weights must be (N,G,{K}), got {a.data.shape}")
    G = a.data.shape[1]
    gidx = _group_index(C, G)
    axis = _AXIS[direction]
    half = K // 2

    xd, ad = x.data, a.data
    aw = ad[:, gidx, :]  # (N, C, K)
    L = xd.shape[axis]
    out = np.zeros_like(xd)
    for k in range(K):
        sl = _shift_slices(4, axis, (k - half) * d, L)
        if sl is not None:
            out[sl[0]] += aw[:, :, k, None, None] * xd[sl[1]]

    def bw(g):
        dx = None
        if x.requires_grad:
            dx = np.zeros_like(xd)
            for k in range(K):
                sl = _shift_slices(4, axis, -(k - half) * d, L)
                if sl is not None:
                    dx[sl[0]] += aw[:, :, k, None, None] * g[sl[1]]
        da = None
        if a.requires_grad:
            per_channel = np.zeros((N, C, K), dtype=xd.dtype)
            for k in range(K):
                sl = _shift_slices(4, axis, (k - half) * d, L)
                if sl is not None:
                    per_channel[:, :, k] = np.einsum("nchw,nchw->nc", g[sl[0]], xd[sl[1]])
            da = per_channel.reshape(N, G, C // G, K).sum(axis=2)
        return dx, da

    return apply_op(out, (x, a), bw)


def sa(x: Tensor, a: Tensor | np.ndarray, K: int, direction: str) -> Tensor:
    """Plain strip aggregation: the dilated form with d fixed to 1."""
    return dsa(x, a, K, 1, direction)


def dsa_oracle(x, a, K: int, d: int, direction: str) -> np.ndarray:
    """Naive per-pixel reference evaluation. No vectorization tricks."""
    xd = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    ad = a.data if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64)
    if direction not in _AXIS:
        raise ShapeError(f"bad direction {direction!r}")
    if K % 2 == 0 or K < 1 or d < 1:
        raise ShapeError("K must be odd and >= 1, d >= 1")
    N, C, H, W = xd.shape
    G = ad.shape[1]
    if ad.shape != (N, G, K) or C % G != 0:
        raise ShapeError("inconsistent weight/group shapes")
    per_group = C // G
    half = K // 2
    out = np.zeros_like(xd)
    for n in range(N):
        for c in range(C):
            g = c // per_group
            for h in range(H):
                for w in range(W):
                    acc = 0.0
                    for k in range(K):
                        if direction == "horizontal":
                            ww = w + (k - half) * d
                            if 0 <= ww < W:
                                acc += ad[n, g, k] * xd[n, c, h, ww]
                        else:
                            hh = h + (k - half) * d
                            if 0 <= hh < H:
                                acc += ad[n, g, k] * xd[n, c, hh, w]
                    out[n, c, h, w] = acc
    return out


def _branch(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """sigmoid(W_1x1(GAP(x)) + b) -> (N, taps, 1, 1)."""
    return T.sigmoid(T.conv2d(T.gap(x), weight, bias))


def compute_strip_weights(
    x: Tensor, weight: Tensor, bias: Tensor, K: int, G: int, direction: str = "horizontal"
) -> StripWeights:
    """Squeeze-branch weights for a uniform-K group layout.

    ``weight`` is the 1x1 projection mapping C -> G*K (either (G*K, C) or
    conv-shaped (G*K, C, 1, 1)); result values lie strictly in (0, 1).
    """
    C = x.data.shape[1]
    w = weight
    if w.data.ndim == 2:
        w = T.reshape(w, (w.data.shape[0], w.data.shape[1], 1, 1))
    if w.data.shape[:2] != (G * K, C) or w.data.shape[2:] != (1, 1):
        raise ShapeError(f"projection must map C={C} -> G*K={G * K}, got {w.data.shape}")
    if bias.data.shape != (G * K,):
        raise ShapeError(f"bias must be ({G * K},), got {bias.data.shape}")
    vals = T.reshape(_branch(x, w, bias), (x.data.shape[0], G, K))
    return StripWeights(values=vals, direction=direction, K=K, G=G)


def _grouped_pass(x: Tensor, weights_flat: Tensor, cfg: DsamConfig, direction: str) -> Tensor:
    """Apply one directional pass, one group at a time (groups may differ in K)."""
    parts = []
    c_lo = 0
    k_lo = 0
    n = x.data.shape[0]
    for ch, k in cfg.group_strip_lengths:
        xg = T.slice_channels(x, c_lo, c_lo + ch)
        ag = T.reshape(T.slice_channels(weights_flat, k_lo, k_lo + k), (n, 1, k))
        parts.append(dsa(xg, ag, k, cfg.dilation, direction))
        c_lo += ch
        k_lo += k
    if len(parts) == 1:
        return parts[0]
    return T.concat_channels(parts)


def dsam(x: Tensor, cfg: DsamConfig) -> Tensor:
    """Two-pass module: horizontal aggregation, then vertical.

    Each pass has its own squeeze branch; the vertical branch reads the
    horizontal pass's output. Output shape equals input shape.
    """
    if cfg.h_weight is None:
        raise ShapeError("DSAM parameters not initialized")
    if x.data.shape[1] != cfg.channels:
        raise ShapeError(f"input has C={x.data.shape[1]}, config expects {cfg.channels}")
    a_h = _branch(x, cfg.h_weight, cfg.h_bias)
    xh = _grouped_pass(x, a_h, cfg, "horizontal")
    a_v = _branch(xh, cfg.v_weight, cfg.v_bias)
    return _grouped_pass(xh, a_v, cfg, "vertical")


def sam(x: Tensor, cfg: DsamConfig) -> Tensor:
    """Reference undilated module: the same code path with d forced to 1."""
    return dsam(x, replace(cfg, dilation=1))
