"""NCHW tensor values and tape-based reverse-mode autodiff.

A ``Tensor`` wraps a float32/float64 numpy array plus an optional gradient
buffer. Differentiable operations are recorded on an implicit tape: every op
output keeps references to its parents and a closure that maps the output
adjoint to parent adjoints. ``backward`` walks the tape once in reverse
topological order and consumes it; a second backward without a fresh forward
is an error.

Forward ops are pure. Zero padding is the border convention for every
spatial op. No higher-order derivatives.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "GraphError",
    "NumericalError",
    "no_grad",
    "tensor",
    "zeros",
    "add",
    "sub",
    "mul",
    "neg",
    "relu",
    "sigmoid",
    "abs_val",
    "sum_all",
    "mean_all",
    "reshape",
    "concat_channels",
    "slice_channels",
    "pad2d",
    "crop2d",
    "conv2d",
    "transposed_conv2d",
    "gap",
    "downsample2x",
    "apply_op",
]


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class GraphError(RuntimeError):
    """Tape misuse: backward on a non-scalar, or on a consumed graph."""


class NumericalError(ArithmeticError):
    """NaN/Inf appeared where the contract requires finite values."""


_grad_enabled = True

_CONSUMED = object()  # sentinel left in place of a spent backward closure


@contextmanager
def no_grad():
    """Disable tape recording inside the block (eval/inference paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return np.ascontiguousarray(arr, dtype=dtype)
    if arr.dtype == np.float32:
        return np.ascontiguousarray(arr)
    return np.ascontiguousarray(arr, dtype=np.float64)


class Tensor:
    """N-dimensional numeric value, NCHW layout for feature maps.

    ``data`` is immutable by convention after construction; only ``grad`` is
    written, and only by ``backward``/optimizer code.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def backward(self) -> None:
        backward(self)


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape, dtype=np.float64, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def apply_op(out_data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Wrap an op result as a tape node.

    ``backward_fn(grad_out) -> tuple[np.ndarray | None, ...]`` returns one
    adjoint per input (None for inputs that need no gradient). Recording is
    skipped when no input participates in a gradient or inside ``no_grad``.
    """
    out = Tensor(out_data)
    if _grad_enabled and any(t.requires_grad or t._backward is not None for t in inputs):
        out.requires_grad = True
        out._parents = tuple(inputs)
        out._backward = backward_fn
    return out


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad leaf reachable from ``loss``.

    The graph is consumed: node closures are dropped as they are visited,
    so a second backward without a new forward raises ``GraphError``.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward requires a scalar loss, got shape {loss.shape}")
    if loss._backward is _CONSUMED:
        raise GraphError("backward called twice on a consumed graph; rerun forward")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and node._backward is None and not node._parents:
            # leaf: accumulate into the persistent grad buffer
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            continue
        fn = node._backward
        if fn is _CONSUMED:
            raise GraphError("graph reuses values from an already-consumed forward")
        if fn is None:
            continue
        grads = fn(g)
        node._backward = _CONSUMED
        for parent, pg in zip(node._parents, grads):
            if pg is None:
                continue
            if pg.shape != parent.data.shape:
                raise ShapeError(
                    f"backward produced grad of shape {pg.shape} for parent {parent.shape}"
                )
            key = id(parent)
            if key in adjoint:
                # out of place: backward closures may return views/aliases of
                # their incoming adjoint, which other pending entries share
                adjoint[key] = adjoint[key] + pg
            else:
                adjoint[key] = pg
        node._parents = ()


# ---------------------------------------------------------------------------
# elementwise and reduction ops
# ---------------------------------------------------------------------------


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _check_dtype(a: Tensor, b: Tensor) -> None:
    if a.dtype != b.dtype:
        raise ShapeError(f"mixed dtypes {a.dtype} vs {b.dtype}")


def add(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    _check_dtype(a, b)
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return apply_op(out, (a, b), bw)


def sub(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    _check_dtype(a, b)
    out = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return apply_op(out, (a, b), bw)


def mul(a: Tensor, b) -> Tensor:
    b = _coerce(b, a)
    _check_dtype(a, b)
    out = a.data * b.data
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return apply_op(out, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return apply_op(-a.data, (a,), lambda g: (-g,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = np.where(mask, a.data, a.data.dtype.type(0))

    def bw(g):
        return (g * mask,)

    return apply_op(out, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = out.astype(x.dtype, copy=False)

    def bw(g):
        return (g * out * (1.0 - out),)

    return apply_op(out, (a,), bw)


def abs_val(a: Tensor) -> Tensor:
    sign = np.sign(a.data)

    def bw(g):
        return (g * sign,)

    return apply_op(np.abs(a.data), (a,), bw)


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape

    def bw(g):
        return (np.broadcast_to(g, shape).astype(a.dtype, copy=True),)

    return apply_op(a.data.sum(dtype=a.dtype).reshape(()), (a,), bw)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    shape = a.data.shape

    def bw(g):
        return (np.broadcast_to(g / n, shape).astype(a.dtype, copy=True),)

    return apply_op((a.data.sum(dtype=a.dtype) / n).reshape(()), (a,), bw)


# ---------------------------------------------------------------------------
# layout ops
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    old = a.data.shape
    out = a.data.reshape(shape)

    def bw(g):
        return (g.reshape(old),)

    return apply_op(np.ascontiguousarray(out), (a,), bw)


def concat_channels(parts: list[Tensor]) -> Tensor:
    """Concatenate NCHW tensors along C. All parts share N, H, W."""
    if not parts:
        raise ShapeError("concat_channels of empty list")
    base = parts[0].data.shape
    for p in parts:
        if p.data.ndim != 4:
            raise ShapeError("concat_channels expects 4-d NCHW tensors")
        if p.data.shape[0] != base[0] or p.data.shape[2:] != base[2:]:
            raise ShapeError(f"concat_channels shape mismatch: {p.data.shape} vs {base}")
        _check_dtype(parts[0], p)
    sizes = [p.data.shape[1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=1)
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return apply_op(out, tuple(parts), bw)


def slice_channels(a: Tensor, lo: int, hi: int) -> Tensor:
    if a.data.ndim != 4:
        raise ShapeError("slice_channels expects 4-d NCHW tensor")
    C = a.data.shape[1]
    if not (0 <= lo < hi <= C):
        raise ShapeError(f"channel slice [{lo}:{hi}] out of range for C={C}")
    out = np.ascontiguousarray(a.data[:, lo:hi])

    def bw(g):
        full = np.zeros_like(a.data)
        full[:, lo:hi] = g
        return (full,)

    return apply_op(out, (a,), bw)


def pad2d(a: Tensor, pad: tuple[int, int, int, int]) -> Tensor:
    """Zero-pad the two spatial dims; pad = (top, bottom, left, right)."""
    t, b, l, r = pad
    if min(pad) < 0:
        raise ShapeError(f"negative padding {pad}")
    out = np.pad(a.data, ((0, 0), (0, 0), (t, b), (l, r)))
    H, W = a.data.shape[2], a.data.shape[3]

    def bw(g):
        return (np.ascontiguousarray(g[:, :, t : t + H, l : l + W]),)

    return apply_op(out, (a,), bw)


def crop2d(a: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    N, C, H, W = a.data.shape
    if top < 0 or left < 0 or top + height > H or left + width > W:
        raise ShapeError(f"crop [{top}:{top+height}, {left}:{left+width}] outside {H}x{W}")
    out = np.ascontiguousarray(a.data[:, :, top : top + height, left : left + width])

    def bw(g):
        full = np.zeros_like(a.data)
        full[:, :, top : top + height, left : left + width] = g
        return (full,)

    return apply_op(out, (a,), bw)


# ---------------------------------------------------------------------------
# convolution machinery (raw ndarray helpers, then taped ops)
# ---------------------------------------------------------------------------


def _pad_hw(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def _out_hw(H: int, W: int, kh: int, kw: int, stride: int, ph: int, pw: int) -> tuple[int, int]:
    num_h = H + 2 * ph - kh
    num_w = W + 2 * pw - kw
    if num_h < 0 or num_w < 0 or num_h % stride or num_w % stride:
        raise ShapeError(
            f"non-integral conv output for H,W={H},{W} k={kh},{kw} pad={ph},{pw} stride={stride}"
        )
    return num_h // stride + 1, num_w // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, Ho: int, Wo: int) -> np.ndarray:
    """(N, C*kh*kw, Ho*Wo) column matrix via per-tap contiguous block copies."""
    N, C = xp.shape[:2]
    cols = np.empty((N, C, kh, kw, Ho, Wo), dtype=xp.dtype)
    he = (Ho - 1) * stride + 1
    we = (Wo - 1) * stride + 1
    for u in range(kh):
        for v in range(kw):
            cols[:, :, u, v] = xp[:, :, u : u + he : stride, v : v + we : stride]
    return cols.reshape(N, C * kh * kw, Ho * Wo)


def _corr(x: np.ndarray, w: np.ndarray, stride: int, ph: int, pw: int) -> np.ndarray:
    """Cross-correlation forward: x (N,Cin,H,W) * w (Cout,Cin,kh,kw)."""
    N, Cin, H, W = x.shape
    Cout, Cw, kh, kw = w.shape
    if Cw != Cin:
        raise ShapeError(f"conv weight expects Cin={Cw}, input has Cin={Cin}")
    Ho, Wo = _out_hw(H, W, kh, kw, stride, ph, pw)
    if kh == 1 and kw == 1 and stride == 1 and ph == 0 and pw == 0:
        out = np.matmul(w.reshape(Cout, Cin), x.reshape(N, Cin, H * W))
        return out.reshape(N, Cout, H, W)
    cols = _im2col(_pad_hw(x, ph, pw), kh, kw, stride, Ho, Wo)
    out = np.matmul(w.reshape(Cout, -1), cols)  # (N, Cout, Ho*Wo)
    return out.reshape(N, Cout, Ho, Wo)


def _corr_dx(dout: np.ndarray, w: np.ndarray, stride: int, ph: int, pw: int, hw: tuple[int, int]) -> np.ndarray:
    """Adjoint of ``_corr`` w.r.t. its input: scatter columns back through w."""
    Cout, Cin, kh, kw = w.shape
    H, W = hw
    N = dout.shape[0]
    Ho, Wo = dout.shape[2], dout.shape[3]
    if kh == 1 and kw == 1 and stride == 1 and ph == 0 and pw == 0:
        dx = np.matmul(w.reshape(Cout, Cin).T.copy(), dout.reshape(N, Cout, Ho * Wo))
        return dx.reshape(N, Cin, H, W)
    dcols = np.matmul(w.reshape(Cout, -1).T.copy(), dout.reshape(N, Cout, Ho * Wo))
    dcols = dcols.reshape(N, Cin, kh, kw, Ho, Wo)
    dxp = np.zeros((N, Cin, H + 2 * ph, W + 2 * pw), dtype=dout.dtype)
    he = (Ho - 1) * stride + 1
    we = (Wo - 1) * stride + 1
    for u in range(kh):
        for v in range(kw):
            dxp[:, :, u : u + he : stride, v : v + we : stride] += dcols[:, :, u, v]
    if ph == 0 and pw == 0:
        return dxp
    return np.ascontiguousarray(dxp[:, :, ph : ph + H, pw : pw + W])


def _corr_dw(dout: np.ndarray, x: np.ndarray, stride: int, ph: int, pw: int, kh: int, kw: int) -> np.ndarray:
    """Adjoint of ``_corr`` w.r.t. the weight."""
    N, Cin = x.shape[:2]
    Cout = dout.shape[1]
    Ho, Wo = dout.shape[2], dout.shape[3]
    g2 = dout.reshape(N, Cout, Ho * Wo)
    if kh == 1 and kw == 1 and stride == 1 and ph == 0 and pw == 0:
        cols = x.reshape(N, Cin, Ho * Wo)
    else:
        cols = _im2col(_pad_hw(x, ph, pw), kh, kw, stride, Ho, Wo)
    dw = np.matmul(g2, cols.swapaxes(1, 2)).sum(axis=0)
    return dw.reshape(Cout, Cin, kh, kw)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation with zero padding.

    x: (N, Cin, H, W), w: (Cout, Cin, kh, kw), b: (Cout,) or None.
    Output spatial size (H + 2*padding - kh) / stride + 1 must be integral.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError("conv2d expects 4-d input and weight")
    if padding < 0:
        raise ShapeError("padding must be >= 0")
    if stride < 1:
        raise ShapeError("stride must be >= 1")
    _check_dtype(x, w)
    if b is not None:
        _check_dtype(x, b)
        if b.data.shape != (w.data.shape[0],):
            raise ShapeError(f"bias shape {b.data.shape} != ({w.data.shape[0]},)")
    N, Cin, H, W = x.data.shape
    Cout, _, kh, kw = w.data.shape
    out = _corr(x.data, w.data, stride, padding, padding)
    if b is not None:
        out += b.data[None, :, None, None]

    xd, wd = x.data, w.data

    def bw(g):
        dx = _corr_dx(g, wd, stride, padding, padding, (H, W)) if (x.requires_grad or x._parents) else None
        dw = _corr_dw(g, xd, stride, padding, padding, kh, kw) if (w.requires_grad or w._parents) else None
        if b is None:
            return dx, dw
        db = g.sum(axis=(0, 2, 3))
        return dx, dw, db

    inputs = (x, w) if b is None else (x, w, b)
    return apply_op(out, inputs, bw)


def transposed_conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 2) -> Tensor:
    """Stride-2 transposed convolution; doubles H and W.

    x: (N, Cin, H, W), w: (Cin, Cout, kh, kw) with kh = kw in {2, 4}.
    Forward equals the conv2d input-gradient for the matching convolution,
    with implicit cropping (kh - stride) // 2 so output is exactly (2H, 2W).
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError("transposed_conv2d expects 4-d input and weight")
    if stride != 2:
        raise ShapeError("transposed_conv2d supports stride 2 only")
    _check_dtype(x, w)
    N, Cin, H, W = x.data.shape
    Cw, Cout, kh, kw = w.data.shape
    if Cw != Cin:
        raise ShapeError(f"weight expects Cin={Cw}, input has Cin={Cin}")
    if kh != kw or kh not in (2, 4):
        raise ShapeError(f"kernel must be 2x2 or 4x4, got {kh}x{kw}")
    if b is not None:
        _check_dtype(x, b)
        if b.data.shape != (Cout,):
            raise ShapeError(f"bias shape {b.data.shape} != ({Cout},)")
    p = (kh - stride) // 2
    out = _corr_dx(x.data, w.data, stride, p, p, (H * stride, W * stride))
    if b is not None:
        out += b.data[None, :, None, None]

    xd, wd = x.data, w.data

    def bw(g):
        dx = _corr(g, wd, stride, p, p) if (x.requires_grad or x._parents) else None
        dw = _corr_dw(xd, g, stride, p, p, kh, kw) if (w.requires_grad or w._parents) else None
        if b is None:
            return dx, dw
        db = g.sum(axis=(0, 2, 3))
        return dx, dw, db

    inputs = (x, w) if b is None else (x, w, b)
    return apply_op(out, inputs, bw)


def gap(x: Tensor) -> Tensor:
    """Global average pooling: (N,C,H,W) -> (N,C,1,1) per-channel means."""
    if x.data.ndim != 4:
        raise ShapeError("gap expects a 4-d NCHW tensor")
    N, C, H, W = x.data.shape
    out = x.data.mean(axis=(2, 3), keepdims=True)

    def bw(g):
        return (np.broadcast_to(g / (H * W), x.data.shape).astype(x.dtype, copy=True),)

    return apply_op(out, (x,), bw)


def downsample2x(x: Tensor) -> Tensor:
    """2x2 box-mean downsampling; H and W must be even."""
    N, C, H, W = x.data.shape
    if H % 2 or W % 2:
        raise ShapeError(f"downsample2x needs even spatial dims, got {H}x{W}")
    out = x.data.reshape(N, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))

    def bw(g):
        up = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3)
        return ((up / 4.0).astype(x.dtype, copy=False),)

    return apply_op(out, (x,), bw)


def check_finite(x: Tensor, where: str = "") -> Tensor:
    """Raise NumericalError if the value contains NaN/Inf; identity otherwise."""
    if not np.isfinite(x.data).all():
        raise NumericalError(f"non-finite values detected{' in ' + where if where else ''}")
    return x
