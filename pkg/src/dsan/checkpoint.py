"""Binary checkpoint format for models and optimizer state.

Layout (all integers little-endian):

    b"DSAN" | u32 version | u32 cfg_len | cfg utf-8 key=value lines
    u32 n_params | records...
    optional: b"ADAM" | u32 kv_len | kv utf-8 | u32 n_records | records...
    u32 CRC32 of every preceding byte

A record is: u32 name_len | name utf-8 | u32 rank | rank*u64 dims |
raw little-endian f32/f64 payload (dtype from the cfg `precision` key).
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .model import DsanModel, build_dsan
from .optim import AdamState
from .tensor import Tensor

__all__ = [
    "CheckpointError",
    "BadMagicError",
    "VersionError",
    "TruncatedError",
    "ChecksumError",
    "save_model",
    "load_model",
    "save_train_state",
    "load_train_state",
]

MAGIC = b"DSAN"
ADAM_TAG = b"ADAM"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


def _dtype_tag(dtype) -> str:
    return "f32" if np.dtype(dtype) == np.float32 else "f64"


def _tag_dtype(tag: str):
    if tag == "f32":
        return np.dtype("<f4")
    if tag == "f64":
        return np.dtype("<f8")
    raise CheckpointError(f"unknown precision tag {tag!r}")


def _kv_bytes(pairs: dict[str, str]) -> bytes:
    return "".join(f"{k}={v}\n" for k, v in pairs.items()).encode()


def _parse_kv(blob: bytes) -> dict[str, str]:
    out = {}
    for line in blob.decode().splitlines():
        if not line:
            continue
        k, _, v = line.partition("=")
        out[k] = v
    return out


def _pack_records(arrays: dict[str, np.ndarray], dtype) -> bytes:
    chunks = [struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        nb = name.encode()
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
        chunks.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    return b"".join(chunks)


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedError(
                f"checkpoint truncated: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def peek(self, n: int) -> bytes:
        return self.buf[self.pos : self.pos + n]


def _unpack_records(cur: _Cursor, dtype) -> dict[str, np.ndarray]:
    out = {}
    count = cur.u32()
    for _ in range(count):
        name = cur.take(cur.u32()).decode()
        rank = cur.u32()
        dims = struct.unpack(f"<{rank}Q", cur.take(8 * rank)) if rank else ()
        size = int(np.prod(dims)) if dims else 1
        raw = cur.take(size * dtype.itemsize)
        out[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
    return out


def _model_cfg(m: DsanModel) -> dict[str, str]:
    return {
        "c0": str(m.c0),
        "num_blocks": str(m.num_blocks),
        "dilation": str(m.dilation),
        "strip_lengths": ",".join(str(k) for k in m.strip_lengths),
        "in_channels": str(m.in_channels),
        "use_dsam": "1" if m.use_dsam else "0",
        "seed": str(m.seed),
        "precision": _dtype_tag(m.dtype),
    }


def _serialize(m: DsanModel, state: AdamState | None) -> bytes:
    dtype = _tag_dtype(_dtype_tag(m.dtype))
    body = [MAGIC, struct.pack("<I", VERSION)]
    cfg = _kv_bytes(_model_cfg(m))
    body.append(struct.pack("<I", len(cfg)))
    body.append(cfg)
    body.append(_pack_records({k: p.data for k, p in m.params.items()}, dtype))
    if state is not None:
        body.append(ADAM_TAG)
        kv = _kv_bytes(
            {
                "t": str(state.t),
                "beta1": repr(state.beta1),
                "beta2": repr(state.beta2),
                "eps": repr(state.eps),
                "lr0": repr(state.lr0),
                "lr_min": repr(state.lr_min),
                "total_steps": str(state.total_steps),
            }
        )
        body.append(struct.pack("<I", len(kv)))
        body.append(kv)
        moments = {f"m.{k}": v for k, v in state.m.items()}
        moments.update({f"v.{k}": v for k, v in state.v.items()})
        body.append(_pack_records(moments, dtype))
    blob = b"".join(body)
    return blob + struct.pack("<I", zlib.crc32(blob))


def save_model(m: DsanModel, path) -> None:
    Path(path).write_bytes(_serialize(m, None))


def save_train_state(m: DsanModel, state: AdamState, path) -> None:
    Path(path).write_bytes(_serialize(m, state))


def _deserialize(blob: bytes) -> tuple[DsanModel, AdamState | None]:
    if len(blob) < 12:
        raise TruncatedError(f"checkpoint is only {len(blob)} bytes")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}")
    cur = _Cursor(blob[:-4])
    cur.take(4)
    version = cur.u32()
    if version != VERSION:
        raise VersionError(f"checkpoint version {version}, expected {VERSION}")
    cfg = _parse_kv(cur.take(cur.u32()))
    try:
        dtype = _tag_dtype(cfg["precision"])
        model = build_dsan(
            c0=int(cfg["c0"]),
            num_blocks=int(cfg["num_blocks"]),
            dilation=int(cfg["dilation"]),
            strip_lengths=tuple(int(k) for k in cfg["strip_lengths"].split(",")),
            in_channels=int(cfg["in_channels"]),
            use_dsam=cfg["use_dsam"] == "1",
            seed=int(cfg["seed"]),
            dtype=np.float32 if cfg["precision"] == "f32" else np.float64,
        )
    except KeyError as e:
        raise CheckpointError(f"config block missing key {e}") from e
    arrays = _unpack_records(cur, dtype)
    if set(arrays) != set(model.params):
        raise CheckpointError("checkpoint parameters do not match the model topology")
    for name, arr in arrays.items():
        p = model.params[name]
        if arr.shape != p.data.shape:
            raise CheckpointError(f"parameter {name} has shape {arr.shape}, expected {p.data.shape}")
        p.data = arr.astype(model.dtype)

    state = None
    if cur.peek(4) == ADAM_TAG:
        cur.take(4)
        kv = _parse_kv(cur.take(cur.u32()))
        records = _unpack_records(cur, dtype)
        state = AdamState(
            m={k[2:]: v.astype(model.dtype) for k, v in records.items() if k.startswith("m.")},
            v={k[2:]: v.astype(model.dtype) for k, v in records.items() if k.startswith("v.")},
            t=int(kv["t"]),
            beta1=float(kv["beta1"]),
            beta2=float(kv["beta2"]),
            eps=float(kv["eps"]),
            lr0=float(kv["lr0"]),
            lr_min=float(kv["lr_min"]),
            total_steps=int(kv["total_steps"]),
        )
        if set(state.m) != set(model.params) or set(state.v) != set(model.params):
            raise CheckpointError("optimizer state does not match the model parameters")
    if cur.pos != len(cur.buf):
        raise CheckpointError(f"{len(cur.buf) - cur.pos} trailing bytes after records")
    return model, state


def _verify_crc(blob: bytes) -> None:
    if len(blob) < 4:
        raise TruncatedError("checkpoint shorter than its checksum")
    (stored,) = struct.unpack("<I", blob[-4:])
    actual = zlib.crc32(blob[:-4])
    if stored != actual:
        raise ChecksumError(f"CRC32 mismatch: stored {stored:08x}, computed {actual:08x}")


def _load(path) -> tuple[DsanModel, AdamState | None]:
    # structural parse first (precise truncation errors; every read is
    # bounded by the file size), then the checksum over the whole body
    blob = Path(path).read_bytes()
    model, state = _deserialize(blob)
    _verify_crc(blob)
    return model, state


def load_model(path) -> DsanModel:
    model, _ = _load(path)
    return model


def load_train_state(path) -> tuple[DsanModel, AdamState]:
    model, state = _load(path)
    if state is None:
        raise CheckpointError("checkpoint has no optimizer section")
    return model, state
