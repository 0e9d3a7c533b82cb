"""A small reverse-mode tensor engine over 2-d numpy arrays.

Only the operations needed by the two neural decoders are provided. Every op
computes its forward value eagerly and, when a :class:`Tape` is active and
some input needs a gradient, records a closure that maps the output gradient
to input gradients. ``Tape.backward`` replays those closures in reverse.

    with Tape() as tape:
        loss = bce_loss(sigmoid(matmul(x, w)), y)
    tape.backward(loss)
"""
from __future__ import annotations

import io
import json
import os
import struct
from typing import Optional, Sequence

import numpy as np

from . import kernels

_TAPES: list = []
CHECKED = os.environ.get("HYPERDECODE_CHECKED", "0") not in ("", "0")


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        value = np.asarray(value, dtype=dtype)
        if value.ndim == 0:
            value = value.reshape(1, 1)
        elif value.ndim == 1:
            value = value.reshape(-1, 1)
        if value.ndim != 2:
            raise ValueError(f"tensors are 2-d, got shape {value.shape}")
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}{self.shape}"


class Param(Tensor):
    """Trainable tensor with Adam moment buffers."""

    __slots__ = ("m", "v", "step")

    def __init__(self, value, name: Optional[str] = None, dtype=None):
        super().__init__(value, requires_grad=True, name=name, dtype=dtype)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.step = 0

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)


def const(value, dtype=None) -> Tensor:
    return Tensor(value, dtype=dtype)


class Tape:
    def __init__(self, checked: Optional[bool] = None):
        self.ops: list = []
        self.checked = CHECKED if checked is None else checked

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf needing one."""
        if loss.shape != (1, 1):
            raise ValueError("backward needs a scalar (1x1) loss")
        loss.grad = np.ones_like(loss.value)
        for name, out, parents, fn in reversed(self.ops):
            if out.grad is None:
                continue
            grads = fn(out.grad)
            for p, g in zip(parents, grads):
                if g is None or not p.requires_grad:
                    continue
                if g.shape != p.shape:
                    raise RuntimeError(f"{name}: gradient shape {g.shape} != input shape {p.shape}")
                if self.checked and not np.all(np.isfinite(g)):
                    raise FloatingPointError(f"{name}: non-finite gradient")
                p.grad = g if p.grad is None else p.grad + g
            if not isinstance(out, Param):
                out.grad = None
        self.ops.clear()


def _record(name: str, value: np.ndarray, parents: Sequence[Tensor], fn) -> Tensor:
    tape = _TAPES[-1] if _TAPES else None
    checked = tape.checked if tape is not None else CHECKED
    if checked and not np.all(np.isfinite(value)):
        raise FloatingPointError(f"{name}: non-finite output")
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(value, requires_grad=needs)
    if needs:
        tape.ops.append((name, out, tuple(parents), fn))
    return out


def _shape_error(op: str, *tensors) -> ValueError:
    return ValueError(f"{op}: incompatible shapes {[t.shape for t in tensors]}")


# --------------------------------------------------------------------------
# Dense ops
# --------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise _shape_error("matmul", a, b)
    av, bv = a.value, b.value
    ga, gb = a.requires_grad, b.requires_grad
    return _record("matmul", av @ bv, (a, b),
                   lambda g: (g @ bv.T if ga else None, av.T @ g if gb else None))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a single row broadcast over ``a``'s rows."""
    if b.shape == a.shape:
        return _record("add", a.value + b.value, (a, b), lambda g: (g, g))
    if b.shape == (1, a.shape[1]):
        return _record("add", a.value + b.value, (a, b), lambda g: (g, g.sum(axis=0, keepdims=True)))
    raise _shape_error("add", a, b)


def scale(a: Tensor, c: float) -> Tensor:
    return _record("scale", a.value * c, (a,), lambda g: (g * c,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; ``b`` may be a single column scaling each row of ``a``."""
    av, bv = a.value, b.value
    if b.shape == a.shape:
        return _record("mul", av * bv, (a, b), lambda g: (g * bv, g * av))
    if b.shape == (a.shape[0], 1):
        ga, gb = a.requires_grad, b.requires_grad
        return _record("mul", av * bv, (a, b),
                       lambda g: (g * bv if ga else None,
                                  (g * av).sum(axis=1, keepdims=True) if gb else None))
    raise _shape_error("mul", a, b)


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.value, 0)
    return _record("relu", y, (a,), lambda g: (np.where(y > 0, g, 0),))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(a.value > 0, 1.0, slope).astype(a.dtype)
    return _record("leaky_relu", a.value * factor, (a,), lambda g: (g * factor,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.value
    with np.errstate(over="ignore"):
        y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x))).astype(a.dtype)
    return _record("sigmoid", y, (a,), lambda g: (g * y * (1 - y),))


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    rows = parts[0].shape[0]
    if any(p.shape[0] != rows for p in parts):
        raise _shape_error("concat_cols", *parts)
    edges = np.cumsum([0] + [p.shape[1] for p in parts])
    return _record("concat_cols", np.concatenate([p.value for p in parts], axis=1), parts,
                   lambda g: tuple(g[:, lo:hi] for lo, hi in zip(edges[:-1], edges[1:])))


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    cols = parts[0].shape[1]
    if any(p.shape[1] != cols for p in parts):
        raise _shape_error("concat_rows", *parts)
    edges = np.cumsum([0] + [p.shape[0] for p in parts])
    return _record("concat_rows", np.concatenate([p.value for p in parts], axis=0), parts,
                   lambda g: tuple(g[lo:hi] for lo, hi in zip(edges[:-1], edges[1:])))


def slice_rows(a: Tensor, lo: int, hi: int) -> Tensor:
    if not 0 <= lo <= hi <= a.shape[0]:
        raise ValueError(f"slice_rows: [{lo}:{hi}] outside {a.shape[0]} rows")

    def back(g):
        full = np.zeros_like(a.value)
        full[lo:hi] = g
        return (full,)

    return _record("slice_rows", a.value[lo:hi], (a,), back)


def total(a: Tensor) -> Tensor:
    return _record("sum", a.value.sum(keepdims=True).reshape(1, 1), (a,),
                   lambda g: (np.broadcast_to(g, a.shape).copy(),))


# --------------------------------------------------------------------------
# Index ops
# --------------------------------------------------------------------------

def _check_index(op: str, index: np.ndarray, bound: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    if index.ndim != 1:
        raise ValueError(f"{op}: index must be 1-d")
    if index.size and (index.min() < 0 or index.max() >= bound):
        raise IndexError(f"{op}: index out of range 0..{bound - 1}")
    return index


def gather(src: Tensor, index) -> Tensor:
    """Rows ``src[index]``; the adjoint is :func:`scatter_add`."""
    index = _check_index("gather", index, src.shape[0])
    n = src.shape[0]
    return _record("gather", src.value[index], (src,),
                   lambda g: (kernels.scatter_add_rows(g, index, n),))


def scatter_add(src: Tensor, index, n_out: int) -> Tensor:
    """Sum rows of ``src`` into ``n_out`` destination rows named by ``index``."""
    index = _check_index("scatter_add", index, n_out)
    if index.size != src.shape[0]:
        raise ValueError("scatter_add: one index per source row required")
    out = kernels.scatter_add_rows(np.ascontiguousarray(src.value), index, n_out)
    return _record("scatter_add", out, (src,), lambda g: (g[index],))


def weighted_scatter(src: Tensor, src_idx, dst_idx, coef: Tensor, n_out: int) -> Tensor:
    """``out[dst_idx[k]] += coef[k] * src[src_idx[k]]``.

    Equal to ``scatter_add(mul(gather(src, src_idx), coef), dst_idx, n_out)``
    without materialising the gathered rows.
    """
    src_idx = _check_index("weighted_scatter", src_idx, src.shape[0])
    dst_idx = _check_index("weighted_scatter", dst_idx, n_out)
    if not (src_idx.size == dst_idx.size == coef.shape[0]) or coef.shape[1] != 1:
        raise ValueError("weighted_scatter: need one source, destination and coefficient per pair")
    sv = np.ascontiguousarray(src.value)
    cv = np.ascontiguousarray(coef.value[:, 0], dtype=sv.dtype)
    out = kernels.wscatter(sv, src_idx, dst_idx, cv, n_out)

    def back(g):
        gsrc, gcoef = kernels.wscatter_grad(np.ascontiguousarray(g), sv, src_idx, dst_idx, cv)
        return gsrc, gcoef[:, None]

    return _record("weighted_scatter", out, (src, coef), back)


def segment_softmax(scores: Tensor, segments, num_segments: int) -> Tensor:
    """Softmax of a score column taken separately within each segment."""
    if scores.shape[1] != 1:
        raise ValueError("segment_softmax expects a single score column")
    seg = _check_index("segment_softmax", segments, num_segments)
    if seg.size != scores.shape[0]:
        raise ValueError("segment_softmax: one segment id per score required")
    counts = np.bincount(seg, minlength=num_segments)
    if np.any(counts == 0):
        raise ValueError(f"segment_softmax: empty segment(s) {np.flatnonzero(counts == 0)[:5].tolist()}")
    s = scores.value[:, 0]
    shifted = s - kernels.segment_max(s, seg, num_segments)[seg]
    ex = np.exp(shifted)
    y = ex / kernels.segment_sum(ex, seg, num_segments)[seg]
    y = y.astype(scores.dtype)

    def back(g):
        gy = g[:, 0] * y
        return ((gy - y * kernels.segment_sum(gy, seg, num_segments)[seg])[:, None],)

    return _record("segment_softmax", y[:, None], (scores,), back)


# --------------------------------------------------------------------------
# Loss
# --------------------------------------------------------------------------

BCE_EPS = 1e-7


def bce_loss(pred: Tensor, target) -> Tensor:
    """Mean binary cross-entropy, predictions clamped to [eps, 1 - eps]."""
    t = np.asarray(target, dtype=pred.dtype).reshape(pred.shape)
    raw = pred.value
    p = np.clip(raw, BCE_EPS, 1 - BCE_EPS)
    size = p.size
    loss = -(t * np.log(p) + (1 - t) * np.log(1 - p)).mean()
    inside = (raw > BCE_EPS) & (raw < 1 - BCE_EPS)

    def back(g):
        return (g[0, 0] * inside * (p - t) / (p * (1 - p)) / size,)

    return _record("bce_loss", np.array([[loss]], dtype=pred.dtype), (pred,), back)


# --------------------------------------------------------------------------
# Initialisation and optimiser
# --------------------------------------------------------------------------

def glorot(fan_in: int, fan_out: int, rng: np.random.Generator, dtype=np.float32, shape=None) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out)).astype(dtype)


class Adam:
    """Adam with decoupled weight decay (the AdamW form)."""

    def __init__(self, params: Sequence[Param], lr: float = 5e-5, weight_decay: float = 5e-4,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps

    def step(self) -> None:
        b1, b2 = self.beta1, self.beta2
        for p in self.params:
            p.step += 1
            g = p.grad
            p.m *= b1
            p.m += (1 - b1) * g
            p.v *= b2
            p.v += (1 - b2) * g * g
            mhat = p.m / (1 - b1 ** p.step)
            vhat = p.v / (1 - b2 ** p.step)
            if self.weight_decay:
                p.value *= 1 - self.lr * self.weight_decay
            p.value -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


# --------------------------------------------------------------------------
# QNET checkpoints
# --------------------------------------------------------------------------
# header (little-endian): 4s magic | u32 version | 16s architecture tag
#   | u32 C1 | u32 C2 | u32 d | u64 seed | u32 metadata length | metadata JSON
# then u32 block count and per block: u16 name length | name | u32 rows
#   | u32 cols | u8 bytes per float | raw little-endian floats

QNET_MAGIC = b"QNET"
QNET_VERSION = 1
_QHEAD = struct.Struct("<4sI16sIIIQI")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arch: str, dims, seed: int, params: dict, meta: Optional[dict] = None) -> None:
    c1, c2, d = dims
    blob = json.dumps(meta or {}, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(_QHEAD.pack(QNET_MAGIC, QNET_VERSION, arch.encode("ascii"), c1, c2, d,
                          seed & (2 ** 64 - 1), len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(params)))
    for name, arr in params.items():
        arr = np.asarray(arr)
        if arr.ndim != 2 or arr.dtype not in (np.float32, np.float64):
            raise CheckpointError(f"{name}: only 2-d float32/float64 blocks are storable")
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)) + raw)
        buf.write(struct.pack("<IIB", arr.shape[0], arr.shape[1], arr.dtype.itemsize))
        buf.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path):
    """Returns ``(arch, (C1, C2, d), seed, meta, params)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _QHEAD.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, arch, c1, c2, d, seed, mlen = _QHEAD.unpack_from(raw)
    if magic != QNET_MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != QNET_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    try:
        meta, params, pos = _read_blocks(raw, _QHEAD.size, mlen, path)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: corrupt body ({exc})") from exc
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    return arch.rstrip(b"\0").decode("ascii"), (c1, c2, d), seed, meta, params


def _read_blocks(raw: bytes, pos: int, mlen: int, path):
    meta = json.loads(raw[pos:pos + mlen].decode())
    pos += mlen
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + nlen].decode()
        pos += nlen
        rows, cols, size = struct.unpack_from("<IIB", raw, pos)
        pos += 9
        dt = {4: "<f4", 8: "<f8"}.get(size)
        if dt is None:
            raise CheckpointError(f"{path}: block {name} has unsupported float width {size}")
        nbytes = rows * cols * size
        arr = np.frombuffer(raw, dtype=dt, count=rows * cols, offset=pos).reshape(rows, cols)
        params[name] = arr.astype(arr.dtype.newbyteorder("="))
        pos += nbytes
    return meta, params, pos
