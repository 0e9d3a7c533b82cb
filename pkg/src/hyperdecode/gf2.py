"""Bit-packed linear algebra over GF(2).

Rows are stored as little-endian 64-bit words: column ``c`` lives in word
``c // 64`` at bit ``c % 64``. Padding bits past ``cols`` are always zero.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from . import kernels

WORD = 64


def _nwords(cols: int) -> int:
    return (cols + WORD - 1) // WORD


def _pack(bits: np.ndarray, cols: int) -> np.ndarray:
    bits = np.ascontiguousarray(bits, dtype=np.uint8) & 1
    rows = bits.shape[0]
    nbytes = _nwords(cols) * 8
    packed = np.packbits(bits, axis=1, bitorder="little")
    buf = np.zeros((rows, nbytes), dtype=np.uint8)
    buf[:, : packed.shape[1]] = packed
    return buf.view("<u8").astype(np.uint64, copy=False).reshape(rows, _nwords(cols))


def _unpack(words: np.ndarray, cols: int) -> np.ndarray:
    rows = words.shape[0]
    raw = np.ascontiguousarray(words.astype("<u8", copy=False)).view(np.uint8).reshape(rows, -1)
    return np.unpackbits(raw, axis=1, bitorder="little")[:, :cols]


def _parity(words: np.ndarray) -> np.ndarray:
    return (np.bitwise_count(words).sum(axis=-1) & 1).astype(np.uint8)


class BitVector:
    __slots__ = ("len", "data")

    def __init__(self, length: int, data: Optional[np.ndarray] = None):
        self.len = int(length)
        if data is None:
            data = np.zeros(_nwords(self.len), dtype=np.uint64)
        self.data = data

    @classmethod
    def from_bits(cls, bits) -> "BitVector":
        bits = np.asarray(bits, dtype=np.uint8).ravel()
        return cls(bits.size, _pack(bits[None, :], bits.size)[0])

    @classmethod
    def zeros(cls, length: int) -> "BitVector":
        return cls(length)

    def to_bits(self) -> np.ndarray:
        return _unpack(self.data[None, :], self.len)[0]

    def any(self) -> bool:
        return bool(self.data.any())

    def weight(self) -> int:
        return int(np.bitwise_count(self.data).sum())

    def __xor__(self, other: "BitVector") -> "BitVector":
        if other.len != self.len:
            raise ValueError(f"length mismatch: {self.len} vs {other.len}")
        return BitVector(self.len, self.data ^ other.data)

    def __eq__(self, other) -> bool:
        return isinstance(other, BitVector) and other.len == self.len and np.array_equal(self.data, other.data)

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.len:
            raise IndexError(i)
        return int((self.data[i // WORD] >> np.uint64(i % WORD)) & np.uint64(1))

    def __len__(self) -> int:
        return self.len

    def __repr__(self) -> str:
        return "BitVector(" + "".join(map(str, self.to_bits())) + ")"


class BitMatrix:
    """Dense binary matrix, one packed row of 64-bit words per matrix row."""

    __slots__ = ("rows", "cols", "data")

    def __init__(self, rows: int, cols: int, data: Optional[np.ndarray] = None):
        if rows < 0 or cols < 0:
            raise ValueError("negative dimension")
        self.rows = int(rows)
        self.cols = int(cols)
        if data is None:
            data = np.zeros((self.rows, _nwords(self.cols)), dtype=np.uint64)
        if data.shape != (self.rows, _nwords(self.cols)):
            raise ValueError(f"data shape {data.shape} does not fit {rows}x{cols}")
        self.data = data

    @classmethod
    def from_dense(cls, a) -> "BitMatrix":
        a = np.asarray(a)
        if a.ndim != 2:
            raise ValueError("expected a 2-d array")
        return cls(a.shape[0], a.shape[1], _pack(a, a.shape[1]))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BitMatrix":
        return cls(rows, cols)

    @classmethod
    def identity(cls, size: int) -> "BitMatrix":
        return cls.from_dense(np.eye(size, dtype=np.uint8))

    def to_dense(self) -> np.ndarray:
        return _unpack(self.data, self.cols)

    def copy(self) -> "BitMatrix":
        return BitMatrix(self.rows, self.cols, self.data.copy())

    def row(self, i: int) -> BitVector:
        return BitVector(self.cols, self.data[i].copy())

    @property
    def T(self) -> "BitMatrix":
        return BitMatrix.from_dense(self.to_dense().T)

    @property
    def shape(self) -> tuple:
        return (self.rows, self.cols)

    def nnz(self) -> int:
        return int(np.bitwise_count(self.data).sum())

    def any(self) -> bool:
        return bool(self.data.any())

    def __matmul__(self, other):
        if isinstance(other, BitVector):
            return mul(self, other)
        return matmul(self, other)

    def __eq__(self, other) -> bool:
        return (isinstance(other, BitMatrix) and self.shape == other.shape
                and np.array_equal(self.data, other.data))

    def __repr__(self) -> str:
        return f"BitMatrix({self.rows}x{self.cols}, nnz={self.nnz()})"


def mul(a: BitMatrix, x: BitVector) -> BitVector:
    """Matrix-vector product over GF(2)."""
    if a.cols != x.len:
        raise ValueError(f"dimension mismatch: {a.rows}x{a.cols} times vector of length {x.len}")
    bits = _parity(a.data & x.data[None, :]) if a.rows else np.zeros(0, np.uint8)
    return BitVector.from_bits(bits)


def matmul(a: BitMatrix, b: BitMatrix) -> BitMatrix:
    if a.cols != b.rows:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    prod = (a.to_dense().astype(np.int64) @ b.to_dense().astype(np.int64)) & 1
    return BitMatrix.from_dense(prod)


def row_reduce(a: BitMatrix, ncols: Optional[int] = None):
    """Reduced row echelon form.

    Pivots are searched only among the first ``ncols`` columns (all by
    default); row operations always span the full width, which is how
    augmented systems are solved.

    Returns ``(reduced, rank, pivot_cols)``.
    """
    ncols = a.cols if ncols is None else ncols
    data = a.data.copy()
    rank, pivots = kernels.rref_words(data, ncols)
    return BitMatrix(a.rows, a.cols, data), int(rank), [int(p) for p in pivots]


def rank(a: BitMatrix) -> int:
    return row_reduce(a)[1]


class RowReducer:
    """Reduced basis of a row space; reduces vectors against it.

    Built once and reused, e.g. for the stabilizer test applied to every
    Monte Carlo residual.
    """

    def __init__(self, a: BitMatrix):
        reduced, r, pivots = row_reduce(a)
        self.cols = a.cols
        self.rank = r
        self.pivots = np.asarray(pivots, dtype=np.int64)
        self.basis = reduced.data[:r].copy()
        self._pw = self.pivots // WORD
        self._pb = (self.pivots % WORD).astype(np.uint64)

    def reduce(self, v: BitVector) -> BitVector:
        if v.len != self.cols:
            raise ValueError(f"dimension mismatch: vector of length {v.len}, rows of length {self.cols}")
        w = v.data.copy()
        for k in range(self.rank):
            if (w[self._pw[k]] >> self._pb[k]) & np.uint64(1):
                w ^= self.basis[k]
        return BitVector(v.len, w)

    def contains(self, v: BitVector) -> bool:
        return not self.reduce(v).any()


def in_rowspace(a: BitMatrix, v: BitVector) -> bool:
    if a.cols != v.len:
        raise ValueError(f"dimension mismatch: rows of length {a.cols}, vector of length {v.len}")
    return RowReducer(a).contains(v)


def solve(a: BitMatrix, b: BitVector) -> Optional[BitVector]:
    """Some ``x`` with ``a @ x == b``, free variables set to 0; None if inconsistent."""
    if a.rows != b.len:
        raise ValueError(f"dimension mismatch: {a.rows} rows, right-hand side of length {b.len}")
    aug = np.concatenate([a.to_dense(), b.to_bits()[:, None]], axis=1)
    reduced, r, pivots = row_reduce(BitMatrix.from_dense(aug), ncols=a.cols)
    dense = reduced.to_dense()
    rhs = dense[:, a.cols]
    if rhs[r:].any():
        return None
    x = np.zeros(a.cols, dtype=np.uint8)
    x[pivots] = rhs[:r]
    return BitVector.from_bits(x)


def kernel(a: BitMatrix) -> BitMatrix:
    """Basis of the right null space, one basis vector per row."""
    reduced, r, pivots = row_reduce(a)
    dense = reduced.to_dense()[:r]
    free = [c for c in range(a.cols) if c not in set(pivots)]
    basis = np.zeros((len(free), a.cols), dtype=np.uint8)
    for t, f in enumerate(free):
        basis[t, f] = 1
        basis[t, pivots] = dense[:, f]
    return BitMatrix.from_dense(basis)


def inverse(a: BitMatrix) -> BitMatrix:
    if a.rows != a.cols:
        raise ValueError("inverse of a non-square matrix")
    n = a.rows
    aug = np.concatenate([a.to_dense(), np.eye(n, dtype=np.uint8)], axis=1)
    reduced, r, _ = row_reduce(BitMatrix.from_dense(aug), ncols=n)
    if r < n:
        raise np.linalg.LinAlgError("singular matrix over GF(2)")
    return BitMatrix.from_dense(reduced.to_dense()[:, n:])


def hstack(blocks) -> BitMatrix:
    return BitMatrix.from_dense(np.hstack([b.to_dense() for b in blocks]))


def vstack(blocks) -> BitMatrix:
    return BitMatrix.from_dense(np.vstack([b.to_dense() for b in blocks]))


def kron(a: BitMatrix, b: BitMatrix) -> BitMatrix:
    return BitMatrix.from_dense(np.kron(a.to_dense(), b.to_dense()))
