"""Classical parity-check codes, hypergraph products and CSS bookkeeping."""
from __future__ import annotations

import collections
import os
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import gf2
from .gf2 import BitMatrix, BitVector


class AlistError(ValueError):
    """Malformed alist file. ``line`` is 1-based."""

    def __init__(self, message: str, line: Optional[int] = None, path=None):
        self.line = line
        self.path = path
        where = f"{path}:" if path else ""
        where += f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class CodeError(ValueError):
    pass


@dataclass
class ClassicalCode:
    H: BitMatrix
    name: str = "code"
    distance: Optional[int] = None

    def __post_init__(self):
        if not self.H.any():
            raise CodeError(f"{self.name}: parity-check matrix is zero")
        colw = self.H.to_dense().sum(axis=0)
        if (colw == 0).any():
            raise CodeError(f"{self.name}: bit(s) {np.flatnonzero(colw == 0).tolist()} are in no check")

    @property
    def n(self) -> int:
        return self.H.cols

    @property
    def m(self) -> int:
        return self.H.rows

    @property
    def k(self) -> int:
        return self.n - gf2.rank(self.H)

    def __str__(self) -> str:
        d = f",{self.distance}" if self.distance else ""
        return f"{self.name} [{self.n},{self.k}{d}]"


class CssCode:
    """CSS code from an X-check matrix and a Z-check matrix on ``n`` qubits.

    ``hx`` rows are X-type stabilizers; they flag Z errors. ``hz`` rows flag X
    errors. Nothing here enforces commutation, use :func:`validate_css`.
    """

    def __init__(self, hx: BitMatrix, hz: BitMatrix, name: str = "css", components=()):
        if hx.cols != hz.cols:
            raise CodeError(f"H_X has {hx.cols} columns but H_Z has {hz.cols}")
        self.hx = hx
        self.hz = hz
        self.name = name
        self.components = tuple(components)

    n = property(lambda self: self.hx.cols)
    m_x = property(lambda self: self.hx.rows)
    m_z = property(lambda self: self.hz.rows)
    m = property(lambda self: self.hx.rows + self.hz.rows)

    @cached_property
    def rank_x(self) -> int:
        return gf2.rank(self.hx)

    @cached_property
    def rank_z(self) -> int:
        return gf2.rank(self.hz)

    @cached_property
    def k(self) -> int:
        return self.n - self.rank_x - self.rank_z

    @cached_property
    def hx_dense(self) -> np.ndarray:
        return self.hx.to_dense()

    @cached_property
    def hz_dense(self) -> np.ndarray:
        return self.hz.to_dense()

    @cached_property
    def x_stabilizers(self) -> gf2.RowReducer:
        return gf2.RowReducer(self.hx)

    @cached_property
    def z_stabilizers(self) -> gf2.RowReducer:
        return gf2.RowReducer(self.hz)

    @cached_property
    def logicals(self):
        return logical_operators(self)

    def __str__(self) -> str:
        return f"[[{self.n}, {self.k}]]"

    def __repr__(self) -> str:
        return f"CssCode({self.name!r}, n={self.n}, k={self.k}, m_x={self.m_x}, m_z={self.m_z})"


def hgp_construct(c1: ClassicalCode, c2: ClassicalCode) -> CssCode:
    """Hypergraph product of two classical codes.

    H_X = [H1 (x) I_n2 | I_m1 (x) H2^T],  H_Z = [I_n1 (x) H2 | H1^T (x) I_m2],
    acting on n1*n2 + m1*m2 qubits.
    """
    h1, h2 = c1.H.to_dense(), c2.H.to_dense()
    m1, n1 = h1.shape
    m2, n2 = h2.shape
    hx = np.hstack([np.kron(h1, np.eye(n2, dtype=np.uint8)), np.kron(np.eye(m1, dtype=np.uint8), h2.T)])
    hz = np.hstack([np.kron(np.eye(n1, dtype=np.uint8), h2), np.kron(h1.T, np.eye(m2, dtype=np.uint8))])
    return CssCode(BitMatrix.from_dense(hx), BitMatrix.from_dense(hz),
                   name=f"hgp({c1.name},{c2.name})", components=(c1.name, c2.name))


@dataclass
class ValidationReport:
    commutes: bool
    n: int
    k: int
    m_x: int
    m_z: int
    rank_x: int
    rank_z: int
    row_weights: dict = field(default_factory=dict)
    col_weights: dict = field(default_factory=dict)
    problems: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    @property
    def max_row_weight(self) -> int:
        return max(self.row_weights, default=0)

    @property
    def max_col_weight(self) -> int:
        return max(self.col_weights, default=0)

    def summary(self) -> str:
        lines = [
            f"[[{self.n}, {self.k}]]",
            f"m_x={self.m_x} m_z={self.m_z} rank(H_X)={self.rank_x} rank(H_Z)={self.rank_z}",
            f"H_X.H_Z^T = 0: {'yes' if self.commutes else 'NO'}",
            f"row weights {dict(sorted(self.row_weights.items()))}",
            f"column weights {dict(sorted(self.col_weights.items()))}",
        ]
        lines += [f"problem: {p}" for p in self.problems]
        return "\n".join(lines)


def validate_css(code: CssCode) -> ValidationReport:
    hx, hz = code.hx_dense.astype(np.int64), code.hz_dense.astype(np.int64)
    commutes = not ((hx @ hz.T) & 1).any()
    rows = np.concatenate([hx.sum(axis=1), hz.sum(axis=1)])
    cols = np.concatenate([hx.sum(axis=0), hz.sum(axis=0)])
    report = ValidationReport(
        commutes=commutes, n=code.n, k=code.k, m_x=code.m_x, m_z=code.m_z,
        rank_x=code.rank_x, rank_z=code.rank_z,
        row_weights=dict(collections.Counter(rows.tolist())),
        col_weights=dict(collections.Counter(cols.tolist())),
    )
    if not commutes:
        report.problems.append("X and Z checks do not commute")
    if code.k < 0:
        report.problems.append(f"negative k = {code.k}")
    if (rows == 0).any():
        report.problems.append("empty check row")
    return report


def _independent_of(base: BitMatrix, candidates: BitMatrix) -> np.ndarray:
    """Greedily pick candidate rows that extend rowspace(base); returns dense rows."""
    reducer = gf2.RowReducer(base)
    basis = reducer.basis
    pw, pb = list(reducer._pw), list(reducer._pb)
    one = np.uint64(1)
    picked = []
    for i in range(candidates.rows):
        w = candidates.data[i].copy()
        for k in range(len(basis)):
            if (w[pw[k]] >> pb[k]) & one:
                w ^= basis[k]
        if not w.any():
            continue
        picked.append(i)
        # new pivot: lowest set bit of the reduced vector
        lead = int(np.flatnonzero(gf2._unpack(w[None, :], base.cols)[0])[0])
        for k in range(len(basis)):
            if (basis[k][lead // 64] >> np.uint64(lead % 64)) & one:
                basis[k] = basis[k] ^ w
        basis = np.vstack([basis, w[None, :]]) if len(basis) else w[None, :].copy()
        pw.append(lead // 64)
        pb.append(np.uint64(lead % 64))
    return candidates.to_dense()[picked]


def logical_operators(code: CssCode):
    """Paired logical bases ``(L_X, L_Z)`` with ``L_X . L_Z^T = I``.

    X logicals span ker(H_Z) modulo rowspace(H_X), Z logicals symmetrically.
    Candidates are scanned in kernel-basis order, which follows the lowest
    free column first.
    """
    k = code.k
    n = code.n
    if k < 0:
        raise CodeError(f"inconsistent code: k = {k}")
    if k == 0:
        empty = BitMatrix.zeros(0, n)
        return empty, empty.copy()
    ax = _independent_of(code.hx, gf2.kernel(code.hz))
    az = _independent_of(code.hz, gf2.kernel(code.hx))
    if ax.shape[0] != k or az.shape[0] != k:
        raise CodeError(f"found {ax.shape[0]} X and {az.shape[0]} Z logicals, expected k = {k}")
    pairing = (ax.astype(np.int64) @ az.T.astype(np.int64)) & 1
    try:
        inv = gf2.inverse(BitMatrix.from_dense(pairing)).to_dense().astype(np.int64)
    except np.linalg.LinAlgError as exc:
        raise CodeError("logical pairing is degenerate; are H_X and H_Z commuting?") from exc
    # L_Z = (P^-1)^T A_Z gives L_X L_Z^T = P P^-1 = I
    lz = (inv.T @ az.astype(np.int64)) & 1
    return BitMatrix.from_dense(ax), BitMatrix.from_dense(lz.astype(np.uint8))


# --------------------------------------------------------------------------
# alist I/O
# --------------------------------------------------------------------------

def _ints(line: str, lineno: int, path) -> list:
    try:
        return [int(tok) for tok in line.split()]
    except ValueError:
        raise AlistError(f"non-integer token in {line.strip()!r}", lineno, path) from None


def parse_alist(text: str, path=None) -> BitMatrix:
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if len(lines) < 4:
        raise AlistError("truncated header", lines[-1][0] if lines else 1, path)
    (l0, s0), (l1, s1), (l2, s2), (l3, s3) = lines[:4]
    head = _ints(s0, l0, path)
    if len(head) != 2 or min(head) <= 0:
        raise AlistError("first line must be 'n m' with positive sizes", l0, path)
    n, m = head
    if len(_ints(s1, l1, path)) != 2:
        raise AlistError("second line must hold the two maximum degrees", l1, path)
    col_deg = _ints(s2, l2, path)
    row_deg = _ints(s3, l3, path)
    if len(col_deg) != n:
        raise AlistError(f"expected {n} column degrees, got {len(col_deg)}", l2, path)
    if len(row_deg) != m:
        raise AlistError(f"expected {m} row degrees, got {len(row_deg)}", l3, path)
    body = lines[4:]
    if len(body) < n + m:
        raise AlistError(f"expected {n + m} adjacency lines, got {len(body)}",
                         body[-1][0] if body else l3, path)
    if len(body) > n + m:
        raise AlistError("trailing content after adjacency lists", body[n + m][0], path)
    h = np.zeros((m, n), dtype=np.uint8)
    for c in range(n):
        lineno, s = body[c]
        idx = [v for v in _ints(s, lineno, path) if v != 0]
        if len(idx) != col_deg[c]:
            raise AlistError(f"column {c + 1} declares degree {col_deg[c]} but lists {len(idx)}", lineno, path)
        for v in idx:
            if not 1 <= v <= m:
                raise AlistError(f"row index {v} out of range 1..{m}", lineno, path)
            if h[v - 1, c]:
                raise AlistError(f"duplicate row index {v}", lineno, path)
            h[v - 1, c] = 1
    check = np.zeros_like(h)
    for r in range(m):
        lineno, s = body[n + r]
        idx = [v for v in _ints(s, lineno, path) if v != 0]
        if len(idx) != row_deg[r]:
            raise AlistError(f"row {r + 1} declares degree {row_deg[r]} but lists {len(idx)}", lineno, path)
        for v in idx:
            if not 1 <= v <= n:
                raise AlistError(f"column index {v} out of range 1..{n}", lineno, path)
            check[r, v - 1] = 1
        if not np.array_equal(check[r], h[r]):
            raise AlistError(f"row {r + 1} disagrees with the column lists", lineno, path)
    return BitMatrix.from_dense(h)


def format_alist(h: BitMatrix) -> str:
    dense = h.to_dense()
    m, n = dense.shape
    cols = [np.flatnonzero(dense[:, c]) + 1 for c in range(n)]
    rows = [np.flatnonzero(dense[r]) + 1 for r in range(m)]
    max_c = max((len(c) for c in cols), default=0)
    max_r = max((len(r) for r in rows), default=0)

    def pad(idx, width):
        return " ".join(str(v) for v in list(idx) + [0] * (width - len(idx)))

    out = [f"{n} {m}", f"{max_c} {max_r}",
           " ".join(str(len(c)) for c in cols), " ".join(str(len(r)) for r in rows)]
    out += [pad(c, max_c) for c in cols]
    out += [pad(r, max_r) for r in rows]
    return "\n".join(out) + "\n"


def load_alist(path, name: Optional[str] = None, distance: Optional[int] = None) -> ClassicalCode:
    path = Path(path)
    text = path.read_text()
    return ClassicalCode(parse_alist(text, path), name=name or path.stem, distance=distance)


def save_alist(code, path) -> None:
    h = code.H if isinstance(code, ClassicalCode) else code
    with open(path, "w", newline="\n") as fh:
        fh.write(format_alist(h))


def save_css(code: CssCode, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_alist(code.hx, d / "hx.alist")
    save_alist(code.hz, d / "hz.alist")
    meta = {"name": code.name, "n": code.n, "k": code.k, "m_x": code.m_x, "m_z": code.m_z,
            "components": ",".join(code.components)}
    with open(d / "meta.txt", "w", newline="\n") as fh:
        fh.writelines(f"{key} = {val}\n" for key, val in meta.items())


def load_css(directory) -> CssCode:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"no code directory at {d}")
    meta = {}
    meta_path = d / "meta.txt"
    if meta_path.exists():
        for line in meta_path.read_text().splitlines():
            if "=" in line:
                key, val = line.split("=", 1)
                meta[key.strip()] = val.strip()
    hx = parse_alist((d / "hx.alist").read_text(), d / "hx.alist")
    hz = parse_alist((d / "hz.alist").read_text(), d / "hz.alist")
    comps = tuple(c for c in meta.get("components", "").split(",") if c)
    code = CssCode(hx, hz, name=meta.get("name", d.name), components=comps)
    for key in ("n", "k", "m_x", "m_z"):
        if key in meta and int(meta[key]) != getattr(code, key):
            raise CodeError(f"{meta_path}: {key} = {meta[key]} but matrices give {getattr(code, key)}")
    return code


# --------------------------------------------------------------------------
# Bundled codes
# --------------------------------------------------------------------------

BUNDLED = {
    "hamming7": ("hamming7.alist", 3),
    "bch15": ("bch15_7.alist", 5),
    "rep3": ("rep3.alist", 3),
    "rep5": ("rep5.alist", 5),
}


def bundled_path(name: str) -> str:
    fname = BUNDLED[name][0]
    return os.fspath(resources.files("hyperdecode") / "data" / fname)


def bundled(name: str) -> ClassicalCode:
    """Shipped component codes: ``hamming7``, ``bch15`` ([15,7,5]), ``rep3`` and ``rep5``."""
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled code {name!r}; have {sorted(BUNDLED)}")
    return load_alist(bundled_path(name), name=name, distance=BUNDLED[name][1])


def hamming_matrix(r: int = 3) -> np.ndarray:
    """Parity checks of the [2^r - 1, 2^r - 1 - r, 3] Hamming code; column j is binary(j + 1)."""
    n = 2 ** r - 1
    return np.array([[(j + 1) >> (r - 1 - i) & 1 for j in range(n)] for i in range(r)], dtype=np.uint8)


def repetition_matrix(n: int) -> np.ndarray:
    h = np.zeros((n - 1, n), dtype=np.uint8)
    for i in range(n - 1):
        h[i, i] = h[i, i + 1] = 1
    return h


def cyclic_parity_matrix(n: int, h_poly) -> np.ndarray:
    """Parity checks of a cyclic code from its check polynomial (coefficients x^0 upward)."""
    rev = np.asarray(h_poly, dtype=np.uint8)[::-1]
    h = np.zeros((n - len(rev) + 1, n), dtype=np.uint8)
    for i in range(h.shape[0]):
        h[i, i:i + len(rev)] = rev
    return h


def random_ldpc(m: int, n: int, col_weight: int, rng) -> np.ndarray:
    """Random sparse check matrix: every column gets ``col_weight`` distinct checks."""
    h = np.zeros((m, n), dtype=np.uint8)
    w = min(col_weight, m)
    for c in range(n):
        h[rng.choice(m, size=w, replace=False), c] = 1
    return h
