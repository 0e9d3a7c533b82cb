from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..gf2 import BitMatrix


@dataclass(frozen=True, eq=False)
class TannerGraph:
    """Bipartite check/variable adjacency of one parity-check matrix.

    Edges are numbered check-major: edge ``e`` joins check ``edge_chk[e]``
    and variable ``edge_var[e]``. ``chk_ptr`` slices the edges of a check,
    ``var_ptr`` slices ``var_edges`` (edge ids grouped by variable).
    """

    num_checks: int
    num_vars: int
    chk_ptr: np.ndarray
    edge_var: np.ndarray
    edge_chk: np.ndarray
    var_ptr: np.ndarray
    var_edges: np.ndarray

    @property
    def num_edges(self) -> int:
        return int(self.edge_var.size)

    @classmethod
    def from_dense(cls, h) -> "TannerGraph":
        h = np.asarray(h, dtype=np.uint8)
        m, n = h.shape
        chk, var = np.nonzero(h)             # row-major, so already check-major
        chk_ptr = np.concatenate([[0], np.cumsum(np.bincount(chk, minlength=m))])
        var_edges = np.argsort(var, kind="stable")
        var_ptr = np.concatenate([[0], np.cumsum(np.bincount(var, minlength=n))])
        return cls(m, n, chk_ptr.astype(np.int64), var.astype(np.int64), chk.astype(np.int64),
                   var_ptr.astype(np.int64), var_edges.astype(np.int64))

    @classmethod
    def from_matrix(cls, h: BitMatrix) -> "TannerGraph":
        return cls.from_dense(h.to_dense())

    def to_dense(self) -> np.ndarray:
        h = np.zeros((self.num_checks, self.num_vars), np.uint8)
        h[self.edge_chk, self.edge_var] = 1
        return h

    def var_degree(self) -> np.ndarray:
        return np.diff(self.var_ptr)

    def check_degree(self) -> np.ndarray:
        return np.diff(self.chk_ptr)

    def syndrome(self, e) -> np.ndarray:
        e = np.asarray(e, dtype=np.int64)
        return (np.bincount(self.edge_chk, weights=e[self.edge_var], minlength=self.num_checks)
                .astype(np.int64) & 1).astype(np.uint8)
