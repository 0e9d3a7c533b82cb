"""Incidence hypergraph of a CSS code.

Nodes ``0..n-1`` are the X components of the qubits and ``n..2n-1`` their Z
components. Hyperedges ``0..m_x-1`` are the X checks (they touch Z
components), followed by the ``m_z`` Z checks (touching X components).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import CssCode


class IsolatedNodeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Hypergraph:
    num_nodes: int
    num_edges: int
    node_idx: np.ndarray      # incidence pairs grouped by hyperedge
    edge_idx: np.ndarray
    edge_degree: np.ndarray   # B(j)
    node_degree: np.ndarray
    by_node: np.ndarray       # permutation of incidences grouping them by node
    node_ptr: np.ndarray      # CSR offsets into by_node
    edge_ptr: np.ndarray      # CSR offsets into the incidence arrays

    @property
    def nnz(self) -> int:
        return int(self.node_idx.size)

    @classmethod
    def from_incidence(cls, pairs_node, pairs_edge, num_nodes: int, num_edges: int) -> "Hypergraph":
        node = np.asarray(pairs_node, dtype=np.int64)
        edge = np.asarray(pairs_edge, dtype=np.int64)
        if node.size and (node.min() < 0 or node.max() >= num_nodes):
            raise ValueError("node index out of range")
        if edge.size and (edge.min() < 0 or edge.max() >= num_edges):
            raise ValueError("hyperedge index out of range")
        order = np.lexsort((node, edge))
        node, edge = node[order], edge[order]
        if node.size > 1 and np.any((np.diff(edge) == 0) & (np.diff(node) == 0)):
            raise ValueError("duplicate incidence pair")
        edge_degree = np.bincount(edge, minlength=num_edges)
        node_degree = np.bincount(node, minlength=num_nodes)
        by_node = np.lexsort((edge, node))
        for arr in (node, edge, edge_degree, node_degree, by_node):
            arr.setflags(write=False)
        return cls(
            num_nodes=num_nodes, num_edges=num_edges, node_idx=node, edge_idx=edge,
            edge_degree=edge_degree, node_degree=node_degree, by_node=by_node,
            node_ptr=np.concatenate([[0], np.cumsum(node_degree)]),
            edge_ptr=np.concatenate([[0], np.cumsum(edge_degree)]),
        )

    @classmethod
    def from_css(cls, code: CssCode) -> "Hypergraph":
        n = code.n
        xr, xc = np.nonzero(code.hx_dense)
        zr, zc = np.nonzero(code.hz_dense)
        node = np.concatenate([xc + n, zc])
        edge = np.concatenate([xr, zr + code.m_x])
        return cls.from_incidence(node, edge, 2 * n, code.m)

    def incidence(self) -> np.ndarray:
        """Dense ``num_nodes x num_edges`` 0/1 incidence matrix."""
        h = np.zeros((self.num_nodes, self.num_edges), dtype=np.uint8)
        h[self.node_idx, self.edge_idx] = 1
        return h

    def inverse_edge_degree(self) -> np.ndarray:
        if np.any(self.edge_degree == 0):
            raise ValueError("empty hyperedge")
        return 1.0 / self.edge_degree

    def weighted_degrees(self, w) -> np.ndarray:
        """D(i) = sum of w_j over hyperedges containing node i, for every node."""
        w = np.asarray(w, dtype=np.float64)
        return np.bincount(self.node_idx, weights=w[self.edge_idx], minlength=self.num_nodes)

    def check_connected(self) -> None:
        lonely = np.flatnonzero(self.node_degree == 0)
        if lonely.size:
            raise IsolatedNodeError(f"nodes {lonely[:10].tolist()} belong to no hyperedge")


def stabilizer_matrix(code: CssCode) -> np.ndarray:
    """Block stabilizer matrix, rows = hyperedges, columns = nodes (X part, Z part)."""
    n = code.n
    top = np.hstack([np.zeros((code.m_x, n), np.uint8), code.hx_dense])
    bottom = np.hstack([code.hz_dense, np.zeros((code.m_z, n), np.uint8)])
    return np.vstack([top, bottom])


def edge_weights(syndrome) -> np.ndarray:
    """Hyperedge weights, one plus the syndrome bit."""
    return 1.0 + np.asarray(syndrome, dtype=np.float64)


def weighted_degree(g: Hypergraph, w, i: int) -> float:
    if not 0 <= i < g.num_nodes:
        raise IndexError(f"node {i} out of range 0..{g.num_nodes - 1}")
    if g.node_degree[i] == 0:
        raise IsolatedNodeError(f"node {i} belongs to no hyperedge")
    w = np.asarray(w, dtype=np.float64)
    inc = g.by_node[g.node_ptr[i]:g.node_ptr[i + 1]]
    return float(w[g.edge_idx[inc]].sum())
