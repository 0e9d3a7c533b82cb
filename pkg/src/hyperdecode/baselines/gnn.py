"""Tanner-graph GNN baseline.

Variable nodes are the 2n qubit components, check nodes the stabilizers;
edges are the nonzeros of the block stabilizer matrix, i.e. the same
incidence pairs the hypergraph decoder uses. Each layer updates checks from
the mean of their variables, then variables from the mean of their checks:

    c' = relu([c | mean_v] U_c + b_c)
    v' = relu([v | mean_c] U_v + b_v)

Inputs, readout, loss and optimiser are shared with the hypergraph decoder.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .. import tensor as T
from ..hypergraph import Hypergraph
from ..hypernq import FeatureEncoder, _plan
from ..tensor import Param, Tensor

ARCH = "tanner-gnn-v1"
NUM_LAYERS = 6


class TannerGnnModel:
    def __init__(self, num_nodes: int, hidden: int = 128, layers: int = NUM_LAYERS, use_llr: bool = False,
                 seed: int = 0, dtype=np.float32):
        if layers < 1:
            raise ValueError("need at least one layer")
        self.encoder = FeatureEncoder(num_nodes, use_llr)
        self.hidden = hidden
        self.layers = layers
        self.seed = seed
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        c1, c = self.encoder.width, hidden
        shapes = {"W_in": (c1, c), "W_y": (2, c), "b_y": (1, c)}
        for k in range(layers):
            shapes.update({f"U_c{k}": (2 * c, c), f"b_c{k}": (1, c), f"U_v{k}": (2 * c, c), f"b_v{k}": (1, c)})
        shapes.update({"W_out": (c, 1), "b_out": (1, 1)})
        self.params = {}
        for name, shape in shapes.items():
            value = np.zeros(shape, self.dtype) if name.startswith("b_") else T.glorot(shape[0], shape[1], rng, self.dtype)
            self.params[name] = Param(value, name=name)

    @property
    def num_nodes(self) -> int:
        return self.encoder.num_nodes

    @property
    def c1(self) -> int:
        return self.encoder.width

    def parameters(self):
        return list(self.params.values())

    def state_dict(self) -> dict:
        return {k: p.value.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict) -> None:
        for k, p in self.params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"{k}: checkpoint shape {state[k].shape} != model shape {p.shape}")
            p.value = np.array(state[k], dtype=self.dtype)

    def logits(self, g: Hypergraph, syndromes, p_f: Optional[float] = None) -> Tensor:
        syn = np.atleast_2d(np.asarray(syndromes))
        if syn.shape[1] != g.num_edges:
            raise ValueError(f"syndrome length {syn.shape[1]} != number of checks {g.num_edges}")
        if g.num_nodes != self.encoder.num_nodes:
            raise ValueError(f"model built for {self.encoder.num_nodes} nodes, graph has {g.num_nodes}")
        g.check_connected()
        plan = _plan(g, syn.shape[0])
        P = self.params
        C, dt = self.hidden, self.dtype
        N, M, B = g.num_nodes, g.num_edges, syn.shape[0]
        inv_node = 1.0 / np.bincount(plan.node_flat, minlength=B * N)
        inv_chk = 1.0 / np.bincount(plan.edge_flat, minlength=B * M)
        to_chk = T.const(inv_chk[plan.edge_flat, None].astype(dt))
        to_var = T.const(inv_node[plan.node_flat, None].astype(dt))

        X = T.const(self.encoder.node_features(p_f).astype(dt))
        v = T.gather(T.matmul(X, P["W_in"]), plan.node_rows)           # (B*N, C)
        ytab = T.add(T.matmul(T.const(np.array([[0.0, 1.0], [1.0, 2.0]], dt)), P["W_y"]), P["b_y"])
        c = T.gather(ytab, syn.reshape(-1).astype(np.int64))            # (B*M, C)
        for k in range(self.layers):
            mean_v = T.weighted_scatter(v, plan.node_flat, plan.edge_flat, to_chk, B * M)
            c = T.relu(T.add(T.matmul(T.concat_cols([c, mean_v]), P[f"U_c{k}"]), P[f"b_c{k}"]))
            mean_c = T.weighted_scatter(c, plan.edge_flat, plan.node_flat, to_var, B * N)
            v = T.relu(T.add(T.matmul(T.concat_cols([v, mean_c]), P[f"U_v{k}"]), P[f"b_v{k}"]))
        return T.add(T.matmul(v, P["W_out"]), P["b_out"])

    def forward(self, g: Hypergraph, syndromes, p_f: Optional[float] = None) -> Tensor:
        return T.sigmoid(self.logits(g, syndromes, p_f))

    def predict(self, g: Hypergraph, syndromes, p_f: Optional[float] = None) -> np.ndarray:
        syn = np.asarray(syndromes)
        probs = self.forward(g, np.atleast_2d(syn), p_f).value.reshape(-1, g.num_nodes)
        return probs[0] if syn.ndim == 1 else probs

    def save(self, path, extra: Optional[dict] = None) -> None:
        meta = {"num_nodes": self.encoder.num_nodes, "use_llr": self.encoder.use_llr, "layers": self.layers,
                "dtype": self.dtype.name, **(extra or {})}
        T.save_checkpoint(path, ARCH, (self.c1, self.hidden, self.hidden), self.seed, self.state_dict(), meta)

    @classmethod
    def load(cls, path) -> "TannerGnnModel":
        arch, (c1, c2, _), seed, meta, params = T.load_checkpoint(path)
        if arch != ARCH:
            raise T.CheckpointError(f"{path}: architecture {arch!r}, expected {ARCH!r}")
        model = cls(meta["num_nodes"], hidden=c2, layers=meta["layers"], use_llr=meta["use_llr"], seed=seed,
                    dtype=meta.get("dtype", "float32"))
        model.meta = meta
        model.load_state_dict(params)
        return model
