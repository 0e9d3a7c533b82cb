"""Hypergraph neural decoder with one node -> hyperedge -> node layer.

Per incidence pair (node i, hyperedge j) with syndrome bit S_j and weight
w_j = 1 + S_j:

stage 1 (nodes to hyperedges)
    f_i      = X_i W_v
    a_ij     = softmax over hyperedges j' of node i of
               leaky_relu(a_ne . [f_i | S_j' s_embed])
    m_j      = sum_i a_ij w_j f_i / B(j)            B(j): size of hyperedge j
    Y'_j     = relu([Y_j | m_j] U_e + b_e)          Y_j = [S_j, w_j] W_y + b_y

stage 2 (hyperedges back to nodes)
    g_j      = Y'_j W_e
    b_ji     = softmax over hyperedges j' of node i of
               leaky_relu(a_en . [g_j' | S_j' s_embed])
    m_i      = sum_j b_ji w_j g_j / D(i)            D(i) = sum_j w_j
    X'_i     = relu([f_i | m_i] U_v + b_v)

readout: p_i = sigmoid(X'_i W_out + b_out), flip when p_i > 0.5.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .hypergraph import Hypergraph, edge_weights
from .tensor import Param, Tensor

ARCH = "hypernq-v1"
LEAK = 0.2


@dataclass(frozen=True)
class FeatureEncoder:
    """Node features: binary index, a bit_value slot (always 0), optional LLR."""

    num_nodes: int
    use_llr: bool = False

    @property
    def index_bits(self) -> int:
        return max(1, math.ceil(math.log2(self.num_nodes)))

    @property
    def width(self) -> int:
        return self.index_bits + 1 + int(self.use_llr)

    def node_features(self, p_f: Optional[float] = None) -> np.ndarray:
        i = np.arange(self.num_nodes)
        bits = (i[:, None] >> np.arange(self.index_bits)[None, :]) & 1
        cols = [bits.astype(np.float64), np.zeros((self.num_nodes, 1))]
        if self.use_llr:
            if p_f is None:
                raise ValueError("LLR features need the physical error rate")
            cols.append(np.full((self.num_nodes, 1), math.log((1 - p_f) / p_f)))
        return np.concatenate(cols, axis=1)


def encode_features(g: Hypergraph, s, p_f: Optional[float] = None, use_llr: bool = False):
    """``(X, S, w)`` for one syndrome; hyperedge features Y are produced inside the model."""
    s = np.asarray(s)
    if s.shape[-1] != g.num_edges:
        raise ValueError(f"syndrome length {s.shape[-1]} != number of hyperedges {g.num_edges}")
    enc = FeatureEncoder(g.num_nodes, use_llr)
    S = s.astype(np.float64)
    return enc.node_features(p_f), S, edge_weights(S)


class HyperNQModel:
    PARAM_SHAPES = staticmethod(lambda c1, c2: {
        "W_v": (c1, c2),
        "W_y": (2, c2), "b_y": (1, c2),
        "a_ne": (2 * c2, 1), "a_en": (2 * c2, 1), "s_embed": (1, c2),
        "U_e": (2 * c2, c2), "b_e": (1, c2),
        "W_e": (c2, c2),
        "U_v": (2 * c2, c2), "b_v": (1, c2),
        "W_out": (c2, 1), "b_out": (1, 1),
    })

    def __init__(self, num_nodes: int, hidden: int = 128, use_llr: bool = False, seed: int = 0,
                 dtype=np.float32):
        self.encoder = FeatureEncoder(num_nodes, use_llr)
        self.hidden = hidden
        self.seed = seed
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.params = {}
        for name, shape in self.PARAM_SHAPES(self.encoder.width, hidden).items():
            if name.startswith("b_"):
                value = np.zeros(shape, self.dtype)
            else:
                value = T.glorot(shape[0], shape[1], rng, self.dtype)
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

    def astype(self, dtype) -> "HyperNQModel":
        self.dtype = np.dtype(dtype)
        for p in self.params.values():
            p.value = p.value.astype(self.dtype)
            p.grad = np.zeros_like(p.value)
            p.m = np.zeros_like(p.value)
            p.v = np.zeros_like(p.value)
        return self

    # -- forward -----------------------------------------------------------

    def logits(self, g: Hypergraph, syndromes, p_f: Optional[float] = None, trace: Optional[dict] = None,
               features: Optional[np.ndarray] = None) -> Tensor:
        """Per-node logits for a batch of syndromes, shape ``(B * 2n, 1)``.

        ``features`` replaces the encoder's node feature matrix; ``trace``
        receives intermediate values (attention, messages, updated features).
        """
        syn = np.atleast_2d(np.asarray(syndromes))
        if syn.shape[1] != g.num_edges:
            raise ValueError(f"syndrome length {syn.shape[1]} != number of hyperedges {g.num_edges}")
        if g.num_nodes != self.encoder.num_nodes:
            raise ValueError(f"model built for {self.encoder.num_nodes} nodes, graph has {g.num_nodes}")
        g.check_connected()
        plan = _plan(g, syn.shape[0])
        P = self.params
        C = self.hidden
        dt = self.dtype
        N, M = g.num_nodes, g.num_edges
        B = syn.shape[0]

        S_flat = syn.reshape(-1).astype(np.int64)               # (B*M,)
        S_inc = syn[:, g.edge_idx].reshape(-1, 1).astype(dt)    # (B*K, 1)
        w_inc = 1.0 + S_inc

        if features is None:
            features = self.encoder.node_features(p_f)
        elif features.shape != (N, self.c1):
            raise ValueError(f"features must have shape {(N, self.c1)}, got {features.shape}")
        X = T.const(np.asarray(features, dtype=dt))
        f = T.matmul(X, P["W_v"])                               # (N, C)

        # stage 1: nodes -> hyperedges
        sf = T.matmul(f, T.slice_rows(P["a_ne"], 0, C))
        ss = T.matmul(P["s_embed"], T.slice_rows(P["a_ne"], C, 2 * C))
        score1 = T.leaky_relu(T.add(T.gather(sf, plan.node_tile), T.matmul(T.const(S_inc), ss)), LEAK)
        alpha = T.segment_softmax(score1, plan.node_flat, B * N)
        coef1 = T.mul(alpha, T.const(w_inc / g.edge_degree[g.edge_idx][plan.inc_tile, None].astype(dt)))
        m_e = T.weighted_scatter(f, plan.node_tile, plan.edge_flat, coef1, B * M)

        ytab = T.add(T.matmul(T.const(np.array([[0.0, 1.0], [1.0, 2.0]], dt)), P["W_y"]), P["b_y"])
        y_part = T.gather(T.matmul(ytab, T.slice_rows(P["U_e"], 0, C)), S_flat)
        y_new = T.relu(T.add(T.add(y_part, T.matmul(m_e, T.slice_rows(P["U_e"], C, 2 * C))), P["b_e"]))

        # stage 2: hyperedges -> nodes
        ge = T.matmul(y_new, P["W_e"])                          # (B*M, C)
        sg = T.matmul(ge, T.slice_rows(P["a_en"], 0, C))
        ss2 = T.matmul(P["s_embed"], T.slice_rows(P["a_en"], C, 2 * C))
        score2 = T.leaky_relu(T.add(T.gather(sg, plan.edge_flat), T.matmul(T.const(S_inc), ss2)), LEAK)
        beta = T.segment_softmax(score2, plan.node_flat, B * N)
        D = np.bincount(plan.node_flat, weights=w_inc[:, 0].astype(np.float64), minlength=B * N)
        coef2 = T.mul(beta, T.const((w_inc[:, 0] / D[plan.node_flat]).astype(dt)[:, None]))
        m_v = T.weighted_scatter(ge, plan.edge_flat, plan.node_flat, coef2, B * N)

        f_part = T.gather(T.matmul(f, T.slice_rows(P["U_v"], 0, C)), plan.node_rows)
        x_new = T.relu(T.add(T.add(f_part, T.matmul(m_v, T.slice_rows(P["U_v"], C, 2 * C))), P["b_v"]))
        out = T.add(T.matmul(x_new, P["W_out"]), P["b_out"])
        if trace is not None:
            trace.update(alpha=alpha.value[:, 0], beta=beta.value[:, 0], f=f.value, m_e=m_e.value,
                         Y_new=y_new.value, g=ge.value, m_v=m_v.value, X_new=x_new.value, D=D,
                         node_flat=plan.node_flat, edge_flat=plan.edge_flat)
        return out

    def forward(self, g: Hypergraph, syndromes, p_f: Optional[float] = None) -> Tensor:
        return T.sigmoid(self.logits(g, syndromes, p_f))

    def predict(self, g: Hypergraph, syndromes, p_f: Optional[float] = None) -> np.ndarray:
        """Flip probabilities, ``(B, 2n)``, or ``(2n,)`` for a single syndrome."""
        syn = np.asarray(syndromes)
        probs = self.forward(g, np.atleast_2d(syn), p_f).value.reshape(-1, g.num_nodes)
        return probs[0] if syn.ndim == 1 else probs

    # -- persistence -------------------------------------------------------

    def save(self, path, extra: Optional[dict] = None) -> None:
        meta = {"num_nodes": self.encoder.num_nodes, "use_llr": self.encoder.use_llr,
                "dtype": self.dtype.name, **(extra or {})}
        T.save_checkpoint(path, ARCH, (self.c1, self.hidden, self.hidden), self.seed,
                          self.state_dict(), meta)

    @classmethod
    def load(cls, path) -> "HyperNQModel":
        arch, (c1, c2, _), seed, meta, params = T.load_checkpoint(path)
        if arch != ARCH:
            raise T.CheckpointError(f"{path}: architecture {arch!r}, expected {ARCH!r}")
        model = cls(meta["num_nodes"], hidden=c2, use_llr=meta["use_llr"], seed=seed,
                    dtype=meta.get("dtype", "float32"))
        model.meta = meta
        model.load_state_dict(params)
        return model


class _Plan:
    """Batch-offset index arrays for ``B`` copies of one hypergraph."""

    def __init__(self, g: Hypergraph, B: int):
        K, N, M = g.nnz, g.num_nodes, g.num_edges
        b = np.repeat(np.arange(B), K)
        self.inc_tile = np.tile(np.arange(K), B)
        self.node_tile = np.tile(g.node_idx, B)
        self.node_flat = self.node_tile + b * N
        self.edge_flat = np.tile(g.edge_idx, B) + b * M
        self.node_rows = np.tile(np.arange(N), B)


_PLANS: dict = {}


def _plan(g: Hypergraph, B: int) -> _Plan:
    key = (id(g), B)
    plan = _PLANS.get(key)
    if plan is None:
        if len(_PLANS) > 64:
            _PLANS.clear()
        plan = _PLANS[key] = _Plan(g, B)
    return plan


@dataclass
class DecodeResult:
    e_hat: np.ndarray
    probs: np.ndarray
    syndrome_matched: bool


def hypergraph_syndrome(g: Hypergraph, e) -> np.ndarray:
    e = np.atleast_2d(np.asarray(e, dtype=np.int64))
    parity = np.zeros((e.shape[0], g.num_edges), dtype=np.int64)
    for b in range(e.shape[0]):
        parity[b] = np.bincount(g.edge_idx, weights=e[b, g.node_idx], minlength=g.num_edges).astype(np.int64)
    return (parity & 1).astype(np.uint8)


def decode(model: HyperNQModel, g: Hypergraph, s, p_f: Optional[float] = None) -> DecodeResult:
    probs = model.predict(g, np.asarray(s)[None, :], p_f)[0]
    e_hat = (probs > 0.5).astype(np.uint8)
    matched = bool(np.array_equal(hypergraph_syndrome(g, e_hat)[0], np.asarray(s, dtype=np.uint8)))
    return DecodeResult(e_hat, probs, matched)


class HyperNQDecoder:
    """Batch decoder adapter used by the evaluation harness."""

    def __init__(self, model: HyperNQModel, g: Hypergraph, p_f: Optional[float] = None,
                 batch: int = 256, name: str = "hypernq"):
        self.model = model
        self.graph = g
        self.p_f = p_f
        self.batch = batch
        self.name = name

    def decode_batch(self, syndromes) -> np.ndarray:
        syn = np.atleast_2d(syndromes)
        out = np.empty((syn.shape[0], self.graph.num_nodes), np.uint8)
        for lo in range(0, syn.shape[0], self.batch):
            probs = self.model.predict(self.graph, syn[lo:lo + self.batch], self.p_f)
            out[lo:lo + self.batch] = probs > 0.5
        return out
