"""Syndrome belief propagation (sum-product, serial or flooding schedule)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .. import kernels
from ..codes import CssCode
from ..gf2 import BitMatrix
from .tanner import TannerGraph


SCHEDULES = ("serial", "flooding")


@dataclass(frozen=True)
class BpConfig:
    p: float
    max_iters: int = 32
    damping: float = 0.0
    early_stop: bool = True
    schedule: str = "serial"

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"prior must lie in (0, 1), got {self.p}")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError(f"damping must lie in [0, 1), got {self.damping}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}; choose from {SCHEDULES}")


@dataclass
class BpResult:
    e_hat: np.ndarray
    posteriors: np.ndarray   # P(bit flipped | s)
    llr: np.ndarray          # log P(0)/P(1)
    converged: bool
    iterations: int


def _graph(h: Union[BitMatrix, TannerGraph, np.ndarray]) -> TannerGraph:
    if isinstance(h, TannerGraph):
        return h
    if isinstance(h, BitMatrix):
        return TannerGraph.from_matrix(h)
    return TannerGraph.from_dense(h)


def bp_decode(h, s, cfg: BpConfig, prior=None) -> BpResult:
    """Most likely bit-wise error given syndrome ``s = H e``.

    ``prior`` optionally overrides the uniform flip probability ``cfg.p``
    with one probability per bit.
    """
    g = _graph(h)
    s = np.asarray(s, dtype=np.uint8)
    if s.shape != (g.num_checks,):
        raise ValueError(f"syndrome has shape {s.shape}, matrix has {g.num_checks} rows")
    if prior is None:
        llr0 = np.full(g.num_vars, math.log((1 - cfg.p) / cfg.p))
    else:
        prior = np.asarray(prior, dtype=np.float64)
        llr0 = np.log((1 - prior) / prior)
    run = kernels.bp_serial_run if cfg.schedule == "serial" else kernels.bp_run
    hard, post, iters, conv = run(g.chk_ptr, g.edge_var, g.var_ptr, g.var_edges, s, llr0,
                                  cfg.max_iters, cfg.damping, cfg.early_stop)
    probs = 1.0 / (1.0 + np.exp(np.clip(post, -700, 700)))
    return BpResult(np.asarray(hard, np.uint8), probs, post, bool(conv), int(iters))


class CssBpDecoder:
    """Decodes X and Z parts separately: H_Z on the X part, H_X on the Z part."""

    name = "bp"

    def __init__(self, code: CssCode, p_f: float, model: str = "depolarizing", max_iters: int = 32,
                 damping: float = 0.0, schedule: str = "serial"):
        self.code = code
        rate = 2.0 * p_f / 3.0 if model == "depolarizing" else p_f
        self.cfg = BpConfig(rate, max_iters=max_iters, damping=damping, schedule=schedule)
        self.gx = TannerGraph.from_matrix(code.hz)   # sees X errors
        self.gz = TannerGraph.from_matrix(code.hx)   # sees Z errors

    def _halves(self, s):
        s = np.asarray(s, dtype=np.uint8)
        return s[self.code.m_x:], s[:self.code.m_x]

    def decode_parts(self, s):
        s_for_x, s_for_z = self._halves(s)
        return bp_decode(self.gx, s_for_x, self.cfg), bp_decode(self.gz, s_for_z, self.cfg)

    def decode(self, s) -> np.ndarray:
        rx, rz = self.decode_parts(s)
        return np.concatenate([rx.e_hat, rz.e_hat])

    def decode_batch(self, syndromes) -> np.ndarray:
        syn = np.atleast_2d(syndromes)
        return np.stack([self.decode(s) for s in syn]) if len(syn) else np.zeros((0, 2 * self.code.n), np.uint8)
