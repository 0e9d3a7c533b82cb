"""Ordered statistics post-processing of BP soft output."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..codes import CssCode
from ..gf2 import BitMatrix, row_reduce
from .bp import CssBpDecoder

_P_CLIP = 1e-12


class InconsistentSyndromeError(ValueError):
    pass


@dataclass(frozen=True)
class OsdConfig:
    order: int = 0

    def __post_init__(self):
        if not 0 <= self.order <= 16:
            raise ValueError(f"OSD order must lie in 0..16, got {self.order}")


def bit_costs(posteriors) -> np.ndarray:
    """Negative log-likelihood added by setting each bit: log((1-p)/p)."""
    p = np.clip(np.asarray(posteriors, dtype=np.float64), _P_CLIP, 1 - _P_CLIP)
    return np.log1p(-p) - np.log(p)


def osd_postprocess(h, s, posteriors, cfg: OsdConfig = OsdConfig()) -> np.ndarray:
    """Syndrome-consistent error built on the most error-prone information set.

    Columns are ranked by decreasing flip probability (stable on ties) and
    Gaussian elimination picks the first independent ones as the basis.
    Order 0 solves on the basis with every other bit 0. Order ``w`` also
    tries all ``2^w`` settings of the first ``w`` non-basis columns in that
    ranking and keeps the cheapest candidate under ``bit_costs``; the order-0
    answer is among the candidates and wins ties.
    """
    h = h.to_dense() if isinstance(h, BitMatrix) else np.asarray(h, dtype=np.uint8)
    m, n = h.shape
    s = np.asarray(s, dtype=np.uint8)
    post = np.asarray(posteriors, dtype=np.float64)
    if post.shape != (n,):
        raise ValueError(f"need {n} posteriors, got shape {post.shape}")
    if s.shape != (m,):
        raise ValueError(f"syndrome has shape {s.shape}, matrix has {m} rows")
    order = np.argsort(-post, kind="stable")
    aug = np.concatenate([h[:, order], s[:, None]], axis=1)
    reduced, r, pivots = row_reduce(BitMatrix.from_dense(aug), ncols=n)
    red = reduced.to_dense()
    rhs = red[:, n]
    if rhs[r:].any():
        raise InconsistentSyndromeError("syndrome is not in the column space of H")
    pivots = np.asarray(pivots, dtype=np.int64)
    x = np.zeros(n, np.uint8)
    x[pivots] = rhs[:r]

    free = np.setdiff1d(np.arange(n), pivots)[:cfg.order]   # setdiff1d sorts, i.e. keeps the ranking
    if free.size:
        costs = bit_costs(post)[order]
        w = free.size
        patterns = ((np.arange(2 ** w)[:, None] >> np.arange(w)[None, :]) & 1).astype(np.int64)
        basis_bits = (rhs[:r][None, :].astype(np.int64) + patterns @ red[:r, free].T.astype(np.int64)) & 1
        total = basis_bits @ costs[pivots] + patterns @ costs[free]
        best = int(np.argmin(total))          # first minimum, pattern 0 is order 0
        x[pivots] = basis_bits[best]
        x[free] = patterns[best]
    e = np.zeros(n, np.uint8)
    e[order] = x
    return e


class OsdDecoder(CssBpDecoder):
    """BP on each half; halves where BP fails to match the syndrome go through OSD."""

    def __init__(self, code: CssCode, p_f: float, order: int = 0, model: str = "depolarizing",
                 max_iters: int = 32):
        super().__init__(code, p_f, model, max_iters)
        self.osd = OsdConfig(order)
        self.name = f"bp-osd{order}"
        self._hx = code.hz_dense   # checks on the X half
        self._hz = code.hx_dense

    def decode(self, s) -> np.ndarray:
        s_for_x, s_for_z = self._halves(s)
        rx, rz = self.decode_parts(s)
        ex = rx.e_hat if rx.converged else osd_postprocess(self._hx, s_for_x, rx.posteriors, self.osd)
        ez = rz.e_hat if rz.converged else osd_postprocess(self._hz, s_for_z, rz.posteriors, self.osd)
        return np.concatenate([ex, ez])
