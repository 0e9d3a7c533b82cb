"""Time the compiled kernels against their numpy twins on [[129,28]]-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 20]

Both variants are called directly, so the HYPERDECODE_DISABLE_NUMBA flag
has no effect here. The first numba call (compilation) is excluded.
"""
import argparse
import time

import numpy as np

from hyperdecode import channel, codes, gf2, kernels
from hyperdecode.baselines import TannerGraph
from hyperdecode.hypergraph import Hypergraph


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases():
    code = codes.hgp_construct(codes.bundled("hamming7"), codes.bundled("bch15"))
    g = Hypergraph.from_css(code)
    rng = np.random.default_rng(0)
    B, d = 64, 128
    # one training batch worth of incidences
    k = g.node_idx.size
    src_idx = np.tile(g.node_idx, B) + np.repeat(np.arange(B) * g.num_nodes, k)
    dst_idx = np.tile(g.edge_idx, B) + np.repeat(np.arange(B) * g.num_edges, k)
    src = rng.normal(size=(B * g.num_nodes, d)).astype(np.float32)
    coef = rng.random(src_idx.size).astype(np.float32)
    grad = rng.normal(size=(B * g.num_edges, d)).astype(np.float32)
    vals = rng.normal(size=src_idx.size)

    h = code.hz_dense
    words = gf2.BitMatrix.from_dense(np.concatenate([h, rng.integers(0, 2, (h.shape[0], 1), dtype=np.uint8)], 1)).data
    tg = TannerGraph.from_dense(h)
    e = (rng.random(code.n) < 0.02).astype(np.uint8)
    s = tg.syndrome(e)
    prior = np.full(code.n, np.log((1 - 0.01) / 0.01))
    bp_args = (tg.chk_ptr, tg.edge_var, tg.var_ptr, tg.var_edges, s, prior, 32, 0.0, True)
    return {
        "rref_words": lambda f: f(words.copy(), code.n),
        "scatter_add_rows": lambda f: f(src[src_idx], dst_idx, B * g.num_edges),
        "segment_max": lambda f: f(vals, dst_idx[:vals.size], B * g.num_edges),
        "segment_sum": lambda f: f(vals, dst_idx[:vals.size], B * g.num_edges),
        "wscatter": lambda f: f(src, src_idx, dst_idx, coef, B * g.num_edges),
        "wscatter_grad": lambda f: f(grad, src, src_idx, dst_idx, coef),
        "bp": lambda f: f(*bp_args),
        "bp_serial": lambda f: f(*bp_args),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    a = ap.parse_args(argv)
    print(f"{'kernel':<18}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, call in cases().items():
        fast, slow = getattr(kernels, name + "_nb"), getattr(kernels, name + "_np")
        call(fast)   # compile
        tn = best_of(lambda: call(fast), a.repeat)
        tp = best_of(lambda: call(slow), a.repeat)
        print(f"{name:<18}{tn * 1e3:>10.3f}{tp * 1e3:>10.3f}{tp / tn:>8.1f}x")


if __name__ == "__main__":
    main()
