"""Hot inner loops, each with a compiled and a vectorised numpy variant.

The public names at the bottom are bound to one variant or the other by
:mod:`hyperdecode._accel`. Tests call the ``*_nb`` and ``*_np`` variants
directly so that both stay correct regardless of the environment flag.
"""
import numpy as np

from ._accel import njit, pick

_ONE = np.uint64(1)


# --------------------------------------------------------------------------
# GF(2) elimination on packed 64-bit words
# --------------------------------------------------------------------------

@njit
def rref_words_nb(data, ncols):
    rows, words = data.shape
    pivots = np.empty(min(rows, ncols), np.int64)
    rank = 0
    for c in range(ncols):
        if rank == rows:
            break
        w = c >> 6
        bit = _ONE << np.uint64(c & 63)
        p = -1
        for r in range(rank, rows):
            if data[r, w] & bit:
                p = r
                break
        if p < 0:
            continue
        if p != rank:
            for k in range(words):
                tmp = data[rank, k]
                data[rank, k] = data[p, k]
                data[p, k] = tmp
        for r in range(rows):
            if r != rank and (data[r, w] & bit):
                for k in range(words):
                    data[r, k] ^= data[rank, k]
        pivots[rank] = c
        rank += 1
    return rank, pivots[:rank].copy()


def rref_words_np(data, ncols):
    rows = data.shape[0]
    pivots = []
    rank = 0
    for c in range(ncols):
        if rank == rows:
            break
        w, b = divmod(c, 64)
        b = np.uint64(b)
        nz = np.flatnonzero((data[rank:, w] >> b) & _ONE)
        if nz.size == 0:
            continue
        p = rank + nz[0]
        if p != rank:
            data[[rank, p]] = data[[p, rank]]
        hit = ((data[:, w] >> b) & _ONE).astype(bool)
        hit[rank] = False
        data[hit] ^= data[rank]
        pivots.append(c)
        rank += 1
    return rank, np.asarray(pivots, dtype=np.int64)


# --------------------------------------------------------------------------
# Row scatter / segment reductions used by the tensor engine
# --------------------------------------------------------------------------

@njit
def scatter_add_rows_nb(src, index, n_out):
    out = np.zeros((n_out, src.shape[1]), src.dtype)
    for k in range(src.shape[0]):
        r = index[k]
        for c in range(src.shape[1]):
            out[r, c] += src[k, c]
    return out


def scatter_add_rows_np(src, index, n_out):
    out = np.zeros((n_out, src.shape[1]), src.dtype)
    np.add.at(out, index, src)
    return out


@njit
def segment_max_nb(values, seg, nseg):
    out = np.full(nseg, -np.inf, values.dtype)
    for k in range(values.shape[0]):
        if values[k] > out[seg[k]]:
            out[seg[k]] = values[k]
    return out


def segment_max_np(values, seg, nseg):
    out = np.full(nseg, -np.inf, values.dtype)
    np.maximum.at(out, seg, values)
    return out


@njit
def segment_sum_nb(values, seg, nseg):
    out = np.zeros(nseg, values.dtype)
    for k in range(values.shape[0]):
        out[seg[k]] += values[k]
    return out


def segment_sum_np(values, seg, nseg):
    return np.bincount(seg, weights=values, minlength=nseg).astype(values.dtype, copy=False)


# --------------------------------------------------------------------------
# Syndrome belief propagation (flooding, sum-product, log domain)
# --------------------------------------------------------------------------
# Edge layout: edges are numbered check-major. ``chk_ptr`` delimits the
# edges of each check, ``edge_var`` names their variable. ``var_ptr`` and
# ``var_edges`` give the same edges grouped by variable.

_TANH_CLIP = 1.0 - 1e-15
_LLR_CLIP = 60.0


@njit
def bp_nb(chk_ptr, edge_var, var_ptr, var_edges, syndrome, prior_llr,
          max_iters, damping, early_stop):
    m = chk_ptr.shape[0] - 1
    n = var_ptr.shape[0] - 1
    n_edges = edge_var.shape[0]
    q = np.empty(n_edges)
    r = np.zeros(n_edges)
    t = np.empty(n_edges)
    post = prior_llr.copy()
    hard = np.zeros(n, np.uint8)
    for e in range(n_edges):
        q[e] = prior_llr[edge_var[e]]
    for v in range(n):
        hard[v] = 1 if post[v] < 0 else 0
    if _syndrome_ok(chk_ptr, edge_var, hard, syndrome) and early_stop:
        return hard, post, 0, True
    it = 0
    converged = False
    for it in range(1, max_iters + 1):
        for e in range(n_edges):
            t[e] = np.tanh(0.5 * q[e])
        for c in range(m):
            lo = chk_ptr[c]
            hi = chk_ptr[c + 1]
            sgn = -1.0 if syndrome[c] else 1.0
            # prefix/suffix products exclude each edge without dividing
            acc = 1.0
            for e in range(lo, hi):
                r[e] = acc
                acc *= t[e]
            acc = 1.0
            for e in range(hi - 1, lo - 1, -1):
                prod = r[e] * acc
                acc *= t[e]
                if prod > _TANH_CLIP:
                    prod = _TANH_CLIP
                elif prod < -_TANH_CLIP:
                    prod = -_TANH_CLIP
                r[e] = sgn * 2.0 * np.arctanh(prod)
        for v in range(n):
            total = prior_llr[v]
            for k in range(var_ptr[v], var_ptr[v + 1]):
                total += r[var_edges[k]]
            post[v] = total
            hard[v] = 1 if total < 0 else 0
            for k in range(var_ptr[v], var_ptr[v + 1]):
                e = var_edges[k]
                new = total - r[e]
                if new > _LLR_CLIP:
                    new = _LLR_CLIP
                elif new < -_LLR_CLIP:
                    new = -_LLR_CLIP
                q[e] = damping * q[e] + (1.0 - damping) * new
        converged = _syndrome_ok(chk_ptr, edge_var, hard, syndrome)
        if converged and early_stop:
            break
    return hard, post, it, converged


@njit
def _syndrome_ok(chk_ptr, edge_var, hard, syndrome):
    for c in range(chk_ptr.shape[0] - 1):
        par = 0
        for e in range(chk_ptr[c], chk_ptr[c + 1]):
            par ^= hard[edge_var[e]]
        if par != syndrome[c]:
            return False
    return True


def bp_np(chk_ptr, edge_var, var_ptr, var_edges, syndrome, prior_llr,
          max_iters, damping, early_stop):
    m = chk_ptr.shape[0] - 1
    n_edges = edge_var.shape[0]
    edge_chk = np.repeat(np.arange(m), np.diff(chk_ptr))
    sgn = np.where(syndrome.astype(bool), -1.0, 1.0)[edge_chk]
    syn = syndrome.astype(np.int64)

    def satisfied(hard):
        par = np.bincount(edge_chk, weights=hard[edge_var], minlength=m).astype(np.int64) & 1
        return bool(np.array_equal(par, syn))

    q = prior_llr[edge_var].astype(np.float64)
    r = np.zeros(n_edges)
    post = prior_llr.astype(np.float64).copy()
    hard = (post < 0).astype(np.uint8)
    if early_stop and satisfied(hard):
        return hard, post, 0, True
    it = 0
    converged = False
    for it in range(1, max_iters + 1):
        t = np.tanh(0.5 * q)
        # leave-one-out product as sign parity times exp(sum log|t|)
        mag = np.log(np.maximum(np.abs(t), 1e-300))
        neg = (t < 0).astype(np.int64)
        zero = np.abs(t) < 1e-300
        tot_mag = np.bincount(edge_chk, weights=mag, minlength=m)[edge_chk]
        tot_neg = np.bincount(edge_chk, weights=neg, minlength=m).astype(np.int64)[edge_chk]
        tot_zero = np.bincount(edge_chk, weights=zero, minlength=m).astype(np.int64)[edge_chk]
        excl = np.exp(tot_mag - mag) * np.where((tot_neg - neg) & 1, -1.0, 1.0)
        excl = np.where(tot_zero - zero > 0, 0.0, excl)
        excl = np.clip(excl, -_TANH_CLIP, _TANH_CLIP)
        r = sgn * 2.0 * np.arctanh(excl)
        post = prior_llr + np.bincount(edge_var, weights=r, minlength=prior_llr.shape[0])
        hard = (post < 0).astype(np.uint8)
        new = np.clip(post[edge_var] - r, -_LLR_CLIP, _LLR_CLIP)
        q = damping * q + (1.0 - damping) * new
        converged = satisfied(hard)
        if converged and early_stop:
            break
    return hard, post, it, converged


# Serial (layered) schedule: checks are visited in index order and each one
# immediately refreshes the posteriors of its variables, so later checks in
# the same sweep already see the update. Damping mixes old and new
# check-to-variable messages.

@njit
def bp_serial_nb(chk_ptr, edge_var, var_ptr, var_edges, syndrome, prior_llr,
                 max_iters, damping, early_stop):
    m = chk_ptr.shape[0] - 1
    n = var_ptr.shape[0] - 1
    r = np.zeros(edge_var.shape[0])
    post = prior_llr.copy()
    hard = np.zeros(n, np.uint8)
    for v in range(n):
        hard[v] = 1 if post[v] < 0 else 0
    if _syndrome_ok(chk_ptr, edge_var, hard, syndrome) and early_stop:
        return hard, post, 0, True
    width = 0
    for c in range(m):
        width = max(width, chk_ptr[c + 1] - chk_ptr[c])
    q = np.empty(width)
    t = np.empty(width)
    it = 0
    converged = False
    for it in range(1, max_iters + 1):
        for c in range(m):
            lo = chk_ptr[c]
            hi = chk_ptr[c + 1]
            sgn = -1.0 if syndrome[c] else 1.0
            for k in range(hi - lo):
                val = post[edge_var[lo + k]] - r[lo + k]
                if val > _LLR_CLIP:
                    val = _LLR_CLIP
                elif val < -_LLR_CLIP:
                    val = -_LLR_CLIP
                q[k] = val
                t[k] = np.tanh(0.5 * val)
            for k in range(hi - lo):
                prod = 1.0
                for j in range(hi - lo):
                    if j != k:
                        prod *= t[j]
                if prod > _TANH_CLIP:
                    prod = _TANH_CLIP
                elif prod < -_TANH_CLIP:
                    prod = -_TANH_CLIP
                e = lo + k
                r[e] = damping * r[e] + (1.0 - damping) * sgn * 2.0 * np.arctanh(prod)
                post[edge_var[e]] = q[k] + r[e]
        for v in range(n):
            hard[v] = 1 if post[v] < 0 else 0
        converged = _syndrome_ok(chk_ptr, edge_var, hard, syndrome)
        if converged and early_stop:
            break
    return hard, post, it, converged


def bp_serial_np(chk_ptr, edge_var, var_ptr, var_edges, syndrome, prior_llr,
                 max_iters, damping, early_stop):
    m = chk_ptr.shape[0] - 1
    edge_chk = np.repeat(np.arange(m), np.diff(chk_ptr))
    syn = syndrome.astype(np.int64)

    def satisfied(hard):
        par = np.bincount(edge_chk, weights=hard[edge_var], minlength=m).astype(np.int64) & 1
        return bool(np.array_equal(par, syn))

    r = np.zeros(edge_var.shape[0])
    post = prior_llr.astype(np.float64).copy()
    hard = (post < 0).astype(np.uint8)
    if early_stop and satisfied(hard):
        return hard, post, 0, True
    it = 0
    converged = False
    for it in range(1, max_iters + 1):
        for c in range(m):
            sl = slice(chk_ptr[c], chk_ptr[c + 1])
            vs = edge_var[sl]
            q = np.clip(post[vs] - r[sl], -_LLR_CLIP, _LLR_CLIP)
            t = np.tanh(0.5 * q)
            # leave-one-out products by prefix and suffix cumulative products
            pre = np.concatenate([[1.0], np.cumprod(t[:-1])])
            suf = np.concatenate([np.cumprod(t[::-1][:-1])[::-1], [1.0]])
            prod = np.clip(pre * suf, -_TANH_CLIP, _TANH_CLIP)
            sgn = -1.0 if syndrome[c] else 1.0
            r[sl] = damping * r[sl] + (1.0 - damping) * sgn * 2.0 * np.arctanh(prod)
            post[vs] = q + r[sl]
        hard = (post < 0).astype(np.uint8)
        converged = satisfied(hard)
        if converged and early_stop:
            break
    return hard, post, it, converged


# --------------------------------------------------------------------------
# Weighted scatter: out[dst[k]] += coef[k] * src[src_idx[k]]
# --------------------------------------------------------------------------

@njit
def wscatter_nb(src, src_idx, dst_idx, coef, n_out):
    cols = src.shape[1]
    out = np.zeros((n_out, cols), src.dtype)
    for k in range(src_idx.shape[0]):
        d = dst_idx[k]
        s = src_idx[k]
        c = coef[k]
        for j in range(cols):
            out[d, j] += c * src[s, j]
    return out


@njit
def wscatter_grad_nb(g, src, src_idx, dst_idx, coef):
    cols = src.shape[1]
    gsrc = np.zeros_like(src)
    gcoef = np.zeros(src_idx.shape[0], src.dtype)
    for k in range(src_idx.shape[0]):
        d = dst_idx[k]
        s = src_idx[k]
        c = coef[k]
        acc = 0.0
        for j in range(cols):
            acc += g[d, j] * src[s, j]
            gsrc[s, j] += c * g[d, j]
        gcoef[k] = acc
    return gsrc, gcoef


def wscatter_np(src, src_idx, dst_idx, coef, n_out):
    out = np.zeros((n_out, src.shape[1]), src.dtype)
    np.add.at(out, dst_idx, coef[:, None] * src[src_idx])
    return out


def wscatter_grad_np(g, src, src_idx, dst_idx, coef):
    gd = g[dst_idx]
    gcoef = (gd * src[src_idx]).sum(axis=1).astype(src.dtype)
    gsrc = np.zeros_like(src)
    np.add.at(gsrc, src_idx, coef[:, None] * gd)
    return gsrc, gcoef


rref_words = pick(rref_words_nb, rref_words_np)
scatter_add_rows = pick(scatter_add_rows_nb, scatter_add_rows_np)
segment_max = pick(segment_max_nb, segment_max_np)
segment_sum = pick(segment_sum_nb, segment_sum_np)
bp_run = pick(bp_nb, bp_np)
bp_serial_run = pick(bp_serial_nb, bp_serial_np)
wscatter = pick(wscatter_nb, wscatter_np)
wscatter_grad = pick(wscatter_grad_nb, wscatter_grad_np)
