"""Monte Carlo logical error rates, Wilson intervals and pseudo-thresholds."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelConfig, eval_batches
from .codes import CssCode

DEFAULT_PF = (3e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2)
Z95 = 1.959963984540054


# --------------------------------------------------------------------------
# Logical failure test
# --------------------------------------------------------------------------

def _words(bits: np.ndarray) -> np.ndarray:
    """Pack rows of bits into uint64 words, little-endian within each word."""
    bits = np.atleast_2d(bits).astype(np.uint8)
    pad = (-bits.shape[1]) % 64
    if pad:
        bits = np.concatenate([bits, np.zeros((bits.shape[0], pad), np.uint8)], axis=1)
    return np.packbits(bits, axis=1, bitorder="little").view("<u8")


class LogicalChecker:
    """Classifies residual errors ``e ^ e_hat`` as harmless (stabilizer) or not.

    A residual is harmless when its syndrome is zero and its X part lies in
    rowspace(H_X) and its Z part in rowspace(H_Z). With a zero syndrome the
    X part already lies in ker(H_Z), so it is a stabilizer exactly when it
    commutes with every Z logical; the test uses that pairing form.
    """

    def __init__(self, code: CssCode):
        self.code = code
        self.n = code.n
        lx, lz = code.logicals
        self.lx = lx.to_dense().astype(np.int64)
        self.lz = lz.to_dense().astype(np.int64)
        self.hx = code.hx_dense.astype(np.int64)
        self.hz = code.hz_dense.astype(np.int64)

    def syndrome_ok(self, r: np.ndarray) -> np.ndarray:
        rx, rz = r[:, :self.n].astype(np.int64), r[:, self.n:].astype(np.int64)
        return ~(((rz @ self.hx.T) & 1).any(axis=1) | ((rx @ self.hz.T) & 1).any(axis=1))

    def logical_flips(self, r: np.ndarray) -> np.ndarray:
        """(count, 2k) bits: which logical Z (for the X part) and X (Z part) anticommute."""
        rx, rz = r[:, :self.n].astype(np.int64), r[:, self.n:].astype(np.int64)
        return np.concatenate([(rx @ self.lz.T) & 1, (rz @ self.lx.T) & 1], axis=1).astype(np.uint8)

    def failures(self, e: np.ndarray, e_hat: np.ndarray) -> np.ndarray:
        e, e_hat = np.atleast_2d(e), np.atleast_2d(e_hat)
        if e.shape != e_hat.shape or e.shape[1] != 2 * self.n:
            raise ValueError(f"need matching (count, {2 * self.n}) arrays, got {e.shape} and {e_hat.shape}")
        r = e ^ e_hat
        return ~self.syndrome_ok(r) | self.logical_flips(r).any(axis=1)

    def failed_qubits(self, e: np.ndarray, e_hat: np.ndarray) -> np.ndarray:
        """Logical qubits in error per trial; a syndrome mismatch counts as all k."""
        r = np.atleast_2d(e) ^ np.atleast_2d(e_hat)
        flips = self.logical_flips(r)
        k = self.code.k
        per = (flips[:, :k] | flips[:, k:]).sum(axis=1)
        return np.where(self.syndrome_ok(r), per, k)


def is_logical_error(code: CssCode, e, e_hat) -> bool:
    """True unless the residual is a stabilizer (zero syndrome, trivial logical class)."""
    e = np.asarray(e, dtype=np.uint8)
    e_hat = np.asarray(e_hat, dtype=np.uint8)
    if e.shape != (2 * code.n,) or e_hat.shape != (2 * code.n,):
        raise ValueError(f"error vectors must have length {2 * code.n}")
    return bool(_checker(code).failures(e[None], e_hat[None])[0])


_CHECKERS: dict = {}


def _checker(code: CssCode) -> LogicalChecker:
    chk = _CHECKERS.get(id(code))
    if chk is None or chk.code is not code:
        chk = _CHECKERS[id(code)] = LogicalChecker(code)
    return chk


# --------------------------------------------------------------------------
# LER points and sweeps
# --------------------------------------------------------------------------

def wilson_interval(failures: int, trials: int, z: float = Z95):
    if trials <= 0:
        raise ValueError("trials must be positive")
    phat = failures / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if failures == 0 else max(0.0, centre - half)
    hi = 1.0 if failures == trials else min(1.0, centre + half)
    return lo, hi


@dataclass
class LerPoint:
    p_f: float
    trials: int
    logical_failures: int
    ci_low: float = 0.0
    ci_high: float = 1.0
    per_qubit: bool = False
    k: int = 1

    def __post_init__(self):
        units = self.trials * (self.k if self.per_qubit else 1)
        self.ci_low, self.ci_high = wilson_interval(self.logical_failures, units)

    @property
    def ler(self) -> float:
        return self.logical_failures / (self.trials * (self.k if self.per_qubit else 1))


@dataclass
class SweepReport:
    decoder: str
    points: list = field(default_factory=list)
    pseudo_threshold: Optional[float] = None
    diagnostic: str = ""


class OracleDecoder:
    """Returns the true error; the harness hands it the errors alongside the syndromes."""

    name = "oracle"
    needs_errors = True

    def decode_batch(self, syndromes, errors=None):
        if errors is None:
            raise ValueError("the oracle decoder needs the sampled errors")
        return np.array(errors, copy=True)


class IdentityDecoder:
    name = "identity"

    def __init__(self, num_nodes: int):
        self.num_nodes = num_nodes

    def decode_batch(self, syndromes):
        return np.zeros((np.atleast_2d(syndromes).shape[0], self.num_nodes), np.uint8)


def _decode(decoder, syndromes, errors, cache: Optional[dict]):
    if getattr(decoder, "needs_errors", False):
        return decoder.decode_batch(syndromes, errors)
    if cache is None:
        return decoder.decode_batch(syndromes)
    # most low-noise syndromes repeat (zero above all); decode each distinct one once
    uniq, inverse = np.unique(syndromes, axis=0, return_inverse=True)
    keys = [u.tobytes() for u in uniq]
    todo = [i for i, key in enumerate(keys) if key not in cache]
    if todo:
        out = decoder.decode_batch(uniq[todo])
        for i, row in zip(todo, out):
            cache[keys[i]] = row
    return np.stack([cache[key] for key in keys])[inverse.reshape(-1)]


def _count_chunks(code, decoder, cfg, trials, chunk, first, count, per_qubit, use_cache):
    checker = _checker(code)
    cache = {} if use_cache else None
    fails = 0
    for errors, syn in eval_batches(code, cfg, trials, chunk, first, count):
        e_hat = _decode(decoder, syn, errors, cache)
        if per_qubit:
            fails += int(checker.failed_qubits(errors, e_hat).sum())
        else:
            fails += int(checker.failures(errors, e_hat).sum())
    return fails


def _worker(args):
    return _count_chunks(*args)


def measure_ler(code: CssCode, decoder, p_f: float, trials: int = 100_000, seed: int = 0,
                model: str = "depolarizing", workers: int = 1, chunk: int = 4096,
                per_qubit: bool = False, cache: bool = True) -> LerPoint:
    """Logical error rate over ``trials`` i.i.d. samples.

    Samples come in fixed chunks, chunk ``c`` from its own seeded substream,
    so the count does not depend on ``workers``. Decoders must be pure
    functions of the syndrome for the syndrome cache to be valid.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    cfg = ChannelConfig(p_f, model, seed)
    total_chunks = -(-trials // chunk)
    if workers <= 1 or total_chunks == 1:
        fails = _count_chunks(code, decoder, cfg, trials, chunk, 0, total_chunks, per_qubit, cache)
    else:
        parts = np.array_split(np.arange(total_chunks), min(workers, total_chunks))
        jobs = [(code, decoder, cfg, trials, chunk, int(p[0]), len(p), per_qubit, cache) for p in parts if len(p)]
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            fails = sum(pool.map(_worker, jobs))
    return LerPoint(p_f, trials, fails, per_qubit=per_qubit, k=code.k)


def sweep(code: CssCode, decoder, pf_list: Sequence[float] = DEFAULT_PF, trials: int = 100_000, seed: int = 0,
          name: Optional[str] = None, **kw) -> SweepReport:
    """``decoder`` is either a decoder or a factory ``p_f -> decoder`` (BP needs the prior)."""
    points = []
    for p in pf_list:
        dec = decoder(p) if callable(decoder) and not hasattr(decoder, "decode_batch") else decoder
        points.append(measure_ler(code, dec, p, trials, seed, **kw))
    label = name or getattr(decoder, "name", "decoder")
    report = SweepReport(label, points)
    report.pseudo_threshold, report.diagnostic = pseudo_threshold_with_reason(report)
    return report


def pseudo_threshold_with_reason(report: SweepReport):
    pts = sorted(report.points, key=lambda p: p.p_f)
    if len(pts) < 2:
        return None, "need at least two points"
    for a, b in zip(pts, pts[1:]):
        da, db = a.ler - a.p_f, b.ler - b.p_f
        if da == 0:
            return a.p_f, "exact crossing"
        if da * db < 0:
            if a.ler <= 0 or b.ler <= 0:
                return None, f"crossing between {a.p_f:g} and {b.p_f:g} involves zero LER; log interpolation undefined"
            # log LER = log LER_a + slope (log p - log p_a); solve log LER = log p
            la, lb = math.log(a.p_f), math.log(b.p_f)
            slope = (math.log(b.ler) - math.log(a.ler)) / (lb - la)
            if slope == 1.0:
                return None, "LER parallel to the identity line"
            x = (math.log(a.ler) - slope * la) / (1.0 - slope)
            return math.exp(x), f"crossing between {a.p_f:g} and {b.p_f:g}"
    if pts[-1].ler - pts[-1].p_f == 0:
        return pts[-1].p_f, "exact crossing"
    where = "above" if all(p.ler > p.p_f for p in pts) else "below"
    return None, f"LER stays {where} the identity line over [{pts[0].p_f:g}, {pts[-1].p_f:g}]"


def find_pseudo_threshold(report: SweepReport) -> Optional[float]:
    """p_f where LER(p_f) = p_f by log-log interpolation; None without a straddle."""
    return pseudo_threshold_with_reason(report)[0]


# --------------------------------------------------------------------------
# Report files
# --------------------------------------------------------------------------

COLUMNS = ["decoder", "p_f", "trials", "failures", "ler", "ci_low", "ci_high"]


def report_rows(reports: Sequence[SweepReport]):
    for rep in reports:
        for p in rep.points:
            yield [rep.decoder, repr(p.p_f), p.trials, p.logical_failures, repr(p.ler), repr(p.ci_low), repr(p.ci_high)]


def write_csv(reports: Sequence[SweepReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        w.writerows(report_rows(reports))


def write_gnuplot(reports: Sequence[SweepReport], path) -> None:
    """Whitespace columns, one block per decoder separated by two blank lines."""
    with open(path, "w") as fh:
        fh.write("# " + " ".join(COLUMNS[1:]) + "\n")
        for rep in reports:
            fh.write(f"# decoder {rep.decoder}\n")
            for p in rep.points:
                fh.write(f"{p.p_f:.6g} {p.trials} {p.logical_failures} {p.ler:.6g} {p.ci_low:.6g} {p.ci_high:.6g}\n")
            fh.write("\n\n")
