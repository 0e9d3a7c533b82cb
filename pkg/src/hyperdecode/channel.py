"""Pauli error sampling, syndromes and syndrome/error datasets.

Error vectors are ``uint8`` arrays of length ``2n``: the X part followed by
the Z part (a Y error sets both). Syndromes have length ``m`` with the X-check
block first, matching the hyperedge order of :mod:`hyperdecode.hypergraph`.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .codes import CssCode

# Seed domains keep training and evaluation randomness disjoint even when
# users pass the same --seed to both.
DOMAIN_TRAIN = 0x7261696E
DOMAIN_EVAL = 0x6576616C

MODELS = ("depolarizing", "independent")


def make_rng(seed: int, domain: int, *substream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(domain, *substream)))


def syndrome(code: CssCode, e) -> np.ndarray:
    """Syndrome ``[H_X e_Z | H_Z e_X]`` of one error (1-d) or a batch (2-d)."""
    e = np.asarray(e, dtype=np.uint8)
    n = code.n
    if e.shape[-1] != 2 * n:
        raise ValueError(f"error vector has length {e.shape[-1]}, code needs {2 * n}")
    ex = e[..., :n].astype(np.int32)
    ez = e[..., n:].astype(np.int32)
    sx = (ez @ code.hx_dense.T.astype(np.int32)) & 1
    sz = (ex @ code.hz_dense.T.astype(np.int32)) & 1
    return np.concatenate([sx, sz], axis=-1).astype(np.uint8)


@dataclass
class ChannelConfig:
    p_f: float
    model: str = "depolarizing"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.p_f < 1.0:
            raise ValueError(f"physical error rate must lie in (0, 1), got {self.p_f}")
        if self.model not in MODELS:
            raise ValueError(f"unknown noise model {self.model!r}; choose from {MODELS}")

    @property
    def component_rate(self) -> float:
        """Marginal flip probability of a single X or Z component."""
        return 2.0 * self.p_f / 3.0 if self.model == "depolarizing" else self.p_f


@dataclass
class TrainDistConfig:
    num_random: Optional[int] = None   # filled from the requested size when None
    decay: float = 1.0
    include_singletons: bool = True
    include_zero: bool = True
    seed: int = 0


@dataclass
class Sample:
    e: np.ndarray
    s: np.ndarray


def sample_errors(n: int, p_f: float, model: str, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` i.i.d. Pauli errors on ``n`` qubits, as a ``(count, 2n)`` array."""
    if model == "depolarizing":
        u = rng.random((count, n))
        third = p_f / 3.0
        ex = (u < third) | ((u >= 2 * third) & (u < p_f))
        ez = (u >= third) & (u < p_f)
    elif model == "independent":
        ex = rng.random((count, n)) < p_f
        ez = rng.random((count, n)) < p_f
    else:
        raise ValueError(f"unknown noise model {model!r}")
    return np.concatenate([ex, ez], axis=1).astype(np.uint8)


def sample_iid(code: CssCode, cfg: ChannelConfig, rng: Optional[np.random.Generator] = None) -> Sample:
    rng = rng if rng is not None else make_rng(cfg.seed, DOMAIN_EVAL)
    e = sample_errors(code.n, cfg.p_f, cfg.model, rng, 1)[0]
    return Sample(e, syndrome(code, e))


def gen_eval_stream(code: CssCode, cfg: ChannelConfig, count: int, chunk: int = 4096) -> Iterator[Sample]:
    """Lazily yield ``count`` i.i.d. samples from the evaluation seed domain."""
    if count < 1:
        raise ValueError("count must be at least 1")
    for errors, synd in eval_batches(code, cfg, count, chunk):
        for e, s in zip(errors, synd):
            yield Sample(e, s)


def eval_batches(code: CssCode, cfg: ChannelConfig, count: int, chunk: int = 4096,
                 first_chunk: int = 0, num_chunks: Optional[int] = None):
    """Evaluation samples in fixed-size chunks, chunk ``c`` drawn from substream ``c``.

    Chunks are independent of how they get split over workers, so any
    partition of ``range(total_chunks)`` reproduces the same samples.
    """
    total = -(-count // chunk)
    stop = total if num_chunks is None else min(total, first_chunk + num_chunks)
    for c in range(first_chunk, stop):
        size = min(chunk, count - c * chunk)
        rng = make_rng(cfg.seed, DOMAIN_EVAL, c)
        errors = sample_errors(code.n, cfg.p_f, cfg.model, rng, size)
        yield errors, syndrome(code, errors)


def weight_distribution(decay: float, max_weight: int) -> np.ndarray:
    """P(t) for t = 1..max_weight, proportional to exp(-decay * t)."""
    t = np.arange(1, max_weight + 1)
    w = np.exp(-decay * (t - 1))
    return w / w.sum()


@dataclass
class Dataset:
    errors: np.ndarray       # (count, 2n) uint8
    syndromes: np.ndarray    # (count, m) uint8
    seed: int = 0
    tag: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.errors.shape[0]

    def __getitem__(self, i) -> Sample:
        return Sample(self.errors[i], self.syndromes[i])

    @property
    def num_nodes(self) -> int:
        return self.errors.shape[1]

    @property
    def num_checks(self) -> int:
        return self.syndromes.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.errors[idx], self.syndromes[idx], self.seed, self.tag, dict(self.meta))

    def check_against(self, code: CssCode) -> None:
        if self.num_nodes != 2 * code.n or self.num_checks != code.m:
            raise ValueError(f"dataset is for 2n={self.num_nodes}, m={self.num_checks}; "
                             f"code has 2n={2 * code.n}, m={code.m}")


def gen_training_set(code: CssCode, cfg: TrainDistConfig, size: int = 25000) -> Dataset:
    """Zero error, every single-component flip, then random errors.

    Random error weights follow P(t) ~ exp(-decay t) on 1..2n and their
    support is uniform without replacement.
    """
    n2 = 2 * code.n
    fixed = int(cfg.include_zero) + (n2 if cfg.include_singletons else 0)
    if size < fixed:
        raise ValueError(f"size {size} too small: zero and singleton block alone need {fixed}")
    num_random = size - fixed if cfg.num_random is None else cfg.num_random
    if fixed + num_random != size:
        raise ValueError(f"num_random={num_random} plus {fixed} fixed samples != size {size}")
    blocks = []
    if cfg.include_zero:
        blocks.append(np.zeros((1, n2), np.uint8))
    if cfg.include_singletons:
        blocks.append(np.eye(n2, dtype=np.uint8))
    rng = make_rng(cfg.seed, DOMAIN_TRAIN)
    if num_random:
        probs = weight_distribution(cfg.decay, n2)
        t = rng.choice(np.arange(1, n2 + 1), size=num_random, p=probs)
        ranks = np.argsort(np.argsort(rng.random((num_random, n2)), axis=1), axis=1)
        blocks.append((ranks < t[:, None]).astype(np.uint8))
    errors = np.concatenate(blocks, axis=0)
    return Dataset(errors, syndrome(code, errors), seed=cfg.seed,
                   tag=f"train:exp:decay={cfg.decay:g}",
                   meta={"decay": cfg.decay, "num_random": num_random})


def gen_eval_set(code: CssCode, cfg: ChannelConfig, count: int) -> Dataset:
    if count < 1:
        raise ValueError("count must be at least 1")
    errs = np.concatenate([e for e, _ in eval_batches(code, cfg, count)], axis=0)
    return Dataset(errs, syndrome(code, errs), seed=cfg.seed,
                   tag=f"eval:{cfg.model}:p={cfg.p_f:g}", meta={"p_f": cfg.p_f})


# --------------------------------------------------------------------------
# QSYN binary format
# --------------------------------------------------------------------------
# header (little-endian): 4s magic | u32 version | u32 2n | u32 m | u64 count
#                         | u64 seed | 32s model tag (ASCII, NUL padded)
# then per sample: packed e (ceil(2n/8) bytes), packed s (ceil(m/8) bytes),
# bits in little order within each byte.

MAGIC = b"QSYN"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQQ32s")


class DatasetFormatError(ValueError):
    pass


def save_dataset(ds: Dataset, path) -> None:
    tag = ds.tag.encode("ascii")
    if len(tag) > 32:
        raise ValueError(f"tag {ds.tag!r} longer than 32 bytes")
    pe = np.packbits(ds.errors, axis=1, bitorder="little")
    ps = np.packbits(ds.syndromes, axis=1, bitorder="little")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, ds.num_nodes, ds.num_checks, len(ds),
                              ds.seed & (2 ** 64 - 1), tag))
        fh.write(np.concatenate([pe, ps], axis=1).tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(f"{path}: file shorter than header")
    magic, version, n2, m, count, seed, tag = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    be, bs = -(-n2 // 8), -(-m // 8)
    body = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size)
    if body.size != count * (be + bs):
        raise DatasetFormatError(f"{path}: expected {count} records, payload has {body.size} bytes")
    body = body.reshape(count, be + bs)
    errors = np.unpackbits(body[:, :be], axis=1, bitorder="little")[:, :n2]
    synd = np.unpackbits(body[:, be:], axis=1, bitorder="little")[:, :m]
    return Dataset(errors, synd, seed=seed, tag=tag.rstrip(b"\0").decode("ascii"))


def export_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "error", "syndrome"])
        for i in range(len(ds)):
            w.writerow([i, "".join(map(str, ds.errors[i])), "".join(map(str, ds.syndromes[i]))])
