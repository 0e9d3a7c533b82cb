"""Minibatch BCE training shared by the hypergraph decoder and the GNN baseline."""
from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .channel import DOMAIN_TRAIN, Dataset, make_rng
from .hypergraph import Hypergraph

# substreams under the training domain; the dataset generator uses none
_SPLIT_STREAM = 1
_SHUFFLE_STREAM = 2


@dataclass
class TrainConfig:
    epochs: int = 300
    batch: int = 64
    lr: float = 5e-5
    weight_decay: float = 5e-4
    hidden: int = 128
    val_fraction: float = 0.1
    patience: Optional[int] = 30
    seed: int = 0
    p_f: Optional[float] = None        # only used by the LLR feature

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch < 1:
            raise ValueError("batch must be at least 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: Optional[float]
    wall_time_s: float


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_val: Optional[float] = None
    stopped_early: bool = False

    @property
    def final_train_loss(self) -> float:
        return self.history[-1].train_loss


def split_indices(size: int, val_fraction: float, seed: int):
    """Deterministic train/validation split of ``range(size)``."""
    perm = make_rng(seed, DOMAIN_TRAIN, _SPLIT_STREAM).permutation(size)
    n_val = int(round(size * val_fraction))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def batch_loss(model, g: Hypergraph, syndromes, errors, p_f=None) -> T.Tensor:
    probs = model.forward(g, syndromes, p_f)
    return T.bce_loss(probs, np.asarray(errors).reshape(-1, 1))


def evaluate_loss(model, g: Hypergraph, ds: Dataset, batch: int = 256, p_f=None) -> float:
    """Mean per-element BCE over a dataset, no gradient tape."""
    total = 0.0
    for lo in range(0, len(ds), batch):
        syn, err = ds.syndromes[lo:lo + batch], ds.errors[lo:lo + batch]
        total += batch_loss(model, g, syn, err, p_f).item() * err.size
    return total / ds.errors.size


def train(model, g: Hypergraph, ds: Dataset, cfg: TrainConfig, checkpoint=None, log_path=None,
          timing_path=None, progress=None) -> TrainResult:
    """Adam on mean BCE over shuffled minibatches.

    With a validation split the best-validation weights are kept and
    training stops after ``patience`` epochs without improvement. The
    checkpoint (best weights so far) is rewritten after every epoch. The
    loss log holds only deterministic columns; wall-clock times go to the
    separate timing file so that reruns reproduce the log byte for byte.
    """
    if ds.num_nodes != g.num_nodes or ds.num_checks != g.num_edges:
        raise ValueError(f"dataset has 2n={ds.num_nodes}, m={ds.num_checks}; "
                         f"graph has {g.num_nodes} nodes, {g.num_edges} hyperedges")
    train_idx, val_idx = split_indices(len(ds), cfg.val_fraction, cfg.seed)
    if train_idx.size == 0:
        raise ValueError("no training samples left after the validation split")
    tr, va = ds.subset(train_idx), (ds.subset(val_idx) if val_idx.size else None)
    opt = T.Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    shuffle = make_rng(cfg.seed, DOMAIN_TRAIN, _SHUFFLE_STREAM)
    result = TrainResult(model)
    best_state = model.state_dict()
    since_best = 0
    start = time.perf_counter()
    log = _open_log(log_path, ["epoch", "train_loss", "val_loss"])
    timing = _open_log(timing_path, ["epoch", "wall_time_s"])
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = shuffle.permutation(len(tr))
            running = 0.0
            for lo in range(0, len(tr), cfg.batch):
                idx = order[lo:lo + cfg.batch]
                opt.zero_grad()
                with T.Tape() as tape:
                    loss = batch_loss(model, g, tr.syndromes[idx], tr.errors[idx], cfg.p_f)
                tape.backward(loss)
                opt.step()
                running += loss.item() * idx.size
            train_loss = running / len(tr)
            val_loss = evaluate_loss(model, g, va, p_f=cfg.p_f) if va is not None else None
            rec = EpochRecord(epoch, train_loss, val_loss, time.perf_counter() - start)
            result.history.append(rec)
            score = val_loss if val_loss is not None else train_loss
            if result.best_val is None or score < result.best_val:
                result.best_val, result.best_epoch = score, epoch
                best_state = model.state_dict()
                since_best = 0
            else:
                since_best += 1
            if checkpoint is not None:
                _save_state(model, best_state, checkpoint, cfg, result)
            if log:
                log[1].writerow([epoch, repr(train_loss), "" if val_loss is None else repr(val_loss)])
                log[0].flush()
            if timing:
                timing[1].writerow([epoch, f"{rec.wall_time_s:.3f}"])
                timing[0].flush()
            if progress is not None:
                progress(rec)
            if cfg.patience is not None and va is not None and since_best >= cfg.patience:
                result.stopped_early = True
                break
    finally:
        for h in (log, timing):
            if h:
                h[0].close()
    model.load_state_dict(best_state)
    return result


def _open_log(path, header):
    if path is None:
        return None
    fh = open(path, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    return fh, w


def _save_state(model, state, path, cfg: TrainConfig, result: TrainResult) -> None:
    current = model.state_dict()
    model.load_state_dict(state)
    try:
        model.save(path, extra={"train": asdict(cfg), "best_epoch": result.best_epoch})
    finally:
        model.load_state_dict(current)
