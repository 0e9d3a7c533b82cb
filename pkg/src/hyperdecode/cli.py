"""Command-line entry point: build codes, generate data, train, sweep.

Every run writes a JSON manifest beside its outputs holding the resolved
arguments, the SHA-256 of each input and output file, and nothing
time-dependent. ``hyperdecode rerun MANIFEST`` executes the same run again
and, with ``--check``, compares the fresh outputs against the recorded hashes.

Exit codes: 0 success, 1 internal error or failed check, 2 usage/input error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, channel, codes, evaluation, tensor
from .baselines import CssBpDecoder, OsdDecoder
from .baselines.gnn import TannerGnnModel
from .hypergraph import Hypergraph
from .hypernq import HyperNQDecoder, HyperNQModel
from .training import TrainConfig, train

NEURAL = ("hypernq", "gnn")
DECODERS = ("bp", "bp-osd0", "bp-osd4") + NEURAL


class UsageError(Exception):
    pass


# input problems that map to exit code 2
INPUT_ERRORS = (UsageError, FileNotFoundError, IsADirectoryError, codes.AlistError, codes.CodeError,
                channel.DatasetFormatError, tensor.CheckpointError, ValueError)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def manifest_path(out: Path) -> Path:
    return out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")


def write_manifest(command: str, args: dict, inputs, outputs, unhashed=()) -> Path:
    """``outputs[0]`` decides where the manifest goes."""
    doc = {
        "tool": "hyperdecode",
        "version": __version__,
        "command": command,
        "args": args,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {str(p): sha256(p) for p in outputs if Path(p).is_file()},
        "unhashed_outputs": [str(p) for p in unhashed],
    }
    path = manifest_path(Path(outputs[0]))
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _abs(p) -> str:
    return str(Path(p).resolve())


# --------------------------------------------------------------------------
# Subcommands. Each takes the resolved argument dict and returns
# (inputs, outputs, unhashed outputs).
# --------------------------------------------------------------------------

def _classical(name: str) -> codes.ClassicalCode:
    path = Path(name)
    if path.exists():
        return codes.load_alist(path)
    if name in codes.BUNDLED:
        return codes.bundled(name)
    raise FileNotFoundError(f"no such alist file: {name}")


def run_build_code(a: dict):
    c1, c2 = _classical(a["h1"]), _classical(a["h2"])
    code = codes.hgp_construct(c1, c2)
    report = codes.validate_css(code)
    print(report.summary())   # first line reads [[n, k]]
    if not report.ok:
        raise UsageError("construction violates the CSS condition")
    out = Path(a["out"])
    codes.save_css(code, out)
    inputs = [p for p in (a["h1"], a["h2"]) if Path(p).exists()]
    return inputs, [out, out / "hx.alist", out / "hz.alist", out / "meta.txt"], []


def run_gen_data(a: dict):
    code = codes.load_css(a["code"])
    if a["count"] < 1:
        raise UsageError("--count must be at least 1")
    if a["kind"] == "train":
        cfg = channel.TrainDistConfig(decay=a["decay"], seed=a["seed"])
        ds = channel.gen_training_set(code, cfg, size=a["count"])
    else:
        if a["pf"] is None:
            raise UsageError("--pf is required for --kind eval")
        ds = channel.gen_eval_set(code, channel.ChannelConfig(a["pf"], a["noise"], a["seed"]), a["count"])
    out = Path(a["out"])
    channel.save_dataset(ds, out)
    outputs = [out]
    if a["csv"]:
        channel.export_csv(ds, a["csv"])
        outputs.append(Path(a["csv"]))
    print(f"{len(ds)} samples, 2n={ds.num_nodes}, m={ds.num_checks} -> {out}")
    return _code_files(a["code"]), outputs, []


def _code_files(directory):
    d = Path(directory)
    return [p for p in (d / "hx.alist", d / "hz.alist", d / "meta.txt") if p.exists()]


def run_train(a: dict):
    code = codes.load_css(a["code"])
    g = Hypergraph.from_css(code)
    ds = channel.load_dataset(a["data"])
    ds.check_against(code)
    cfg = TrainConfig(epochs=a["epochs"], batch=a["batch"], lr=a["lr"], weight_decay=a["wd"], hidden=a["hidden"],
                      val_fraction=a["val_fraction"], patience=a["patience"], seed=a["seed"])
    print(f"decoder={a['decoder']} lr={cfg.lr:g} wd={cfg.weight_decay:g} batch={cfg.batch} hidden={cfg.hidden} "
          f"epochs={cfg.epochs} seed={cfg.seed}")
    if a["decoder"] == "hypernq":
        model = HyperNQModel(g.num_nodes, hidden=cfg.hidden, seed=cfg.seed)
    else:
        model = TannerGnnModel(g.num_nodes, hidden=cfg.hidden, layers=a["layers"], seed=cfg.seed)
    out = Path(a["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    log = out.with_name(out.stem + ".loss.csv")
    timing = out.with_name(out.stem + ".timing.csv")
    res = train(model, g, ds, cfg, checkpoint=out, log_path=log, timing_path=timing,
                progress=lambda r: print(f"epoch {r.epoch} train_loss {r.train_loss:.6g} val_loss "
                                         f"{'-' if r.val_loss is None else format(r.val_loss, '.6g')}", flush=True))
    model.save(out, extra={"train": vars(cfg).copy(), "best_epoch": res.best_epoch})
    print(f"best epoch {res.best_epoch}, loss {res.best_val:.6g} -> {out}")
    return _code_files(a["code"]) + [Path(a["data"])], [out, log], [timing]


def _load_neural(kind: str, path):
    return HyperNQModel.load(path) if kind == "hypernq" else TannerGnnModel.load(path)


def _factory(a: dict, code, g):
    kind = a["decoder"]
    if kind in NEURAL:
        if not a["ckpt"]:
            raise UsageError(f"--ckpt is required for decoder {kind}")
        model = _load_neural(kind, a["ckpt"])
        if model.num_nodes != g.num_nodes:
            raise UsageError(f"checkpoint is for {model.num_nodes} nodes, code has {g.num_nodes}")
        dec = HyperNQDecoder(model, g, name=kind)
        return lambda p: dec
    if kind == "bp":
        return lambda p: CssBpDecoder(code, p, a["noise"])
    order = int(kind[len("bp-osd"):])
    return lambda p: OsdDecoder(code, p, order, a["noise"])


def run_sweep(a: dict):
    code = codes.load_css(a["code"])
    g = Hypergraph.from_css(code)
    try:
        pf = [float(x) for x in a["pf_list"].split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad --pf-list {a['pf_list']!r}") from None
    if not pf:
        raise UsageError("--pf-list is empty")
    factory = _factory(a, code, g)
    rep = evaluation.sweep(code, factory, pf, trials=a["trials"], seed=a["seed"], name=a["decoder"],
                           model=a["noise"], workers=a["workers"], per_qubit=a["per_qubit"])
    for p in rep.points:
        print(f"{a['decoder']} p_f={p.p_f:g} ler={p.ler:.4g} [{p.ci_low:.3g}, {p.ci_high:.3g}] "
              f"({p.logical_failures}/{p.trials})")
    if rep.pseudo_threshold is None:
        print(f"pseudo-threshold: none ({rep.diagnostic})")
    else:
        print(f"pseudo-threshold: {rep.pseudo_threshold:.4g} ({rep.diagnostic})")
    out = Path(a["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    dat = out.with_suffix(".dat")
    evaluation.write_csv([rep], out)
    evaluation.write_gnuplot([rep], dat)
    inputs = _code_files(a["code"]) + ([Path(a["ckpt"])] if a.get("ckpt") else [])
    return inputs, [out, dat], []


COMMANDS = {"build-code": run_build_code, "gen-data": run_gen_data, "train": run_train, "sweep": run_sweep}


def execute(command: str, args: dict) -> Path:
    inputs, outputs, unhashed = COMMANDS[command](args)
    return write_manifest(command, args, inputs, outputs, unhashed)


def rerun(manifest: Path, out_dir=None, check: bool = False) -> int:
    doc = json.loads(Path(manifest).read_text())
    if doc.get("tool") != "hyperdecode" or doc.get("command") not in COMMANDS:
        raise UsageError(f"{manifest} is not a hyperdecode manifest")
    for path, digest in doc["inputs"].items():
        if not Path(path).is_file() or sha256(path) != digest:
            raise UsageError(f"input {path} is missing or changed since the recorded run")
    args = dict(doc["args"])
    if out_dir is not None:
        args = _redirect(doc["command"], args, Path(out_dir))
    new_manifest = execute(doc["command"], args)
    if not check:
        return 0
    fresh = json.loads(new_manifest.read_text())["outputs"]
    old_dir = {Path(p).name: h for p, h in doc["outputs"].items()}
    new_dir = {Path(p).name: h for p, h in fresh.items()}
    diff = sorted(k for k in old_dir.keys() | new_dir.keys() if old_dir.get(k) != new_dir.get(k))
    if diff:
        print("outputs differ: " + ", ".join(diff))
        return 1
    print(f"identical: {len(new_dir)} output files match {manifest}")
    return 0


def _redirect(command: str, args: dict, out_dir: Path) -> dict:
    args = dict(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    args["out"] = _abs(out_dir / Path(args["out"]).name)
    if command == "gen-data" and args.get("csv"):
        args["csv"] = _abs(out_dir / Path(args["csv"]).name)
    return args


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hyperdecode", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"hyperdecode {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-code", help="hypergraph product of two classical codes")
    p.add_argument("--h1", required=True, help="alist file (or a bundled code name)")
    p.add_argument("--h2", required=True, help="alist file (or a bundled code name)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("gen-data", help="training or evaluation syndrome/error pairs")
    p.add_argument("--code", required=True)
    p.add_argument("--kind", choices=("train", "eval"), required=True)
    p.add_argument("--count", type=int, default=25_000)
    p.add_argument("--pf", type=float, default=None, help="physical error rate (eval only)")
    p.add_argument("--noise", choices=channel.MODELS, default="depolarizing")
    p.add_argument("--decay", type=float, default=1.0, help="weight decay rate of the training distribution")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None, help="also export as CSV")

    p = sub.add_parser("train", help="train a neural decoder")
    p.add_argument("--code", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--decoder", choices=NEURAL, default="hypernq")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--wd", type=float, default=5e-4)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--layers", type=int, default=6, help="GNN depth")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--patience", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path")

    p = sub.add_parser("sweep", help="logical error rate against physical error rate")
    p.add_argument("--code", required=True)
    p.add_argument("--decoder", choices=DECODERS, required=True)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--pf-list", default=",".join(f"{p:g}" for p in evaluation.DEFAULT_PF))
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", choices=channel.MODELS, default="depolarizing")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--per-qubit", action="store_true")
    p.add_argument("--out", required=True, help="CSV path; a gnuplot .dat is written alongside")

    p = sub.add_parser("rerun", help="execute a run again from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", default=None, help="write outputs here instead of the recorded paths")
    p.add_argument("--check", action="store_true", help="compare fresh outputs with the recorded hashes")
    return ap


PATH_KEYS = ("h1", "h2", "out", "code", "data", "ckpt", "csv")


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if ns.command == "rerun":
            return rerun(Path(ns.manifest), ns.out_dir, ns.check)
        args = {k: v for k, v in vars(ns).items() if k != "command"}
        for k in PATH_KEYS:
            # bundled code names stay symbolic; everything else is pinned to an absolute path
            if args.get(k) and not (k in ("h1", "h2") and not Path(args[k]).exists()):
                args[k] = _abs(args[k])
        path = execute(ns.command, args)
        print(f"manifest: {path}")
        return 0
    except INPUT_ERRORS as exc:
        print(f"hyperdecode: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort handler for the exit-code contract
        print(f"hyperdecode: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
