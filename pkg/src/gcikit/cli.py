"""Command-line front end: corpus synthesis, EGG extraction, training,
detection, and evaluation.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or validation
error. Every flag can also be set from a key=value config file passed with
--config; explicit command-line flags win.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .audio import AudioBuffer, read_marks, read_wav, write_marks
from .corpus import build_corpus, load_manifest
from .dsp import decimate, spline_upsample
from .egg import EggConfig, extract_gci_from_egg
from .metrics import EvalMode, aggregate, evaluate, format_table
from .model import (ArchConfig, DetectConfig, build_model, load_weights,
                    predict_curve, marks_from_curve, save_weights)
from .train import TrainConfig, load_split, train

log = logging.getLogger("gcikit")

_TARGETS = {"tri": "triangle", "gf": "glottal_flow"}


def _write_atomic(path: str, text: str) -> None:
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError("ratios must be three comma-separated numbers")
    return tuple(parts)  # type: ignore[return-value]


def _to_16k(buf: AudioBuffer, path: str) -> AudioBuffer:
    if buf.sample_rate == 16000:
        return buf
    if buf.sample_rate % 16000 == 0:
        return decimate(buf, buf.sample_rate // 16000)
    raise ValueError(f"{path}: rate {buf.sample_rate} is not a multiple of 16 kHz")


def _expand_inputs(paths: list[str]) -> list[str]:
    out = []
    for p in paths:
        if os.path.isdir(p):
            out.extend(sorted(glob.glob(os.path.join(p, "*.wav"))))
        else:
            out.append(p)
    return [p for p in out if not p.endswith(".egg.wav")]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    ratios = _parse_ratios(args.ratios) if isinstance(args.ratios, str) else args.ratios
    manifest = build_corpus(args.n, ratios, args.out, args.seed,
                            jobs=args.jobs, force=args.force)
    counts = {s: len(manifest.split_entries(s)) for s in ("train", "validation", "test")}
    print(f"wrote {len(manifest.entries)} entries to {args.out} "
          f"(train/val/test = {counts['train']}/{counts['validation']}/{counts['test']})")
    return 0


def _extract_one(task) -> str:
    path, channel, cfg = task
    channels = read_wav(path)
    if channel < len(channels):
        egg = channels[channel]
    else:
        paired = os.path.splitext(path)[0] + ".egg.wav"
        if not os.path.exists(paired):
            raise ValueError(f"{path}: no channel {channel} and no {paired}")
        egg = read_wav(paired)[0]
    egg = _to_16k(egg, path)
    marks = extract_gci_from_egg(egg, cfg)
    out_path = os.path.splitext(path)[0] + ".gci.txt"
    _write_atomic(out_path, "".join(f"{t:.6f}\n" for t in marks))
    return out_path


def cmd_extract_egg(args) -> int:
    cfg = EggConfig(hp_cutoff=args.hp, lp_cutoff=args.lp, filter_order=args.order,
                    peak_threshold_rel=args.threshold)
    inputs = _expand_inputs(args.inputs)
    if not inputs:
        raise ValueError("no input WAV files found")
    tasks = [(p, args.channel, cfg) for p in inputs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outs = list(pool.map(_extract_one, tasks))
    else:
        outs = [_extract_one(t) for t in tasks]
    for out_path in outs:
        log.info("wrote %s", out_path)
    print(f"extracted GCIs for {len(outs)} file(s)")
    return 0


def cmd_train(args) -> int:
    manifest = load_manifest(os.path.join(args.manifest)
                             if args.manifest.endswith(".json")
                             else os.path.join(args.manifest, "manifest.json"))
    target_kind = _TARGETS[args.target]
    cfg = TrainConfig(seed=args.seed, max_epochs=args.max_epochs,
                      epoch_batches=args.epoch_batches)
    train_set = load_split(manifest, "train", target_kind, cfg.segment_len)
    val_set = load_split(manifest, "validation", target_kind, cfg.segment_len)
    arch = ArchConfig.paper() if args.arch == "paper" else ArchConfig.small()
    model = build_model(arch, seed=args.seed)
    history = train(model, train_set, val_set, cfg,
                    history_path=args.out + ".history.jsonl",
                    log=log.info if args.verbose else None)
    tmp = f"{args.out}.tmp-{os.getpid()}"
    save_weights(model, tmp)
    os.replace(tmp, args.out)
    best = min(h.val_loss for h in history)
    print(f"trained {len(history)} epoch(s); best validation loss {best:.6f}; "
          f"weights in {args.out}")
    return 0


def cmd_detect(args) -> int:
    model = load_weights(args.model)
    cfg = DetectConfig(target_kind=_TARGETS[args.target])
    out_dir = args.out_dir
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    for path in _expand_inputs(args.inputs):
        audio = _to_16k(read_wav(path)[0], path)
        curve = predict_curve(model, audio)
        marks = marks_from_curve(curve, cfg, duration=audio.duration)
        stem = os.path.splitext(os.path.basename(path))[0]
        base = os.path.join(out_dir, stem) if out_dir else os.path.splitext(path)[0]
        _write_atomic(base + ".gci.txt", "".join(f"{t:.6f}\n" for t in marks))
        if args.dump_curve:
            up = spline_upsample(curve, cfg.upsample_factor) if curve.size >= 4 else curve
            rows = "".join(f"{i / 16000:.6f},{v:.6f}\n" for i, v in enumerate(up))
            _write_atomic(base + ".curve.csv", "time_s,value\n" + rows)
        log.info("%s: %d marks", path, marks.size)
    print("detection complete")
    return 0


def cmd_evaluate(args) -> int:
    mode = EvalMode(variant="voiced_restricted" if args.mode == "voiced" else "all_gcis")
    ref_files = sorted(glob.glob(os.path.join(args.ref_dir, "*.gci.txt")))
    if not ref_files:
        raise ValueError(f"no *.gci.txt files in {args.ref_dir}")
    reports = {}
    for ref_path in ref_files:
        name = os.path.basename(ref_path)
        det_path = os.path.join(args.det_dir, name)
        if not os.path.exists(det_path):
            raise ValueError(f"missing detection counterpart for {name}")
        reports[name] = evaluate(read_marks(ref_path), read_marks(det_path), mode)
    combined = aggregate(list(reports.values()))
    payload = {"mode": mode.variant,
               "aggregate": combined.to_dict(),
               "files": {n: r.to_dict() for n, r in reports.items()}}
    _write_atomic(args.report, json.dumps(payload, indent=1, sort_keys=True) + "\n")
    print(format_table({"all files": combined}))
    return 0


# ---------------------------------------------------------------------------
# parser plumbing
# ---------------------------------------------------------------------------


def _load_config(path: str) -> dict:
    """key = value lines; '#' comments; numbers, booleans, and plain strings."""
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, raw = stripped.partition("=")
            key = key.strip().replace("-", "_")
            raw = raw.strip().strip("\"'")
            if raw.lower() in ("true", "false"):
                value = raw.lower() == "true"
            else:
                try:
                    value = int(raw)
                except ValueError:
                    try:
                        value = float(raw)
                    except ValueError:
                        value = raw
            overrides[key] = value
    return overrides


def build_parser():
    parser = argparse.ArgumentParser(prog="gcikit", description=__doc__.split("\n")[0])
    parser.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", help="key=value file; command line wins")
        p.set_defaults(func=func)
        subparsers[name] = p
        return p

    p = add("synth", cmd_synth, help="build the synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, required=True, help="number of base utterances")
    p.add_argument("--ratios", default="0.6,0.2,0.2", help="train,val,test ratios")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--force", action="store_true", help="overwrite an existing corpus")

    p = add("extract-egg", cmd_extract_egg, help="extract reference GCIs from EGG")
    p.add_argument("--in", dest="inputs", nargs="+", required=True,
                   help="WAV files or a directory")
    p.add_argument("--channel", type=int, default=1, help="EGG channel index")
    p.add_argument("--hp", type=float, default=30.0, help="highpass cutoff Hz")
    p.add_argument("--lp", type=float, default=500.0, help="lowpass cutoff Hz")
    p.add_argument("--order", type=int, default=5, help="filter order")
    p.add_argument("--threshold", type=float, default=0.2, help="relative peak threshold")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)

    p = add("train", cmd_train, help="train the detector on a corpus manifest")
    p.add_argument("--manifest", required=True, help="manifest.json or its directory")
    p.add_argument("--target", choices=["tri", "gf"], required=True)
    p.add_argument("--out", required=True, help="output weight file")
    p.add_argument("--arch", choices=["small", "paper"], default="small")
    p.add_argument("--max-epochs", type=int, default=150)
    p.add_argument("--epoch-batches", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true", help="log per-epoch losses")

    p = add("detect", cmd_detect, help="detect GCIs in speech files")
    p.add_argument("--model", required=True, help="weight file from train")
    p.add_argument("--in", dest="inputs", nargs="+", required=True,
                   help="WAV files or a directory")
    p.add_argument("--target", choices=["tri", "gf"], required=True)
    p.add_argument("--out-dir", default=None, help="marker destination (default: beside inputs)")
    p.add_argument("--dump-curve", action="store_true",
                   help="also write the predicted curve as CSV")

    p = add("evaluate", cmd_evaluate, help="score detections against references")
    p.add_argument("--ref-dir", required=True)
    p.add_argument("--det-dir", required=True)
    p.add_argument("--mode", choices=["voiced", "all"], default="voiced")
    p.add_argument("--report", required=True, help="output JSON path")

    return parser, subparsers


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, subparsers = build_parser()
    try:
        command = next((a for a in argv if not a.startswith("-")), None)
        cfg_path = None
        for i, arg in enumerate(argv):
            if arg == "--config" and i + 1 < len(argv):
                cfg_path = argv[i + 1]
            elif arg.startswith("--config="):
                cfg_path = arg.split("=", 1)[1]
        if command in subparsers and cfg_path:
            overrides = _load_config(cfg_path)
            sub = subparsers[command]
            valid = {a.dest for a in sub._actions}
            unknown = set(overrides) - valid
            if unknown:
                raise ValueError(f"unknown config keys: {sorted(unknown)}")
            sub.set_defaults(**overrides)
            for action in sub._actions:
                if action.dest in overrides:
                    action.required = False
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=getattr(logging, args.log_level.upper()),
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, FileExistsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
