"""Command-line entry point: ``mmfusion {features,train,decode,evaluate,gradcheck,synth}``.

Exit codes: 0 success, 1 runtime or data failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import audio
from .corpus import (
    build_vocabulary,
    clip_features,
    feature_dims,
    generate_synthetic_task,
    load_manifest,
    to_examples,
    write_corpus,
)
from .decoder import beam_search
from .errors import ConfigurationError, DataError, FormatError, MMFusionError
from .gradcheck import THRESHOLD, run_gradcheck
from .io import FeatureFile, atomic_write, canonical_json, load_checkpoint, save_checkpoint, write_features
from .metrics import evaluate
from .model import Model, ModelConfig
from .training import TrainConfig, train

log = logging.getLogger("mmfusion")

DEFAULT_TRAIN_CONFIG = {
    "model": {
        "modalities": [{"name": "image", "encoder": "projection", "units": 512}],
        "fusion": "attention",
        "embed_dim": 256,
        "cells": 512,
        "attn_dim": None,
        "fusion_dim": None,
        "modality_attn_dim": None,
        "init_state": "zero",
        "feed_content": False,
        "init_scale": 0.1,
    },
    "training": TrainConfig().to_dict(),
    "min_count": 1,
    "dummy_length": 1,
}


class UsageError(Exception):
    """Reported with exit code 2."""


def _merge(defaults: dict, override: dict) -> dict:
    out = dict(defaults)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


# ---------------------------------------------------------------------------
# features


def cmd_features(args) -> int:
    wav_dir, out_dir = Path(args.wav_dir), Path(args.out_dir)
    if not wav_dir.is_dir():
        raise UsageError(f"WAV directory not found: {wav_dir}")
    cfg = audio.MfccConfig(**(_read_json(args.config) if args.config else {}))
    wavs = sorted(p for p in wav_dir.iterdir() if p.suffix.lower() == ".wav")
    if not wavs:
        raise DataError(f"no .wav files in {wav_dir}")
    feats, failures = {}, []
    for p in wavs:
        try:
            feats[p.stem] = audio.audio_features(audio.read_wav(p), cfg)
        except FormatError as exc:
            failures.append(f"{p.name}: {exc}")
    if args.stats:
        stats = json.loads(Path(args.stats).read_text())
        mean, var = np.asarray(stats["mean"]), np.asarray(stats["var"])
    else:
        usable = [f for f in feats.values() if len(f)]
        if not usable:
            raise DataError("no clip produced a full stacked vector; cannot fit normalisation")
        mean, var = audio.fit_normalization(usable)
        stats = {"mean": mean.tolist(), "var": var.tolist(), "mfcc": cfg.to_dict()}
    # the applied statistics are always written next to the features
    atomic_write(out_dir / "stats.json", canonical_json(stats) + "\n")
    header = {"mfcc": cfg.to_dict(), "normalized": True}
    for stem, f in feats.items():
        data = audio.normalize(f, mean, var) if len(f) else f
        write_features(out_dir / f"{stem}.mmfs", FeatureFile("audio", data.astype(np.float32), header))
        print(f"{stem}: T={data.shape[0]} D={data.shape[1]}")
    for msg in failures:
        print(f"error: {msg}", file=sys.stderr)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# train


def build_model_config(cfg: dict, corpus, vocab_tokens) -> ModelConfig:
    m = dict(cfg["model"])
    names = [mod["name"] for mod in m["modalities"]]
    available = set(corpus.modalities)
    missing = [n for n in names if n not in available and n != "audio"]
    if missing:
        raise ConfigurationError(f"config modalities {missing} not present in the manifest (has {sorted(available)})")
    dims = feature_dims(corpus, names)
    mods = []
    for mod in m["modalities"]:
        dim = mod.get("input_dim") or dims.get(mod["name"])
        if dim is None:
            raise ConfigurationError(f"cannot infer input dim for modality {mod['name']!r}")
        mods.append({**mod, "input_dim": int(dim)})
    m["modalities"] = mods
    m["vocab"] = list(vocab_tokens)
    return ModelConfig(**m)


def cmd_train(args) -> int:
    cfg = _merge(DEFAULT_TRAIN_CONFIG, _read_json(args.config) if args.config else {})
    if args.seed is not None:
        cfg["training"]["seed"] = args.seed
    if args.fusion is not None:
        cfg["model"]["fusion"] = args.fusion
    if args.optimizer is not None:
        cfg["training"]["optimizer"] = args.optimizer
    if args.epochs is not None:
        cfg["training"]["epochs"] = args.epochs
    tcfg = TrainConfig(**cfg["training"])
    corpus = load_manifest(args.corpus)
    vocab = build_vocabulary(corpus, cfg["min_count"])
    mcfg = build_model_config(cfg, corpus, vocab.tokens)
    mods = [(m.name, m.input_dim) for m in mcfg.modalities]
    train_set = to_examples(corpus.split("train"), vocab, mods, cfg["dummy_length"])
    val_set = to_examples(corpus.split("val"), vocab, mods, cfg["dummy_length"])
    model = Model.initialize(mcfg, tcfg.seed)
    log.info("config: %s", json.dumps(cfg, sort_keys=True))
    log.info("training %s model on %d examples", mcfg.fusion, len(train_set))
    result = train(model, train_set, val_set, tcfg)
    out = Path(args.out)
    provenance = {"training": tcfg.to_dict(), "min_count": cfg["min_count"], "dummy_length": cfg["dummy_length"],
                  "best_epoch": result.best_epoch}
    save_checkpoint(out / "model.mmck", result.model, provenance)
    atomic_write(out / "train_log.jsonl", "".join(json.dumps(r) + "\n" for r in result.log))
    print(f"best epoch {result.best_epoch}: val_loss {result.log[result.best_epoch - 1]['val_loss']:.6f}")
    return 0


# ---------------------------------------------------------------------------
# decode


def _round(a, digits=8):
    return [round(float(x), digits) for x in np.asarray(a).ravel()]


def decode_record(clip_id: str, hyp, vocab, dump_attention: bool) -> dict:
    rec = {"id": clip_id, "hypothesis": " ".join(vocab.decode(hyp.words)), "logprob": hyp.logprob}
    if dump_attention:
        rec["alpha"] = [[_round(a) for a in step] for step in hyp.trace.alpha]
        rec["beta"] = [_round(b) if b is not None else None for b in hyp.trace.beta]
    return rec


def cmd_decode(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    corpus = load_manifest(args.corpus, strict=False)
    available = set(corpus.modalities)
    needed = [m.name for m in model.config.modalities]
    absent = [n for n in needed if n not in available and n != "audio"]
    if absent:
        raise ConfigurationError(f"checkpoint modalities {absent} not in manifest")
    mods = [(m.name, m.input_dim) for m in model.config.modalities]
    vocab = model.vocab
    lines, failed = [], 0
    for clip in corpus.split(args.split):
        missing = clip.meta.get("missing")
        if missing:
            print(f"error: clip {clip.id}: missing feature file(s) {missing}; skipped", file=sys.stderr)
            failed += 1
            continue
        try:
            feats = clip_features(clip, mods, meta.get("dummy_length", 1))
        except (MMFusionError, OSError) as exc:
            print(f"error: clip {clip.id}: {exc}; skipped", file=sys.stderr)
            failed += 1
            continue
        best = beam_search(model, feats, args.beam, args.max_len)[0]
        lines.append(json.dumps(decode_record(clip.id, best, vocab, args.dump_attention)))
    atomic_write(args.out, "".join(line + "\n" for line in lines))
    print(f"decoded {len(lines)} clips, {failed} skipped")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(args) -> int:
    path = Path(args.hypotheses)
    if not path.is_file():
        raise UsageError(f"hypotheses file not found: {path}")
    records = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    if not records:
        raise DataError(f"{path}: no hypotheses")
    corpus = load_manifest(args.corpus, strict=False)
    test = {c.id: c for c in corpus.split("test")}
    offenders = [r["id"] for r in records if r["id"] not in test]
    if offenders:
        raise DataError(f"hypothesis ids not in the test split: {offenders}")
    from .vocab import tokenize

    ids = [r["id"] for r in records]
    report = evaluate(ids, [tokenize(r["hypothesis"]) for r in records], [test[i].captions for i in ids])
    print(report.table())
    payload = json.dumps(report.row(), sort_keys=True)
    print(payload)
    if args.json:
        atomic_write(args.json, payload + "\n")
    return 0


# ---------------------------------------------------------------------------
# gradcheck


def cmd_gradcheck(args) -> int:
    t0 = time.perf_counter()
    report = run_gradcheck(seed=args.seed, eps=args.eps)
    for name, err in report.errors.items():
        print(f"{name:32s} {err:.3e}")
    worst, err = report.worst
    status = "PASS" if report.passed else "FAIL"
    print(f"{status}: max relative error {err:.3e} at {worst} (threshold {THRESHOLD:.0e}, "
          f"{time.perf_counter() - t0:.1f} s)")
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# synthetic corpus


def cmd_synth(args) -> int:
    sizes = tuple(args.splits) if args.splits else None
    corpus = generate_synthetic_task(args.seed, args.n_clips, args.symbols, args.symbols, args.noise, sizes)
    manifest = write_corpus(corpus, args.out)
    print(f"wrote {len(corpus.clips)} clips to {manifest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmfusion", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="MFCC features from 16 kHz mono WAVs",
                       epilog="MFCC defaults: " + json.dumps(audio.MfccConfig().to_dict()))
    p.add_argument("--wav-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="JSON overriding MFCC settings")
    p.add_argument("--stats", help="apply this stats.json instead of fitting (validation/test sets)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train a caption model",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog="default config:\n" + json.dumps(DEFAULT_TRAIN_CONFIG, indent=2))
    p.add_argument("--corpus", required=True, help="manifest.jsonl")
    p.add_argument("--config", help="JSON config; merged over the defaults below")
    p.add_argument("--out", required=True, help="output directory for model.mmck and train_log.jsonl")
    p.add_argument("--seed", type=int)
    p.add_argument("--fusion", help="override fusion mode: unimodal, simple or attention")
    p.add_argument("--optimizer", help="override optimizer: rmsprop or adadelta")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="beam-search captions for one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=20)
    p.add_argument("--split", default="test")
    p.add_argument("--dump-attention", action="store_true")
    p.add_argument("--out", required=True, help="JSON-lines hypotheses file")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("evaluate", help="BLEU1-4 and CIDEr-D against the test split")
    p.add_argument("--hypotheses", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--json", help="also write the scores here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of a tiny two-modality model")
    p.add_argument("--dims", choices=["small"], default="small")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write the synthetic two-stream corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--n-clips", type=int, default=650)
    p.add_argument("--splits", type=int, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--symbols", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.1)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MMFusionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
