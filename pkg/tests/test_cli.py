import json

import numpy as np
import pytest
from scipy.io import wavfile

from mmfusion import tensor as T
from mmfusion.cli import DEFAULT_TRAIN_CONFIG, build_parser, main
from mmfusion.io import read_features

SMALL = {
    "model": {
        "modalities": [
            {"name": "objects", "encoder": "projection", "units": 8},
            {"name": "actions", "encoder": "projection", "units": 8},
        ],
        "embed_dim": 8, "cells": 12, "attn_dim": 6, "fusion_dim": 6, "modality_attn_dim": 4,
    },
    "training": {"epochs": 2, "batch_size": 8},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "syn"), "--n-clips", "30", "--seed", "2"]) == 0
    (root / "cfg.json").write_text(json.dumps(SMALL))
    assert main(["train", "--corpus", str(root / "syn/manifest.jsonl"), "--config", str(root / "cfg.json"),
                 "--out", str(root / "run"), "--seed", "7"]) == 0
    return root


def run_decode(ws, out, *extra):
    return main(["decode", "--checkpoint", str(ws / "run/model.mmck"), "--corpus", str(ws / "syn/manifest.jsonl"),
                 "--beam", "2", "--max-len", "6", "--out", str(out), *extra])


def write_wav(path, samples, rate=16000):
    wavfile.write(path, rate, samples)


# -- features -------------------------------------------------------------------

def test_features_silence_and_stats(tmp_path, capsys):
    wavs = tmp_path / "wavs"
    wavs.mkdir()
    write_wav(wavs / "quiet.wav", np.zeros(16000, np.int16))
    rng = np.random.default_rng(0)
    write_wav(wavs / "noise.wav", (rng.uniform(-0.5, 0.5, 32000) * 32767).astype(np.int16))
    assert main(["features", "--wav-dir", str(wavs), "--out-dir", str(tmp_path / "f")]) == 0
    ff = read_features(tmp_path / "f/quiet.mmfs")
    assert ff.data.shape == (1, 260) and ff.config["mfcc"]["window"] == 800
    stats = json.loads((tmp_path / "f/stats.json").read_text())
    assert len(stats["mean"]) == 260
    first = {p.name: p.read_bytes() for p in (tmp_path / "f").iterdir()}
    assert main(["features", "--wav-dir", str(wavs), "--out-dir", str(tmp_path / "f")]) == 0
    assert {p.name: p.read_bytes() for p in (tmp_path / "f").iterdir()} == first
    # applying saved statistics to another directory
    assert main(["features", "--wav-dir", str(wavs), "--out-dir", str(tmp_path / "g"),
                 "--stats", str(tmp_path / "f/stats.json")]) == 0
    assert (tmp_path / "g/noise.mmfs").read_bytes() == first["noise.mmfs"]


def test_features_missing_directory(tmp_path, capsys):
    assert main(["features", "--wav-dir", str(tmp_path / "nope"), "--out-dir", str(tmp_path / "o")]) == 2
    assert "nope" in capsys.readouterr().err


def test_features_bad_wav_listed(tmp_path, capsys):
    wavs = tmp_path / "w"
    wavs.mkdir()
    write_wav(wavs / "good.wav", np.zeros(16000, np.int16))
    write_wav(wavs / "fast.wav", np.zeros(44100, np.int16), rate=44100)
    assert main(["features", "--wav-dir", str(wavs), "--out-dir", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "fast.wav" in err and "good.wav" not in err
    assert (tmp_path / "o/good.mmfs").exists()


# -- train ------------------------------------------------------------------------

def test_train_outputs(workspace):
    log = [json.loads(line) for line in (workspace / "run/train_log.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in log] == [1, 2]
    assert set(log[0]) == {"epoch", "train_loss", "val_loss", "wall_ms"}


def test_train_same_seed_identical(workspace, tmp_path):
    args = ["train", "--corpus", str(workspace / "syn/manifest.jsonl"), "--config", str(workspace / "cfg.json"),
            "--out", str(tmp_path / "again"), "--seed", "7"]
    assert main(args) == 0
    strip = lambda p: [{k: v for k, v in json.loads(x).items() if k != "wall_ms"} for x in p.read_text().splitlines()]
    assert strip(tmp_path / "again/train_log.jsonl") == strip(workspace / "run/train_log.jsonl")
    assert (tmp_path / "again/model.mmck").read_bytes() == (workspace / "run/model.mmck").read_bytes()


def test_train_unknown_fusion(workspace, tmp_path, capsys):
    rc = main(["train", "--corpus", str(workspace / "syn/manifest.jsonl"), "--config", str(workspace / "cfg.json"),
               "--out", str(tmp_path / "x"), "--fusion", "concat"])
    assert rc == 2
    err = capsys.readouterr().err
    assert "unimodal" in err and "simple" in err and "attention" in err
    assert not (tmp_path / "x").exists()


def test_train_modality_mismatch(workspace, tmp_path, capsys):
    cfg = json.loads(json.dumps(SMALL))
    cfg["model"]["modalities"][0]["name"] = "motion"
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    rc = main(["train", "--corpus", str(workspace / "syn/manifest.jsonl"), "--config", str(tmp_path / "c.json"),
               "--out", str(tmp_path / "x")])
    assert rc == 2 and "motion" in capsys.readouterr().err


def test_help_shows_defaults():
    text = build_parser()._subparsers._group_actions[0].choices["train"].format_help()
    assert '"cells": 512' in text and '"optimizer": "rmsprop"' in text
    assert DEFAULT_TRAIN_CONFIG["training"]["clip"] == 5.0


# -- decode -----------------------------------------------------------------------

def test_decode_with_attention_dump(workspace, tmp_path):
    out = tmp_path / "hyp.jsonl"
    assert run_decode(workspace, out, "--dump-attention") == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(recs) == 6
    for r in recs:
        assert set(r) == {"id", "hypothesis", "logprob", "alpha", "beta"}
        assert len(r["alpha"]) == len(r["beta"]) == len(r["hypothesis"].split()) + 1
        for row in r["beta"]:
            assert abs(sum(row) - 1) <= 1e-6
        for step in r["alpha"]:
            assert len(step) == 2 and all(abs(sum(a) - 1) <= 1e-6 for a in step)


def test_decode_stable_and_beam_one_is_greedy(workspace, tmp_path):
    from mmfusion.corpus import load_manifest
    from mmfusion.decoder import greedy_decode
    from mmfusion.io import load_checkpoint

    assert run_decode(workspace, tmp_path / "a.jsonl") == 0
    assert run_decode(workspace, tmp_path / "b.jsonl") == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    main(["decode", "--checkpoint", str(workspace / "run/model.mmck"), "--corpus",
          str(workspace / "syn/manifest.jsonl"), "--beam", "1", "--max-len", "6", "--out", str(tmp_path / "g.jsonl")])
    model, _ = load_checkpoint(workspace / "run/model.mmck")
    clips = load_manifest(workspace / "syn/manifest.jsonl").by_id()
    for line in (tmp_path / "g.jsonl").read_text().splitlines():
        r = json.loads(line)
        feats = [clips[r["id"]].feature(n) for n in model.config.modality_names]
        tokens, _ = greedy_decode(model, feats, 6)
        assert r["hypothesis"] == " ".join(model.vocab.decode(tokens))


def test_decode_skips_clip_with_missing_features(workspace, tmp_path, capsys):
    import shutil

    copy = tmp_path / "syn"
    shutil.copytree(workspace / "syn", copy)
    victim = sorted((copy / "features").glob("syn0002[4-9].actions.mmfs"))[0]
    victim.unlink()
    rc = main(["decode", "--checkpoint", str(workspace / "run/model.mmck"), "--corpus", str(copy / "manifest.jsonl"),
               "--out", str(tmp_path / "h.jsonl")])
    assert rc == 1
    clip_id = victim.name.split(".")[0]
    assert clip_id in capsys.readouterr().err
    ids = [json.loads(x)["id"] for x in (tmp_path / "h.jsonl").read_text().splitlines()]
    assert clip_id not in ids and len(ids) == 5


# -- evaluate ---------------------------------------------------------------------

def test_evaluate_reference_copies(workspace, tmp_path, capsys):
    from mmfusion.corpus import load_manifest

    corpus = load_manifest(workspace / "syn/manifest.jsonl")
    lines = [json.dumps({"id": c.id, "hypothesis": " ".join(c.captions[0])}) for c in corpus.split("test")]
    (tmp_path / "h.jsonl").write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert main(["evaluate", "--hypotheses", str(tmp_path / "h.jsonl"), "--corpus",
                 str(workspace / "syn/manifest.jsonl")]) == 0
    out = capsys.readouterr().out.splitlines()
    header, row, payload = out[0], out[1], json.loads(out[2])
    assert header.split("|")[0].strip() == "BLEU1" and header.split("|")[-1].strip() == "CIDEr"
    assert payload["BLEU4"] == pytest.approx(1.0)
    for printed, key in zip(row.split("|"), ["BLEU1", "BLEU2", "BLEU3", "BLEU4", "CIDEr"]):
        assert float(printed) == pytest.approx(payload[key], abs=5e-4)


def test_evaluate_empty_file(workspace, tmp_path, capsys):
    (tmp_path / "h.jsonl").write_text("")
    assert main(["evaluate", "--hypotheses", str(tmp_path / "h.jsonl"), "--corpus",
                 str(workspace / "syn/manifest.jsonl")]) == 1
    assert "no hypotheses" in capsys.readouterr().err


def test_evaluate_unknown_ids(workspace, tmp_path, capsys):
    (tmp_path / "h.jsonl").write_text(json.dumps({"id": "syn00000", "hypothesis": "x"}) + "\n"
                                      + json.dumps({"id": "ghost", "hypothesis": "x"}) + "\n")
    assert main(["evaluate", "--hypotheses", str(tmp_path / "h.jsonl"), "--corpus",
                 str(workspace / "syn/manifest.jsonl")]) == 1
    err = capsys.readouterr().err
    assert "ghost" in err and "syn00000" in err  # the first clip is in the training split


# -- gradcheck --------------------------------------------------------------------

def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--dims", "small"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "fusion.W_B" in out


def test_gradcheck_negative_control(monkeypatch, capsys):
    def bad_tanh(a):
        a = T.as_tensor(a)
        y = np.tanh(a.data)
        return T._make(y, (a,), lambda g: (g * (1.0 - y),))

    monkeypatch.setattr(T, "tanh", bad_tanh)
    assert main(["gradcheck"]) == 1
    last = capsys.readouterr().out.strip().splitlines()[-1]
    assert last.startswith("FAIL") and " at " in last
