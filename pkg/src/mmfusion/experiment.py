"""Small-scale fusion comparison on the synthetic two-stream task.

One call trains a model with a chosen fusion mode on a fixed synthetic corpus
and scores greedy captions position by position against the reference.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import (
    ACTION_STREAM,
    OBJECT_STREAM,
    build_vocabulary,
    generate_synthetic_task,
    synthetic_feature_dim,
    to_examples,
)
from .decoder import greedy_decode
from .model import Model, ModelConfig
from .training import TrainConfig, train


@dataclass
class SurrogateConfig:
    n_symbols: int = 8
    n_train: int = 500
    n_val: int = 50
    n_test: int = 100
    noise: float = 0.1
    units: int = 16
    embed_dim: int = 16
    cells: int = 32
    attn_dim: int = 16
    fusion_dim: int = 5
    modality_attn_dim: int = 16
    init_scale: float = 0.3
    epochs: int = 100
    batch_size: int = 16
    lr: float = 0.005
    optimizer: str = "rmsprop"


@dataclass
class SurrogateResult:
    fusion: str
    seed: int
    accuracy: float
    clean_accuracy: float
    corrupt_accuracy: float
    # mean beta on the action stream, split by the kind of word being generated
    beta_action_on_actions: float | None
    beta_action_on_objects: float | None
    seconds: float
    best_epoch: int
    per_clip: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        out = asdict(self)
        out.pop("per_clip")
        return out


MODALITIES = (OBJECT_STREAM, ACTION_STREAM)


def synthetic_model_config(cfg: SurrogateConfig, fusion: str, vocab_tokens) -> ModelConfig:
    dim = synthetic_feature_dim(cfg.n_symbols)
    return ModelConfig(
        modalities=[{"name": n, "input_dim": dim, "encoder": "projection", "units": cfg.units} for n in MODALITIES],
        vocab=list(vocab_tokens),
        fusion=fusion,
        embed_dim=cfg.embed_dim,
        cells=cfg.cells,
        attn_dim=cfg.attn_dim,
        fusion_dim=cfg.fusion_dim,
        modality_attn_dim=cfg.modality_attn_dim,
        init_scale=cfg.init_scale,
    )


def run_surrogate(fusion: str, seed: int, cfg: SurrogateConfig | None = None) -> SurrogateResult:
    """Train one model on the corpus for ``seed`` and score the test split."""
    cfg = cfg or SurrogateConfig()
    n = cfg.n_train + cfg.n_val + cfg.n_test
    corpus = generate_synthetic_task(seed, n, cfg.n_symbols, cfg.n_symbols, cfg.noise,
                                     (cfg.n_train, cfg.n_val, cfg.n_test))
    vocab = build_vocabulary(corpus)
    mcfg = synthetic_model_config(cfg, fusion, vocab.tokens)
    mods = [(m.name, m.input_dim) for m in mcfg.modalities]
    t0 = time.perf_counter()
    result = train(
        Model.initialize(mcfg, seed),
        to_examples(corpus.split("train"), vocab, mods),
        to_examples(corpus.split("val"), vocab, mods),
        TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, seed=seed, optimizer=cfg.optimizer, lr=cfg.lr),
    )
    seconds = time.perf_counter() - t0
    model = result.model

    hits = {False: [0, 0], True: [0, 0]}
    beta_sums = {"action": [0.0, 0], "object": [0.0, 0]}
    per_clip = []
    action_index = MODALITIES.index(ACTION_STREAM)
    for clip in corpus.split("test"):
        feats = [np.asarray(clip.feature(m), dtype=np.float64) for m in MODALITIES]
        tokens, trace = greedy_decode(model, feats, 6)
        words = vocab.decode(tokens)
        ref = clip.captions[0]
        correct = sum(1 for i, w in enumerate(ref) if i < len(words) and words[i] == w)
        corrupted = clip.meta["corrupted"] is not None
        hits[corrupted][0] += correct
        hits[corrupted][1] += len(ref)
        per_clip.append((clip.id, " ".join(words), correct))
        # caption positions alternate object, action, object, action
        for i, beta in enumerate(trace.beta[: len(ref)]):
            if beta is not None:
                slot = beta_sums["action" if i % 2 else "object"]
                slot[0] += float(beta[action_index])
                slot[1] += 1

    def ratio(pair):
        return pair[0] / pair[1] if pair[1] else float("nan")

    b_act = ratio(beta_sums["action"]) if beta_sums["action"][1] else None
    b_obj = ratio(beta_sums["object"]) if beta_sums["object"][1] else None
    total = [hits[False][0] + hits[True][0], hits[False][1] + hits[True][1]]
    return SurrogateResult(fusion, seed, ratio(total), ratio(hits[False]), ratio(hits[True]),
                           b_act, b_obj, seconds, result.best_epoch, per_clip)
