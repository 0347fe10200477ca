"""Finite-difference verification of a small two-modality attention model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Model, ModelConfig
from .tensor import gradient_errors
from .training import sequence_loss
from .vocab import Vocabulary

THRESHOLD = 1e-4


def tiny_problem(seed: int = 0, fusion: str = "attention", init_state: str = "zero"):
    """A random model (every tensor uniform in [-1, 1]), features and a reference.

    Dims stay <= 8, sequences <= 5 frames, vocabulary <= 10 entries. The image
    stream uses a projection encoder and the audio stream a BLSTM so both
    encoder paths are covered.
    """
    vocab = Vocabulary.from_words(["a", "man", "dog", "runs"])
    cfg = ModelConfig(
        modalities=[
            {"name": "image", "input_dim": 5, "encoder": "projection", "units": 4},
            {"name": "audio", "input_dim": 3, "encoder": "blstm", "units": 3},
        ],
        vocab=vocab.tokens,
        fusion=fusion,
        embed_dim=4,
        cells=6,
        attn_dim=5,
        fusion_dim=4,
        modality_attn_dim=3,
        init_state=init_state,
    )
    model = Model.initialize(cfg, seed)
    rng = np.random.default_rng(seed)
    for p in model.params.values():
        p.data[...] = rng.uniform(-1.0, 1.0, size=p.shape)
    features = [rng.normal(size=(5, 5)), rng.normal(size=(4, 3))]
    reference = vocab.encode(["a", "dog", "runs"])
    return model, features, reference


@dataclass
class GradcheckReport:
    errors: dict[str, float]

    @property
    def worst(self) -> tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]

    @property
    def max_error(self) -> float:
        return self.worst[1]

    @property
    def passed(self) -> bool:
        return self.max_error < THRESHOLD


def run_gradcheck(seed: int = 0, eps: float = 1e-5, fusion: str = "attention", init_state: str = "zero") -> GradcheckReport:
    model, features, reference = tiny_problem(seed, fusion, init_state)
    errors = gradient_errors(lambda: sequence_loss(model, features, reference).total, model.params, eps)
    return GradcheckReport(errors)
