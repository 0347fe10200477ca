"""Walk through one decoding step of a small two-stream model by hand.

Builds a random model, encodes two feature sequences and prints the temporal
weights over each stream, the modality weights and the next-word
distribution. Run with ``python demos/01_attention_step.py``.
"""

import numpy as np

from mmfusion import tensor as T
from mmfusion.model import Model, ModelConfig
from mmfusion.vocab import Vocabulary

np.set_printoptions(precision=3, suppress=True)

vocab = Vocabulary.from_words(["a", "man", "dog", "runs", "sings"])
cfg = ModelConfig(
    modalities=[
        {"name": "image", "input_dim": 6, "encoder": "projection", "units": 8},
        {"name": "audio", "input_dim": 4, "encoder": "blstm", "units": 4},
    ],
    vocab=vocab.tokens,
    fusion="attention",
    embed_dim=8,
    cells=16,
    init_scale=0.5,
)
model = Model.initialize(cfg, seed=0)
print(f"{sum(p.data.size for p in model.params.values())} parameters in {len(model.params)} tensors")

rng = np.random.default_rng(0)
image = rng.normal(size=(5, 6))  # 5 frames of 6-dim "CNN" features
audio = rng.normal(size=(3, 4))  # 3 stacked audio vectors

with T.no_grad():
    # batch axis of size 1 in front of every sequence
    enc = model.encode([image[None], audio[None]])
    state = model.initial_state(enc)  # s_0: decoder LSTM fed with <sos>
    out = model.step(state, enc)

for name, alpha in zip(cfg.modality_names, out.alphas):
    print(f"alpha over {name} frames: {alpha.data[0]}  (sum {alpha.data[0].sum():.12f})")
print(f"beta over modalities {cfg.modality_names}: {out.beta.data[0]}")

p = np.exp(out.logp.data[0])
for i in np.argsort(-p)[:3]:
    print(f"  P({vocab.token(i)!r}) = {p[i]:.4f}")
