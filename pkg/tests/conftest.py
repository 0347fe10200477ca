import numpy as np
import pytest

from mmfusion import tensor as T
from mmfusion.attention import TemporalAttentionParams
from mmfusion.encoder import LstmParams
from mmfusion.fusion import FusionParams


def make_params(shapes, rng, scale=0.5, prefix=""):
    """Named leaf tensors with entries uniform in [-scale, scale]."""
    return {
        prefix + name: T.Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True, name=prefix + name)
        for name, shape in shapes.items()
    }


def random_lstm(rng, input_dim, cells, scale=0.5):
    return LstmParams(**make_params(LstmParams.shapes(input_dim, cells), rng, scale))


def random_attention(rng, state_dim, h_dim, inner, scale=0.5):
    return TemporalAttentionParams(**make_params(TemporalAttentionParams.shapes(state_dim, h_dim, inner), rng, scale))


def random_fusion(rng, mode, state_dim, content_dims, g_dim, b_dim, scale=0.5):
    shapes = FusionParams.shapes(mode, state_dim, content_dims, g_dim, b_dim)
    params = make_params(shapes, rng, scale, prefix="fusion.")
    return FusionParams.from_params(params, mode, len(content_dims)), params


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_model(seed=0, fusion="attention", words=("a", "b", "c"), scale=1.0, init_state="zero",
               encoders=("projection", "blstm"), feed_content=False):
    """Small random model over two modalities with dims 5 and 3."""
    from mmfusion.model import Model, ModelConfig
    from mmfusion.vocab import Vocabulary

    dims = (5, 3)
    mods = [{"name": f"m{k}", "input_dim": d, "encoder": e, "units": 4} for k, (d, e) in enumerate(zip(dims, encoders))]
    if fusion == "unimodal":
        mods = mods[:1]
    cfg = ModelConfig(modalities=mods, vocab=Vocabulary.from_words(list(words)).tokens, fusion=fusion,
                      embed_dim=4, cells=6, attn_dim=5, fusion_dim=4, modality_attn_dim=3,
                      init_state=init_state, feed_content=feed_content)
    model = Model.initialize(cfg, seed)
    rng = np.random.default_rng(seed + 1000)
    for p in model.params.values():
        p.data[...] = rng.uniform(-scale, scale, size=p.shape)
    feats = [rng.normal(size=(int(rng.integers(1, 6)), m.input_dim)) for m in cfg.modalities]
    return model, feats
