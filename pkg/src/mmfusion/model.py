"""The full sentence generator: per-modality encoders, temporal attention,
fusion, LSTM decoder and output softmax, with every parameter in one flat
name -> Tensor dict (``decoder.W_xi``, ``attn.image.w_A``, ``fusion.W_c1`` ...)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .attention import TemporalAttentionParams, attend, project_states
from .encoder import EncoderOutput, EncoderSpec, LstmParams, encode_modality, lstm_step
from .errors import ConfigurationError, DimensionError, VocabularyError
from .fusion import FusionParams, fuse
from .tensor import Tensor
from .vocab import Vocabulary

MODEL_FUSION_MODES = ("unimodal", "simple", "attention")
INIT_STATE_POLICIES = ("zero", "encoder-final")


@dataclass
class ModalityConfig:
    name: str
    input_dim: int
    encoder: str = "projection"
    units: int = 512

    def spec(self) -> EncoderSpec:
        return EncoderSpec(self.encoder, self.input_dim, self.units)


@dataclass
class ModelConfig:
    modalities: list[ModalityConfig]
    vocab: list[str]
    fusion: str = "attention"
    embed_dim: int = 256
    cells: int = 512
    attn_dim: int | None = None
    fusion_dim: int | None = None
    modality_attn_dim: int | None = None
    init_state: str = "zero"
    feed_content: bool = False
    init_scale: float = 0.1

    def __post_init__(self):
        self.modalities = [m if isinstance(m, ModalityConfig) else ModalityConfig(**m) for m in self.modalities]
        if self.fusion not in MODEL_FUSION_MODES:
            raise ConfigurationError(f"unknown fusion mode {self.fusion!r}; allowed: {', '.join(MODEL_FUSION_MODES)}")
        if not self.modalities:
            raise ConfigurationError("at least one modality is required")
        if self.fusion == "unimodal" and len(self.modalities) != 1:
            raise ConfigurationError(f"unimodal fusion needs exactly one modality, got {len(self.modalities)}")
        names = [m.name for m in self.modalities]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate modality names {names}")
        if self.init_state not in INIT_STATE_POLICIES:
            raise ConfigurationError(f"unknown init_state {self.init_state!r}; allowed: {', '.join(INIT_STATE_POLICIES)}")
        for m in self.modalities:
            m.spec()
        Vocabulary(self.vocab)

    @property
    def fusion_mode(self) -> str:
        return "simple" if self.fusion == "unimodal" else self.fusion

    @property
    def modality_names(self) -> list[str]:
        return [m.name for m in self.modalities]

    @property
    def a_dim(self) -> int:
        return self.attn_dim or self.cells

    @property
    def g_dim(self) -> int:
        return self.fusion_dim or self.cells

    @property
    def b_dim(self) -> int:
        return self.modality_attn_dim or self.cells

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every learnable tensor of the model, in a fixed order."""
    V = len(cfg.vocab)
    shapes: dict[str, tuple[int, ...]] = {"embed.E": (V, cfg.embed_dim)}
    h_dims = []
    for m in cfg.modalities:
        spec = m.spec()
        for n, s in spec.param_shapes().items():
            shapes[f"encoder.{m.name}.{n}"] = s
        h_dims.append(spec.output_dim)
    for m, h in zip(cfg.modalities, h_dims):
        for n, s in TemporalAttentionParams.shapes(cfg.cells, h, cfg.a_dim).items():
            shapes[f"attn.{m.name}.{n}"] = s
    for n, s in FusionParams.shapes(cfg.fusion_mode, cfg.cells, h_dims, cfg.g_dim, cfg.b_dim).items():
        shapes[f"fusion.{n}"] = s
    dec_in = cfg.embed_dim + (cfg.g_dim if cfg.feed_content else 0)
    for n, s in LstmParams.shapes(dec_in, cfg.cells).items():
        shapes[f"decoder.{n}"] = s
    shapes["output.W_g"] = (V, cfg.g_dim)
    shapes["output.b_g"] = (V,)
    if cfg.init_state == "encoder-final":
        for m, h in zip(cfg.modalities, h_dims):
            shapes[f"init.{m.name}.W"] = (cfg.cells, h)
            shapes[f"init.{m.name}.b"] = (cfg.cells,)
    return shapes


def _is_bias(name: str) -> bool:
    leaf = name.rsplit(".", 1)[-1]
    return leaf.startswith("b")


@dataclass
class DecoderState:
    """Decoder hidden vector ``s`` and memory cell, batched on leading axes."""

    s: Tensor
    cell: Tensor
    index: int = 0


@dataclass
class Encoded:
    outputs: list[EncoderOutput]
    projected: list[Tensor]


@dataclass
class StepOutput:
    logp: Tensor  # [..., V] log-probabilities
    g: Tensor
    d: Tensor
    alphas: list[Tensor]
    beta: Tensor | None


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0) -> "Model":
        rng = np.random.default_rng(seed)
        params = {}
        s = config.init_scale
        for name, shape in parameter_shapes(config).items():
            data = np.zeros(shape) if _is_bias(name) else rng.uniform(-s, s, size=shape)
            params[name] = Tensor(data, requires_grad=True, name=name)
        return cls(config, params)

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: dict[str, np.ndarray]) -> "Model":
        expected = parameter_shapes(config)
        if set(arrays) != set(expected):
            missing = sorted(set(expected) - set(arrays))
            extra = sorted(set(arrays) - set(expected))
            raise ConfigurationError(f"parameter set mismatch; missing {missing}, unexpected {extra}")
        params = {}
        for name, shape in expected.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise DimensionError(f"{name}: shape {arr.shape}, expected {shape}")
            params[name] = Tensor(arr.copy(), requires_grad=True, name=name)
        return cls(config, params)

    @property
    def vocab(self) -> Vocabulary:
        return Vocabulary(self.config.vocab)

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: p.data for n, p in self.params.items()}

    def copy(self) -> "Model":
        return Model.from_arrays(self.config, {n: a.copy() for n, a in self.arrays().items()})

    # -- pieces ------------------------------------------------------------

    def decoder_params(self) -> LstmParams:
        return LstmParams.from_params(self.params, "decoder")

    def attention_params(self, modality: str) -> TemporalAttentionParams:
        return TemporalAttentionParams.from_params(self.params, f"attn.{modality}")

    def fusion_params(self) -> FusionParams:
        return FusionParams.from_params(self.params, self.config.fusion_mode, len(self.config.modalities))

    # -- forward -------------------------------------------------------------

    def encode(self, features: list) -> Encoded:
        """Encode one array per modality, each ``[L_k, D_k]`` or ``[B, L_k, D_k]``."""
        if len(features) != len(self.config.modalities):
            raise ConfigurationError(
                f"model expects modalities {self.config.modality_names}, got {len(features)} feature sequences"
            )
        outputs, projected = [], []
        for m, x in zip(self.config.modalities, features):
            out = encode_modality(x, m.spec(), self.params, f"encoder.{m.name}", m.name)
            outputs.append(out)
            projected.append(project_states(out, self.attention_params(m.name)))
        return Encoded(outputs, projected)

    def initial_state(self, enc: Encoded) -> DecoderState:
        """``s_0``: the decoder LSTM applied to ``Embed(<sos>)`` from the configured start state."""
        batch = enc.outputs[0].states.shape[:-2]
        cells = self.config.cells
        if self.config.init_state == "zero":
            s = Tensor(np.zeros(batch + (cells,)))
        else:
            terms = []
            for m, out in zip(self.config.modalities, enc.outputs):
                last = out.states[..., out.length - 1, :]
                terms.append(T.affine(last, self.params[f"init.{m.name}.W"], self.params[f"init.{m.name}.b"]))
            total = terms[0]
            for t in terms[1:]:
                total = T.add(total, t)
            s = T.tanh(T.mul(total, 1.0 / len(terms)))
        state = DecoderState(s, Tensor(np.zeros(batch + (cells,))), index=-1)
        sos = np.full(batch, self.vocab.sos, dtype=np.int64)
        zero_d = Tensor(np.zeros(batch + (self.config.g_dim,)))
        return self.advance(state, sos, zero_d)

    def step(self, state: DecoderState, enc: Encoded) -> StepOutput:
        """Distribution over the next word given ``s_{i-1}``."""
        alphas, contents = [], []
        for m, out, proj in zip(self.config.modalities, enc.outputs, enc.projected):
            alpha, c = attend(state.s, out, self.attention_params(m.name), proj)
            alphas.append(alpha)
            contents.append(c)
        g, d, beta = fuse(state.s, contents, self.fusion_params())
        logp = T.log_softmax(T.affine(g, self.params["output.W_g"], self.params["output.b_g"]), axis=-1)
        return StepOutput(logp, g, d, alphas, beta)

    def advance(self, state: DecoderState, tokens, d: Tensor | None = None) -> DecoderState:
        y = embed(tokens, self.params["embed.E"])
        if self.config.feed_content:
            y = T.concat([y, d], axis=-1)
        return decoder_step(state, y, self.decoder_params())


def embed(y, E) -> Tensor:
    """Row lookup ``E[y]`` for an id or an array of ids."""
    E = T.as_tensor(E)
    ids = np.asarray(y, dtype=np.int64)
    if np.any(ids < 0) or np.any(ids >= E.shape[0]):
        raise VocabularyError(f"token id(s) {ids.tolist()} outside [0, {E.shape[0]})")
    return T.take_rows(E, ids)


def decoder_step(state: DecoderState, y, p: LstmParams) -> DecoderState:
    s, cell = lstm_step(y, state.s, state.cell, p)
    return DecoderState(s, cell, state.index + 1)


def output_distribution(g, W_g, b_g) -> Tensor:
    """``softmax(W_g g + b_g)``."""
    return T.softmax(T.affine(g, W_g, b_g), axis=-1)
