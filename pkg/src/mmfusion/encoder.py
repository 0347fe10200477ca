"""LSTM cell, bidirectional encoder, projection and passthrough encoders."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError, EmptyInputError
from .tensor import Tensor

ENCODER_MODES = ("blstm", "projection", "passthrough")

_GATE_WEIGHTS = ("W_xi", "W_hi", "W_xf", "W_hf", "W_xo", "W_ho", "W_xc", "W_hc")
_GATE_BIASES = ("b_i", "b_f", "b_o", "b_c")


@dataclass
class LstmParams:
    """Weights of one LSTM layer without peephole connections.

    Input-side matrices are ``cells x input``; recurrent ones ``cells x cells``.
    """

    W_xi: Tensor
    W_hi: Tensor
    W_xf: Tensor
    W_hf: Tensor
    W_xo: Tensor
    W_ho: Tensor
    W_xc: Tensor
    W_hc: Tensor
    b_i: Tensor
    b_f: Tensor
    b_o: Tensor
    b_c: Tensor

    @property
    def cells(self) -> int:
        return self.b_i.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_xi.shape[1]

    def items(self):
        for f in fields(self):
            yield f.name, getattr(self, f.name)

    @classmethod
    def from_params(cls, params: dict, prefix: str) -> "LstmParams":
        return cls(**{n: params[f"{prefix}.{n}"] for n in _GATE_WEIGHTS + _GATE_BIASES})

    @staticmethod
    def shapes(input_dim: int, cells: int) -> dict[str, tuple[int, ...]]:
        out = {}
        for n in _GATE_WEIGHTS:
            out[n] = (cells, input_dim) if n.startswith("W_x") else (cells, cells)
        for n in _GATE_BIASES:
            out[n] = (cells,)
        return out


def lstm_step(x_t, h_prev, c_prev, p: LstmParams):
    """One LSTM update; returns ``(h_t, c_t)``. Works on single vectors or batches."""
    x_t, h_prev, c_prev = T.as_tensor(x_t), T.as_tensor(h_prev), T.as_tensor(c_prev)
    if x_t.shape[-1] != p.input_dim:
        raise DimensionError(f"lstm_step: input shape {x_t.shape} vs W_xi shape {p.W_xi.shape}")
    if h_prev.shape[-1] != p.cells or c_prev.shape[-1] != p.cells:
        raise DimensionError(f"lstm_step: state shapes {h_prev.shape}/{c_prev.shape} vs {p.cells} cells")

    def gate(Wx, Wh, b):
        return T.add(T.affine(x_t, Wx, b), T.affine(h_prev, Wh))

    i = T.sigmoid(gate(p.W_xi, p.W_hi, p.b_i))
    f = T.sigmoid(gate(p.W_xf, p.W_hf, p.b_f))
    o = T.sigmoid(gate(p.W_xo, p.W_ho, p.b_o))
    cand = T.tanh(gate(p.W_xc, p.W_hc, p.b_c))
    c_t = T.add(T.mul(f, c_prev), T.mul(i, cand))
    h_t = T.mul(o, T.tanh(c_t))
    return h_t, c_t


def _run_direction(steps: list[Tensor], p: LstmParams) -> list[Tensor]:
    batch = steps[0].shape[:-1]
    h = T.Tensor(np.zeros(batch + (p.cells,)))
    c = T.Tensor(np.zeros(batch + (p.cells,)))
    out = []
    for x in steps:
        h, c = lstm_step(x, h, c, p)
        out.append(h)
    return out


@dataclass
class EncoderOutput:
    """Encoder states ``[..., L, H]`` for one modality."""

    states: Tensor
    modality: str = ""

    @property
    def length(self) -> int:
        return self.states.shape[-2]

    @property
    def dim(self) -> int:
        return self.states.shape[-1]


def blstm_encode(X, fwd: LstmParams, bwd: LstmParams, modality: str = "") -> EncoderOutput:
    """Bidirectional LSTM over ``X`` (``[..., L, D]``); zero initial states both ways."""
    X = T.as_tensor(X)
    if X.ndim < 2 or X.shape[-2] == 0:
        raise EmptyInputError("blstm_encode needs at least one frame")
    L = X.shape[-2]
    steps = [X[..., t, :] for t in range(L)]
    forward = _run_direction(steps, fwd)
    backward = _run_direction(steps[::-1], bwd)[::-1]
    h = [T.concat([hf, hb], axis=-1) for hf, hb in zip(forward, backward)]
    return EncoderOutput(T.stack(h, axis=-2), modality)


@dataclass
class EncoderSpec:
    mode: str
    input_dim: int
    units: int = 0

    def __post_init__(self):
        if self.mode not in ENCODER_MODES:
            raise ConfigurationError(f"unknown encoder mode {self.mode!r}; allowed: {', '.join(ENCODER_MODES)}")
        if self.mode != "passthrough" and self.units < 1:
            raise ConfigurationError(f"{self.mode} encoder needs units >= 1")

    @property
    def output_dim(self) -> int:
        if self.mode == "blstm":
            return 2 * self.units
        if self.mode == "projection":
            return self.units
        return self.input_dim

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        if self.mode == "blstm":
            shapes = {}
            for direction in ("fwd", "bwd"):
                for n, s in LstmParams.shapes(self.input_dim, self.units).items():
                    shapes[f"{direction}.{n}"] = s
            return shapes
        if self.mode == "projection":
            return {"W_p": (self.units, self.input_dim), "b_p": (self.units,)}
        return {}


def encode_modality(features, spec: EncoderSpec, params: dict, prefix: str, modality: str = "") -> EncoderOutput:
    """Encode one feature sequence ``[..., L, D]`` according to ``spec``.

    ``params`` holds every tensor under ``prefix`` (e.g. ``encoder.audio``).
    """
    X = T.as_tensor(features)
    if X.shape[-1] != spec.input_dim:
        raise DimensionError(f"{modality or 'features'}: dim {X.shape[-1]} does not match encoder input {spec.input_dim}")
    if spec.mode == "passthrough":
        return EncoderOutput(X, modality)
    if spec.mode == "projection":
        return EncoderOutput(T.tanh(T.affine(X, params[f"{prefix}.W_p"], params[f"{prefix}.b_p"])), modality)
    if spec.mode == "blstm":
        fwd = LstmParams.from_params(params, f"{prefix}.fwd")
        bwd = LstmParams.from_params(params, f"{prefix}.bwd")
        return blstm_encode(X, fwd, bwd, modality)
    raise ConfigurationError(f"unknown encoder mode {spec.mode!r}")
