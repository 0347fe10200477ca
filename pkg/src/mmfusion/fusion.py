"""Combining per-modality content vectors into the decoder pre-output ``g``.

Two schemes are supported. ``simple`` adds fixed projections of every content
vector. ``attention`` weights bias-carrying projections ``d_k`` by modality
attention weights ``beta_k`` computed from the decoder state and each content
vector, so the mix changes from word to word.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, DimensionError, EmptyInputError
from .tensor import Tensor

FUSION_MODES = ("simple", "attention")


@dataclass
class FusionParams:
    """Fusion-layer tensors, indexed by modality position ``k`` (0-based here,
    1-based in parameter names)."""

    mode: str
    W_s: Tensor
    b_s: Tensor
    W_c: list[Tensor]
    b_c: list[Tensor] | None = None
    W_B: Tensor | None = None
    V_B: list[Tensor] | None = None
    b_B: list[Tensor] | None = None
    w_B: Tensor | None = None

    def __post_init__(self):
        if self.mode not in FUSION_MODES:
            raise ConfigurationError(f"unknown fusion mode {self.mode!r}; allowed: {', '.join(FUSION_MODES)}")
        if not self.W_c:
            raise EmptyInputError("fusion needs at least one modality")
        K = len(self.W_c)
        if self.mode == "simple":
            if self.b_c is not None and any(np.any(b.data != 0) for b in self.b_c):
                raise ConfigurationError("simple fusion has no per-modality bias; b_ck must be zero")
        else:
            parts = (self.b_c, self.V_B, self.b_B)
            if self.W_B is None or self.w_B is None or any(p is None or len(p) != K for p in parts):
                raise ConfigurationError(f"attention fusion needs b_c, V_B, b_B for all {K} modalities plus W_B, w_B")

    @property
    def K(self) -> int:
        return len(self.W_c)

    @classmethod
    def from_params(cls, params: dict, mode: str, K: int, prefix: str = "fusion") -> "FusionParams":
        idx = range(1, K + 1)
        kw = dict(
            mode=mode,
            W_s=params[f"{prefix}.W_s"],
            b_s=params[f"{prefix}.b_s"],
            W_c=[params[f"{prefix}.W_c{k}"] for k in idx],
        )
        if mode == "attention":
            kw.update(
                b_c=[params[f"{prefix}.b_c{k}"] for k in idx],
                W_B=params[f"{prefix}.W_B"],
                V_B=[params[f"{prefix}.V_B{k}"] for k in idx],
                b_B=[params[f"{prefix}.b_B{k}"] for k in idx],
                w_B=params[f"{prefix}.w_B"],
            )
        return cls(**kw)

    @staticmethod
    def shapes(mode: str, state_dim: int, content_dims: list[int], g_dim: int, b_dim: int) -> dict:
        shapes = {"W_s": (g_dim, state_dim), "b_s": (g_dim,)}
        for k, dim in enumerate(content_dims, start=1):
            shapes[f"W_c{k}"] = (g_dim, dim)
        if mode == "attention":
            shapes["W_B"] = (b_dim, state_dim)
            shapes["w_B"] = (b_dim,)
            for k, dim in enumerate(content_dims, start=1):
                shapes[f"b_c{k}"] = (g_dim,)
                shapes[f"V_B{k}"] = (b_dim, dim)
                shapes[f"b_B{k}"] = (b_dim,)
        return shapes


def _check_k(k: int, p: FusionParams):
    if not 0 <= k < p.K:
        raise ConfigurationError(f"modality index {k} outside 0..{p.K - 1}")


def modality_projection(c, k: int, p: FusionParams) -> Tensor:
    """``d_k = W_ck c + b_ck`` (no bias in simple mode)."""
    _check_k(k, p)
    bias = p.b_c[k] if p.b_c is not None else None
    return T.affine(c, p.W_c[k], bias)


def modality_scores(s_prev, contents: list, p: FusionParams) -> Tensor:
    """``v_k = w_B . tanh(W_B s_prev + V_Bk c_k + b_Bk)``, stacked on the last axis."""
    if not contents:
        raise EmptyInputError("modality attention over zero modalities")
    if p.W_B is None:
        raise ConfigurationError("modality attention requires attention-mode fusion params")
    if len(contents) != p.K:
        raise ConfigurationError(f"got {len(contents)} content vectors for {p.K} modalities")
    query = T.affine(s_prev, p.W_B)
    v = [T.inner(T.tanh(T.add(query, T.affine(c, p.V_B[k], p.b_B[k]))), p.w_B) for k, c in enumerate(contents)]
    return T.stack(v, axis=-1)


def modality_attention(s_prev, contents: list, p: FusionParams) -> Tensor:
    """Softmax of the modality scores: the weights ``beta`` over ``K`` modalities."""
    return T.softmax(modality_scores(s_prev, contents, p), axis=-1)


def fuse(s_prev, contents: list, p: FusionParams, beta: Tensor | None = None) -> tuple[Tensor, Tensor, Tensor | None]:
    """Return ``(g, d, beta)`` where ``d`` is the fused content term inside the tanh.

    ``beta`` may be supplied to override the learned modality weights (attention mode only).
    """
    s_prev = T.as_tensor(s_prev)
    if len(contents) != p.K:
        raise ConfigurationError(f"got {len(contents)} content vectors for {p.K} modalities")
    if s_prev.shape[-1] != p.W_s.shape[1]:
        raise DimensionError(f"fusion: state shape {s_prev.shape} vs W_s shape {p.W_s.shape}")
    if p.mode == "simple":
        if beta is not None:
            raise ConfigurationError("simple fusion takes no modality weights")
        d = modality_projection(contents[0], 0, p)
        for k in range(1, p.K):
            d = T.add(d, modality_projection(contents[k], k, p))
    else:
        if beta is None:
            beta = modality_attention(s_prev, contents, p)
        beta = T.as_tensor(beta)
        d = None
        for k, c in enumerate(contents):
            term = T.mul(beta[..., k : k + 1], modality_projection(c, k, p))
            d = term if d is None else T.add(d, term)
    g = T.tanh(T.add(T.affine(s_prev, p.W_s, p.b_s), d))
    return g, d, beta


def fused_preactivation(s_prev, contents: list, p: FusionParams, beta=None) -> Tensor:
    """The pre-output vector ``g`` only."""
    return fuse(s_prev, contents, p, beta)[0]
