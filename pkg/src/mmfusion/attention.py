"""Temporal attention over one modality's encoder states."""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .encoder import EncoderOutput
from .errors import DimensionError, EmptyInputError
from .tensor import Tensor


@dataclass
class TemporalAttentionParams:
    W_A: Tensor  # [a x state]
    V_A: Tensor  # [a x h]
    w_A: Tensor  # [a]
    b_A: Tensor  # [a]

    def __post_init__(self):
        a = self.w_A.shape[0]
        if self.W_A.shape[0] != a or self.V_A.shape[0] != a or self.b_A.shape != (a,):
            raise DimensionError(
                f"attention params disagree on inner dim: W_A {self.W_A.shape}, V_A {self.V_A.shape}, "
                f"w_A {self.w_A.shape}, b_A {self.b_A.shape}"
            )

    @classmethod
    def from_params(cls, params: dict, prefix: str) -> "TemporalAttentionParams":
        return cls(*(params[f"{prefix}.{n}"] for n in ("W_A", "V_A", "w_A", "b_A")))

    @staticmethod
    def shapes(state_dim: int, h_dim: int, inner: int) -> dict[str, tuple[int, ...]]:
        return {"W_A": (inner, state_dim), "V_A": (inner, h_dim), "w_A": (inner,), "b_A": (inner,)}


def project_states(H: EncoderOutput | Tensor, p: TemporalAttentionParams) -> Tensor:
    """``V_A h_t + b_A`` for every frame; independent of the decoder, so computed once."""
    states = H.states if isinstance(H, EncoderOutput) else T.as_tensor(H)
    return T.affine(states, p.V_A, p.b_A)


def attention_scores(s_prev, H, p: TemporalAttentionParams, projected: Tensor | None = None) -> Tensor:
    """``e_t = w_A . tanh(W_A s_prev + V_A h_t + b_A)`` for every frame ``t``.

    ``s_prev`` is ``[..., S]`` and the states ``[..., L, H]``; the result is ``[..., L]``.
    """
    s_prev = T.as_tensor(s_prev)
    if s_prev.shape[-1] != p.W_A.shape[1]:
        raise DimensionError(f"attention: state shape {s_prev.shape} vs W_A shape {p.W_A.shape}")
    if projected is None:
        states = H.states if isinstance(H, EncoderOutput) else T.as_tensor(H)
        if states.shape[-1] != p.V_A.shape[1]:
            raise DimensionError(f"attention: encoder shape {states.shape} vs V_A shape {p.V_A.shape}")
        projected = project_states(states, p)
    query = T.affine(s_prev, p.W_A)
    query = T.reshape(query, query.shape[:-1] + (1, query.shape[-1]))
    return T.inner(T.tanh(T.add(query, projected)), p.w_A)


def attention_weights(e) -> Tensor:
    """Softmax of the scores over time."""
    e = T.as_tensor(e)
    if e.ndim == 0 or e.shape[-1] == 0:
        raise EmptyInputError("attention over an empty sequence")
    return T.softmax(e, axis=-1)


def content_vector(alpha, H) -> Tensor:
    """``c = sum_t alpha_t h_t``; ``alpha`` is ``[..., L]``, states ``[..., L, H]``."""
    alpha = T.as_tensor(alpha)
    states = H.states if isinstance(H, EncoderOutput) else T.as_tensor(H)
    if alpha.shape[-1] != states.shape[-2]:
        raise DimensionError(f"content_vector: weights {alpha.shape} vs states {states.shape}")
    if alpha.ndim == 1 and states.ndim == 2:
        return T.reshape(T.matmul(T.reshape(alpha, (1, -1)), states), (states.shape[-1],))
    row = T.reshape(alpha, alpha.shape[:-1] + (1, alpha.shape[-1]))
    out = T.matmul(row, states)
    return T.reshape(out, out.shape[:-2] + (out.shape[-1],))


def attend(s_prev, H, p: TemporalAttentionParams, projected: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Scores, weights and content in one call; returns ``(alpha, c)``."""
    alpha = attention_weights(attention_scores(s_prev, H, p, projected))
    return alpha, content_vector(alpha, H)
