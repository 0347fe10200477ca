"""Greedy and beam-search decoding with per-word attention traces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigurationError
from .model import DecoderState, Encoded, Model


@dataclass
class AttentionTrace:
    """Per generated word: temporal weights per modality and modality weights.

    ``alpha[i][k]`` is the weight vector over frames of modality ``k`` when
    word ``i`` was predicted; ``beta[i]`` is ``None`` for simple fusion.
    """

    alpha: list[list[np.ndarray]] = field(default_factory=list)
    beta: list[np.ndarray | None] = field(default_factory=list)

    def append(self, alpha: list[np.ndarray], beta: np.ndarray | None):
        self.alpha.append(alpha)
        self.beta.append(beta)

    def copy(self) -> "AttentionTrace":
        return AttentionTrace(list(self.alpha), list(self.beta))


@dataclass
class Hypothesis:
    tokens: list[int]
    logprob: float
    state: DecoderState | None = None
    finished: bool = False
    trace: AttentionTrace = field(default_factory=AttentionTrace)

    @property
    def words(self) -> list[int]:
        """Tokens without the trailing ``<eos>``."""
        return self.tokens[:-1] if self.finished else list(self.tokens)


def _prepare(model: Model, features: list) -> Encoded:
    names = model.config.modality_names
    if isinstance(features, dict):
        missing = [n for n in names if n not in features]
        if missing:
            raise ConfigurationError(f"missing modality features: {missing}")
        features = [features[n] for n in names]
    if len(features) != len(names):
        raise ConfigurationError(f"model expects modalities {names}, got {len(features)} feature sequences")
    batched = [np.asarray(f, dtype=np.float64)[None] for f in features]
    return model.encode(batched)


def _slice_state(state: DecoderState, rows) -> DecoderState:
    return DecoderState(T.Tensor(state.s.data[rows]), T.Tensor(state.cell.data[rows]), state.index)


def greedy_decode(model: Model, features, max_len: int) -> tuple[list[int], AttentionTrace]:
    """Emit the argmax word (lowest id on ties) until ``<eos>`` or ``max_len`` words."""
    if max_len < 1:
        raise ConfigurationError(f"max_len must be >= 1, got {max_len}")
    eos = model.vocab.eos
    trace = AttentionTrace()
    tokens: list[int] = []
    with T.no_grad():
        enc = _prepare(model, features)
        state = model.initial_state(enc)
        for _ in range(max_len + 1):
            out = model.step(state, enc)
            logp = out.logp.data[0]
            trace.append([a.data[0].copy() for a in out.alphas], None if out.beta is None else out.beta.data[0].copy())
            y = eos if len(tokens) == max_len else int(np.argmax(logp))
            if y == eos:
                break
            tokens.append(y)
            state = model.advance(state, [y], out.d)
    return tokens, trace


def beam_search(model: Model, features, width: int, max_len: int) -> list[Hypothesis]:
    """N-best list of finished hypotheses, best first.

    Scores are unnormalised sums of log-probabilities including the final
    ``<eos>``. After ``max_len`` words only ``<eos>`` may follow. Ties are
    broken by the lexicographically smaller token sequence.
    """
    if width < 1:
        raise ConfigurationError(f"beam width must be >= 1, got {width}")
    if max_len < 1:
        raise ConfigurationError(f"max_len must be >= 1, got {max_len}")
    eos = model.vocab.eos
    V = len(model.vocab)
    finished: list[Hypothesis] = []
    with T.no_grad():
        enc = _prepare(model, features)
        state = model.initial_state(enc)
        active = [Hypothesis([], 0.0, None)]
        for step in range(max_len + 1):
            out = model.step(state, enc)
            logp = out.logp.data
            candidates = []
            for h_idx, hyp in enumerate(active):
                ys = [eos] if step == max_len else range(V)
                for y in ys:
                    candidates.append((hyp.logprob + float(logp[h_idx, y]), hyp.tokens + [y], h_idx, y))
            candidates.sort(key=lambda c: (-c[0], c[1]))
            keep, rows, next_tokens = [], [], []
            for score, toks, h_idx, y in candidates[:width]:
                trace = active[h_idx].trace.copy()
                beta = None if out.beta is None else out.beta.data[h_idx].copy()
                trace.append([a.data[h_idx].copy() for a in out.alphas], beta)
                if y == eos:
                    finished.append(Hypothesis(toks, score, None, True, trace))
                else:
                    keep.append(Hypothesis(toks, score, None, False, trace))
                    rows.append(h_idx)
                    next_tokens.append(y)
            if not keep:
                break
            rows = np.asarray(rows)
            prev = _slice_state(state, rows)
            d = T.Tensor(out.d.data[rows])
            state = model.advance(prev, next_tokens, d)
            for j, hyp in enumerate(keep):
                hyp.state = _slice_state(state, j)
            active = keep
    finished.sort(key=lambda h: (-h.logprob, h.tokens))
    return finished


def sequence_logprob(model: Model, features, tokens: list[int]) -> float:
    """``log P(tokens, <eos> | features)`` recomputed from scratch."""
    eos = model.vocab.eos
    total = 0.0
    with T.no_grad():
        enc = _prepare(model, features)
        state = model.initial_state(enc)
        for y in list(tokens) + [eos]:
            out = model.step(state, enc)
            total += float(out.logp.data[0, y])
            if y == eos:
                break
            state = model.advance(state, [y], out.d)
    return total
