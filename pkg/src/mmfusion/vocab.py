"""Token <-> id mapping and the shared caption tokenizer."""

from __future__ import annotations

import re
import string

from .errors import ConfigurationError, VocabularyError

PAD, SOS, EOS, UNK = "<pad>", "<sos>", "<eos>", "<unk>"
RESERVED = (PAD, SOS, EOS, UNK)

_PUNCT = re.compile("[" + re.escape(string.punctuation.replace("_", "")) + "]")


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace.

    Training, decoding and the metrics all go through this one function.
    Underscores survive so synthetic tokens like ``obj_3`` stay whole.
    """
    return _PUNCT.sub(" ", text.lower()).split()


def detokenize(tokens: list[str]) -> str:
    return " ".join(tokens)


class Vocabulary:
    """Dense bijection between tokens and ids; reserved tokens come first."""

    def __init__(self, tokens: list[str]):
        tokens = list(tokens)
        if tokens[: len(RESERVED)] != list(RESERVED):
            raise ConfigurationError(f"vocabulary must start with the reserved tokens {RESERVED}")
        if len(set(tokens)) != len(tokens):
            raise ConfigurationError("vocabulary contains duplicate tokens")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def from_words(cls, words: list[str]) -> "Vocabulary":
        return cls(list(RESERVED) + [w for w in words if w not in RESERVED])

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    @property
    def pad(self) -> int:
        return self.index[PAD]

    @property
    def sos(self) -> int:
        return self.index[SOS]

    @property
    def eos(self) -> int:
        return self.index[EOS]

    @property
    def unk(self) -> int:
        return self.index[UNK]

    def id(self, token: str) -> int:
        return self.index.get(token, self.unk)

    def token(self, i: int) -> str:
        if not 0 <= i < len(self.tokens):
            raise VocabularyError(f"token id {i} outside [0, {len(self.tokens)})")
        return self.tokens[i]

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids, strip: bool = True) -> list[str]:
        words = [self.token(int(i)) for i in ids]
        if strip:
            words = [w for w in words if w not in (SOS, EOS, PAD)]
        return words
