"""Corpus BLEU-1..4 and CIDEr-D for tokenized captions."""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)


def ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _check(hypotheses, references):
    if not hypotheses:
        raise DataError("no hypotheses to score")
    if len(hypotheses) != len(references):
        raise DataError(f"{len(hypotheses)} hypotheses but {len(references)} reference sets")
    for i, refs in enumerate(references):
        if not refs:
            raise DataError(f"clip {i} has no references")


def bleu(hypotheses: list[list[str]], references: list[list[list[str]]], max_n: int = 4) -> list[float]:
    """Corpus BLEU for orders ``1..max_n``; returns ``[BLEU1, ..., BLEUmax_n]``.

    Clipped n-gram counts are pooled over the corpus. The brevity penalty uses,
    per clip, the reference length closest to the hypothesis (shorter wins ties).
    """
    _check(hypotheses, references)
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, refs in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
        for n in range(1, max_n + 1):
            counts = ngrams(hyp, n)
            max_ref = Counter()
            for r in refs:
                for g, c in ngrams(r, n).items():
                    max_ref[g] = max(max_ref[g], c)
            matches[n - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    if hyp_len == 0:
        log.warning("all hypotheses are empty; BLEU is 0")
        return [0.0] * max_n
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    scores = []
    log_sum = 0.0
    for n in range(max_n):
        if matches[n] == 0 or totals[n] == 0:
            # every higher order is zero as well
            scores.extend([0.0] * (max_n - n))
            break
        log_sum += math.log(matches[n] / totals[n])
        scores.append(bp * math.exp(log_sum / (n + 1)))
    return scores


def _counts(tokens: list[str], n: int = 4) -> Counter:
    out = Counter()
    for k in range(1, n + 1):
        out.update(ngrams(tokens, k))
    return out


def cider_d(
    hypotheses: list[list[str]], references: list[list[list[str]]], n: int = 4, sigma: float = 6.0
) -> tuple[float, list[float]]:
    """CIDEr-D: clipped tf-idf cosine per n-gram order with a Gaussian length
    penalty, averaged over orders and references, times 10.

    Document frequencies come from the references; returns ``(corpus, per_clip)``.
    """
    _check(hypotheses, references)
    if len(references) < 2:
        log.warning("CIDEr-D on a single clip: every idf weight is zero")
    df = defaultdict(float)
    ref_counts = []
    for refs in references:
        cooked = [_counts(r, n) for r in refs]
        ref_counts.append(cooked)
        for g in set(g for c in cooked for g in c):
            df[g] += 1.0
    log_docs = np.log(float(len(references)))

    def vectorize(counts):
        vec = [dict() for _ in range(n)]
        norm = [0.0] * n
        length = 0
        for g, tf in counts.items():
            k = len(g) - 1
            w = float(tf) * (log_docs - np.log(max(1.0, df[g])))
            vec[k][g] = w
            norm[k] += w * w
            # length counted over bigrams, as in the public scorer
            if k == 1:
                length += tf
        return vec, [np.sqrt(v) for v in norm], length

    def sim(vh, nh, lh, vr, nr, lr):
        delta = float(lh - lr)
        val = np.zeros(n)
        for k in range(n):
            for g, w in vh[k].items():
                val[k] += min(w, vr[k].get(g, 0.0)) * vr[k].get(g, 0.0)
            if nh[k] != 0 and nr[k] != 0:
                val[k] /= nh[k] * nr[k]
            val[k] *= np.e ** (-(delta**2) / (2 * sigma**2))
        return val

    per_clip = []
    for hyp, cooked in zip(hypotheses, ref_counts):
        vh, nh, lh = vectorize(_counts(hyp, n))
        score = np.zeros(n)
        for rc in cooked:
            vr, nr, lr = vectorize(rc)
            score += sim(vh, nh, lh, vr, nr, lr)
        per_clip.append(float(np.mean(score) / len(cooked) * 10.0))
    return float(np.mean(per_clip)), per_clip


@dataclass
class MetricReport:
    bleu: list[float]
    cider: float
    per_clip_cider: dict[str, float] = field(default_factory=dict)

    def row(self) -> dict[str, float]:
        out = {f"BLEU{i}": v for i, v in enumerate(self.bleu, start=1)}
        out["CIDEr"] = self.cider
        return out

    def table(self, precision: int = 3) -> str:
        row = self.row()
        header = " | ".join(f"{k:>6}" for k in row)
        values = " | ".join(f"{v:>6.{precision}f}" for v in row.values())
        return f"{header}\n{values}"


def evaluate(ids: list[str], hypotheses: list[list[str]], references: list[list[list[str]]]) -> MetricReport:
    b = bleu(hypotheses, references)
    c, per = cider_d(hypotheses, references)
    return MetricReport(b, c, dict(zip(ids, per)))
