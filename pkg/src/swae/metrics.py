"""Reconstruction and generation metrics: BLEU, n-gram perplexity, UniKL, entropy, length, Dist-n."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

Sentence = Sequence[str]

BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"
UNK_TOKEN = "<unk>"


def _ngrams(tokens: Sentence, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates: Sequence[Sentence], references: Sequence[Sentence], max_n: int = 4) -> float:
    """Corpus BLEU with one reference per candidate.

    Modified precisions for n >= 2 get +1 on numerator and denominator so that
    short sentences do not zero the score; unigram precision is unsmoothed.
    """
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates for {len(references)} references")
    if not candidates:
        raise ValueError("bleu needs a non-empty corpus")
    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            c, r = _ngrams(cand, n), _ngrams(ref, n)
            matches[n - 1] += sum(min(k, r[g]) for g, k in c.items())
            totals[n - 1] += max(len(cand) - n + 1, 0)
    if totals[0] == 0 or matches[0] == 0:
        return 0.0
    log_p = math.log(matches[0] / totals[0])
    for n in range(2, max_n + 1):
        log_p += math.log((matches[n - 1] + 1) / (totals[n - 1] + 1))
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_p / max_n)


@dataclass
class NgramLM:
    """Add-k smoothed n-gram model over the training vocabulary plus EOS and UNK."""

    order: int
    k: float
    vocab: frozenset
    counts: dict = field(default_factory=dict)  # context tuple -> Counter of next tokens
    context_totals: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.vocab)

    @classmethod
    def uniform(cls, tokens: Sequence[str]) -> "NgramLM":
        """An untrained unigram model: every token (incl. EOS, UNK) has probability 1/V."""
        return cls(1, 1.0, frozenset(tokens) | {EOS_TOKEN, UNK_TOKEN})

    def _normalize(self, token: str) -> str:
        return token if token in self.vocab else UNK_TOKEN

    def prob(self, token: str, context: Sequence[str]) -> float:
        ctx = tuple(context[-(self.order - 1):]) if self.order > 1 else ()
        token = self._normalize(token)
        total = self.context_totals.get(ctx, 0)
        count = self.counts.get(ctx, {}).get(token, 0)
        denom = total + self.k * self.size
        if denom == 0:
            return 1.0 / self.size
        return (count + self.k) / denom

    def sentence_logprob(self, sentence: Sentence) -> tuple[float, int]:
        padded = [BOS_TOKEN] * (self.order - 1) + [self._normalize(t) for t in sentence]
        logp = 0.0
        for i, tok in enumerate(list(sentence) + [EOS_TOKEN]):
            p = self.prob(tok, padded[: self.order - 1 + i])
            logp += math.log(p) if p > 0 else -math.inf
        return logp, len(sentence) + 1


def train_ngram_lm(corpus: Sequence[Sentence], n: int = 3, k: float = 0.01) -> NgramLM:
    if not corpus:
        raise ValueError("cannot train a language model on an empty corpus")
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    vocab = frozenset(t for s in corpus for t in s) | {EOS_TOKEN, UNK_TOKEN}
    counts: dict = {}
    totals: dict = {}
    for s in corpus:
        padded = [BOS_TOKEN] * (n - 1) + list(s) + [EOS_TOKEN]
        for i in range(n - 1, len(padded)):
            ctx = tuple(padded[i - n + 1 : i]) if n > 1 else ()
            counts.setdefault(ctx, Counter())[padded[i]] += 1
            totals[ctx] = totals.get(ctx, 0) + 1
    return NgramLM(n, k, vocab, counts, totals)


def perplexity(lm: NgramLM, sentences: Sequence[Sentence]) -> float:
    """exp of the mean per-token negative log-likelihood, EOS included."""
    if not sentences:
        raise ValueError("perplexity needs at least one sentence")
    total_lp = 0.0
    total_tokens = 0
    for s in sentences:
        lp, n = lm.sentence_logprob(s)
        total_lp += lp
        total_tokens += n
    return math.exp(-total_lp / total_tokens)


def word_distribution(sentences: Sequence[Sentence]) -> dict[str, float]:
    counts = Counter(t for s in sentences for t in s)
    total = sum(counts.values())
    return {t: c / total for t, c in counts.items()}


def unigram_kl(generated: Sequence[Sentence], reference: Sequence[Sentence], k: float = 1.0) -> float:
    """KL(P_generated || P_reference) over the union vocabulary, add-k smoothed on both sides."""
    if not generated or not reference:
        raise ValueError("unigram_kl needs two non-empty corpora")
    g = Counter(t for s in generated for t in s)
    r = Counter(t for s in reference for t in s)
    vocab = sorted(set(g) | set(r))
    g_total = sum(g.values()) + k * len(vocab)
    r_total = sum(r.values()) + k * len(vocab)
    kl = 0.0
    for t in vocab:
        p = (g[t] + k) / g_total
        q = (r[t] + k) / r_total
        if p > 0:
            kl += p * math.log(p / q)
    return max(kl, 0.0)


def word_entropy(sentences: Sequence[Sentence], base: float = 2.0) -> float:
    """Shannon entropy of the unigram distribution of ``sentences``."""
    if not sentences:
        raise ValueError("word_entropy needs at least one sentence")
    dist = word_distribution(sentences)
    h = -sum(p * math.log(p) for p in dist.values())
    return h / math.log(base)


def avg_len(sentences: Sequence[Sentence]) -> float:
    if not sentences:
        raise ValueError("avg_len needs at least one sentence")
    return sum(len(s) for s in sentences) / len(sentences)


def distinct_n(sentences: Sequence[Sentence], n: int) -> float:
    """Unique n-grams over total n-grams across the whole set."""
    if n not in (1, 2):
        raise ValueError(f"distinct_n supports n in {{1, 2}}, got {n}")
    grams: Counter = Counter()
    for s in sentences:
        grams.update(_ngrams(s, n))
    total = sum(grams.values())
    if total == 0:
        raise ValueError(f"no sentence has {n} or more tokens")
    return len(grams) / total
