"""Corpora, vocabulary, batching and the built-in synthetic grammar."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

Sentence = list[str]


def tokenize(line: str) -> Sentence:
    return line.lower().split()


def _read_lines(path) -> list[str]:
    path = Path(path)
    try:
        return path.read_text(encoding="utf-8").split("\n")
    except (OSError, UnicodeDecodeError) as exc:
        raise OSError(f"cannot read corpus {path}: {exc}") from exc


def load_corpus(path, max_len: int = 20) -> list[Sentence]:
    """One whitespace-tokenized, lowercased sentence per line, truncated to ``max_len``."""
    sentences = [tokenize(line)[:max_len] for line in _read_lines(path)]
    sentences = [s for s in sentences if s]
    if not sentences:
        raise ValueError(f"corpus {path} has no usable lines")
    return sentences


def load_paired_corpus(path, max_len: int = 20) -> tuple[list[Sentence], list[Sentence]]:
    """Read ``utterance<TAB>response`` lines, dropping exact duplicate pairs."""
    sources: list[Sentence] = []
    targets: list[Sentence] = []
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise ValueError(f"{path}:{lineno}: expected utterance<TAB>response")
        src, tgt = line.split("\t", 1)
        src_toks, tgt_toks = tokenize(src)[:max_len], tokenize(tgt)[:max_len]
        if not src_toks or not tgt_toks:
            raise ValueError(f"{path}:{lineno}: empty utterance or response")
        key = (" ".join(src_toks), " ".join(tgt_toks))
        if key in seen:
            continue
        seen.add(key)
        sources.append(src_toks)
        targets.append(tgt_toks)
    if not sources:
        raise ValueError(f"corpus {path} has no usable lines")
    return sources, targets


def write_corpus(path, sentences: Sequence[Sentence]) -> None:
    Path(path).write_text("".join(" ".join(s) + "\n" for s in sentences), encoding="utf-8")


class Vocab:
    """Token <-> id map; ids 0..3 are PAD, BOS, EOS, UNK."""

    def __init__(self, tokens: Sequence[str]):
        self.itos = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def encode(self, sentence: Sentence) -> list[int]:
        return [self.stoi.get(t, UNK) for t in sentence]

    def decode(self, ids: Sequence[int]) -> Sentence:
        return [self.itos[i] for i in ids]

    @property
    def content_tokens(self) -> list[str]:
        return self.itos[len(RESERVED):]


def build_vocab(sentences: Sequence[Sentence], max_size: int) -> Vocab:
    """Keep the ``max_size - 4`` most frequent tokens, ties broken by first occurrence."""
    if max_size < 5:
        raise ValueError(f"vocabulary size must be at least 5, got {max_size}")
    if not sentences:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    first: dict[str, int] = {}
    for s in sentences:
        for t in s:
            counts[t] += 1
            first.setdefault(t, len(first))
    ranked = sorted(counts, key=lambda t: (-counts[t], first[t]))
    return Vocab(ranked[: max_size - len(RESERVED)])


@dataclass
class Batch:
    """Right-padded id matrices; every row is ``BOS w_1 .. w_L EOS PAD ..``.

    ``src`` feeds the encoder and ``tgt`` the decoder. In autoencoder mode they
    are the same arrays. Lengths count BOS and EOS.
    """

    src: np.ndarray
    src_lengths: np.ndarray
    tgt: np.ndarray
    tgt_lengths: np.ndarray

    def __len__(self) -> int:
        return self.src.shape[0]

    @property
    def encoder_inputs(self) -> tuple[np.ndarray, np.ndarray]:
        """Sentence tokens followed by EOS (the leading BOS is skipped)."""
        return self.src[:, 1:], self.src_lengths - 1

    @property
    def decoder_inputs(self) -> np.ndarray:
        return self.tgt[:, :-1]

    @property
    def decoder_targets(self) -> np.ndarray:
        return self.tgt[:, 1:]

    @property
    def target_mask(self) -> np.ndarray:
        return self.decoder_targets != PAD


def pad_batch(id_lists: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    rows = [[BOS, *ids, EOS] for ids in id_lists]
    lengths = np.array([len(r) for r in rows], dtype=np.int64)
    out = np.full((len(rows), int(lengths.max())), PAD, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out, lengths


def make_batch(src: Sequence[Sentence], vocab: Vocab, tgt: Sequence[Sentence] | None = None) -> Batch:
    s_ids, s_len = pad_batch([vocab.encode(s) for s in src])
    if tgt is None:
        return Batch(s_ids, s_len, s_ids, s_len)
    t_ids, t_len = pad_batch([vocab.encode(t) for t in tgt])
    return Batch(s_ids, s_len, t_ids, t_len)


def make_batches(
    sentences: Sequence[Sentence],
    vocab: Vocab,
    batch_size: int,
    rng: np.random.Generator,
    targets: Sequence[Sentence] | None = None,
) -> list[Batch]:
    """Shuffle once with ``rng`` and cut into batches; a trailing batch of one is dropped."""
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    order = rng.permutation(len(sentences))
    batches = []
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        if len(idx) < 2:
            # the MMD estimator needs at least two samples
            continue
        src = [sentences[i] for i in idx]
        tgt = None if targets is None else [targets[i] for i in idx]
        batches.append(make_batch(src, vocab, tgt))
    return batches


# ---------------------------------------------------------------------------
# synthetic corpus


class TemplateGrammar:
    """A small captioning-style grammar: subject, verb phrase, optional object and place.

    ``a young man is playing a red guitar in the park .``
    """

    SLOTS = {
        "det": ["a", "the"],
        "num": ["two", "three", "some"],
        "adj": ["young", "old", "small", "tall", "happy", "red"],
        "noun_sg": ["man", "woman", "boy", "girl", "dog", "child"],
        "noun_pl": ["men", "women", "boys", "girls", "dogs", "children"],
        "thing": ["ball", "guitar", "car", "bike", "book", "hat"],
        "place": ["park", "street", "beach", "field", "room", "water"],
        "prep": ["in", "on", "near", "at"],
        "vt": ["playing", "holding", "riding", "throwing", "carrying"],
        "vi": ["sleeping", "running", "sitting", "walking", "smiling"],
    }
    P_PLURAL = 0.4
    P_SUBJ_ADJ = 0.5
    P_TRANSITIVE = 0.6
    P_OBJ_ADJ = 0.4
    P_PLACE = 0.5

    def __init__(self):
        s = self.SLOTS
        alt = lambda k: "(?:" + "|".join(s[k]) + ")"
        subject = f"(?:{alt('det')} (?:{alt('adj')} )?{alt('noun_sg')} is|{alt('num')} (?:{alt('adj')} )?{alt('noun_pl')} are)"
        vp = f"(?:{alt('vt')} {alt('det')} (?:{alt('adj')} )?{alt('thing')}|{alt('vi')})"
        place = f"(?: {alt('prep')} the {alt('place')})?"
        self._pattern = re.compile(f"^{subject} {vp}{place} \\.$")

    @property
    def vocabulary(self) -> list[str]:
        toks = [t for words in self.SLOTS.values() for t in words]
        return toks + ["is", "are", "."]

    def sample(self, rng: np.random.Generator) -> Sentence:
        s = self.SLOTS
        pick = lambda k: s[k][rng.integers(len(s[k]))]
        out: Sentence = []
        plural = rng.random() < self.P_PLURAL
        out.append(pick("num") if plural else pick("det"))
        if rng.random() < self.P_SUBJ_ADJ:
            out.append(pick("adj"))
        out.append(pick("noun_pl") if plural else pick("noun_sg"))
        out.append("are" if plural else "is")
        if rng.random() < self.P_TRANSITIVE:
            out.append(pick("vt"))
            out.append(pick("det"))
            if rng.random() < self.P_OBJ_ADJ:
                out.append(pick("adj"))
            out.append(pick("thing"))
        else:
            out.append(pick("vi"))
        if rng.random() < self.P_PLACE:
            out += [pick("prep"), "the", pick("place")]
        out.append(".")
        return out

    def parses(self, sentence: Sentence) -> bool:
        return bool(self._pattern.match(" ".join(sentence)))


def synth_corpus(count: int, rng: np.random.Generator, grammar: TemplateGrammar | None = None) -> list[Sentence]:
    """``count`` sentences (4 to 12 tokens) sampled from the template grammar."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    grammar = grammar or TemplateGrammar()
    return [grammar.sample(rng) for _ in range(count)]
