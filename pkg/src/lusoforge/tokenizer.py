"""Byte-pair-encoding subword tokenizer over boundary-marked text.

Words are marked with a leading "▁" glyph before merging, so word boundaries
survive in the learned pieces and decoding is a pure string concat. Training
is greedy: repeatedly merge the most frequent adjacent symbol pair, ties
broken by lexicographically smallest pair, until the vocabulary budget is
spent or no pairs remain. No randomness is involved; the seed parameter is
accepted for interface uniformity and recorded, nothing more.

Special ids sit at the low end and are never produced by text encoding:
PAD=0, UNK=1, CLS=2, SEP=3, MASK=4.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from lusoforge.errors import DataError

MARKER = "▁"
SPECIAL_TOKENS = ("<pad>", "<unk>", "<cls>", "<sep>", "<mask>")
PAD, UNK, CLS, SEP, MASK = range(5)
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TokenSequence:
    ids: list[int]
    segments: list[int]

    def __len__(self):
        return len(self.ids)


@dataclass
class TokenizerModel:
    """Immutable after training; encode/decode are safe to call concurrently."""

    vocab: dict[str, int]
    merges: list[tuple[str, str]]
    specials: dict[str, int]
    marker: str = MARKER
    _ranks: dict[tuple[str, str], int] = field(default_factory=dict, repr=False)
    _id_to_token: dict[int, str] = field(default_factory=dict, repr=False)
    _cache: dict[str, tuple[str, ...]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._ranks:
            self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        if not self._id_to_token:
            self._id_to_token = {i: t for t, i in self.vocab.items()}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset(self.specials.values())


def normalize(text: str) -> str:
    """NFC plus whitespace-run collapapse; no case folding."""
    return " ".join(unicodedata.normalize("NFC", text).split())


def _marked_words(text: str) -> list[str]:
    norm = normalize(text)
    if not norm:
        return []
    return [MARKER + w for w in norm.split(" ")]


def train_tokenizer(corpus: Iterable, vocab_size: int, seed: int = 0) -> TokenizerModel:
    """Learn a BPE vocabulary from an iterable of strings or Documents.

    Deterministic in corpus order; `seed` is unused (greedy BPE draws no
    randomness) but kept so every trainer in the codebase has the same
    calling shape. Raises DataError on an empty corpus or a vocab_size with
    no room for the base alphabet.
    """
    word_freq: Counter[str] = Counter()
    for doc in corpus:
        text = doc if isinstance(doc, str) else getattr(doc, "text", "")
        for w in _marked_words(text):
            word_freq[w] += 1
    if not word_freq:
        raise DataError("cannot train tokenizer on an empty corpus")

    base = sorted({ch for w in word_freq for ch in w})
    minimum = len(SPECIAL_TOKENS) + len(base) + 1
    if vocab_size < minimum:
        raise DataError(
            f"vocab_size {vocab_size} too small: need at least {minimum} "
            f"({len(SPECIAL_TOKENS)} specials + {len(base)} base symbols + 1)"
        )

    vocab: dict[str, int] = {t: i for i, t in enumerate(SPECIAL_TOKENS)}
    for ch in base:
        vocab[ch] = len(vocab)

    # words as symbol tuples, weighted by frequency
    words: dict[tuple[str, ...], int] = {tuple(w): f for w, f in word_freq.items()}
    merges: list[tuple[str, str]] = []

    while len(vocab) < vocab_size:
        pair_freq: Counter[tuple[str, str]] = Counter()
        for syms, f in words.items():
            for a, b in zip(syms, syms[1:]):
                pair_freq[(a, b)] += f
        if not pair_freq:
            break
        best_count = max(pair_freq.values())
        best = min(p for p, c in pair_freq.items() if c == best_count)
        merged = best[0] + best[1]
        merges.append(best)
        vocab[merged] = len(vocab)
        new_words: dict[tuple[str, ...], int] = {}
        for syms, f in words.items():
            out: list[str] = []
            i = 0
            while i < len(syms):
                if i + 1 < len(syms) and (syms[i], syms[i + 1]) == best:
                    out.append(merged)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            new_words[tuple(out)] = new_words.get(tuple(out), 0) + f
        words = new_words

    specials = {name.strip("<>").upper(): i for i, name in enumerate(SPECIAL_TOKENS)}
    return TokenizerModel(vocab=vocab, merges=merges, specials=specials)


def _bpe(model: TokenizerModel, word: str) -> tuple[str, ...]:
    cached = model._cache.get(word)
    if cached is not None:
        return cached
    syms = tuple(word)
    ranks = model._ranks
    while len(syms) > 1:
        best_rank = None
        best_i = -1
        for i in range(len(syms) - 1):
            r = ranks.get((syms[i], syms[i + 1]))
            if r is not None and (best_rank is None or r < best_rank):
                best_rank = r
                best_i = i
        if best_rank is None:
            break
        syms = syms[:best_i] + (syms[best_i] + syms[best_i + 1],) + syms[best_i + 2 :]
    model._cache[word] = syms
    return syms


def _text_to_ids(model: TokenizerModel, text: str) -> list[int]:
    ids: list[int] = []
    unk = model.specials["UNK"]
    for word in _marked_words(text):
        for piece in _bpe(model, word):
            ids.append(model.vocab.get(piece, unk))
    return ids


def encode(model: TokenizerModel, text: str, max_len: int = 128, add_specials: bool = True) -> TokenSequence:
    """Tokenize one text. With add_specials the result is [CLS] ... [SEP],
    truncated so the total length never exceeds max_len and SEP stays last."""
    if add_specials and max_len < 2:
        raise ValueError(f"max_len {max_len} leaves no room for CLS/SEP")
    ids = _text_to_ids(model, text)
    if add_specials:
        ids = [CLS] + ids[: max_len - 2] + [SEP]
    else:
        ids = ids[:max_len]
    return TokenSequence(ids=ids, segments=[0] * len(ids))


def encode_pair(model: TokenizerModel, text_a: str, text_b: str, max_len: int = 128) -> TokenSequence:
    """[CLS] a [SEP] b [SEP] with longest-first truncation into the budget.

    Segment ids are 0 through the first SEP and 1 afterwards.
    """
    if max_len < 3:
        raise ValueError(f"max_len {max_len} leaves no room for CLS/SEP/SEP")
    a = _text_to_ids(model, text_a)
    b = _text_to_ids(model, text_b)
    budget = max_len - 3
    while len(a) + len(b) > budget:
        if len(a) >= len(b):
            a.pop()
        else:
            b.pop()
    ids = [CLS] + a + [SEP] + b + [SEP]
    segments = [0] * (len(a) + 2) + [1] * (len(b) + 1)
    return TokenSequence(ids=ids, segments=segments)


def decode(model: TokenizerModel, ids: Iterable[int]) -> str:
    """Inverse of encode on UNK-free input: drop specials, markers → spaces."""
    special = model.special_ids
    pieces: list[str] = []
    for i in ids:
        i = int(i)
        token = model._id_to_token.get(i)
        if token is None:
            raise DataError(f"token id {i} outside vocabulary of size {model.vocab_size}")
        if i in special:
            continue
        pieces.append(token)
    return "".join(pieces).replace(model.marker, " ").lstrip(" ")


def save_tokenizer(model: TokenizerModel, path: str | Path):
    """Canonical JSON: sorted keys, 2-space indent, UTF-8, trailing newline.
    Identical models serialize to identical bytes."""
    payload = {
        "version": FORMAT_VERSION,
        "vocab": model.vocab,
        "merges": [list(p) for p in model.merges],
        "specials": model.specials,
        "marker": model.marker,
    }
    text = json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def load_tokenizer(path: str | Path) -> TokenizerModel:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read tokenizer file {path}: {e}") from e
    if payload.get("version") != FORMAT_VERSION:
        raise DataError(f"unsupported tokenizer format version {payload.get('version')!r}")
    merges = [tuple(p) for p in payload["merges"]]
    vocab = payload["vocab"]
    for left, right in merges:
        if left + right not in vocab:
            raise DataError(f"merge output {left + right!r} missing from vocab")
    return TokenizerModel(
        vocab=vocab,
        merges=merges,
        specials=payload["specials"],
        marker=payload.get("marker", MARKER),
    )
