"""Web-corpus curation: TLD filtering, deduplication, quality filtering, stats.

Stages are pure per-document functions chained in a fixed order (TLD ->
exact dedup -> optional near-dup -> quality). Every rejected document gets
exactly one reason, the first stage that fails it; kept documents come out
in input order. Quality checks may run on a thread pool, but results are
merged back in order so --threads never changes outputs.

The quality chain evaluates word-repetition before character-repetition:
heavy word-level repetition trips both ratios, and the word-level reason is
the informative one.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Iterable, Sequence
from urllib.parse import urlsplit

from lusoforge.errors import DataError

SOURCES = ("OSCAR", "DCEP", "Europarl", "ParlamentoPT", "OTHER")
_URL_TOKEN = re.compile(r"https?://|www\.", re.IGNORECASE)


@dataclass
class Document:
    id: str
    text: str
    source: str = "OTHER"
    url: str | None = None
    tld: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.text is None:
            raise DataError(f"document {self.id!r} has null text")
        if self.source not in SOURCES:
            self.source = "OTHER"


@dataclass
class QualityThresholds:
    min_chars: int = 200
    min_words: int = 40
    max_word_repetition: float = 0.19
    word_ngram: int = 5
    max_char_repetition: float = 0.106
    char_ngram: int = 10
    max_nonalpha: float = 0.4
    max_url_ratio: float = 0.2


@dataclass
class PipelineConfig:
    country_code: str | None = None
    deduplicate: bool = True
    near_duplicates: bool = False
    near_dup_jaccard: float = 0.8
    near_dup_ngram: int = 5
    thresholds: QualityThresholds = field(default_factory=QualityThresholds)
    threads: int = 1


@dataclass
class StageReport:
    name: str
    input: int
    kept: int
    rejected: dict[str, int] = field(default_factory=dict)

    def check(self):
        if self.kept + sum(self.rejected.values()) != self.input:
            raise AssertionError(f"stage {self.name}: kept+rejected != input")


@dataclass
class FilterReport:
    input_count: int = 0
    kept_count: int = 0
    stages: list[StageReport] = field(default_factory=list)
    sources: dict[str, dict] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# JSON Lines IO


def read_jsonl(path: str | Path) -> list[Document]:
    """One Document per line; fields beyond the known ones are preserved in
    `extra` and written back out verbatim. Duplicate ids are a data error."""
    docs: list[Document] = []
    seen: set[str] = set()
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read corpus file {path}: {e}") from e
    with handle as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: invalid JSON: {e}") from e
            if "id" not in obj or "text" not in obj:
                raise DataError(f"{path}:{lineno}: document needs 'id' and 'text'")
            doc = Document(
                id=str(obj.pop("id")),
                text=obj.pop("text"),
                source=obj.pop("source", "OTHER"),
                url=obj.pop("url", None),
                tld=obj.pop("tld", None),
                extra=obj,
            )
            if doc.id in seen:
                raise DataError(f"{path}:{lineno}: duplicate document id {doc.id!r}")
            seen.add(doc.id)
            docs.append(doc)
    return docs


def write_jsonl(docs: Iterable[Document], path: str | Path):
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            obj = {"id": doc.id, "text": doc.text, "source": doc.source}
            if doc.url is not None:
                obj["url"] = doc.url
            if doc.tld is not None:
                obj["tld"] = doc.tld
            obj.update(doc.extra)
            f.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# stages


def tld_reason(doc: Document, country_code: str) -> str | None:
    """None to keep; otherwise 'no-url' or 'tld'. A document whose url lacks
    a parseable hostname counts as having no url."""
    if not doc.url:
        return "no-url"
    try:
        host = urlsplit(doc.url).hostname
    except ValueError:
        host = None
    if not host:
        return "no-url"
    return None if host.lower().endswith("." + country_code.lower()) else "tld"


def filter_by_tld(docs: Sequence[Document], country_code: str) -> list[Document]:
    if len(country_code) != 2 or not country_code.isalpha():
        raise ValueError(f"country code must be two letters, got {country_code!r}")
    return [d for d in docs if tld_reason(d, country_code) is None]


def content_hash(text: str) -> int:
    """64-bit digest of whitespace-collapsed text."""
    import hashlib

    norm = " ".join(text.split())
    return int.from_bytes(hashlib.blake2b(norm.encode("utf-8"), digest_size=8).digest(), "little")


def deduplicate(docs: Sequence[Document]) -> list[Document]:
    seen: set[int] = set()
    out: list[Document] = []
    for d in docs:
        h = content_hash(d.text)
        if h not in seen:
            seen.add(h)
            out.append(d)
    return out


def _shingles(text: str, n: int) -> frozenset[int]:
    # stable across processes, unlike builtin hash()
    words = text.split()
    grams = [words] if len(words) < n else [words[i : i + n] for i in range(len(words) - n + 1)]
    return frozenset(content_hash(" ".join(g)) for g in grams)


def char_repetition_ratio(text: str, n: int = 10) -> float:
    """Mass of the most frequent character n-grams over all n-gram mass.

    'Most frequent' means the top sqrt(#distinct) grams, excluding singleton
    grams from that budget, so short diverse texts score near zero while
    periodic texts score near one.
    """
    if len(text) < n:
        return 0.0
    freqs = sorted(Counter(text[i : i + n] for i in range(len(text) - n + 1)).values(),
                   reverse=True)
    singletons = sum(1 for v in freqs if v == 1)
    top = min(int(math.isqrt(len(freqs))), len(freqs) - singletons)
    total = sum(freqs)
    return sum(freqs[:top]) / total if total else 0.0


def word_repetition_ratio(text: str, n: int = 5) -> float:
    """Mass of repeated word n-grams over all word n-gram mass."""
    words = text.split()
    if len(words) < n:
        return 0.0
    counts = Counter(tuple(words[i : i + n]) for i in range(len(words) - n + 1))
    total = sum(counts.values())
    return sum(v for v in counts.values() if v >= 2) / total


def nonalpha_ratio(text: str) -> float:
    if not text:
        return 1.0
    return sum(1 for c in text if not c.isalpha()) / len(text)


def url_token_ratio(text: str) -> float:
    tokens = text.split()
    if not tokens:
        return 0.0
    return sum(1 for t in tokens if _URL_TOKEN.search(t)) / len(tokens)


def quality_reason(doc: Document, t: QualityThresholds | None = None) -> str | None:
    """First failing check's name, or None when the document passes all."""
    t = t or QualityThresholds()
    text = doc.text
    if len(text) < t.min_chars:
        return "min-length"
    if len(text.split()) < t.min_words:
        return "min-words"
    if word_repetition_ratio(text, t.word_ngram) > t.max_word_repetition:
        return "word-repetition"
    if char_repetition_ratio(text, t.char_ngram) > t.max_char_repetition:
        return "char-repetition"
    if nonalpha_ratio(text) > t.max_nonalpha:
        return "non-alphabetic"
    if url_token_ratio(text) > t.max_url_ratio:
        return "url-ratio"
    return None


def ordered_parallel_map(fn: Callable, items: Sequence, threads: int) -> list:
    """Apply fn to every item, possibly on a pool, preserving input order."""
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# pipeline and stats


def _apply_stage(docs: list[Document], name: str, reason_fn, threads: int,
                 report: FilterReport) -> list[Document]:
    reasons = ordered_parallel_map(reason_fn, docs, threads)
    stage = StageReport(name=name, input=len(docs), kept=0)
    kept: list[Document] = []
    for doc, reason in zip(docs, reasons):
        if reason is None:
            kept.append(doc)
        else:
            stage.rejected[reason] = stage.rejected.get(reason, 0) + 1
    stage.kept = len(kept)
    stage.check()
    report.stages.append(stage)
    return kept


def run_pipeline(docs: Sequence[Document], config: PipelineConfig | None = None,
                 tokenizer=None) -> tuple[list[Document], FilterReport]:
    """Full curation chain. Returns (kept documents, report). Output order
    follows input order; running the chain on its own output is a no-op."""
    config = config or PipelineConfig()
    report = FilterReport(input_count=len(docs))
    current = list(docs)

    if config.country_code:
        cc = config.country_code
        if len(cc) != 2 or not cc.isalpha():
            raise ValueError(f"country code must be two letters, got {cc!r}")
        current = _apply_stage(current, "tld", lambda d: tld_reason(d, cc),
                               config.threads, report)

    if config.deduplicate:
        stage = StageReport(name="dedup", input=len(current), kept=0)
        deduped = deduplicate(current)
        stage.kept = len(deduped)
        if stage.input != stage.kept:
            stage.rejected["duplicate"] = stage.input - stage.kept
        stage.check()
        report.stages.append(stage)
        current = deduped

    if config.near_duplicates:
        stage = StageReport(name="near-dup", input=len(current), kept=0)
        kept: list[Document] = []
        kept_shingles: list[frozenset[int]] = []
        for d in current:
            sh = _shingles(d.text, config.near_dup_ngram)
            dup = False
            for other in kept_shingles:
                inter = len(sh & other)
                union = len(sh | other)
                if union and inter / union >= config.near_dup_jaccard:
                    dup = True
                    break
            if dup:
                stage.rejected["near-duplicate"] = stage.rejected.get("near-duplicate", 0) + 1
            else:
                kept.append(d)
                kept_shingles.append(sh)
        stage.kept = len(kept)
        stage.check()
        report.stages.append(stage)
        current = kept

    current = _apply_stage(current, "quality",
                           lambda d: quality_reason(d, config.thresholds),
                           config.threads, report)

    report.kept_count = len(current)
    report.sources = source_stats(current, tokenizer)
    return current, report


def source_stats(docs: Sequence[Document], tokenizer=None) -> dict[str, dict]:
    """Per-source document/token counts and proportions. Token counts are
    whitespace tokens, or subword counts when a tokenizer is supplied."""
    from lusoforge import tokenizer as tok_mod

    doc_counts: Counter[str] = Counter()
    token_counts: Counter[str] = Counter()
    for d in docs:
        doc_counts[d.source] += 1
        if tokenizer is not None:
            n = len(tok_mod.encode(tokenizer, d.text, max_len=10**9, add_specials=False))
        else:
            n = len(d.text.split())
        token_counts[d.source] += n
    total_docs = sum(doc_counts.values())
    total_tokens = sum(token_counts.values())
    out: dict[str, dict] = {}
    for src in sorted(doc_counts):
        out[src] = {
            "documents": doc_counts[src],
            "tokens": token_counts[src],
            "doc_proportion": doc_counts[src] / total_docs if total_docs else 0.0,
            "token_proportion": token_counts[src] / total_tokens if total_tokens else 0.0,
        }
    return out


def corpus_stats(docs: Sequence[Document], tokenizer=None) -> FilterReport:
    """Statistics-only report: no filtering, just composition."""
    report = FilterReport(input_count=len(docs), kept_count=len(docs))
    report.sources = source_stats(docs, tokenizer)
    return report
