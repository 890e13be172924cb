"""Tokenisation, keyword relevance and the daily top-K word matrix."""
from __future__ import annotations

import csv
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from datetime import date, datetime, timedelta
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

_URL = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION = re.compile(r"@\w+")
_ENTITY = re.compile(r"&(?:[a-zA-Z]+|#\d+|#x[0-9a-fA-F]+);")
_SPLIT = re.compile(r"[^0-9a-z]+")


def _data_path(name: str) -> Path:
    return Path(str(resources.files("crisisroads") / "data" / name))


def read_word_list(path: str | Path) -> list[str]:
    """One token per line; '#' starts a comment; blank lines ignored."""
    words = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                words.append(line.split("\t")[0].strip().lower())
    return words


def read_lemma_table(path: str | Path) -> dict[str, str]:
    table = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].rstrip("\n")
            if not line.strip():
                continue
            surface, lemma = line.split("\t")[:2]
            table[surface.strip().lower()] = lemma.strip().lower()
    return table


@lru_cache(maxsize=None)
def default_stopwords() -> frozenset[str]:
    return frozenset(read_word_list(_data_path("stopwords.txt")))


@lru_cache(maxsize=None)
def default_lemmas() -> dict[str, str]:
    # shared instance; callers must not mutate it
    return read_lemma_table(_data_path("lemmas.tsv"))


@dataclass(frozen=True)
class RelevanceLexicon:
    keywords: frozenset[str]

    def __post_init__(self):
        if not self.keywords:
            raise ValueError("relevance lexicon is empty")
        if any(k != k.lower() for k in self.keywords):
            raise ValueError("relevance keywords must be lowercase")

    @classmethod
    def from_file(cls, path: str | Path) -> "RelevanceLexicon":
        return cls(frozenset(read_word_list(path)))

    @classmethod
    def default(cls) -> "RelevanceLexicon":
        return cls.from_file(_data_path("relevance.txt"))


@dataclass(frozen=True)
class TokenizedPost:
    post_id: str
    tokens: tuple[str, ...]
    ts: datetime | None = None
    lon: float | None = None
    lat: float | None = None
    text: str | None = None


def _fold(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def lemmatize(token: str, lemma_table: Mapping[str, str]) -> str:
    """Dictionary lookup, else strip a plural/possessive 's'."""
    if token in lemma_table:
        return lemma_table[token]
    if token.endswith("s") and len(token) - 1 >= 3 and token[-2] not in "su":
        return token[:-1]
    return token


def tokenize(
    text: str,
    stopwords: Iterable[str] | None = None,
    lemma_table: Mapping[str, str] | None = None,
) -> list[str]:
    """Clean a post and split it into lowercase lemmatised tokens.

    URLs and @mentions are removed outright, hashtags keep their word, HTML
    entities, emoji and other non-alphanumerics act as separators. Stopwords,
    single characters and bare numbers are dropped.
    """
    stop = default_stopwords() if stopwords is None else frozenset(stopwords)
    lemmas = default_lemmas() if lemma_table is None else lemma_table
    text = _URL.sub(" ", text)
    text = _MENTION.sub(" ", text)
    text = _ENTITY.sub(" ", text)
    text = _fold(text).lower()
    out = []
    for raw in _SPLIT.split(text):
        if len(raw) < 2 or raw.isdigit() or raw in stop:
            continue
        tok = lemmatize(raw, lemmas)
        if len(tok) < 2 or tok in stop:
            continue
        out.append(tok)
    return out


class Tokenizer:
    """Tokeniser bound to one stopword list and lemma table."""

    def __init__(self, stopwords: Iterable[str] | None = None, lemma_table: Mapping[str, str] | None = None):
        self.stopwords = default_stopwords() if stopwords is None else frozenset(stopwords)
        self.lemma_table = default_lemmas() if lemma_table is None else dict(lemma_table)

    def __call__(self, text: str) -> list[str]:
        return tokenize(text, self.stopwords, self.lemma_table)


def is_relevant(tokens: Iterable[str], lexicon: RelevanceLexicon) -> bool:
    return any(t in lexicon.keywords for t in tokens)


# --- frequency matrix -----------------------------------------------------


@dataclass
class FrequencyMatrix:
    words: list[str]
    days: list[date]
    counts: list[list[int]]
    coverage_share: float
    vocabulary_size: int = 0
    truncated_k: bool = False

    def totals(self) -> list[int]:
        return [sum(row) for row in self.counts]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["word", "total"] + [d.isoformat() for d in self.days])
            for word, row in zip(self.words, self.counts):
                w.writerow([word, sum(row)] + row)


def frequency_matrix(posts: Sequence[TokenizedPost], k: int = 50) -> FrequencyMatrix:
    """Token occurrences per UTC day for the ``k`` most frequent words.

    Words are ordered by descending total, ties alphabetically. ``days`` spans
    every calendar day between the first and last post.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    per_day: dict[date, Counter] = {}
    totals: Counter = Counter()
    for p in posts:
        if not p.tokens:
            continue
        if p.ts is None:
            raise ValueError(f"post {p.post_id} has no timestamp")
        day = p.ts.date()
        per_day.setdefault(day, Counter()).update(p.tokens)
        totals.update(p.tokens)
    if not totals:
        return FrequencyMatrix([], [], [], 0.0, 0, False)
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))
    top = ranked[:k]
    first, last = min(per_day), max(per_day)
    days = [first + timedelta(days=i) for i in range((last - first).days + 1)]
    words = [w for w, _ in top]
    counts = [[per_day.get(d, Counter())[w] for d in days] for w in words]
    grand = sum(totals.values())
    share = sum(c for _, c in top) / grand
    return FrequencyMatrix(words, days, counts, share, len(totals), k > len(totals))
