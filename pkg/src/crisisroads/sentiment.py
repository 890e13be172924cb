"""Rule-based lexicon sentiment: compound scores in [-1, 1].

Two entry points share one lexicon:

* :func:`score_tokens` works on the cleaned token stream produced by
  :mod:`crisisroads.textproc` (valence, negation and boosters only).
* :func:`score_text` works on raw post text and additionally applies the
  capitalisation, punctuation, contrastive "but", "least" and emoji rules of
  the VADER model. It is the route that matches scores computed by the
  ``vaderSentiment`` package.
"""
from __future__ import annotations

import csv
import math
import string
from dataclasses import dataclass, field
from datetime import datetime
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .textproc import TokenizedPost, _data_path

ALPHA = 15.0
NEGATION_SCALAR = -0.74
BOOSTER_DECAY = (1.0, 0.95, 0.9)
CAPS_INCREMENT = 0.733
EXCLAMATION_INCREMENT = 0.292
QUESTION_INCREMENT = 0.18

# phrase-level overrides used by the text scorer
SPECIAL_CASES = {
    "the shit": 3.0,
    "the bomb": 3.0,
    "bad ass": 1.5,
    "badass": 1.5,
    "bus stop": 0.0,
    "yeah right": -2.0,
    "kiss of death": -1.5,
    "to die for": 3.0,
    "beating heart": 3.5,
}


@dataclass(frozen=True)
class SentimentLexicon:
    valence: Mapping[str, float]
    boosters: Mapping[str, float] = field(default_factory=dict)
    negators: frozenset[str] = frozenset()
    emoji: Mapping[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.valence:
            raise ValueError("valence lexicon is empty")
        for tok, inc in self.boosters.items():
            if not math.isfinite(inc):
                raise ValueError(f"booster {tok!r} has non-finite increment")

    @classmethod
    def from_files(
        cls,
        valence_path: str | Path,
        boosters_path: str | Path | None = None,
        negators_path: str | Path | None = None,
        emoji_path: str | Path | None = None,
    ) -> "SentimentLexicon":
        return cls(
            valence=read_tsv_values(valence_path),
            boosters=read_tsv_values(boosters_path) if boosters_path else {},
            negators=frozenset(read_tsv_values(negators_path, values=False)) if negators_path else frozenset(),
            emoji=read_emoji(emoji_path) if emoji_path else {},
        )


def read_tsv_values(path: str | Path, values: bool = True) -> dict:
    """``token<TAB>value`` lines; extra columns and '#' comment lines ignored.

    With ``values=False`` only the first column is read (value set to 0).
    """
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("# "):
                continue
            cols = line.split("\t")
            token = cols[0].strip().lower()
            if not token:
                continue
            out[token] = float(cols[1]) if values else 0.0
    return out


def read_emoji(path: str | Path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            cols = line.rstrip("\n").split("\t")
            if len(cols) >= 2 and cols[0]:
                out[cols[0]] = cols[1]
    return out


@lru_cache(maxsize=None)
def default_lexicon() -> SentimentLexicon:
    """The bundled VADER lexicon with its booster and negation lists."""
    return SentimentLexicon.from_files(
        _data_path("vader_lexicon.tsv"),
        _data_path("boosters.tsv"),
        _data_path("negators.tsv"),
        _data_path("emoji_lexicon.tsv"),
    )


def normalize(s: float, alpha: float = ALPHA) -> float:
    """Map a raw valence sum onto (-1, 1) via s / sqrt(s^2 + alpha)."""
    if s == 0:
        return 0.0
    c = s / math.sqrt(s * s + alpha)
    return max(-1.0, min(1.0, c))


def score_tokens(
    tokens: Sequence[str],
    lexicon: SentimentLexicon | None = None,
    alpha: float = ALPHA,
    negation_scalar: float = NEGATION_SCALAR,
) -> float:
    """Compound sentiment of a token list.

    Each valenced token is negated (x -0.74) if a negator sits within the
    three preceding tokens, then gains booster increments for boosters in the
    same window, signed like the (possibly negated) valence and decayed by
    0.95 / 0.9 at distances 2 / 3.
    """
    lex = lexicon or default_lexicon()
    total = 0.0
    for i, tok in enumerate(tokens):
        v = lex.valence.get(tok)
        if v is None:
            continue
        window = tokens[max(0, i - 3) : i]
        if any(t in lex.negators for t in window):
            v *= negation_scalar
        for dist in (1, 2, 3):
            if i - dist < 0:
                break
            inc = lex.boosters.get(tokens[i - dist])
            if inc:
                inc = inc if v >= 0 else -inc
                v += inc * BOOSTER_DECAY[dist - 1]
        total += v
    return normalize(total, alpha)


# --- raw-text scorer ------------------------------------------------------


def _strip_punct(word: str) -> str:
    stripped = word.strip(string.punctuation)
    return word if len(stripped) <= 2 else stripped


def _replace_emoji(text: str, emoji: Mapping[str, str]) -> str:
    out = []
    prev_space = True
    for ch in text:
        desc = emoji.get(ch)
        if desc is not None:
            if not prev_space:
                out.append(" ")
            out.append(desc)
            prev_space = False
        else:
            out.append(ch)
            prev_space = ch == " "
    return "".join(out).strip()


def _is_negated(word: str, negators: frozenset[str]) -> bool:
    return word in negators or "n't" in word


def _booster_scalar(word: str, valence: float, lex: SentimentLexicon, cap_diff: bool) -> float:
    inc = lex.boosters.get(word.lower(), 0.0)
    if inc == 0.0:
        return 0.0
    if valence < 0:
        inc = -inc
    if cap_diff and word.isupper():
        inc += CAPS_INCREMENT if valence > 0 else -CAPS_INCREMENT
    return inc


def _word_valence(words: list[str], lower: list[str], i: int, lex: SentimentLexicon, cap_diff: bool) -> float:
    item = lower[i]
    base = lex.valence[item]
    v = base
    n = len(words)
    if item == "no" and i != n - 1 and lower[i + 1] in lex.valence:
        v = 0.0
    if (
        (i > 0 and lower[i - 1] == "no")
        or (i > 1 and lower[i - 2] == "no")
        or (i > 2 and lower[i - 3] == "no" and lower[i - 1] in ("or", "nor"))
    ):
        v = base * NEGATION_SCALAR
    if cap_diff and words[i].isupper():
        v += CAPS_INCREMENT if v > 0 else -CAPS_INCREMENT

    for k in range(3):
        j = i - (k + 1)
        if j < 0 or lower[j] in lex.valence:
            continue
        s = _booster_scalar(words[j], v, lex, cap_diff)
        v += s * BOOSTER_DECAY[k]
        if k == 0:
            if _is_negated(lower[j], lex.negators):
                v *= NEGATION_SCALAR
        elif k == 1:
            if lower[i - 2] == "never" and lower[i - 1] in ("so", "this"):
                v *= 1.25
            elif lower[i - 2] == "without" and lower[i - 1] == "doubt":
                pass
            elif _is_negated(lower[j], lex.negators):
                v *= NEGATION_SCALAR
        else:
            if (lower[i - 3] == "never" and lower[i - 2] in ("so", "this")) or lower[i - 1] in ("so", "this"):
                v *= 1.25
            elif lower[i - 3] == "without" and "doubt" in (lower[i - 2], lower[i - 1]):
                pass
            elif _is_negated(lower[j], lex.negators):
                v *= NEGATION_SCALAR
            v = _special_cases(v, lower, i, lex)

    # "least" negates unless part of "at least" / "very least"
    if i > 1 and lower[i - 1] == "least" and lower[i - 1] not in lex.valence:
        if lower[i - 2] not in ("at", "very"):
            v *= NEGATION_SCALAR
    elif i > 0 and lower[i - 1] == "least" and lower[i - 1] not in lex.valence:
        v *= NEGATION_SCALAR
    return v


def _special_cases(v: float, lower: list[str], i: int, lex: SentimentLexicon) -> float:
    before = [
        f"{lower[i - 1]} {lower[i]}",
        f"{lower[i - 2]} {lower[i - 1]} {lower[i]}",
        f"{lower[i - 2]} {lower[i - 1]}",
        f"{lower[i - 3]} {lower[i - 2]} {lower[i - 1]}",
        f"{lower[i - 3]} {lower[i - 2]}",
    ]
    for seq in before:
        if seq in SPECIAL_CASES:
            v = SPECIAL_CASES[seq]
            break
    if len(lower) - 1 > i:
        seq = f"{lower[i]} {lower[i + 1]}"
        if seq in SPECIAL_CASES:
            v = SPECIAL_CASES[seq]
    if len(lower) - 1 > i + 1:
        seq = f"{lower[i]} {lower[i + 1]} {lower[i + 2]}"
        if seq in SPECIAL_CASES:
            v = SPECIAL_CASES[seq]
    for gram in (before[3], before[4], before[2]):
        if gram in lex.boosters:
            v += lex.boosters[gram]
    return v


def _punctuation_amplifier(text: str) -> float:
    amp = min(text.count("!"), 4) * EXCLAMATION_INCREMENT
    qm = text.count("?")
    if qm > 1:
        amp += qm * QUESTION_INCREMENT if qm <= 3 else 0.96
    return amp


def score_text(text: str, lexicon: SentimentLexicon | None = None, alpha: float = ALPHA) -> float:
    """Compound sentiment of raw text under the full VADER rule set."""
    lex = lexicon or default_lexicon()
    text = _replace_emoji(text, lex.emoji)
    words = [_strip_punct(w) for w in text.split()]
    if not words:
        return 0.0
    lower = [w.lower() for w in words]
    n_caps = sum(1 for w in words if w.isupper())
    cap_diff = 0 < len(words) - n_caps < len(words)

    sentiments = []
    for i, item in enumerate(lower):
        if item in lex.boosters:
            sentiments.append(0.0)
        elif item == "kind" and i < len(lower) - 1 and lower[i + 1] == "of":
            sentiments.append(0.0)
        elif item in lex.valence:
            sentiments.append(_word_valence(words, lower, i, lex, cap_diff))
        else:
            sentiments.append(0.0)

    if "but" in lower:
        bi = lower.index("but")
        sentiments = [s * 0.5 if k < bi else s * 1.5 if k > bi else s for k, s in enumerate(sentiments)]

    total = sum(sentiments)
    amp = _punctuation_amplifier(text)
    if total > 0:
        total += amp
    elif total < 0:
        total -= amp
    return normalize(total, alpha)


# --- batch scoring --------------------------------------------------------


@dataclass(frozen=True)
class ScoredPost:
    post_id: str
    compound: float
    lon: float | None
    lat: float | None
    ts: datetime | None


def score_posts(
    posts: Sequence[TokenizedPost],
    lexicon: SentimentLexicon | None = None,
    mode: str = "tokens",
) -> list[ScoredPost]:
    """Score each post, carrying id, location and timestamp through.

    ``mode="tokens"`` scores the token list; ``mode="text"`` scores the raw
    text kept on the post.
    """
    lex = lexicon or default_lexicon()
    out = []
    for p in posts:
        if mode == "tokens":
            c = score_tokens(p.tokens, lex)
        elif mode == "text":
            c = score_text(p.text or "", lex)
        else:
            raise ValueError(f"unknown sentiment mode {mode!r}")
        out.append(ScoredPost(p.post_id, c, p.lon, p.lat, p.ts))
    return out


def write_scored_csv(scored: Iterable[ScoredPost], path: str | Path) -> None:
    from .ingest import format_ts

    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["post_id", "ts", "lon", "lat", "compound"])
        for s in scored:
            w.writerow(
                [s.post_id, format_ts(s.ts) if s.ts else "", f"{s.lon:.9g}", f"{s.lat:.9g}", f"{s.compound:.9g}"]
            )


def read_scored_csv(path: str | Path) -> list[ScoredPost]:
    from .ingest import parse_ts

    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(
                ScoredPost(
                    rec["post_id"],
                    float(rec["compound"]),
                    float(rec["lon"]),
                    float(rec["lat"]),
                    parse_ts(rec["ts"]) if rec["ts"] else None,
                )
            )
    return out
