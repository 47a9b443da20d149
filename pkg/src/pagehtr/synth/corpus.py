"""Seed corpus loading, normalization and span sampling."""

from __future__ import annotations

import re
import unicodedata
from importlib import resources
from pathlib import Path

from ..errors import ContractError
from ..vocab import base_charset

# nearest in-charset equivalents for common typography
_EQUIV = {
    "‘": "'", "’": "'", "‚": "'", "‛": "'", "′": "'",
    "“": '"', "”": '"', "„": '"', "″": '"', "«": '"', "»": '"',
    "–": "-", "—": "-", "―": "-", "‐": "-", "‑": "-", "−": "-",
    "…": "...", "•": "*", "·": ".", "×": "x", "÷": "/",
    " ": " ", " ": " ", " ": " ", "\t": " ",
}
_WS = re.compile(r"\s+")


def normalize_text(text: str, charset: str | None = None, unknown: str = "drop",
                   collapse_whitespace: bool = True) -> str:
    """Lowercase and fold ``text`` onto ``charset``.

    Typographic punctuation and accented letters map to their closest
    ASCII form; anything else is dropped (``unknown="drop"``) or replaced
    by a space (``unknown="space"``). With ``collapse_whitespace`` all
    whitespace runs become one space, leaving line breaks to the renderer.
    """
    allowed = set(base_charset() if charset is None else charset)
    if collapse_whitespace:
        text = _WS.sub(" ", text)
    out = []
    for ch in text:
        ch = _EQUIV.get(ch, ch)
        for c in ch.lower():
            if c in allowed:
                out.append(c)
                continue
            folded = "".join(x for x in unicodedata.normalize("NFKD", c) if not unicodedata.combining(x))
            if folded and all(x in allowed for x in folded):
                out.append(folded)
            elif unknown == "space":
                out.append(" ")
    text = "".join(out)
    if collapse_whitespace:
        text = _WS.sub(" ", text)
    return text


def default_corpus_text() -> str:
    return resources.files("pagehtr.synth").joinpath("data/corpus.txt").read_text(encoding="utf-8")


def load_corpus(path=None, charset: str | None = None) -> str:
    """Normalized seed text from ``path`` (UTF-8) or the bundled public-domain corpus."""
    raw = default_corpus_text() if path is None else Path(path).read_text(encoding="utf-8")
    text = normalize_text(raw, charset).strip()
    if not text:
        raise ContractError("seed corpus is empty after normalization")
    return text


def split_corpus(text: str, holdout: float = 0.1):
    """``(train, heldout)`` split at a word boundary near ``1 - holdout``."""
    cut = int(len(text) * (1.0 - holdout))
    sp = text.find(" ", cut)
    cut = sp if sp > 0 else cut
    return text[:cut].strip(), text[cut:].strip()


def sample_text_span(corpus: str, len_range, rng) -> str:
    """Contiguous substring with uniform length in ``len_range`` and uniform start."""
    if not corpus:
        raise ContractError("cannot sample from an empty corpus")
    lo, hi = int(len_range[0]), int(len_range[1])
    if lo < 1 or hi < lo:
        raise ContractError(f"invalid span length range {len_range}")
    if len(corpus) < hi:
        raise ContractError(f"corpus ({len(corpus)} chars) shorter than the maximum span {hi}")
    n = int(rng.integers(lo, hi + 1))
    start = int(rng.integers(0, len(corpus) - n + 1))
    return corpus[start:start + n]


def sample_word_text(words, len_range, rng) -> str:
    """Words drawn independently and uniformly from ``words``, cut to a uniform length in ``len_range``.

    Unlike a contiguous span, the sequence cannot be predicted from the
    corpus, only from the page.
    """
    if not words:
        raise ContractError("cannot sample from an empty word list")
    lo, hi = int(len_range[0]), int(len_range[1])
    if lo < 1 or hi < lo:
        raise ContractError(f"invalid span length range {len_range}")
    n = int(rng.integers(lo, hi + 1))
    out, size = [], -1
    while size < n:
        w = words[int(rng.integers(len(words)))]
        out.append(w)
        size += len(w) + 1
    return " ".join(out)[:n]
