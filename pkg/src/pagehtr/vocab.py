"""Character vocabulary with markup tags.

Ids 0-3 are reserved (PAD, BOS, EOS, UNK); characters follow in code point
order, then tags in the order given. Tags are matched longest-first before
falling back to single characters, so ``"<math>"`` is one token while a lone
``"<"`` is the less-than character.
"""

from __future__ import annotations

import string
from pathlib import Path

from .errors import VocabularyError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")
UNK_CHAR = "�"

COL = "<col>"
DEFAULT_TAGS = ("<end-of-region>", "<math>", "<deleted-text>", "<table>", "<drawing>", COL)


def base_charset() -> str:
    """Lowercase printable ASCII (incl. space) plus newline."""
    printable = string.printable[:95]  # digits, letters, punctuation, space
    return "".join(sorted({c for c in printable if not c.isupper()} | {"\n"}))


class Vocabulary:
    __slots__ = ("tokens", "index", "tags", "_tags_by_len", "newline_id")

    def __init__(self, tokens):
        tokens = tuple(tokens)
        if tokens[:4] != RESERVED:
            raise VocabularyError("the first four tokens must be the reserved tokens")
        index = {}
        for i, tok in enumerate(tokens):
            if not tok:
                raise VocabularyError("empty token")
            if tok in index:
                raise VocabularyError(f"duplicate token {tok!r}")
            if len(tok) > 1 and not (tok.startswith("<") and tok.endswith(">")):
                raise VocabularyError(f"multi-character token {tok!r} is not a <tag>")
            index[tok] = i
        self.tokens = tokens
        self.index = index
        self.tags = tuple(t for t in tokens[4:] if len(t) > 1)
        self._tags_by_len = sorted(self.tags, key=len, reverse=True)
        self.newline_id = index.get("\n")

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __hash__(self):
        return hash(self.tokens)

    def __repr__(self):
        return f"Vocabulary(V={len(self)}, tags={list(self.tags)})"

    def id(self, token: str) -> int:
        return self.index[token]

    @property
    def charset(self) -> str:
        return "".join(t for t in self.tokens[4:] if len(t) == 1)

    def encode(self, text: str, eos: bool = True) -> list[int]:
        return encode_text(self, text, eos=eos)

    def decode(self, ids) -> str:
        return decode_tokens(self, ids)

    def tokenize(self, text: str) -> list[str]:
        """Split ``text`` into token strings (tags whole, characters lowercased)."""
        out = []
        i, n = 0, len(text)
        tags = self._tags_by_len
        while i < n:
            if text[i] == "<" and tags:
                for tag in tags:
                    if text.startswith(tag, i):
                        out.append(tag)
                        i += len(tag)
                        break
                else:
                    out.append("<")
                    i += 1
                continue
            out.append(text[i].lower())
            i += 1
        return out

    # serialization: one token per line, newline written as the two characters "\n"
    def save(self, path):
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def dumps(self) -> str:
        return "".join(("\\n" if t == "\n" else t) + "\n" for t in self.tokens)

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls("\n" if ln == "\\n" else ln for ln in lines)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def build_vocab(charset: str | None = None, tags=DEFAULT_TAGS) -> Vocabulary:
    """Reserved tokens, then ``charset`` in code point order, then ``tags``."""
    chars = sorted(set(base_charset() if charset is None else charset))
    for tag in tags:
        if len(tag) < 2 or not (tag.startswith("<") and tag.endswith(">")):
            raise VocabularyError(f"tag {tag!r} must be delimited by '<' and '>'")
    return Vocabulary((*RESERVED, *chars, *tags))


def encode_text(v: Vocabulary, text: str, eos: bool = True) -> list[int]:
    """Token ids for ``text``; unknown characters map to UNK, EOS appended."""
    index = v.index
    ids = [index.get(tok, UNK) for tok in v.tokenize(text)]
    if eos:
        ids.append(EOS)
    return ids


def decode_tokens(v: Vocabulary, ids) -> str:
    """Concatenate token strings up to the first EOS; PAD/BOS vanish, UNK is U+FFFD."""
    V = len(v.tokens)
    out = []
    for i in ids:
        i = int(i)
        if i < 0 or i >= V:
            raise VocabularyError(f"token id {i} outside [0, {V})")
        if i == EOS:
            break
        if i in (PAD, BOS):
            continue
        out.append(UNK_CHAR if i == UNK else v.tokens[i])
    return "".join(out)
