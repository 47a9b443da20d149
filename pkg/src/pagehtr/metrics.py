"""Edit distance and character error rates."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import UndefinedMetric

TAG_RE = re.compile(r"<[A-Za-z][A-Za-z0-9_-]*>")
RULES = ("strip_markup", "strip_indent", "lowercase")


def levenshtein(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute distance over code points."""
    return _kernels.levenshtein(a, b)


def _code_matrix(strings):
    lens = np.array([len(s) for s in strings], dtype=np.int64)
    width = max(1, int(lens.max(initial=0)))
    codes = np.zeros((len(strings), width), dtype=np.uint32)
    for i, s in enumerate(strings):
        if s:
            codes[i, :len(s)] = np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32)
    return codes, lens


def levenshtein_matrix(rows, cols=None) -> np.ndarray:
    """Pairwise distances ``D[i, j] = levenshtein(rows[i], cols[j])``."""
    cols = rows if cols is None else cols
    a, al = _code_matrix(list(rows))
    b, bl = _code_matrix(list(cols))
    return _kernels.levenshtein_matrix(a, al, b, bl)


def cer(pred: str, gt: str) -> float:
    """Distance over ground-truth length; may exceed 1. Empty ``gt`` gives NaN."""
    d = levenshtein(pred, gt)
    return d / len(gt) if gt else math.nan


def corpus_cer(pairs) -> float:
    """Pooled rate: sum of distances over sum of ground-truth lengths."""
    dist = tot = 0
    for pred, gt in pairs:
        dist += levenshtein(pred, gt)
        tot += len(gt)
    if tot == 0:
        raise UndefinedMetric("corpus CER is undefined when every ground truth is empty")
    return dist / tot


def mean_cer(pairs) -> float:
    vals = [cer(p, g) for p, g in pairs if g]
    if not vals:
        raise UndefinedMetric("mean CER is undefined when every ground truth is empty")
    return float(np.mean(vals))


def normalize_for_comparison(text: str, rules=RULES) -> str:
    """Apply the enabled rules in order: drop ``<tag>`` tokens, drop line indentation, lowercase.

    Runs of whitespace are left alone apart from line-leading indentation.
    """
    rules = set(rules)
    unknown = rules - set(RULES)
    if unknown:
        raise ValueError(f"unknown normalization rules: {sorted(unknown)}")
    if "strip_markup" in rules:
        prev = None
        while prev != text:  # removing a tag can expose another, e.g. "<<math>b>"
            prev, text = text, TAG_RE.sub("", text)
    if "strip_indent" in rules:
        text = "\n".join(line.lstrip(" \t") for line in text.split("\n"))
    if "lowercase" in rules:
        text = text.lower()
    return text


@dataclass
class SampleScore:
    id: str
    distance: int
    gt_len: int
    truncated: bool = False

    @property
    def cer(self):
        return self.distance / self.gt_len if self.gt_len else math.nan


@dataclass
class EvalReport:
    samples: list = field(default_factory=list)

    @classmethod
    def from_pairs(cls, ids, preds, gts, truncated=None, rules=None):
        truncated = truncated or [False] * len(preds)
        rows = []
        for i, p, g, t in zip(ids, preds, gts, truncated):
            if rules:
                p, g = normalize_for_comparison(p, rules), normalize_for_comparison(g, rules)
            rows.append(SampleScore(str(i), levenshtein(p, g), len(g), bool(t)))
        return cls(rows)

    @property
    def per_sample(self):
        return [s.cer for s in self.samples]

    @property
    def empty_gt(self):
        return [s.id for s in self.samples if s.gt_len == 0]

    @property
    def mean_cer(self):
        vals = [s.cer for s in self.samples if s.gt_len]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def corpus_cer(self):
        tot = sum(s.gt_len for s in self.samples)
        return sum(s.distance for s in self.samples) / tot if tot else math.nan

    @property
    def n_truncated(self):
        return sum(s.truncated for s in self.samples)

    def to_tsv(self) -> str:
        lines = ["id\tdistance\tgt_len\tcer\ttruncated"]
        for s in self.samples:
            c = "" if not s.gt_len else repr(s.cer)
            lines.append(f"{s.id}\t{s.distance}\t{s.gt_len}\t{c}\t{int(s.truncated)}")
        dist = sum(s.distance for s in self.samples)
        tot = sum(s.gt_len for s in self.samples)
        lines.append(f"#mean\t\t\t{self.mean_cer!r}\t")
        lines.append(f"#corpus\t{dist}\t{tot}\t{self.corpus_cer!r}\t{self.n_truncated}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_tsv(), encoding="utf-8")

    @classmethod
    def from_tsv(cls, text: str) -> "EvalReport":
        rows = []
        for ln in text.split("\n")[1:]:
            if not ln or ln.startswith("#"):
                continue
            i, d, g, _, t = ln.split("\t")
            rows.append(SampleScore(i, int(d), int(g), t == "1"))
        return cls(rows)
