"""Weighted sample sources and the seeded on-the-fly stream."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..data import Sample
from ..errors import ContractError, PageOverflowError, ParameterError
from .augment import AugmentConfig, augment, rescale
from .corpus import load_corpus, sample_text_span, sample_word_text
from .glyphs import load_font
from .render import RenderConfig, empty_page, render_page, stitch_spans

LAYOUTS = ("one_col", "two_col", "empty")
TEXT_MODES = ("spans", "words")


@dataclass(frozen=True)
class GenConfig:
    corpus_path: str | None = None
    span_len: tuple = (1, 200)
    layout_weights: tuple = (1.0, 1.0, 0.0)     # one_col, two_col, empty
    fonts: tuple = ("fixed6x11", "mono10", "monobold10", "mono12")
    render: RenderConfig = field(default_factory=RenderConfig)
    augment: AugmentConfig | None = None        # None disables augmentation
    page_weight: float = 1.0                    # source mix: rendered pages
    stitch_weight: float = 0.0                  # source mix: stitched word/line crops
    stitch_parts: tuple = (2, 5)
    canvas: tuple = (256, 512)                  # samples are shrunk to fit
    text_mode: str = "spans"                    # contiguous corpus spans, or i.i.d. corpus words

    def __post_init__(self):
        lo, hi = self.span_len
        if lo < 1 or hi < lo:
            raise ParameterError(f"invalid span length range {self.span_len}")
        if len(self.layout_weights) != 3:
            raise ParameterError("layout_weights needs three entries (one_col, two_col, empty)")
        for w in (self.layout_weights, (self.page_weight, self.stitch_weight)):
            if min(w) < 0 or sum(w) <= 0:
                raise ParameterError(f"weights must be nonnegative and not all zero: {w}")
        if not self.fonts:
            raise ParameterError("at least one font is required")
        for f in self.fonts:
            load_font(f)
        if self.text_mode not in TEXT_MODES:
            raise ParameterError(f"text_mode must be one of {TEXT_MODES}, got {self.text_mode!r}")
        if self.stitch_parts[0] < 1 or self.stitch_parts[1] < self.stitch_parts[0]:
            raise ParameterError(f"invalid stitch_parts {self.stitch_parts}")


def _pick(weights, rng) -> int:
    w = np.asarray(weights, dtype=np.float64)
    return int(rng.choice(len(w), p=w / w.sum()))


class PageSource:
    """Corpus spans rendered in one or two columns, or blank pages."""

    def __init__(self, corpus: str, cfg: GenConfig):
        self.corpus = corpus
        self.cfg = cfg
        self.words = [w for w in corpus.split(" ") if w]
        self.fonts = [load_font(f) for f in cfg.fonts]
        # fallbacks are tried smallest-cell first
        self.by_size = sorted(self.fonts, key=lambda f: (f.cell_h * f.cell_w, f.name))

    def _span(self, rng, len_range=None):
        while True:
            r = len_range or self.cfg.span_len
            if self.cfg.text_mode == "words":
                t = sample_word_text(self.words, r, rng).strip(" ")
            else:
                t = sample_text_span(self.corpus, r, rng).strip(" ")
            if t:
                return t

    max_redraws = 50

    def __call__(self, rng) -> Sample:
        c = self.cfg
        layout = LAYOUTS[_pick(c.layout_weights, rng)]
        if layout == "empty":
            return empty_page(c.render, rng)
        # an unlucky draw of span, margins and gaps may not fit; redraw all of them
        for _ in range(self.max_redraws):
            text = self._span(rng)
            lay = "one_col" if layout == "two_col" and len(text) < 2 else layout
            font = self.fonts[int(rng.integers(len(self.fonts)))]
            fallback = [f for f in self.by_size if f is not font]
            try:
                return render_page(text, lay, font, c.render, rng, fallback)
            except PageOverflowError as e:
                err = e
        raise PageOverflowError(f"no fitting {layout} page after {self.max_redraws} draws: {err}")


class StitchSource:
    """Word or line crops rendered separately and stitched together."""

    def __init__(self, corpus: str, cfg: GenConfig):
        self.pages = PageSource(corpus, cfg)
        self.cfg = cfg

    def _crop(self, text, font, rng):
        rc = replace(self.cfg.render, col_chars=(len(text), len(text)), margin=(1, 3))
        return render_page(text, "one_col", font, rc, rng, self.pages.by_size)

    def __call__(self, rng) -> Sample:
        c = self.cfg
        sep = " " if rng.random() < 0.5 else "\n"
        n = int(rng.integers(c.stitch_parts[0], c.stitch_parts[1] + 1))
        font = self.pages.fonts[int(rng.integers(len(self.pages.fonts)))]
        frags = []
        for _ in range(n):
            if sep == " ":
                words = self.pages._span(rng, (8, 24)).split(" ")
                k = int(rng.integers(1, min(3, len(words)) + 1))
                text = " ".join(w for w in words[:k] if w) or words[0]
            else:
                text = self.pages._span(rng, (8, 40))
            text = text.strip(" ") or "."
            try:
                s = self._crop(text, font, rng)
            except PageOverflowError:
                continue
            frags.append((s.image, s.transcript))
        if not frags:
            return self.pages(rng)
        return stitch_spans(frags, sep, rng)


def next_sample(sources, rng) -> Sample:
    """Pick a source by weight from ``[(weight, source), ...]`` and draw one sample."""
    if not sources:
        raise ParameterError("no sources")
    weights = [w for w, _ in sources]
    if min(weights) < 0 or sum(weights) <= 0:
        raise ParameterError(f"weights must be nonnegative and not all zero: {weights}")
    return sources[_pick(weights, rng)][1](rng)


def fit_to_canvas(sample: Sample, canvas) -> Sample:
    """Shrink (never enlarge) so the image fits ``canvas``, keeping aspect ratio."""
    h, w = sample.image.shape
    H, W = canvas
    if h <= H and w <= W:
        return sample
    s = min(H / h, W / w)
    img = rescale(sample.image, s)
    img = img[:H, :W]
    return Sample(img, sample.transcript, {**sample.meta, "fit_scale": s})


class SampleStream:
    """Unbounded deterministic stream of generated samples for one seed."""

    def __init__(self, cfg: GenConfig, seed: int = 0, corpus: str | None = None):
        self.cfg = cfg
        self.corpus = corpus if corpus is not None else load_corpus(cfg.corpus_path)
        if len(self.corpus) < cfg.span_len[1]:
            raise ContractError(f"corpus ({len(self.corpus)} chars) shorter than span_len max")
        self.rng = np.random.Generator(np.random.Philox(seed))
        self.sources = [(cfg.page_weight, PageSource(self.corpus, cfg)),
                        (cfg.stitch_weight, StitchSource(self.corpus, cfg))]

    def __iter__(self):
        return self

    def __next__(self) -> Sample:
        s = next_sample(self.sources, self.rng)
        if self.cfg.augment is not None:
            img, p = augment(s.image, self.cfg.augment, self.rng, return_params=True)
            s = Sample(img, s.transcript, {**s.meta, "augment": p})
        return fit_to_canvas(s, self.cfg.canvas)

    def take(self, n: int) -> list[Sample]:
        return [next(self) for _ in range(n)]
