"""Synthetic page generation: corpus spans, rendering, augmentation and sampling."""

from .augment import AugmentConfig, augment
from .corpus import load_corpus, normalize_text, sample_text_span, sample_word_text, split_corpus
from .glyphs import GlyphFont, face_names, load_font
from .render import RenderConfig, empty_page, read_back, render_page, stitch_spans, wrap_text
from .sources import GenConfig, PageSource, SampleStream, StitchSource, fit_to_canvas, next_sample

__all__ = [
    "AugmentConfig", "GenConfig", "GlyphFont", "PageSource", "RenderConfig", "SampleStream",
    "StitchSource", "augment", "empty_page", "face_names", "fit_to_canvas", "load_corpus",
    "load_font", "next_sample", "normalize_text", "read_back", "render_page", "sample_text_span",
    "sample_word_text", "split_corpus", "stitch_spans", "wrap_text",
]
