"""Glyph-atlas page rendering, empty pages and fragment stitching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Sample
from ..errors import ContractError, PageOverflowError
from ..vocab import COL
from .glyphs import GlyphFont, load_font


@dataclass(frozen=True)
class RenderConfig:
    max_page: tuple = (256, 512)     # (H, W) pixels
    col_chars: tuple = (16, 48)      # characters per column line
    margin: tuple = (2, 12)          # pixels on each side
    line_gap: tuple = (0, 3)         # extra pixels between lines
    gutter: tuple = (8, 24)          # pixels between two columns
    background: tuple = (0.85, 1.0)
    ink: tuple = (0.0, 0.25)
    empty_size: tuple = ((16, 256), (16, 512))  # (h range, w range) of blank pages
    empty_texture: float = 0.02

    def __post_init__(self):
        for name in ("col_chars", "margin", "line_gap", "gutter", "background", "ink"):
            lo, hi = getattr(self, name)
            if hi < lo or lo < 0:
                raise ContractError(f"invalid range {name}={getattr(self, name)}")
        if self.col_chars[0] < 1:
            raise ContractError("columns need at least one character")


def _uniform_int(rng, r):
    return int(rng.integers(r[0], r[1] + 1))


def wrap_text(text: str, width: int) -> list[str]:
    """Greedy word wrap; a breaking space becomes the line break, long words are split."""
    if width < 1:
        raise ContractError("wrap width must be >= 1")
    lines = []
    for para in text.split("\n"):
        line = None
        for word in para.split(" "):
            if line is None:
                line = ""
                cand = word
            elif len(line) + 1 + len(word) <= width:
                line = line + " " + word
                continue
            else:
                lines.append(line)
                cand = word
            while len(cand) > width:
                lines.append(cand[:width])
                cand = cand[width:]
            line = cand
        lines.append(line if line is not None else "")
    return lines


def split_columns(lines: list[str]):
    """Split wrapped lines at the line boundary nearest the character midpoint."""
    if len(lines) < 2:
        raise ContractError("two columns need at least two lines")
    sizes = np.cumsum([len(ln) + 1 for ln in lines])
    half = sizes[-1] / 2.0
    k = 1 + int(np.argmin([abs(sizes[i - 1] - half) for i in range(1, len(lines))]))
    return lines[:k], lines[k:]


def _split_single(line: str) -> list[str]:
    mid = len(line) // 2
    spaces = [i for i, c in enumerate(line) if c == " "]
    if spaces:
        cut = min(spaces, key=lambda i: abs(i - mid))
        return [line[:cut], line[cut + 1:]]
    return [line[:max(1, mid)], line[max(1, mid):]]


def draw_lines(canvas, lines, font: GlyphFont, y0, x0, line_h, ink, bg):
    ch, cw = font.cell_h, font.cell_w
    for r, line in enumerate(lines):
        y = y0 + r * line_h
        for c, char in enumerate(line):
            if char == " ":
                continue
            a = font.glyph(char)
            x = x0 + c * cw
            canvas[y:y + ch, x:x + cw] = bg * (1.0 - a) + ink * a


def _layout(text, layout, font, col_chars):
    lines = wrap_text(text, col_chars)
    if layout == "one_col":
        return [lines], "\n".join(lines)
    if layout == "two_col":
        if len(lines) == 1:
            lines = _split_single(lines[0])
        left, right = split_columns(lines)
        return [left, right], "\n".join(left) + COL + "\n".join(right)
    raise ContractError(f"unknown layout {layout!r}")


def render_page(text: str, layout: str, font, cfg: RenderConfig, rng, fallback_fonts=()) -> Sample:
    """Render ``text`` in one or two columns.

    Tries ``font`` first, then each of ``fallback_fonts`` (smaller faces),
    raising :class:`PageOverflowError` if nothing fits ``cfg.max_page``.
    """
    if not text:
        raise ContractError("render_page needs nonempty text")
    fonts = [font, *fallback_fonts]
    col_chars = _uniform_int(rng, cfg.col_chars)
    margin_y = _uniform_int(rng, cfg.margin)
    margin_x = _uniform_int(rng, cfg.margin)
    line_gap = _uniform_int(rng, cfg.line_gap)
    gutter = _uniform_int(rng, cfg.gutter)
    bg = float(rng.uniform(*cfg.background))
    ink = float(rng.uniform(*cfg.ink))
    H, W = cfg.max_page
    for f in fonts:
        f = load_font(f) if isinstance(f, str) else f
        if not f.covers(text.replace("\n", "").replace(COL, "")):
            raise ContractError(f"face {f.name} lacks glyphs for some characters of the text")
        # shrink the column to the page width before giving up on this face
        fit_chars = min(col_chars, (W - 2 * margin_x) // f.cell_w)
        if layout == "two_col":
            fit_chars = min(col_chars, (W - 2 * margin_x - gutter) // (2 * f.cell_w))
        if fit_chars < 1:
            continue
        cols, transcript = _layout(text, layout, f, fit_chars)
        n_lines = max(len(c) for c in cols)
        line_h = f.cell_h + line_gap
        col_px = [max([len(ln) for ln in c] + [1]) * f.cell_w for c in cols]
        page_h = 2 * margin_y + n_lines * line_h - line_gap
        if len(cols) == 1:
            page_w = 2 * margin_x + col_px[0]
        else:
            page_w = 2 * margin_x + fit_chars * f.cell_w + gutter + col_px[1]
        if page_h > H or page_w > W:
            continue
        img = np.full((page_h, page_w), bg, dtype=np.float32)
        col_x = [margin_x]
        if len(cols) == 2:
            col_x.append(margin_x + fit_chars * f.cell_w + gutter)
        for c, x in zip(cols, col_x):
            draw_lines(img, c, f, margin_y, x, line_h, ink, bg)
        meta = {"font": f.name, "layout": layout, "origin": (margin_y, margin_x), "line_h": line_h,
                "col_x": col_x, "columns": [list(c) for c in cols], "col_chars": fit_chars,
                "background": bg, "ink": ink}
        return Sample(img, transcript, meta)
    raise PageOverflowError(f"{len(text)} characters do not fit a {H}x{W} page in {layout}")


def read_back(sample: Sample) -> str:
    """Template-match every glyph cell of an unaugmented render.

    Inverse of :func:`render_page`, used as an oracle in tests. Trailing
    spaces are dropped per line since blank cells are indistinguishable.
    """
    m = sample.meta
    f = load_font(m["font"])
    bg, ink = m["background"], m["ink"]
    templates = bg * (1.0 - f.glyphs) + ink * f.glyphs
    y0 = m["origin"][0]
    out_cols = []
    for x0, col in zip(m["col_x"], m["columns"]):
        lines = []
        for r in range(len(col)):
            y = y0 + r * m["line_h"]
            chars = []
            for c in range(m["col_chars"]):
                x = x0 + c * f.cell_w
                cell = sample.image[y:y + f.cell_h, x:x + f.cell_w]
                if cell.shape != (f.cell_h, f.cell_w):
                    break
                err = ((templates - cell) ** 2).sum(axis=(1, 2))
                chars.append(f.chars[int(np.argmin(err))])
            lines.append("".join(chars).rstrip(" "))
        out_cols.append("\n".join(lines))
    return COL.join(out_cols)


def empty_page(cfg: RenderConfig, rng) -> Sample:
    """Blank page: background level in ``cfg.background`` plus faint texture, clipped to that range."""
    (h_lo, h_hi), (w_lo, w_hi) = cfg.empty_size
    h = min(_uniform_int(rng, (h_lo, h_hi)), cfg.max_page[0])
    w = min(_uniform_int(rng, (w_lo, w_hi)), cfg.max_page[1])
    bg = float(rng.uniform(*cfg.background))
    img = bg + cfg.empty_texture * rng.standard_normal((h, w))
    img = np.clip(img, cfg.background[0], cfg.background[1]).astype(np.float32)
    return Sample(img, "", {"layout": "empty", "background": bg})


def _corner_max(img):
    return float(max(img[0, 0], img[0, -1], img[-1, 0], img[-1, -1]))


def stitch_spans(fragments, separator: str = " ", rng=None, gap: int | None = None) -> Sample:
    """Join ``(image, text)`` fragments into one sample.

    ``separator=" "`` places word crops side by side with ``gap`` pixels
    between them; ``"\\n"`` stacks line crops, left aligned. The transcript
    is the fragment texts joined by the separator.
    """
    if not fragments:
        raise ContractError("nothing to stitch")
    if separator not in (" ", "\n"):
        raise ContractError("separator must be a space or a newline")
    images = [np.asarray(im, dtype=np.float32) for im, _ in fragments]
    texts = [t for _, t in fragments]
    if len(images) == 1:
        return Sample(images[0].copy(), texts[0], {"layout": "stitched", "parts": 1})
    fill = max(_corner_max(im) for im in images)
    if separator == " ":
        H = max(im.shape[0] for im in images)
        g = gap if gap is not None else max(1, H // 3)
        W = sum(im.shape[1] for im in images) + g * (len(images) - 1)
        out = np.full((H, W), fill, dtype=np.float32)
        x = 0
        for im in images:
            out[:im.shape[0], x:x + im.shape[1]] = im
            x += im.shape[1] + g
    else:
        W = max(im.shape[1] for im in images)
        g = gap if gap is not None else 2
        H = sum(im.shape[0] for im in images) + g * (len(images) - 1)
        out = np.full((H, W), fill, dtype=np.float32)
        y = 0
        for im in images:
            out[y:y + im.shape[0], :im.shape[1]] = im
            y += im.shape[0] + g
    return Sample(out, separator.join(texts), {"layout": "stitched", "parts": len(images), "gap": g})
