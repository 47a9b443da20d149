"""Embedded monospaced bitmap faces.

Atlases live in ``data/glyphs.npz`` (built by ``tools/build_glyph_atlas.py``).
A face name may carry an integer upscale suffix, e.g. ``"fixed6x11@2"``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np


@dataclass(frozen=True)
class GlyphFont:
    name: str
    glyphs: np.ndarray  # [n_chars, cell_h, cell_w] ink coverage in [0, 1]
    chars: str

    @property
    def cell_h(self):
        return self.glyphs.shape[1]

    @property
    def cell_w(self):
        return self.glyphs.shape[2]

    def index(self, ch):
        return self.chars.index(ch)

    def glyph(self, ch):
        return self.glyphs[self._lookup()[ch]]

    def _lookup(self):
        return _char_map(self.chars)

    def covers(self, text):
        m = self._lookup()
        return all(c in m for c in text)


@lru_cache(maxsize=None)
def _char_map(chars):
    return {c: i for i, c in enumerate(chars)}


@lru_cache(maxsize=1)
def _atlas():
    with resources.files("pagehtr.synth").joinpath("data/glyphs.npz").open("rb") as fh:
        data = np.load(fh)
        return str(data["chars"]), {k: data[k] for k in data.files if k != "chars"}


def face_names():
    return sorted(_atlas()[1])


@lru_cache(maxsize=None)
def load_font(name: str) -> GlyphFont:
    base, _, mult = name.partition("@")
    chars, faces = _atlas()
    if base not in faces:
        raise KeyError(f"unknown face {base!r}; available: {sorted(faces)}")
    g = faces[base].astype(np.float32) / 255.0
    if mult:
        k = int(mult)
        g = g.repeat(k, axis=1).repeat(k, axis=2)
    g.setflags(write=False)
    return GlyphFont(name, g, chars)
