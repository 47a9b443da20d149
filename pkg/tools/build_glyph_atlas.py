"""Rasterize the embedded glyph atlases shipped in ``pagehtr/synth/data``.

Run once by a maintainer; the package itself never touches font files.
Requires Pillow and the DejaVu Sans Mono TrueType files.

    python tools/build_glyph_atlas.py [--fontdir /usr/share/fonts/truetype/dejavu]
"""

import argparse
import string
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

CHARS = "".join(c for c in string.printable[:95] if not c.isupper())
OUT = Path(__file__).resolve().parents[1] / "src" / "pagehtr" / "synth" / "data" / "glyphs.npz"


def rasterize(font, cell_w, cell_h, y_off=0):
    glyphs = np.zeros((len(CHARS), cell_h, cell_w), dtype=np.uint8)
    for k, ch in enumerate(CHARS):
        im = Image.new("L", (cell_w, cell_h), 0)
        ImageDraw.Draw(im).text((0, y_off), ch, font=font, fill=255)
        glyphs[k] = np.asarray(im)
    return glyphs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--fontdir", default="/usr/share/fonts/truetype/dejavu")
    args = ap.parse_args()
    fontdir = Path(args.fontdir)
    faces = {
        "fixed6x11": rasterize(ImageFont.load_default_imagefont(), 6, 11),
        "mono10": rasterize(ImageFont.truetype(str(fontdir / "DejaVuSansMono.ttf"), 10), 6, 12, -1),
        "monobold10": rasterize(ImageFont.truetype(str(fontdir / "DejaVuSansMono-Bold.ttf"), 10), 6, 12, -1),
        "mono12": rasterize(ImageFont.truetype(str(fontdir / "DejaVuSansMono.ttf"), 12), 7, 14, -1),
    }
    for name, g in faces.items():
        flat = g.reshape(len(CHARS), -1)
        blank = [CHARS[k] for k in range(len(CHARS)) if flat[k].max() == 0]
        assert blank == [" "], (name, blank)
        assert len({row.tobytes() for row in flat}) == len(CHARS), name
    OUT.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(OUT, chars=np.array(CHARS), **faces)
    print(f"wrote {OUT} ({', '.join(faces)})")


if __name__ == "__main__":
    main()
