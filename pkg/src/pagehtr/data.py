"""Samples, image files and the on-disk dataset layout.

A dataset directory holds one image per sample (8-bit grayscale PNG or
binary PGM), a ``<stem>.gt.txt`` sidecar transcript next to each, and an
``index.tsv`` with a ``filename<TAB>transcript`` header whose transcript
column is escaped (``\\\\``, ``\\n``, ``\\t``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

INDEX_NAME = "index.tsv"
INDEX_HEADER = "filename\ttranscript"
IMAGE_SUFFIXES = (".png", ".pgm")


@dataclass
class Sample:
    """Grayscale page in [0, 1] (``H x W`` float array) plus transcript."""

    image: np.ndarray
    transcript: str
    meta: dict = field(default_factory=dict)


def escape_field(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n").replace("\t", "\\t")


def unescape_field(text: str) -> str:
    out = []
    it = iter(text)
    for ch in it:
        if ch != "\\":
            out.append(ch)
            continue
        nxt = next(it, "")
        out.append({"n": "\n", "t": "\t", "\\": "\\"}.get(nxt, "\\" + nxt))
    return "".join(out)


def read_image(path) -> np.ndarray:
    """Load PNG/PGM as float grayscale in [0, 1]; color converts by luminance."""
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(im, dtype=np.float64)
            return (arr / (65535.0 if arr.max() > 255 else 255.0)).astype(np.float32)
        if im.mode != "L":
            im = im.convert("L")
        return np.asarray(im, dtype=np.float32) / 255.0


def to_uint8(image) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_image(path, image):
    path = Path(path)
    arr = to_uint8(image)
    if path.suffix.lower() == ".pgm":
        h, w = arr.shape
        path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + arr.tobytes())
    else:
        Image.fromarray(arr, mode="L").save(path, format="PNG", optimize=False)


def write_dataset(samples, out_dir, fmt="png", start=0):
    """Write samples in the dataset layout; returns the number written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [INDEX_HEADER]
    n = 0
    for k, s in enumerate(samples, start):
        stem = f"{k:06d}"
        fname = f"{stem}.{fmt}"
        write_image(out / fname, s.image)
        (out / f"{stem}.gt.txt").write_text(s.transcript, encoding="utf-8", newline="")
        rows.append(f"{fname}\t{escape_field(s.transcript)}")
        n += 1
    (out / INDEX_NAME).write_text("\n".join(rows) + "\n", encoding="utf-8", newline="")
    return n


def read_index(data_dir):
    """``[(filename, transcript or None)]`` from ``index.tsv``, else from the files on disk."""
    d = Path(data_dir)
    idx = d / INDEX_NAME
    if idx.exists():
        entries = []
        lines = idx.read_text(encoding="utf-8").split("\n")
        for ln in lines[1:]:
            if not ln:
                continue
            name, tab, text = ln.partition("\t")
            entries.append((name, unescape_field(text) if tab else None))
        return entries
    entries = []
    for p in sorted(d.iterdir()):
        if p.suffix.lower() in IMAGE_SUFFIXES:
            gt = p.with_name(p.stem + ".gt.txt")
            entries.append((p.name, gt.read_text(encoding="utf-8") if gt.exists() else None))
    return entries


def read_dataset(data_dir):
    """Load every sample; entries whose transcript is missing are skipped with a warning."""
    d = Path(data_dir)
    samples = []
    for name, text in read_index(d):
        if text is None:
            log.warning("skipping %s: no transcript", name)
            continue
        samples.append(Sample(read_image(d / name), text, {"file": name}))
    return samples
