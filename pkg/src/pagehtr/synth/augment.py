"""Image augmentations: scale, rotation, brightness, background, contrast, perspective, noise.

Each transform draws its parameter uniformly from a ``(lo, hi)`` range; a
zero-width identity range disables it. Geometric transforms resample
bilinearly and fill uncovered area with the image's corner-max value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from ..errors import ParameterError


@dataclass(frozen=True)
class AugmentConfig:
    scale: tuple = (0.8, 1.2)
    rotation: tuple = (-5.0, 5.0)        # degrees
    brightness: tuple = (-0.2, 0.2)      # additive
    background: tuple = (0.8, 1.0)       # multiplicative page tone
    contrast: tuple = (0.8, 1.2)
    perspective: float = 0.02            # max corner jitter, fraction of side
    noise_sigma: tuple = (0.0, 0.05)

    def __post_init__(self):
        for name in ("scale", "rotation", "brightness", "background", "contrast", "noise_sigma"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ParameterError(f"empty range {name}={getattr(self, name)}")
        if self.scale[0] <= 0:
            raise ParameterError("scale must be positive")
        if max(abs(self.rotation[0]), abs(self.rotation[1])) > 45:
            raise ParameterError("rotation range beyond +-45 degrees")
        if self.noise_sigma[0] < 0 or not 0 <= self.perspective < 0.25:
            raise ParameterError("invalid noise or perspective range")

    @classmethod
    def identity(cls):
        return cls((1.0, 1.0), (0.0, 0.0), (0.0, 0.0), (1.0, 1.0), (1.0, 1.0), 0.0, (0.0, 0.0))


def _fill(img):
    return float(max(img[0, 0], img[0, -1], img[-1, 0], img[-1, -1]))


def _warp(img, inv, out_shape, fill):
    """Resample: ``out[y, x] = img[inv(y, x)]`` with bilinear interpolation."""
    yy, xx = np.mgrid[0:out_shape[0], 0:out_shape[1]].astype(np.float64)
    sy, sx = inv(yy, xx)
    out = map_coordinates(img.astype(np.float64), [sy, sx], order=1, mode="constant", cval=fill)
    return out.astype(np.float32)


def rescale(img, s):
    h, w = img.shape
    H, W = max(1, round(h * s)), max(1, round(w * s))
    if (H, W) == (h, w):
        return img.copy()
    fy, fx = h / H, w / W
    return _warp(img, lambda y, x: ((y + 0.5) * fy - 0.5, (x + 0.5) * fx - 0.5), (H, W), _fill(img))


def rotate(img, degrees, expand=True):
    """Rotate about the center; ``expand`` grows the canvas to keep every corner."""
    if degrees == 0:
        return img.copy()
    h, w = img.shape
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    if expand:
        H = int(math.ceil(abs(h * c) + abs(w * s) - 1e-9))
        W = int(math.ceil(abs(w * c) + abs(h * s) - 1e-9))
    else:
        H, W = h, w
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    oy, ox = (H - 1) / 2.0, (W - 1) / 2.0

    def inv(y, x):
        dy, dx = y - oy, x - ox
        return cy + c * dy - s * dx, cx + s * dy + c * dx

    return _warp(img, inv, (H, W), _fill(img))


def _homography(src, dst):
    A = []
    for (x, y), (u, v) in zip(src, dst):
        A.append([x, y, 1, 0, 0, 0, -u * x, -u * y, -u])
        A.append([0, 0, 0, x, y, 1, -v * x, -v * y, -v])
    _, _, vt = np.linalg.svd(np.asarray(A, dtype=np.float64))
    Hm = vt[-1].reshape(3, 3)
    return Hm / Hm[2, 2]


def perspective(img, jitter):
    """Warp the four corners by the given ``[4, 2]`` (dx, dy) pixel offsets."""
    jitter = np.asarray(jitter, dtype=np.float64)
    if not np.any(jitter):
        return img.copy()
    h, w = img.shape
    corners = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)
    inv_h = _homography(corners + jitter, corners)  # output -> input

    def inv(y, x):
        d = inv_h[2, 0] * x + inv_h[2, 1] * y + inv_h[2, 2]
        return ((inv_h[1, 0] * x + inv_h[1, 1] * y + inv_h[1, 2]) / d,
                (inv_h[0, 0] * x + inv_h[0, 1] * y + inv_h[0, 2]) / d)

    return _warp(img, inv, (h, w), _fill(img))


def sample_params(cfg: AugmentConfig, shape, rng) -> dict:
    h, w = shape
    side = np.array([w, h], dtype=np.float64)
    return {
        "scale": float(rng.uniform(*cfg.scale)),
        "rotation": float(rng.uniform(*cfg.rotation)),
        "brightness": float(rng.uniform(*cfg.brightness)),
        "background": float(rng.uniform(*cfg.background)),
        "contrast": float(rng.uniform(*cfg.contrast)),
        "perspective": (rng.uniform(-1.0, 1.0, (4, 2)) * cfg.perspective * side).tolist(),
        "noise_sigma": float(rng.uniform(*cfg.noise_sigma)),
    }


def apply(img, p: dict, rng) -> np.ndarray:
    out = np.asarray(img, dtype=np.float32)
    if p["scale"] != 1.0:
        out = rescale(out, p["scale"])
    if p["rotation"] != 0.0:
        out = rotate(out, p["rotation"])
    if np.any(p["perspective"]):
        out = perspective(out, p["perspective"])
    if p["background"] != 1.0:
        out = out * np.float32(p["background"])
    if p["contrast"] != 1.0:
        m = np.float32(out.mean())
        out = (out - m) * np.float32(p["contrast"]) + m
    if p["brightness"] != 0.0:
        out = out + np.float32(p["brightness"])
    if p["noise_sigma"] > 0.0:
        out = out + (rng.standard_normal(out.shape) * p["noise_sigma"]).astype(np.float32)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def augment(img, cfg: AugmentConfig, rng, return_params=False):
    """Apply every transform with parameters drawn uniformly from ``cfg``; output in [0, 1]."""
    p = sample_params(cfg, np.shape(img), rng)
    out = apply(img, p, rng)
    return (out, p) if return_params else out
