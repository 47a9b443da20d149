"""Image encoder: truncated ResNet, 1x1 projection, 2D sinusoidal positions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ContractError, ParameterError
from .nn import Conv2d, GroupNorm, Module
from .tensor import Tensor


@dataclass(frozen=True)
class EncoderConfig:
    """Residual stage layout.

    The downsample factor is ``stem_stride * prod(stage_strides)``; the
    default (2 * 1*2*2*2) is 16.
    """

    widths: tuple = (16, 32, 64, 128)
    depths: tuple = (2, 2, 2, 2)
    stage_strides: tuple = (1, 2, 2, 2)
    stem_stride: int = 2
    norm: str = "group"  # "group" | "none"
    groups: int = 4

    def __post_init__(self):
        if not (len(self.widths) == len(self.depths) == len(self.stage_strides)) or not self.widths:
            raise ParameterError("widths, depths and stage_strides must have equal nonzero length")
        if any(w < 1 for w in self.widths) or any(d < 1 for d in self.depths):
            raise ParameterError("stage widths and depths must be positive")
        f = self.downsample_factor
        if f & (f - 1):
            raise ParameterError(f"downsample factor {f} is not a power of two")
        if self.norm not in ("group", "none"):
            raise ParameterError(f"unknown norm {self.norm!r}")
        if self.norm == "group" and any(w % self.groups for w in self.widths):
            raise ParameterError(f"stage widths must be divisible by groups={self.groups}")

    @property
    def downsample_factor(self) -> int:
        return int(self.stem_stride * np.prod(self.stage_strides))


@dataclass
class EncodedImage:
    """Flattened encoder output.

    ``memory`` is ``[B, H'*W', d_model]`` (row-major over the grid, y-major);
    ``grid`` is ``(H', W')`` and ``source_size`` the pixel size ``(H, W)``.
    """

    memory: Tensor
    grid: tuple
    source_size: tuple

    def __len__(self):
        return self.memory.shape[0]

    def select(self, index):
        """Sub-batch view, e.g. ``enc.select([3])``."""
        return EncodedImage(Tensor(self.memory.data[index]), self.grid, self.source_size)


def positional_encoding_2d(h: int, w: int, d_model: int, dtype=np.float64) -> np.ndarray:
    """Fixed ``[h*w, d_model]`` table: first half encodes y, second half x."""
    if d_model % 4:
        raise ParameterError(f"d_model={d_model} must be divisible by 4 for 2D positions")
    half = d_model // 2
    i = np.arange(d_model // 4)
    inv = 1.0 / 10000.0 ** (2.0 * i / d_model)
    ay = np.arange(h)[:, None] * inv
    ax = np.arange(w)[:, None] * inv
    pe = np.zeros((h, w, d_model))
    pe[:, :, 0:half:2] = np.sin(ay)[:, None, :]
    pe[:, :, 1:half:2] = np.cos(ay)[:, None, :]
    pe[:, :, half::2] = np.sin(ax)[None, :, :]
    pe[:, :, half + 1::2] = np.cos(ax)[None, :, :]
    return pe.reshape(h * w, d_model).astype(dtype)


class BasicBlock(Module):
    def __init__(self, c_in, c_out, stride, cfg: EncoderConfig, rng, dtype=np.float32):
        use_norm = cfg.norm == "group"
        self.conv1 = Conv2d(c_in, c_out, 3, rng, stride=stride, padding=1, bias=not use_norm, dtype=dtype)
        self.conv2 = Conv2d(c_out, c_out, 3, rng, stride=1, padding=1, bias=not use_norm, dtype=dtype)
        self.norm1 = GroupNorm(cfg.groups, c_out, dtype=dtype) if use_norm else None
        self.norm2 = GroupNorm(cfg.groups, c_out, dtype=dtype) if use_norm else None
        self.shortcut = None
        self.shortcut_norm = None
        if stride != 1 or c_in != c_out:
            self.shortcut = Conv2d(c_in, c_out, 1, rng, stride=stride, bias=not use_norm, dtype=dtype)
            self.shortcut_norm = GroupNorm(cfg.groups, c_out, dtype=dtype) if use_norm else None

    def __call__(self, x):
        y = self.conv1(x)
        if self.norm1 is not None:
            y = self.norm1(y)
        y = ops.relu(y)
        y = self.conv2(y)
        if self.norm2 is not None:
            y = self.norm2(y)
        s = x
        if self.shortcut is not None:
            s = self.shortcut(x)
            if self.shortcut_norm is not None:
                s = self.shortcut_norm(s)
        return ops.relu(ops.add(y, s))


class PageEncoder(Module):
    def __init__(self, cfg: EncoderConfig, d_model: int, rng, dtype=np.float32):
        if d_model % 4:
            raise ParameterError(f"d_model={d_model} must be divisible by 4")
        self.cfg = cfg
        self.d_model = d_model
        use_norm = cfg.norm == "group"
        w0 = cfg.widths[0]
        self.stem = Conv2d(1, w0, 3, rng, stride=cfg.stem_stride, padding=1, bias=not use_norm, dtype=dtype)
        self.stem_norm = GroupNorm(cfg.groups, w0, dtype=dtype) if use_norm else None
        blocks = []
        c = w0
        for width, depth, stride in zip(cfg.widths, cfg.depths, cfg.stage_strides):
            for k in range(depth):
                blocks.append(BasicBlock(c, width, stride if k == 0 else 1, cfg, rng, dtype=dtype))
                c = width
        self.blocks = blocks
        self.proj = Conv2d(c, d_model, 1, rng, bias=True, dtype=dtype)
        self._pe_cache = {}

    def _on_cast(self, dtype):
        self._pe_cache = {}

    def features(self, images):
        """ResNet trunk without pooling/classifier: ``[B,1,H,W] -> [B,c,H/f,W/f]``."""
        x = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=self.stem.weight.dtype))
        if x.ndim == 3:
            x = Tensor(x.data[None])
        f = self.cfg.downsample_factor
        H, W = x.shape[-2:]
        if H % f or W % f:
            raise ContractError(f"image {H}x{W} is not a multiple of the downsample factor {f}; pad it first")
        y = self.stem(x)
        if self.stem_norm is not None:
            y = self.stem_norm(y)
        y = ops.relu(y)
        for block in self.blocks:
            y = block(y)
        return y

    def positional(self, h, w):
        key = (h, w)
        pe = self._pe_cache.get(key)
        if pe is None:
            pe = Tensor(positional_encoding_2d(h, w, self.d_model, dtype=self.proj.weight.dtype))
            self._pe_cache[key] = pe
        return pe

    def __call__(self, images) -> EncodedImage:
        feats = self.features(images)
        B = feats.shape[0]
        H, W = feats.shape[-2:]
        y = self.proj(feats)                                   # [B, d, H', W']
        y = ops.reshape(ops.transpose(y, (0, 2, 3, 1)), (B, H * W, self.d_model))
        memory = ops.add(y, self.positional(H, W))
        f = self.cfg.downsample_factor
        return EncodedImage(memory, (H, W), (H * f, W * f))
