"""Transformer decoder with windowed causal self-attention.

Layers are post-norm (residual, then layer norm) with self-attention,
cross-attention over the whole encoder memory, and a GELU feed-forward.
Optional line-number encoding appends ``l / max_lines`` as one extra input
channel, projected back to ``d_model``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .encoder import EncodedImage
from .errors import ContractError, ParameterError, ShapeError
from .nn import Embedding, LayerNorm, Linear, Module
from .tensor import Tensor
from .vocab import BOS, EOS


@dataclass(frozen=True)
class DecoderConfig:
    n_layers: int = 6
    d_model: int = 260
    heads: int = 4
    d_ff: int = 1024
    dropout: float = 0.5
    window: int = 50
    max_lines: int = 100
    max_decode_len: int = 1200
    use_lne: bool = False

    def __post_init__(self):
        if self.n_layers < 1 or self.d_ff < 1:
            raise ParameterError("n_layers and d_ff must be positive")
        if self.d_model % self.heads:
            raise ParameterError(f"d_model={self.d_model} not divisible by heads={self.heads}")
        if self.window < 1 or self.max_lines < 1 or self.max_decode_len < 1:
            raise ParameterError("window, max_lines and max_decode_len must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError(f"dropout {self.dropout} outside [0, 1)")


def causal_window_mask(T: int, W: int) -> np.ndarray:
    """``mask[t, s]`` is True iff ``max(0, t - W) <= s <= t``."""
    t = np.arange(T)[:, None]
    s = np.arange(T)[None, :]
    return (s <= t) & (s >= t - W)


def line_number_encoding(l: int, max_lines: int) -> float:
    if not 1 <= l <= max_lines:
        raise ContractError(f"line {l} outside [1, {max_lines}]")
    return l / max_lines


def token_line_numbers(ids, newline_id, max_lines: int | None = None) -> list[int]:
    """Line index of each position: 1 + newlines strictly before it.

    A newline belongs to the line it terminates. Values clamp at ``max_lines``.
    """
    out = []
    line = 1
    for tok in ids:
        out.append(line if max_lines is None else min(line, max_lines))
        if tok == newline_id:
            line += 1
    return out


def sinusoidal_positions(T: int, d: int, dtype=np.float32) -> np.ndarray:
    i = np.arange(0, d, 2)
    ang = np.arange(T)[:, None] / 10000.0 ** (i / d)
    pe = np.zeros((T, d))
    pe[:, 0::2] = np.sin(ang)
    pe[:, 1::2] = np.cos(ang[:, : d // 2])
    return pe.astype(dtype)


class MultiHeadAttention(Module):
    def __init__(self, d, heads, rng, dtype=np.float32):
        self.heads = heads
        self.dk = d // heads
        self.q = Linear(d, d, rng, dtype=dtype)
        self.k = Linear(d, d, rng, dtype=dtype)
        self.v = Linear(d, d, rng, dtype=dtype)
        self.o = Linear(d, d, rng, dtype=dtype)

    def split(self, x):
        B, T, _ = x.shape
        return ops.transpose(ops.reshape(x, (B, T, self.heads, self.dk)), (0, 2, 1, 3))

    def merge(self, x):
        B, _, T, _ = x.shape
        return ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (B, T, self.heads * self.dk))

    def project_kv(self, src):
        return self.split(self.k(src)), self.split(self.v(src))

    def attend(self, x, k, v, mask=None):
        q = self.split(self.q(x))
        scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(self.dk))
        a = ops.softmax(scores, axis=-1, mask=mask)
        return self.o(self.merge(ops.matmul(a, v)))

    def __call__(self, x, src=None, mask=None):
        k, v = self.project_kv(x if src is None else src)
        return self.attend(x, k, v, mask)


class DecoderLayer(Module):
    def __init__(self, cfg: DecoderConfig, rng, dtype=np.float32):
        d = cfg.d_model
        self.p = cfg.dropout
        self.self_attn = MultiHeadAttention(d, cfg.heads, rng, dtype)
        self.cross_attn = MultiHeadAttention(d, cfg.heads, rng, dtype)
        self.ff1 = Linear(d, cfg.d_ff, rng, dtype=dtype)
        self.ff2 = Linear(cfg.d_ff, d, rng, dtype=dtype)
        self.ln1 = LayerNorm(d, dtype=dtype)
        self.ln2 = LayerNorm(d, dtype=dtype)
        self.ln3 = LayerNorm(d, dtype=dtype)

    def _drop(self, x, rng):
        return ops.dropout(x, self.p, self.training, rng)

    def self_block(self, x, mask, rng=None, past=None):
        """Self-attention sublayer incl. residual and norm.

        With ``past=(k, v)`` (arrays of earlier positions) only the new
        positions in ``x`` are queried; returns ``(out, (k, v))``.
        """
        k, v = self.self_attn.project_kv(x)
        if past is not None:
            k = Tensor(np.concatenate([past[0], k.data], axis=2))
            v = Tensor(np.concatenate([past[1], v.data], axis=2))
        a = self.self_attn.attend(x, k, v, mask)
        return self.ln1(ops.add(x, self._drop(a, rng))), (k.data, v.data)

    def __call__(self, x, mem_kv, mask, rng=None, past=None):
        x, kv = self.self_block(x, mask, rng, past)
        c = self.cross_attn.attend(x, mem_kv[0], mem_kv[1])
        x = self.ln2(ops.add(x, self._drop(c, rng)))
        f = self.ff2(ops.gelu(self.ff1(x)))
        x = self.ln3(ops.add(x, self._drop(f, rng)))
        return x, kv


class TextDecoder(Module):
    def __init__(self, cfg: DecoderConfig, vocab_size: int, rng, dtype=np.float32):
        self.cfg = cfg
        self.vocab_size = vocab_size
        d = cfg.d_model
        self.embed = Embedding(vocab_size, d, rng, dtype=dtype)
        self.lne_proj = Linear(d + 1, d, rng, dtype=dtype) if cfg.use_lne else None
        self.layers = [DecoderLayer(cfg, rng, dtype) for _ in range(cfg.n_layers)]
        self.out = Linear(d, vocab_size, rng, dtype=dtype)
        self._pe = sinusoidal_positions(cfg.max_decode_len + 1, d, dtype)

    def _on_cast(self, dtype):
        self._pe = self._pe.astype(dtype)

    def _positions(self, start, T):
        if start + T > len(self._pe):
            self._pe = sinusoidal_positions(2 * (start + T), self.cfg.d_model, self._pe.dtype)
        return self._pe[start:start + T]

    def _inputs(self, ids, line_ls, start, rng):
        ids = np.asarray(ids, dtype=np.int64)
        B, T = ids.shape
        cfg = self.cfg
        x = ops.scale(self.embed(ids), math.sqrt(cfg.d_model))
        x = ops.add(x, Tensor(self._positions(start, T)))
        if cfg.use_lne:
            if line_ls is None:
                raise ContractError("line numbers are required when line encoding is enabled")
            ls = np.asarray(line_ls, dtype=np.float64)
            if ls.shape != ids.shape:
                raise ContractError(f"line numbers {ls.shape} misaligned with input ids {ids.shape}")
            lne = Tensor((np.clip(ls, 1, cfg.max_lines) / cfg.max_lines)[..., None].astype(x.dtype))
            x = self.lne_proj(ops.concat([x, lne], axis=-1))
        elif line_ls is not None and np.shape(line_ls) != ids.shape:
            raise ContractError(f"line numbers {np.shape(line_ls)} misaligned with input ids {ids.shape}")
        return ops.dropout(x, cfg.dropout, self.training, rng)

    def memory_kv(self, enc: EncodedImage):
        return [layer.cross_attn.project_kv(enc.memory) for layer in self.layers]

    def __call__(self, input_ids, line_ls, enc: EncodedImage, rng=None):
        """Teacher-forced logits ``[B, T, V]`` for ``input_ids`` ``[B, T]``."""
        input_ids = np.asarray(input_ids)
        if input_ids.ndim == 1:
            input_ids = input_ids[None]
            line_ls = None if line_ls is None else np.asarray(line_ls)[None]
        if input_ids.shape[0] != len(enc):
            raise ShapeError(f"{input_ids.shape[0]} sequences for {len(enc)} encoded images")
        T = input_ids.shape[1]
        x = self._inputs(input_ids, line_ls, 0, rng)
        mask = causal_window_mask(T, self.cfg.window)
        mem_kv = self.memory_kv(enc)
        for layer, kv in zip(self.layers, mem_kv):
            x, _ = layer(x, kv, mask, rng)
        return self.out(x)

    def greedy(self, enc: EncodedImage, newline_id=None, max_len=None, use_cache=True):
        """Argmax decoding from BOS until EOS or ``max_len`` tokens.

        Returns ``(sequences, truncated)``: per image the emitted ids
        (without EOS) and whether the length cap was hit.
        """
        if self.training:
            raise ContractError("greedy decoding runs in eval mode; call .eval() first")
        cfg = self.cfg
        max_len = cfg.max_decode_len if max_len is None else max_len
        B = len(enc)
        mem_kv = self.memory_kv(enc)
        seqs = [[] for _ in range(B)]
        done = np.zeros(B, dtype=bool)
        lines = np.ones(B, dtype=np.int64)
        prev = np.full(B, BOS, dtype=np.int64)
        past = [None] * len(self.layers)
        hist_ids = np.zeros((B, 0), dtype=np.int64)
        hist_ls = np.zeros((B, 0), dtype=np.int64)
        W = cfg.window
        for t in range(max_len + 1):
            if use_cache:
                x = self._inputs(prev[:, None], lines[:, None], t, None)
                mask = None
                for i, (layer, kv) in enumerate(zip(self.layers, mem_kv)):
                    if past[i] is not None and past[i][0].shape[2] > W:
                        past[i] = (past[i][0][:, :, -W:], past[i][1][:, :, -W:])
                    x, past[i] = layer(x, kv, mask, None, past[i])
                logits = self.out(x).data[:, -1]
            else:
                hist_ids = np.concatenate([hist_ids, prev[:, None]], axis=1)
                hist_ls = np.concatenate([hist_ls, lines[:, None]], axis=1)
                logits = self(hist_ids, hist_ls, enc).data[:, -1]
            nxt = logits.argmax(axis=-1)  # first maximum = lowest id on ties
            for b in range(B):
                if done[b]:
                    continue
                tok = int(nxt[b])
                if tok == EOS:
                    done[b] = True
                elif t == max_len:
                    pass
                else:
                    seqs[b].append(tok)
            if done.all():
                break
            if newline_id is not None:
                lines = lines + (nxt == newline_id)
            prev = nxt
        truncated = [not d for d in done]
        return seqs, truncated


def step_distribution(logits_t) -> np.ndarray:
    """Next-token probabilities from one row (or rows) of logits."""
    z = np.asarray(logits_t.data if isinstance(logits_t, Tensor) else logits_t, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def sequence_log_prob(decoder: TextDecoder, seq, enc: EncodedImage, newline_id=None) -> float:
    """``sum_t ln p_t(y_t)`` for one EOS-terminated sequence under teacher forcing."""
    seq = [int(t) for t in seq]
    if not seq or seq[-1] != EOS:
        raise ContractError("sequence must end with EOS")
    inp = [BOS] + seq[:-1]
    ls = token_line_numbers(seq, newline_id, decoder.cfg.max_lines) if newline_id is not None else None
    logits = decoder(np.asarray([inp]), None if ls is None else np.asarray([ls]), enc).data[0]
    z = logits.astype(np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return float(logp[np.arange(len(seq)), seq].sum())
