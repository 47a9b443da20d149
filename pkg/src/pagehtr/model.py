"""Encoder + decoder wired together."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ops
from .decoder import DecoderConfig, TextDecoder
from .encoder import EncodedImage, EncoderConfig, PageEncoder
from .nn import Module
from .tensor import Tensor
from .vocab import Vocabulary, build_vocab


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)

    @property
    def d_model(self):
        return self.decoder.d_model

    def to_dict(self):
        # JSON-shaped (tuples become lists) so it compares equal after a checkpoint roundtrip
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, d):
        enc = {k: tuple(v) if isinstance(v, list) else v for k, v in d["encoder"].items()}
        return cls(EncoderConfig(**enc), DecoderConfig(**d["decoder"]))


class PageModel(Module):
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary | None = None, seed: int = 0,
                 dtype=np.float32):
        self.cfg = cfg
        self.vocab = vocab if vocab is not None else build_vocab()
        rng = np.random.Generator(np.random.Philox(seed))
        self.encoder = PageEncoder(cfg.encoder, cfg.d_model, rng, dtype=dtype)
        self.decoder = TextDecoder(cfg.decoder, len(self.vocab), rng, dtype=dtype)

    @property
    def dtype(self):
        return self.decoder.out.weight.dtype

    def encode(self, images) -> EncodedImage:
        imgs = np.asarray(images.data if isinstance(images, Tensor) else images, dtype=self.dtype)
        if imgs.ndim == 2:
            imgs = imgs[None, None]
        elif imgs.ndim == 3:
            imgs = imgs[:, None]
        return self.encoder(Tensor(imgs))

    def logits(self, images, input_ids, line_ls=None, rng=None):
        return self.decoder(input_ids, line_ls, self.encode(images), rng)

    def batch_loss(self, batch, rng=None, denom=None):
        """Token-mean NLL over the real targets (``denom`` overrides the count)."""
        logits = self.logits(batch.images, batch.input_ids, batch.line_ls, rng)
        return ops.cross_entropy(logits, batch.target_ids, batch.token_mask,
                                 denom=batch.n if denom is None else denom)

    def predict_ids(self, images, max_len=None, use_cache=True):
        was_training = self.training
        self.eval()
        try:
            enc = self.encode(images)
            return self.decoder.greedy(enc, self.vocab.newline_id, max_len, use_cache)
        finally:
            self.train(was_training)

    def predict(self, images, max_len=None):
        """Greedy transcripts and truncation flags for a batch of images."""
        seqs, trunc = self.predict_ids(images, max_len)
        return [self.vocab.decode(s) for s in seqs], trunc
