"""Teacher-forced training with token-weighted gradient accumulation."""

from __future__ import annotations

import hashlib
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ops
from .checkpoint import Checkpoint, save_checkpoint
from .decoder import token_line_numbers
from .errors import ContractError, NonFiniteLoss, ParameterError
from .metrics import EvalReport
from .optim import Adam
from .tensor import Tape, Tensor
from .vocab import BOS, EOS, PAD, Vocabulary, encode_text

log = logging.getLogger(__name__)


@dataclass
class Batch:
    images: np.ndarray       # [B, 1, H, W]
    input_ids: np.ndarray    # [B, T]
    target_ids: np.ndarray   # [B, T]
    line_ls: np.ndarray      # [B, T]
    token_mask: np.ndarray   # [B, T], 1 for real targets
    n: int
    transcripts: list = field(default_factory=list)

    def __len__(self):
        return len(self.images)

    def digest(self) -> str:
        h = hashlib.sha1(self.images.tobytes())
        h.update(self.target_ids.tobytes())
        return h.hexdigest()[:12]


def teacher_forcing_shift(seq):
    """``[y1..yk, EOS] -> ([BOS, y1..yk], [y1..yk, EOS])``."""
    seq = list(seq)
    if not seq or seq[-1] != EOS:
        raise ContractError("sequence must end with EOS")
    return [BOS] + seq[:-1], seq


def sequence_loss(logits, target) -> Tensor:
    """Mean token NLL of one sequence; ``logits`` is ``[tau, V]``."""
    target = np.asarray(target)
    if logits.ndim != 2 or logits.shape[0] != len(target):
        raise ContractError(f"logits {logits.shape} do not align with {len(target)} targets")
    return ops.cross_entropy(logits, target)


def batch_loss(batch: Batch, logits, denom=None) -> Tensor:
    """Summed NLL of all real tokens divided by their count ``n`` (or ``denom``)."""
    return ops.cross_entropy(logits, batch.target_ids, batch.token_mask,
                             denom=batch.n if denom is None else denom)


def padding_value(image, mode: str) -> float:
    if mode == "zero":
        return 0.0
    if mode == "corner_max":
        return float(max(image[0, 0], image[0, -1], image[-1, 0], image[-1, -1]))
    raise ParameterError(f"unknown padding mode {mode!r}")


def place_on_canvas(image, canvas, mode, rng=None, pad="corner_max"):
    """Pad ``image`` to ``canvas``; random offset in train mode, centered in eval."""
    H, W = canvas
    h, w = image.shape
    if h > H or w > W:
        raise ContractError(f"image {h}x{w} larger than canvas {H}x{W}; rescale it first")
    if mode == "train":
        if rng is None:
            raise ParameterError("train placement needs an rng")
        y0 = int(rng.integers(0, H - h + 1))
        x0 = int(rng.integers(0, W - w + 1))
    elif mode == "eval":
        y0, x0 = (H - h) // 2, (W - w) // 2
    else:
        raise ParameterError(f"unknown placement mode {mode!r}")
    out = np.full((H, W), padding_value(image, pad), dtype=np.float32)
    out[y0:y0 + h, x0:x0 + w] = image
    return out, (y0, x0)


def make_batch(samples, canvas, mode, rng, vocab: Vocabulary, pad="corner_max", factor=1,
               max_lines=100) -> Batch:
    H, W = canvas
    if H % factor or W % factor:
        raise ContractError(f"canvas {H}x{W} not divisible by downsample factor {factor}")
    imgs, ins, tgts, lss = [], [], [], []
    for s in samples:
        img, _ = place_on_canvas(np.asarray(s.image, dtype=np.float32), canvas, mode, rng, pad)
        imgs.append(img)
        seq = encode_text(vocab, s.transcript)
        inp, tgt = teacher_forcing_shift(seq)
        ins.append(inp)
        tgts.append(tgt)
        lss.append(token_line_numbers(tgt, vocab.newline_id, max_lines))
    B = len(imgs)
    T = max(len(t) for t in tgts)
    input_ids = np.full((B, T), PAD, dtype=np.int64)
    target_ids = np.full((B, T), PAD, dtype=np.int64)
    line_ls = np.ones((B, T), dtype=np.int64)
    mask = np.zeros((B, T), dtype=np.float32)
    for b in range(B):
        k = len(tgts[b])
        input_ids[b, :k] = ins[b]
        target_ids[b, :k] = tgts[b]
        line_ls[b, :k] = lss[b]
        mask[b, :k] = 1.0
    return Batch(np.stack(imgs)[:, None], input_ids, target_ids, line_ls, mask, int(mask.sum()),
                 [s.transcript for s in samples])


@dataclass
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    warmup_steps: int = 0
    batch_size: int = 56
    grad_accum: int = 2
    steps: int = 1000
    eval_interval: int = 500
    keep_last: int = 3
    canvas: tuple = (256, 512)
    padding: str = "corner_max"
    val_batch_size: int = 16
    val_max_len: int | None = None
    stop_score: float | None = None   # end early once validation CER is at or below this
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or not (0 <= self.beta1 < 1) or not (0 <= self.beta2 < 1):
            raise ParameterError("invalid ADAM hyperparameters")
        if min(self.batch_size, self.grad_accum, self.steps, self.eval_interval) < 1:
            raise ParameterError("batch_size, grad_accum, steps and eval_interval must be >= 1")
        if self.keep_last < 0:
            raise ParameterError("keep_last must be >= 0")


def evaluate(model, samples, tcfg: TrainConfig, ids=None) -> EvalReport:
    """Greedy-decode ``samples`` (centered on the canvas) and score them."""
    f = model.cfg.encoder.downsample_factor
    preds, trunc = [], []
    for s in range(0, len(samples), tcfg.val_batch_size):
        chunk = samples[s:s + tcfg.val_batch_size]
        imgs = np.stack([place_on_canvas(np.asarray(x.image, dtype=np.float32), tcfg.canvas, "eval",
                                         pad=tcfg.padding)[0] for x in chunk])
        if imgs.shape[1] % f or imgs.shape[2] % f:
            raise ContractError(f"canvas {tcfg.canvas} not divisible by downsample factor {f}")
        p, t = model.predict(imgs, max_len=tcfg.val_max_len)
        preds += p
        trunc += t
    ids = ids if ids is not None else [x.meta.get("file", str(k)) for k, x in enumerate(samples)]
    return EvalReport.from_pairs(ids, preds, [x.transcript for x in samples], trunc)


def _score(report: EvalReport) -> float:
    c = report.corpus_cer
    if math.isnan(c):  # all-empty validation set: count emitted characters instead
        return float(sum(s.distance for s in report.samples))
    return c


class Trainer:
    """Owns the model weights, optimizer and checkpoint directory.

    ``train_stream`` yields :class:`~pagehtr.data.Sample` objects forever (or
    at least ``steps * batch_size * grad_accum`` of them).
    """

    def __init__(self, model, tcfg: TrainConfig, out_dir=None, logger=None, config_text=""):
        self.model = model
        self.cfg = tcfg
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.logger = logger or (lambda line: log.info(line))
        self.config_text = config_text
        self.opt = Adam(model.named_parameters(), tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.adam_eps,
                        tcfg.warmup_steps)
        seeds = np.random.SeedSequence(tcfg.seed).spawn(2)
        self.place_rng = np.random.Generator(np.random.Philox(seeds[0]))
        self.drop_rng = np.random.Generator(np.random.Philox(seeds[1]))
        self.step = 0
        self.history = []      # (step, val_score, path)
        self.best = None

    def _micro_batches(self, stream):
        c = self.cfg
        dec = self.model.cfg.decoder
        f = self.model.cfg.encoder.downsample_factor
        out = []
        for _ in range(c.grad_accum):
            samples = [next(stream) for _ in range(c.batch_size)]
            out.append(make_batch(samples, c.canvas, "train", self.place_rng, self.model.vocab,
                                  c.padding, f, dec.max_lines))
        return out

    def update(self, micro_batches) -> float:
        """One optimizer step over ``micro_batches``; returns the combined loss.

        Each micro-batch loss is divided by the token count of the whole
        update, so summed gradients equal those of one large batch.
        """
        model = self.model
        model.train()
        total = sum(mb.n for mb in micro_batches)
        params = model.parameters()
        self.opt.zero_grad()
        loss_sum = 0.0
        for mb in micro_batches:
            with Tape() as tape:
                loss = model.batch_loss(mb, self.drop_rng, denom=total)
            value = float(loss.item())
            if not math.isfinite(value):
                raise NonFiniteLoss(self.step + 1, mb.digest(), value)
            tape.backward(loss, params=params)
            loss_sum += value
        self.opt.step()
        self.step += 1
        return loss_sum

    def validate(self, val_set) -> EvalReport:
        return evaluate(self.model, val_set, self.cfg)

    def checkpoint(self, score) -> Checkpoint:
        return Checkpoint.from_model(self.model, self.opt, self.step, score, self.config_text)

    def _persist(self, ckpt: Checkpoint):
        if self.out_dir is None:
            return None
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / f"step{ckpt.step:07d}.ckpt"
        save_checkpoint(ckpt, path)
        return path

    def _retain(self):
        # keep the best plus the newest keep_last files
        if self.out_dir is None:
            return
        paths = [h[2] for h in self.history if h[2] is not None]
        keep = set(paths[-self.cfg.keep_last:]) if self.cfg.keep_last else set()
        if self.best is not None:
            keep.add(self.best[2])
        for p in paths:
            if p not in keep and p.exists():
                p.unlink()

    def _mark_best(self):
        if self.out_dir is None or self.best is None or self.best[2] is None:
            return
        link = self.out_dir / "best.ckpt"
        if link.is_symlink() or link.exists():
            link.unlink()
        try:
            link.symlink_to(self.best[2].name)
        except OSError:  # filesystems without symlinks
            link.write_bytes(self.best[2].read_bytes())

    def run(self, train_stream, val_set) -> Checkpoint:
        if not val_set:
            raise ContractError("validation set must not be empty")
        c = self.cfg
        train_stream = iter(train_stream)
        t0 = time.perf_counter()
        best_ckpt = None
        while self.step < c.steps:
            loss = self.update(self._micro_batches(train_stream))
            at_eval = self.step % c.eval_interval == 0 or self.step == c.steps
            if not at_eval:
                if self.step % max(1, c.eval_interval // 10) == 0:
                    self.logger(f"step={self.step} loss={loss:.6f} time={time.perf_counter() - t0:.1f}")
                continue
            report = self.validate(val_set)
            score = _score(report)
            ckpt = self.checkpoint(score)
            path = self._persist(ckpt)
            self.history.append((self.step, score, path))
            if self.best is None or score < self.best[1]:
                self.best = (self.step, score, path)
                best_ckpt = ckpt
            self._retain()
            self._mark_best()
            self.logger(f"step={self.step} loss={loss:.6f} val_cer={score:.6f} "
                        f"time={time.perf_counter() - t0:.1f}")
            if c.stop_score is not None and score <= c.stop_score:
                break
        return best_ckpt


def train(model, tcfg: TrainConfig, train_stream, val_set, out_dir=None, logger=None,
          config_text="") -> Checkpoint:
    """Run ``tcfg.steps`` updates and return the lowest-validation-CER checkpoint."""
    return Trainer(model, tcfg, out_dir, logger, config_text).run(train_stream, val_set)
