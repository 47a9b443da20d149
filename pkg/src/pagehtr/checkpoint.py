"""Checkpoint container.

Layout::

    b"PAGEHTR\\x00"            8-byte magic
    uint64 little-endian       manifest length in bytes
    manifest                   UTF-8 JSON: tensors [{name, dtype, shape, offset, nbytes}],
                               step, val_score, optimizer_t, model_config, vocab, config
    payload                    raw little-endian float32 tensors at the listed offsets

Model parameters are stored under their module names; ADAM moments under
``optim.m.<name>`` and ``optim.v.<name>``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointIncompatible
from .optim import AdamState

MAGIC = b"PAGEHTR\x00"
FORMAT_VERSION = 1
_LE_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    params: dict
    model_config: dict
    vocab_text: str
    step: int = 0
    val_score: float | None = None
    optim_m: dict = field(default_factory=dict)
    optim_v: dict = field(default_factory=dict)
    optim_t: int = 0
    config_text: str = ""

    @classmethod
    def from_model(cls, model, opt=None, step=0, val_score=None, config_text=""):
        params = {k: p.data.copy() for k, p in model.named_parameters()}
        m = v = {}
        t = 0
        if opt is not None:
            m = {k: a.copy() for k, a in opt.state.m.items()}
            v = {k: a.copy() for k, a in opt.state.v.items()}
            t = opt.state.t
        return cls(params, model.cfg.to_dict(), model.vocab.dumps(), step, val_score, m, v, t, config_text)

    def tensors(self):
        yield from self.params.items()
        for k, a in self.optim_m.items():
            yield f"optim.m.{k}", a
        for k, a in self.optim_v.items():
            yield f"optim.v.{k}", a

    def adam_state(self):
        return AdamState(self.optim_t, {k: a.copy() for k, a in self.optim_m.items()},
                         {k: a.copy() for k, a in self.optim_v.items()})

    def build_model(self):
        from .model import ModelConfig, PageModel
        from .vocab import Vocabulary

        model = PageModel(ModelConfig.from_dict(self.model_config), Vocabulary.loads(self.vocab_text))
        self.load_into(model)
        return model

    def load_into(self, model):
        """Copy parameters into ``model`` after checking names and shapes."""
        check_compatible(self, model)
        for name, p in model.named_parameters():
            p.data = self.params[name].astype(p.data.dtype, copy=True)
            p.grad = None
        return model


def check_compatible(ckpt: Checkpoint, model):
    bad = []
    own = dict(model.named_parameters())
    for name, p in own.items():
        a = ckpt.params.get(name)
        if a is None or a.shape != p.shape:
            bad.append(name)
    bad += [k for k in ckpt.params if k not in own]
    if bad:
        first = bad[0]
        got = ckpt.params.get(first)
        want = own.get(first)
        detail = (f"checkpoint {None if got is None else got.shape}, "
                  f"model {None if want is None else want.shape}")
        raise CheckpointIncompatible(
            f"checkpoint incompatible at tensor {first!r} ({detail}); {len(bad)} mismatched: {bad}", bad)
    if ckpt.model_config != model.cfg.to_dict():
        diff = sorted(f"{sec}.{k}" for sec, vals in ckpt.model_config.items()
                      for k, v in vals.items() if model.cfg.to_dict().get(sec, {}).get(k) != v)
        raise CheckpointIncompatible(f"checkpoint model config differs in {diff}", diff)


def save_checkpoint(ckpt: Checkpoint, path):
    entries = []
    chunks = []
    offset = 0
    for name, arr in ckpt.tensors():
        raw = np.ascontiguousarray(arr, dtype=_LE_F32).tobytes()
        entries.append({"name": name, "dtype": "float32", "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "format": FORMAT_VERSION,
        "step": ckpt.step,
        "val_score": ckpt.val_score,
        "optimizer_t": ckpt.optim_t,
        "model_config": ckpt.model_config,
        "vocab": ckpt.vocab_text,
        "config": ckpt.config_text,
        "tensors": entries,
    }
    head = json.dumps(manifest, ensure_ascii=False, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for raw in chunks:
            fh.write(raw)
    tmp.replace(path)


def load_checkpoint(path, model=None) -> Checkpoint:
    """Read a checkpoint; with ``model`` given, validate it against that model too."""
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise CheckpointIncompatible(f"{path} is not a checkpoint file")
    (n,) = struct.unpack("<Q", blob[8:16])
    manifest = json.loads(blob[16:16 + n].decode("utf-8"))
    if manifest.get("format") != FORMAT_VERSION:
        raise CheckpointIncompatible(f"unsupported checkpoint format {manifest.get('format')}")
    base = 16 + n
    params, m, v = {}, {}, {}
    for e in manifest["tensors"]:
        if e["dtype"] != "float32":
            raise CheckpointIncompatible(f"unsupported dtype {e['dtype']} for {e['name']}", [e["name"]])
        start = base + e["offset"]
        arr = np.frombuffer(blob, dtype=_LE_F32, count=e["nbytes"] // 4, offset=start)
        arr = arr.reshape(e["shape"]).astype(np.float32)
        name = e["name"]
        if name.startswith("optim.m."):
            m[name[8:]] = arr
        elif name.startswith("optim.v."):
            v[name[8:]] = arr
        else:
            params[name] = arr
    ckpt = Checkpoint(params, manifest["model_config"], manifest["vocab"], manifest["step"],
                      manifest["val_score"], m, v, manifest["optimizer_t"], manifest.get("config", ""))
    if model is not None:
        check_compatible(ckpt, model)
    return ckpt
