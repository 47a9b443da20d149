import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pagehtr.decoder import DecoderConfig
from pagehtr.encoder import EncoderConfig
from pagehtr.model import ModelConfig, PageModel
from pagehtr.tensor import Tape, Tensor

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))


def micro_config(use_lne=True, dropout=0.0, norm="group", window=50):
    enc = EncoderConfig(widths=(4, 8), depths=(1, 1), stage_strides=(1, 2), groups=2, norm=norm)
    dec = DecoderConfig(n_layers=2, d_model=16, heads=2, d_ff=32, dropout=dropout, window=window,
                        max_decode_len=32, use_lne=use_lne)
    return ModelConfig(enc, dec)


def micro_model(seed=0, dtype=np.float64, **kw):
    return PageModel(micro_config(**kw), seed=seed, dtype=dtype)


def numeric_grad(f, arr, h=1e-5, index=None):
    """Central differences of scalar ``f()`` w.r.t. ``arr`` (perturbed in place)."""
    g = np.zeros_like(arr, dtype=np.float64)
    it = np.ndindex(arr.shape) if index is None else index
    for i in it:
        old = arr[i]
        arr[i] = old + h
        fp = f()
        arr[i] = old - h
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b, floor=1e-6):
    """Elementwise ``|a - b| / max(|a|, |b|, floor)``, maximized."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    den = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / den)) if a.size else 0.0


def check_op_grad(fn, *arrays, h=1e-5, seed=0):
    """Gradient of ``sum(fn(*tensors) * w)`` for a fixed random ``w``; returns the max rel. error."""
    w_rng = np.random.default_rng(seed)
    ts = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = fn(*ts)
        w = Tensor(w_rng.standard_normal(out.shape))
        loss = (out * w).sum()
        tape.backward(loss, params=ts)
    wd = w.data

    def f():
        return float((fn(*[Tensor(t.data) for t in ts]).data * wd).sum())

    return max(rel_err(t.grad, numeric_grad(f, t.data, h)) for t in ts)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance measurements")
    for key in sorted(mod.RESULTS):
        vals = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in mod.RESULTS[key].items())
        terminalreporter.write_line(f"{key}: {vals}")
