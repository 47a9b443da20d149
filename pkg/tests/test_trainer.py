import math

import numpy as np
import pytest

from pagehtr.data import Sample
from pagehtr.errors import ContractError, NonFiniteLoss, ParameterError
from pagehtr.tensor import Tensor
from pagehtr.trainer import (Batch, TrainConfig, Trainer, batch_loss, evaluate, make_batch,
                             padding_value, place_on_canvas, sequence_loss, teacher_forcing_shift,
                             train)
from pagehtr.vocab import BOS, EOS, build_vocab

from conftest import micro_model

V = build_vocab()


def samples(n, seed=0, H=12, W=28):
    r = np.random.default_rng(seed)
    words = ["ab", "cat", "a\nb", "", "hello", "x y", "q<col>r"]
    return [Sample(r.random((H - int(r.integers(0, 4)), W - int(r.integers(0, 6)))).astype(np.float32),
                   words[k % len(words)]) for k in range(n)]


# ---------------------------------------------------------- teacher forcing

def test_shift_examples():
    assert teacher_forcing_shift([EOS]) == ([BOS], [EOS])
    assert teacher_forcing_shift([7, 8, EOS]) == ([BOS, 7, 8], [7, 8, EOS])
    with pytest.raises(ContractError):
        teacher_forcing_shift([7, 8])


# ------------------------------------------------------------------ losses

def test_sequence_loss_examples():
    Vn = 10
    assert sequence_loss(Tensor(np.zeros((3, Vn))), [1, 2, 3]).item() == pytest.approx(math.log(Vn))
    onehot = np.full((2, 4), -1e4)
    onehot[0, 1] = onehot[1, 3] = 0.0
    assert sequence_loss(Tensor(onehot, ), [1, 3]).item() == pytest.approx(0.0, abs=1e-12)
    z = np.log(np.array([[0.5, 0.5, 1e-300], [0.25, 0.75, 1e-300]]))
    assert sequence_loss(Tensor(z), [0, 0]).item() == pytest.approx(1.5 * math.log(2), rel=1e-12)


def test_batch_loss_is_token_weighted_mean(rng):
    m = micro_model()
    b = make_batch(samples(5), (16, 32), "eval", None, V, factor=4)
    logits = m.logits(b.images, b.input_ids, b.line_ls)
    total = batch_loss(b, logits).item()
    per = []
    for k in range(len(b)):
        tau = int(b.token_mask[k].sum())
        lk = sequence_loss(Tensor(logits.data[k, :tau]), b.target_ids[k, :tau]).item()
        per.append((tau, lk))
    ref = sum(t * l for t, l in per) / sum(t for t, _ in per)
    assert abs(total - ref) <= 1e-10
    one = make_batch(samples(1), (16, 32), "eval", None, V, factor=4)
    lg = m.logits(one.images, one.input_ids, one.line_ls)
    assert batch_loss(one, lg).item() == pytest.approx(
        sequence_loss(Tensor(lg.data[0]), one.target_ids[0]).item(), rel=1e-12)


def test_batch_loss_invariant_to_padding():
    m = micro_model()
    b = make_batch(samples(3), (16, 32), "eval", None, V, factor=4)
    extra = 4

    def pad(a, v):
        return np.concatenate([a, np.full((a.shape[0], extra), v, dtype=a.dtype)], axis=1)

    b2 = Batch(b.images, pad(b.input_ids, 0), pad(b.target_ids, 0), pad(b.line_ls, 1), pad(b.token_mask, 0), b.n)
    l1 = m.batch_loss(b).item()
    l2 = m.batch_loss(b2).item()
    assert abs(l1 - l2) <= 1e-12


# ------------------------------------------------------------------ batching

def test_make_batch_invariants():
    b = make_batch(samples(7), (16, 32), "train", np.random.default_rng(0), V, factor=4)
    assert b.images.shape == (7, 1, 16, 32)
    assert b.n == int(b.token_mask.sum())
    for k in range(len(b)):
        tau = int(b.token_mask[k].sum())
        assert b.target_ids[k, tau - 1] == EOS
        assert b.input_ids[k, 0] == BOS
        np.testing.assert_array_equal(b.input_ids[k, 1:tau], b.target_ids[k, :tau - 1])
        assert np.all(b.target_ids[k, tau:] == 0)


def test_eval_centering():
    img = np.full((10, 10), 0.5, dtype=np.float32)
    out, (y0, x0) = place_on_canvas(img, (20, 20), "eval", pad="zero")
    assert (y0, x0) == (5, 5)
    assert np.all(out[5:15, 5:15] == 0.5)
    mask = np.ones((20, 20), dtype=bool)
    mask[5:15, 5:15] = False
    assert np.all(out[mask] == 0.0)


def test_corner_max_padding():
    img = np.zeros((4, 4), dtype=np.float32)
    img[0, 0], img[0, -1], img[-1, 0], img[-1, -1] = 0.2, 0.4, 0.6, 0.8
    assert padding_value(img, "corner_max") == pytest.approx(0.8)
    out, _ = place_on_canvas(img, (8, 8), "eval")
    assert out[0, 0] == pytest.approx(0.8)


def test_train_placement_random_and_in_bounds():
    img = np.zeros((4, 6), dtype=np.float32)
    r = np.random.default_rng(0)
    offs = {place_on_canvas(img, (8, 10), "train", r)[1] for _ in range(200)}
    assert all(0 <= y <= 4 and 0 <= x <= 4 for y, x in offs)
    assert len(offs) > 15


def test_oversized_image_rejected():
    with pytest.raises(ContractError):
        place_on_canvas(np.zeros((9, 4)), (8, 8), "eval")
    with pytest.raises(ContractError):
        make_batch(samples(1), (18, 32), "eval", None, V, factor=4)


def test_train_config_validation():
    with pytest.raises(ParameterError):
        TrainConfig(batch_size=0)
    with pytest.raises(ParameterError):
        TrainConfig(beta1=1.0)


# ------------------------------------------------------------------ updates

def small_tcfg(**kw):
    base = dict(lr=3e-3, batch_size=2, grad_accum=1, steps=4, eval_interval=2, canvas=(16, 32),
                val_batch_size=4, val_max_len=8, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def accumulation_gap(k=3, seed=0):
    """Max parameter difference: one batch of 2k vs two micro-batches of k."""
    data = samples(2 * k, seed=seed)
    out = []
    for factor in (1, 2):
        m = micro_model(seed=seed, dropout=0.0)
        tr = Trainer(m, small_tcfg(batch_size=2 * k // factor, grad_accum=factor))
        mbs = [make_batch(data[i * (2 * k // factor):(i + 1) * (2 * k // factor)], (16, 32), "eval", None, V,
                          factor=4) for i in range(factor)]
        tr.update(mbs)
        out.append({n: p.data.copy() for n, p in m.named_parameters()})
    return max(float(np.max(np.abs(out[0][n] - out[1][n]))) for n in out[0])


def test_accumulation_equivalence():
    assert accumulation_gap() <= 1e-6


def test_zero_lr_keeps_parameters():
    m = micro_model(dropout=0.2)
    before = {n: p.data.copy() for n, p in m.named_parameters()}
    tr = Trainer(m, small_tcfg(lr=0.0))
    stream = iter(samples(40))
    for _ in range(3):
        tr.update(tr._micro_batches(stream))
    for n, p in m.named_parameters():
        np.testing.assert_array_equal(p.data, before[n])


def test_non_finite_loss_aborts():
    m = micro_model()
    m.decoder.out.bias.data[0] = np.nan
    tr = Trainer(m, small_tcfg())
    with pytest.raises(NonFiniteLoss) as ei:
        tr.update(tr._micro_batches(iter(samples(4))))
    assert ei.value.step == 1 and len(ei.value.digest) == 12


def test_overfit_single_sample():
    m = micro_model(seed=3, dtype=np.float32)
    s = [Sample(np.random.default_rng(5).random((16, 32)).astype(np.float32), "ab c")]
    tr = Trainer(m, small_tcfg(lr=3e-3, batch_size=1))
    b = make_batch(s, (16, 32), "eval", None, V, factor=4)
    for step in range(500):
        loss = tr.update([b])
        if loss < 0.01:
            break
    assert loss < 0.01
    assert m.predict(b.images[:, 0])[0] == ["ab c"]


def test_run_selects_best_and_persists(tmp_path):
    m = micro_model(dtype=np.float32)
    lines = []
    best = train(m, small_tcfg(steps=6, eval_interval=2, keep_last=1), iter(samples(200)), samples(3, 9),
                 tmp_path, lines.append)
    scores = [float(l.split("val_cer=")[1].split()[0]) for l in lines if "val_cer=" in l]
    assert best.val_score == min(scores)
    steps = [int(l.split()[0][5:]) for l in lines]
    assert steps == sorted(steps)
    link = tmp_path / "best.ckpt"
    assert link.exists()
    kept = sorted(p.name for p in tmp_path.glob("step*.ckpt"))
    assert f"step{best.step:07d}.ckpt" in kept and "step0000006.ckpt" in kept
    assert len(kept) <= 2


def test_empty_val_set_rejected():
    with pytest.raises(ContractError):
        train(micro_model(), small_tcfg(), iter(samples(10)), [])


def test_evaluate_scores_centered_decodes():
    m = micro_model(dtype=np.float32)
    rep = evaluate(m, samples(3), small_tcfg())
    assert len(rep.samples) == 3


def test_stop_score_ends_run_early():
    m = micro_model(dtype=np.float32)
    lines = []
    train(m, small_tcfg(steps=20, eval_interval=2, stop_score=1e9), iter(samples(200)), samples(2, 9),
          None, lines.append)
    assert sum("val_cer=" in l for l in lines) == 1
