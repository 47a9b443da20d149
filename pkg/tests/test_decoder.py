import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pagehtr import ops
from pagehtr.decoder import (DecoderConfig, causal_window_mask, line_number_encoding,
                             sequence_log_prob, step_distribution, token_line_numbers)
from pagehtr.errors import ContractError, ParameterError
from pagehtr.trainer import sequence_loss
from pagehtr.vocab import EOS

from conftest import micro_model
from decoder_props import (check_cache_and_teacher_forcing, check_causality, check_eval_purity,
                           check_window_locality)


def test_mask_examples():
    assert np.array_equal(causal_window_mask(3, 50), np.tril(np.ones((3, 3), dtype=bool)))
    m = causal_window_mask(70, 50)
    assert list(np.flatnonzero(m[60])) == list(range(10, 61))
    assert list(np.flatnonzero(m[0])) == [0]


@given(st.integers(1, 40), st.integers(1, 12))
def test_mask_rule(T, W):
    m = causal_window_mask(T, W)
    for t in range(T):
        for s in range(T):
            assert m[t, s] == (max(0, t - W) <= s <= t)


def test_line_number_encoding():
    assert line_number_encoding(1, 100) == 0.01
    assert line_number_encoding(100, 100) == 1.0
    assert line_number_encoding(50, 100) == 0.5
    for bad in (0, 101):
        with pytest.raises(ContractError):
            line_number_encoding(bad, 100)


def counter_oracle(ids, nl):
    out = []
    count = 0
    for tok in ids:
        out.append(1 + count)
        count += tok == nl
    return out


def test_token_line_numbers_examples():
    nl = 4
    a, b = 10, 11
    assert token_line_numbers([a, b, EOS], nl) == [1, 1, 1]
    assert token_line_numbers([a, nl, b, EOS], nl) == [1, 1, 2, 2]
    assert token_line_numbers([nl, nl, EOS], nl) == [1, 2, 3]
    assert token_line_numbers([nl] * 5 + [EOS], nl, max_lines=3) == [1, 2, 3, 3, 3, 3]


@given(st.lists(st.sampled_from([4, 9, 10]), max_size=30))
def test_token_line_numbers_oracle(ids):
    assert token_line_numbers(ids + [EOS], 4) == counter_oracle(ids + [EOS], 4)


def test_config_validation():
    with pytest.raises(ParameterError):
        DecoderConfig(d_model=10, heads=4)
    with pytest.raises(ParameterError):
        DecoderConfig(window=0)
    with pytest.raises(ParameterError):
        DecoderConfig(dropout=1.0)


def test_logit_shape_and_misaligned_lines():
    m = micro_model().eval()
    enc = m.encode(np.random.default_rng(0).random((2, 16, 32)))
    ids = np.full((2, 5), 7)
    assert m.decoder(ids, np.ones((2, 5), dtype=int), enc).shape == (2, 5, len(m.vocab))
    with pytest.raises(ContractError):
        m.decoder(ids, np.ones((2, 4), dtype=int), enc)


@pytest.mark.parametrize("seed", range(10))
def test_causality(seed):
    assert check_causality(seed) == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_window_locality(seed):
    assert check_window_locality(seed) <= 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_cache_and_teacher_forcing(seed):
    assert check_cache_and_teacher_forcing(seed)


@pytest.mark.parametrize("seed", range(3))
def test_eval_forward_pure(seed):
    assert check_eval_purity(seed)


def test_cross_attention_sees_every_memory_row():
    m = micro_model().eval()
    enc = m.encode(np.random.default_rng(1).random((1, 16, 32)))
    ids = np.array([[1, 9, 10, 11]])
    base = m.decoder(ids, np.ones_like(ids), enc).data
    from pagehtr.encoder import EncodedImage
    from pagehtr.tensor import Tensor
    for r in range(enc.memory.shape[1]):
        mem = enc.memory.data.copy()
        mem[0, r] = 0.0
        out = m.decoder(ids, np.ones_like(ids), EncodedImage(Tensor(mem), enc.grid, enc.source_size)).data
        assert not np.array_equal(out, base), f"memory row {r} has no influence"


def test_step_distribution():
    V = 80
    p = step_distribution(np.zeros(V))
    np.testing.assert_allclose(p, 1 / V)
    z = np.random.default_rng(0).standard_normal(V)
    np.testing.assert_allclose(step_distribution(z + 3.5), step_distribution(z), atol=1e-15)
    assert step_distribution(z).argmax() == z.argmax()


def test_sequence_log_prob_relations():
    m = micro_model().eval()
    enc = m.encode(np.random.default_rng(2).random((1, 16, 32)))
    seq = [9, 10, 4, 11, EOS]
    lp = sequence_log_prob(m.decoder, seq, enc, m.vocab.newline_id)
    inp = np.array([[1] + seq[:-1]])
    ls = np.array([token_line_numbers(seq, m.vocab.newline_id)])
    logits = m.decoder(inp, ls, enc)
    flat = ops.reshape(logits, (len(seq), len(m.vocab)))
    assert lp == pytest.approx(-len(seq) * sequence_loss(flat, seq).item(), rel=1e-12)
    # uniform model
    m.decoder.out.weight.data[...] = 0.0
    m.decoder.out.bias.data[...] = 0.0
    lp0 = sequence_log_prob(m.decoder, seq, enc, m.vocab.newline_id)
    assert lp0 == pytest.approx(-len(seq) * math.log(len(m.vocab)), rel=1e-12)
    with pytest.raises(ContractError):
        sequence_log_prob(m.decoder, [9, 10], enc)


def test_log_prob_decreases_when_appending():
    m = micro_model().eval()
    enc = m.encode(np.random.default_rng(3).random((1, 16, 32)))
    nl = m.vocab.newline_id
    seq = [9, 12, 4, 15, 20]
    logits = m.decoder(np.array([[1] + seq]), np.array([token_line_numbers(seq + [EOS], nl)]), enc).data[0]
    p = step_distribution(logits)
    prefix = np.cumsum(np.log(p[np.arange(len(seq)), seq]))
    assert np.all(np.diff(prefix) < 0)


def test_eos_favoring_model_outputs_empty():
    m = micro_model().eval()
    m.decoder.out.weight.data[...] = 0.0
    m.decoder.out.bias.data[...] = 0.0
    m.decoder.out.bias.data[EOS] = 5.0
    seqs, trunc = m.predict_ids(np.random.default_rng(0).random((2, 16, 32)))
    assert seqs == [[], []] and trunc == [False, False]


def test_greedy_ties_lowest_id():
    m = micro_model().eval()
    m.decoder.out.weight.data[...] = 0.0
    m.decoder.out.bias.data[...] = 0.0
    m.decoder.out.bias.data[[7, 9]] = 1.0
    seqs, trunc = m.predict_ids(np.zeros((1, 16, 32)), max_len=5)
    assert seqs == [[7] * 5] and trunc == [True]


def test_greedy_deterministic_and_eval_only():
    m = micro_model()
    img = np.random.default_rng(4).random((1, 16, 32))
    assert m.predict_ids(img, 10) == m.predict_ids(img, 10)
    m.train()
    with pytest.raises(ContractError):
        m.decoder.greedy(m.encode(img))
