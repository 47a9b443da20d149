import string

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pagehtr.errors import VocabularyError
from pagehtr.vocab import (BOS, DEFAULT_TAGS, EOS, PAD, UNK, UNK_CHAR, Vocabulary, base_charset,
                           build_vocab, decode_tokens, encode_text)

V = build_vocab()
CHARS = base_charset()


def test_charset_enumerated():
    expected = {c for c in string.printable[:95] if not c.isupper()} | {"\n"}
    assert set(CHARS) == expected
    assert len(CHARS) == 95 - 26 + 1
    assert len(V) == 4 + len(CHARS) + len(DEFAULT_TAGS) == 80


def test_reserved_ids_and_order():
    assert (PAD, BOS, EOS, UNK) == (0, 1, 2, 3)
    assert V.tokens[:4] == ("<pad>", "<bos>", "<eos>", "<unk>")
    chars = V.tokens[4:4 + len(CHARS)]
    assert list(chars) == sorted(chars)
    assert V.tokens[-len(DEFAULT_TAGS):] == DEFAULT_TAGS


def test_empty_tag_list():
    assert len(build_vocab(tags=())) == 4 + len(CHARS)


def test_duplicate_tag_rejected():
    with pytest.raises(VocabularyError):
        build_vocab(tags=("<math>", "<math>"))
    with pytest.raises(VocabularyError):
        build_vocab(tags=("math",))


def test_encode_examples():
    assert encode_text(V, "") == [EOS]
    assert encode_text(V, "ab<math>c") == [V.id("a"), V.id("b"), V.id("<math>"), V.id("c"), EOS]
    assert encode_text(V, "A€b") == [V.id("a"), UNK, V.id("b"), EOS]
    assert encode_text(V, "a<b") == [V.id("a"), V.id("<"), V.id("b"), EOS]


def test_decode_examples():
    assert decode_tokens(V, [EOS]) == ""
    ids = encode_text(V, "hi there")
    assert decode_tokens(V, ids + [PAD, PAD]) == decode_tokens(V, ids) == "hi there"
    assert decode_tokens(V, [BOS, V.id("x"), UNK, PAD]) == "x" + UNK_CHAR
    with pytest.raises(VocabularyError):
        decode_tokens(V, [len(V)])


@given(st.text(alphabet=CHARS + string.ascii_uppercase, max_size=60))
def test_roundtrip_lowercases(s):
    assert decode_tokens(V, encode_text(V, s)) == s.lower()


@given(st.text(max_size=40))
def test_encode_total(s):
    ids = encode_text(V, s)
    assert ids[-1] == EOS and ids.count(EOS) == 1
    assert all(0 <= i < len(V) for i in ids)


@given(st.lists(st.sampled_from(DEFAULT_TAGS + tuple("ab \n")), max_size=20))
def test_tags_single_tokens(parts):
    ids = encode_text(V, "".join(parts), eos=False)
    assert ids == [V.id(p) for p in parts]


def test_serialization_roundtrip(tmp_path):
    text = V.dumps()
    lines = text.split("\n")
    assert lines[V.newline_id] == "\\n"
    assert Vocabulary.loads(text) == V
    V.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt").tokens == V.tokens


def test_ids_stable():
    assert build_vocab().tokens == build_vocab().tokens
    assert V.id("\n") == V.newline_id == 4
    assert V.id(" ") == 5
