"""Vocabulary table, encode/decode round trips, and padding rules."""
import itertools

import numpy as np
import pytest

from carrychain import vocab


def test_token_table_is_a_bijection_in_listing_order():
    assert vocab.VOCAB_SIZE == 14
    assert vocab.SYMBOLS == ("P", "S", "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "\n", "C")
    assert len(set(vocab.SYMBOLS)) == 14
    assert vocab.PAD_ID == 0
    assert vocab.END_ID == 1
    assert vocab.OUTPUT_START_ID == 12
    assert vocab.CARRY_ID == 13
    for d in range(10):
        assert vocab.digit_id(d) == d + 2


@pytest.mark.parametrize(
    "text,ids",
    [
        ("69PPP", [8, 11, 0, 0, 0]),
        ("15S", [3, 7, 1]),
        ("11C71", [3, 3, 13, 9, 3]),
    ],
)
def test_encode_examples(text, ids):
    assert vocab.encode(text).tolist() == ids


@pytest.mark.parametrize(
    "ids,text",
    [([3, 7, 1], "15S"), ([0], "P"), ([12], "\n")],
)
def test_decode_examples(ids, text):
    assert vocab.decode(ids) == text


def test_encode_rejects_unknown_symbol():
    with pytest.raises(vocab.UnknownSymbolError):
        vocab.encode("12x")


def test_decode_rejects_out_of_range_id():
    with pytest.raises(vocab.OutOfRangeIdError):
        vocab.decode([14])
    with pytest.raises(vocab.OutOfRangeIdError):
        vocab.decode([-1])


def test_round_trip_exhaustive_short_strings():
    for length in range(1, 6):
        for tup in itertools.product(vocab.SYMBOLS, repeat=length):
            s = "".join(tup)
            assert vocab.decode(vocab.encode(s)) == s


@pytest.mark.parametrize(
    "text,padded",
    [("3C14", "3C14P"), ("18C98", "18C98"), ("55", "55PPP")],
)
def test_pad_input_examples(text, padded):
    out = vocab.pad_input(vocab.encode(text))
    assert out.shape == (5,)
    assert vocab.decode(out) == padded


@pytest.mark.parametrize("text,padded", [("9S", "9SP"), ("15S", "15S")])
def test_pad_target_examples(text, padded):
    out = vocab.pad_target(vocab.encode(text))
    assert out.shape == (3,)
    assert vocab.decode(out) == padded


def test_padding_is_suffix_only_and_rejects_overflow():
    padded = vocab.pad_input(vocab.encode("12"))
    body = padded[padded != vocab.PAD_ID]
    assert np.array_equal(padded[: body.size], body)
    with pytest.raises(vocab.TooLongError):
        vocab.pad_input(vocab.encode("12C345"))
    with pytest.raises(vocab.TooLongError):
        vocab.pad_target(vocab.encode("12SS"))
