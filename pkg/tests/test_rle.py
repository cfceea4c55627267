import numpy as np
import pytest
from hypothesis import given, strategies as st

from eraserkit.errors import ShapeMismatch
from eraserkit.rle import decode_rle, encode_rle


def test_round_trip_simple():
    mask = np.array([[0, 1, 1], [1, 0, 0]], dtype=np.uint8)
    doc = encode_rle(mask)
    assert doc["size"] == [2, 3]
    assert sum(doc["counts"]) == 6
    assert np.array_equal(decode_rle(doc), mask)


def test_counts_start_with_zeros_run():
    doc = encode_rle(np.ones((2, 2), dtype=np.uint8))
    assert doc["counts"][0] == 0  # leading zero-run is explicit


def test_all_zeros():
    doc = encode_rle(np.zeros((3, 4), dtype=np.uint8))
    assert doc["counts"] == [12]
    assert not decode_rle(doc).any()


def test_bad_counts_rejected():
    with pytest.raises(ShapeMismatch):
        decode_rle({"size": [2, 2], "counts": [3]})


@given(
    st.integers(1, 12),
    st.integers(1, 12),
    st.integers(0, 2**32 - 1),
)
def test_round_trip_random(h, w, seed):
    mask = (np.random.default_rng(seed).random((h, w)) < 0.5).astype(np.uint8)
    assert np.array_equal(decode_rle(encode_rle(mask)), mask)
