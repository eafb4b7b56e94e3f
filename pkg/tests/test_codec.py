import itertools
import math

import pytest
from hypothesis import given, strategies as st

from xrcache.codec import (CodecError, FileLibrary, enumerate_subsets, file_label, join_parts,
                           split_file, subpacket_size, subset_rank, subset_unrank, xor_combine)


def test_enumerate_subsets_lex_order():
    assert enumerate_subsets(4, 2) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    assert enumerate_subsets(3, 0) == [()]
    assert enumerate_subsets(0, 0) == [()]


@pytest.mark.parametrize("n,k", [(3, 4), (-1, 0), (2, -1)])
def test_enumerate_subsets_rejects_bad_sizes(n, k):
    with pytest.raises(ValueError):
        enumerate_subsets(n, k)


@given(st.integers(0, 9).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n))))
def test_rank_matches_enumeration_position(nk):
    n, k = nk
    subsets = enumerate_subsets(n, k)
    assert len(subsets) == math.comb(n, k)
    for i, s in enumerate(subsets):
        assert subset_rank(s, n) == i
        assert subset_unrank(i, n, k) == s


def test_rank_rejects_unsorted_or_out_of_range():
    with pytest.raises(ValueError):
        subset_rank((2, 1), 4)
    with pytest.raises(ValueError):
        subset_rank((0, 4), 4)
    with pytest.raises(ValueError):
        subset_unrank(6, 4, 2)


@given(st.lists(st.binary(min_size=7, max_size=7), min_size=1, max_size=6))
def test_xor_is_self_inverse(payloads):
    x = xor_combine(payloads)
    assert xor_combine([x] + payloads) == bytes(7)
    if len(payloads) > 1:
        assert xor_combine([x] + payloads[1:]) == payloads[0]


def test_xor_errors():
    with pytest.raises(CodecError):
        xor_combine([b"ab", b"abc"])
    with pytest.raises(CodecError):
        xor_combine([])


def test_xor_small_example():
    assert xor_combine([b"\x0f\xf0", b"\xff\x00"]) == b"\xf0\xf0"


@given(st.integers(1, 200), st.integers(1, 17), st.integers(0, 3))
def test_split_join_roundtrip(size, S, seed):
    lib = FileLibrary.synthetic(2, size, seed)
    parts = split_file(1, S, lib)
    assert len(parts) == S
    assert {len(p) for p in parts} == {subpacket_size(size, S)}
    assert join_parts(parts, size) == lib[1]


def test_split_pads_with_zeros():
    lib = FileLibrary((b"abcde",))
    assert split_file(0, 2, lib) == [b"abc", b"de\x00"]


def test_split_unknown_file():
    with pytest.raises(KeyError):
        split_file(3, 2, FileLibrary.synthetic(2, 4))


def test_library_validation_and_determinism():
    with pytest.raises(ValueError):
        FileLibrary((b"ab", b"abc"))
    with pytest.raises(ValueError):
        FileLibrary(())
    assert FileLibrary.synthetic(3, 10, 5) == FileLibrary.synthetic(3, 10, 5)
    assert FileLibrary.synthetic(3, 10, 5) != FileLibrary.synthetic(3, 10, 6)


def test_subpacket_size():
    assert subpacket_size(100, 20) == 5
    assert subpacket_size(101, 20) == 6
    with pytest.raises(ValueError):
        subpacket_size(10, 0)


def test_file_labels():
    assert [file_label(i) for i in range(3)] == ["A", "B", "C"]
    assert file_label(25) == "Z"
    assert file_label(26) == "F26"
