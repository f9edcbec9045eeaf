from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from satmem.codec import (ADDR_LIMIT, ADDR_MASK, FLOATING, FLOATING_MAX_BLOCKS, TAG_MASK,
                          UNBOUNDED, Bounds, Verdict, decode, decode_floating,
                          floating_round_size, make_tagged, make_tagged_floating,
                          round_size, saturate, strip, tag_bits)
from satmem.errors import AlignmentError, CheckConfigError, SizeError


def brute_exponent(requested: int) -> int:
    b = 0
    while (1 << b) < requested + 8:
        b += 1
    return max(b, 4)


@pytest.mark.parametrize("requested, expected", [(1, 16), (8, 16), (9, 32), (24, 32),
                                                 (56, 64), (57, 128), (120, 128), (4096, 8192)])
def test_round_size_examples(requested, expected):
    assert round_size(requested)[1] == expected


@pytest.mark.parametrize("bad", [0, -1, (1 << 45) + 1])
def test_round_size_rejects(bad):
    with pytest.raises(SizeError):
        round_size(bad)


@given(st.integers(min_value=1, max_value=1 << 45))
def test_round_size_is_minimal(requested):
    b, rounded = round_size(requested)
    assert rounded == 1 << b >= requested + 8
    assert b == 4 or (1 << (b - 1)) < requested + 8


def test_make_tagged_puts_complement_in_top_bits():
    raw = make_tagged(0x1000, 5)
    assert raw >> 58 == (~5 & 0x3F)
    assert strip(raw) == 0x1000
    assert tag_bits(raw) == raw & TAG_MASK


def test_make_tagged_errors():
    with pytest.raises(AlignmentError):
        make_tagged(0x1008, 5)
    with pytest.raises(SizeError):
        make_tagged(0, 46)


@given(st.integers(min_value=4, max_value=45), st.data())
def test_interior_pointers_share_bounds(b, data):
    base = data.draw(st.integers(0, (ADDR_LIMIT >> b) - 1)) << b
    off = data.draw(st.integers(0, (1 << b) - 1))
    raw = make_tagged(base, b)
    assert decode(raw + off) == Bounds(base, base + (1 << b))


@given(st.integers(min_value=0, max_value=ADDR_MASK))
def test_untagged_pointer_is_unbounded(addr):
    assert decode(addr) == UNBOUNDED == Bounds(0, 1 << 46)


def test_saturate_examples():
    b = Bounds(0x1000, 0x1020)
    assert saturate(0x1010, 4, b) == (0x1010, Verdict.IN_BOUNDS)
    assert saturate(0x101d, 4, b) == (0x101c, Verdict.OVERFLOW)
    assert saturate(0x0ff0, 8, b) == (0x1000, Verdict.UNDERFLOW)


@pytest.mark.parametrize("size", [3, 16])
def test_saturate_rejects_bad_sizes(size):
    with pytest.raises(CheckConfigError):
        saturate(0, size, Bounds(0, 16))


def test_saturate_rejects_access_wider_than_object():
    with pytest.raises(CheckConfigError):
        saturate(0, 8, Bounds(0, 4))


@given(st.integers(1, 1 << 20))
def test_floating_layout_is_tighter_than_buddy(requested):
    e, blocks, rounded = floating_round_size(requested)
    assert blocks <= FLOATING_MAX_BLOCKS
    assert rounded == blocks << e >= requested + 8
    assert rounded <= round_size(requested)[1]


@given(st.integers(1, 1 << 16), st.integers(0, 1 << 20))
def test_floating_round_trip(requested, slot):
    layout = FLOATING.layout(requested)
    base = FLOATING.place(slot << 4, layout)
    raw = FLOATING.tag(base, layout)
    assert decode_floating(raw) == Bounds(base, base + layout.rounded)
    assert decode_floating(raw + layout.rounded - 1) == Bounds(base, base + layout.rounded)


def test_floating_untagged_is_unbounded():
    assert decode_floating(0x1234) == UNBOUNDED


def test_floating_rejects_window_overrun():
    with pytest.raises(AlignmentError):
        make_tagged_floating(63 << 4, 4, 2)
