"""Pointer tag codecs and the saturation clamp.

Two layouts share a 46-bit canonical address width:

* buddy:    bits 63..58 hold the complemented size exponent ``B``; objects are
            ``2**B`` bytes and aligned on ``2**B``.
* floating: bits 63..58 hold the complemented block exponent ``E``, bits 57..52
            the complemented first block index and bits 51..46 the complemented
            end block index, inside the ``2**(E+6)`` aligned window holding the
            address.

Tags are stored complemented so that a pointer with no tag at all decodes to
an object covering the whole address space.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import AlignmentError, CheckConfigError, SizeError

ADDR_BITS = 46
ADDR_LIMIT = 1 << ADDR_BITS
ADDR_MASK = ADDR_LIMIT - 1
TAG_MASK = ((1 << 64) - 1) & ~ADDR_MASK
U64 = (1 << 64) - 1

TAG_SHIFT = 58
FIELD_BITS = 6
FIELD_MASK = (1 << FIELD_BITS) - 1
BASE_BLK_SHIFT = 52
BOUND_BLK_SHIFT = 46

PADDING = 8
MIN_EXPONENT = 4
MAX_EXPONENT = ADDR_BITS - 1
MAX_REQUEST = 1 << 45
ACCESS_SIZES = (1, 2, 4, 8)

# Largest object, in blocks, the floating layout will place in one window.
FLOATING_MAX_BLOCKS = 32


class CodecKind(enum.Enum):
    BUDDY = "buddy"
    FLOATING = "floating"


class Verdict(enum.Enum):
    IN_BOUNDS = "in-bounds"
    OVERFLOW = "overflow"
    UNDERFLOW = "underflow"


@dataclass(frozen=True)
class Bounds:
    base: int
    bound: int

    @property
    def size(self) -> int:
        return self.bound - self.base

    def contains(self, addr: int, size: int = 1) -> bool:
        return self.base <= addr and addr + size <= self.bound


UNBOUNDED = Bounds(0, ADDR_LIMIT)


def _check_request(requested: int) -> None:
    if requested < 1 or requested > MAX_REQUEST:
        raise SizeError(f"cannot allocate {requested} bytes")


def round_size(requested: int) -> tuple[int, int]:
    """Return ``(B, 2**B)`` for the smallest ``B >= 4`` with ``2**B >= requested + 8``."""
    _check_request(requested)
    exponent = max(MIN_EXPONENT, (requested + PADDING - 1).bit_length())
    return exponent, 1 << exponent


def make_tagged(base_addr: int, exponent: int) -> int:
    """Buddy-encode an object base; ``base_addr`` must be aligned on ``2**exponent``."""
    if not 0 <= exponent <= MAX_EXPONENT:
        raise SizeError(f"exponent {exponent} outside [0, {MAX_EXPONENT}]")
    if not 0 <= base_addr < ADDR_LIMIT:
        raise AlignmentError(f"address {base_addr:#x} outside the canonical range")
    if base_addr & ((1 << exponent) - 1):
        raise AlignmentError(f"{base_addr:#x} is not aligned to 2**{exponent}")
    return base_addr | ((~exponent & FIELD_MASK) << TAG_SHIFT)


def strip(raw: int) -> int:
    return raw & ADDR_MASK


def tag_bits(raw: int) -> int:
    return raw & TAG_MASK


def decode(raw: int) -> Bounds:
    exponent = ~(raw >> TAG_SHIFT) & FIELD_MASK
    if exponent >= ADDR_BITS:
        return UNBOUNDED
    base = raw & ADDR_MASK & ~((1 << exponent) - 1)
    return Bounds(base, min(base + (1 << exponent), ADDR_LIMIT))


def saturate(addr: int, access_size: int, b: Bounds) -> tuple[int, Verdict]:
    """Clamp an access of ``access_size`` bytes at ``addr`` into ``b``.

    Underflows land on the base, overflows on ``bound - access_size``.
    """
    if access_size not in ACCESS_SIZES or access_size > b.bound - b.base:
        raise CheckConfigError(f"access of {access_size} bytes into {b.size}-byte object")
    if addr < b.base:
        return b.base, Verdict.UNDERFLOW
    last = b.bound - access_size
    if addr > last:
        return last, Verdict.OVERFLOW
    return addr, Verdict.IN_BOUNDS


# ---------------------------------------------------------------------------
# floating layout


def floating_round_size(requested: int) -> tuple[int, int, int]:
    """Return ``(E, blocks, rounded)`` for the floating layout.

    ``E`` is the smallest block exponent (at least 4) for which the padded
    size fits in ``FLOATING_MAX_BLOCKS`` blocks.
    """
    _check_request(requested)
    need = requested + PADDING
    exponent = MIN_EXPONENT
    while -(-need >> exponent) > FLOATING_MAX_BLOCKS:
        exponent += 1
    blocks = -(-need >> exponent)
    return exponent, blocks, blocks << exponent


def make_tagged_floating(base_addr: int, exponent: int, blocks: int) -> int:
    if not 0 <= exponent <= MAX_EXPONENT:
        raise SizeError(f"exponent {exponent} outside [0, {MAX_EXPONENT}]")
    if not 0 <= base_addr < ADDR_LIMIT:
        raise AlignmentError(f"address {base_addr:#x} outside the canonical range")
    if base_addr & ((1 << exponent) - 1):
        raise AlignmentError(f"{base_addr:#x} is not aligned to 2**{exponent}")
    first = (base_addr >> exponent) & FIELD_MASK
    end = first + blocks
    if blocks < 1 or end > FIELD_MASK:
        raise AlignmentError(f"{blocks} blocks at index {first} overrun the window")
    return (
        base_addr
        | ((~exponent & FIELD_MASK) << TAG_SHIFT)
        | ((~first & FIELD_MASK) << BASE_BLK_SHIFT)
        | ((~end & FIELD_MASK) << BOUND_BLK_SHIFT)
    )


def decode_floating(raw: int) -> Bounds:
    exponent = ~(raw >> TAG_SHIFT) & FIELD_MASK
    if exponent >= ADDR_BITS:
        return UNBOUNDED
    first = ~(raw >> BASE_BLK_SHIFT) & FIELD_MASK
    end = ~(raw >> BOUND_BLK_SHIFT) & FIELD_MASK
    window = raw & ADDR_MASK & ~((1 << (exponent + FIELD_BITS)) - 1)
    base = window + (first << exponent)
    if end <= first:
        # corrupted field group; shrink to a single block rather than widen
        end = first + 1
    return Bounds(base, min(window + (end << exponent), ADDR_LIMIT))


# ---------------------------------------------------------------------------
# codec objects used by the store and the runtime


@dataclass(frozen=True)
class Layout:
    exponent: int
    rounded: int
    blocks: int | None = None


class BuddyCodec:
    kind = CodecKind.BUDDY

    def layout(self, requested: int) -> Layout:
        exponent, rounded = round_size(requested)
        return Layout(exponent, rounded)

    def place(self, cursor: int, layout: Layout) -> int:
        return _align_up(cursor, layout.rounded)

    def tag(self, base: int, layout: Layout) -> int:
        return make_tagged(base, layout.exponent)

    decode = staticmethod(decode)

    def __repr__(self) -> str:
        return "BuddyCodec()"


class FloatingCodec:
    kind = CodecKind.FLOATING

    def layout(self, requested: int) -> Layout:
        exponent, blocks, rounded = floating_round_size(requested)
        return Layout(exponent, rounded, blocks)

    def place(self, cursor: int, layout: Layout) -> int:
        base = _align_up(cursor, 1 << layout.exponent)
        if ((base >> layout.exponent) & FIELD_MASK) + layout.blocks > FIELD_MASK:
            base = _align_up(base + 1, 1 << (layout.exponent + FIELD_BITS))
        return base

    def tag(self, base: int, layout: Layout) -> int:
        return make_tagged_floating(base, layout.exponent, layout.blocks)

    decode = staticmethod(decode_floating)

    def __repr__(self) -> str:
        return "FloatingCodec()"


BUDDY = BuddyCodec()
FLOATING = FloatingCodec()


def get_codec(kind: CodecKind | str) -> BuddyCodec | FloatingCodec:
    return BUDDY if CodecKind(kind) is CodecKind.BUDDY else FLOATING


def _align_up(value: int, alignment: int) -> int:
    return (value + alignment - 1) & ~(alignment - 1)
