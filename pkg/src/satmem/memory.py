"""Simulated 46-bit address space with padded, aligned allocations."""

from __future__ import annotations

import bisect
import enum
import itertools
from dataclasses import dataclass, field

from .codec import ACCESS_SIZES, ADDR_LIMIT, BUDDY, BuddyCodec, FloatingCodec
from .errors import FreeError, OutOfMemory, SegmentationFault

PAGE_SIZE = 4096
PAGE_SHIFT = 12


class Region(enum.Enum):
    STACK = "stack"
    HEAP = "heap"
    GLOBAL = "global"


# [start, limit) of each region; all three are disjoint and below 2**46.
REGION_RANGES = {
    Region.GLOBAL: (1 << 32, 1 << 36),
    Region.HEAP: (1 << 40, 1 << 44),
    Region.STACK: (1 << 44, 1 << 45),
}


@dataclass
class ObjectRecord:
    id: int
    base: int
    requested: int
    rounded: int
    region: Region
    live: bool = True
    name: str | None = None

    @property
    def end(self) -> int:
        return self.base + self.rounded


@dataclass(frozen=True)
class FragmentationEntry:
    requested: int
    rounded: int
    ratio: float


@dataclass
class FragmentationReport:
    per_object: list[FragmentationEntry] = field(default_factory=list)
    aggregate_ratio: float = 1.0

    def to_dict(self) -> dict:
        return {
            "aggregate_ratio": self.aggregate_ratio,
            "per_object": [
                {"requested": e.requested, "rounded": e.rounded, "ratio": e.ratio}
                for e in self.per_object
            ],
        }


class AddressSpace:
    """Sparse byte-addressable memory plus the object table.

    Addresses are never reused: ``release`` only marks an object dead.
    """

    def __init__(self, codec: BuddyCodec | FloatingCodec = BUDDY):
        self.codec = codec
        self.pages: dict[int, bytearray] = {}
        self.objects: dict[int, ObjectRecord] = {}
        self.cursors = {region: start for region, (start, _) in REGION_RANGES.items()}
        self._ids = itertools.count(1)
        # sorted object bases, for address -> object lookups
        self._starts: list[int] = []
        self._by_start: list[ObjectRecord] = []

    # -- allocation --------------------------------------------------------

    def allocate(self, size: int, region: Region = Region.HEAP, name: str | None = None):
        """Allocate ``size`` bytes in ``region``; returns ``(tagged_pointer, record)``."""
        layout = self.codec.layout(size)
        _, limit = REGION_RANGES[region]
        base = self.codec.place(self.cursors[region], layout)
        if base + layout.rounded > limit:
            raise OutOfMemory(f"{region.value} region exhausted allocating {size} bytes")
        self.cursors[region] = base + layout.rounded
        record = ObjectRecord(next(self._ids), base, size, layout.rounded, region, name=name)
        self.objects[record.id] = record
        i = bisect.bisect(self._starts, base)
        self._starts.insert(i, base)
        self._by_start.insert(i, record)
        self._zero(base, layout.rounded)
        return self.codec.tag(base, layout), record

    def release(self, object_id: int) -> None:
        record = self.objects.get(object_id)
        if record is None:
            raise FreeError(f"unknown object id {object_id}")
        if not record.live:
            raise FreeError(f"object {object_id} released twice")
        record.live = False

    def object_at(self, addr: int) -> ObjectRecord | None:
        """Object whose padded extent contains ``addr`` (live or not)."""
        i = bisect.bisect(self._starts, addr) - 1
        if i >= 0:
            record = self._by_start[i]
            if addr < record.end:
                return record
        return None

    def object_based_at(self, addr: int) -> ObjectRecord | None:
        record = self.object_at(addr)
        return record if record is not None and record.base == addr else None

    def live_objects(self) -> list[ObjectRecord]:
        return [r for r in self._by_start if r.live]

    def is_mapped(self, addr: int, size: int = 1) -> bool:
        first = self.object_at(addr)
        if first is None:
            return False
        if addr + size <= first.end:
            return True
        # spans several adjacent objects
        cursor = first.end
        while cursor < addr + size:
            nxt = self.object_at(cursor)
            if nxt is None:
                return False
            cursor = nxt.end
        return True

    # -- raw bytes ---------------------------------------------------------

    def read(self, addr: int, size: int, strict: bool = False) -> int:
        self._check_access(addr, size, strict)
        off = addr & (PAGE_SIZE - 1)
        if off + size <= PAGE_SIZE:
            page = self.pages.get(addr >> PAGE_SHIFT)
            if page is None:
                return 0
            return int.from_bytes(page[off:off + size], "little")
        return int.from_bytes(self.read_bytes(addr, size), "little")

    def write(self, addr: int, size: int, value: int, strict: bool = False) -> None:
        self._check_access(addr, size, strict)
        data = (value & ((1 << (8 * size)) - 1)).to_bytes(size, "little")
        self.write_bytes(addr, data)

    def raw_access(self, addr: int, size: int, op: str, value: int | None = None,
                   strict: bool = False) -> int:
        if op == "read":
            return self.read(addr, size, strict)
        if op == "write":
            if value is None:
                raise ValueError("write needs a value")
            self.write(addr, size, value, strict)
            return value
        raise ValueError(f"unknown access op {op!r}")

    def read_bytes(self, addr: int, length: int) -> bytes:
        out = bytearray()
        while length > 0:
            off = addr & (PAGE_SIZE - 1)
            n = min(length, PAGE_SIZE - off)
            page = self.pages.get(addr >> PAGE_SHIFT)
            out += page[off:off + n] if page is not None else bytes(n)
            addr += n
            length -= n
        return bytes(out)

    def write_bytes(self, addr: int, data: bytes) -> None:
        pos = 0
        while pos < len(data):
            off = addr & (PAGE_SIZE - 1)
            n = min(len(data) - pos, PAGE_SIZE - off)
            index = addr >> PAGE_SHIFT
            page = self.pages.get(index)
            if page is None:
                page = self.pages[index] = bytearray(PAGE_SIZE)
            page[off:off + n] = data[pos:pos + n]
            addr += n
            pos += n

    def _check_access(self, addr: int, size: int, strict: bool) -> None:
        if size not in ACCESS_SIZES:
            raise ValueError(f"access size {size} not in {ACCESS_SIZES}")
        if addr < 0 or addr + size > ADDR_LIMIT:
            if strict:
                raise SegmentationFault(addr)
            raise ValueError(f"access at {addr:#x} leaves the address space")
        if strict and not self.is_mapped(addr, size):
            raise SegmentationFault(addr)

    def _zero(self, base: int, length: int) -> None:
        first = base >> PAGE_SHIFT
        last = (base + length - 1) >> PAGE_SHIFT
        if last - first + 1 <= len(self.pages):
            indices = [i for i in range(first, last + 1) if i in self.pages]
        else:
            indices = [i for i in self.pages if first <= i <= last]
        for index in indices:
            page = self.pages[index]
            lo = max(base, index << PAGE_SHIFT) - (index << PAGE_SHIFT)
            hi = min(base + length, (index + 1) << PAGE_SHIFT) - (index << PAGE_SHIFT)
            page[lo:hi] = bytes(hi - lo)

    # -- bookkeeping -------------------------------------------------------

    def fragmentation_report(self) -> FragmentationReport:
        records = sorted(self.objects.values(), key=lambda r: r.id)
        if not records:
            return FragmentationReport()
        entries = [FragmentationEntry(r.requested, r.rounded, r.rounded / r.requested)
                   for r in records]
        total_rounded = sum(r.rounded for r in records)
        total_requested = sum(r.requested for r in records)
        return FragmentationReport(entries, total_rounded / total_requested)
