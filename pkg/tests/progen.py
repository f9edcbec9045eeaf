"""Random straight-line-plus-loops programs that write out of bounds.

Used by the neighbor-integrity checks.  Every program allocates a handful of
heap, stack and global objects, then issues stores through pointers derived
from them in several ways (direct offset, helper call, reloaded pointer,
sweeping loop, far offset computed from another object, garbage high bits).
"""

from __future__ import annotations

import random

SIZES = (1, 2, 4, 8)
PATTERN = 0x4142434445464748


def _rounded(n: int) -> int:
    r = 16
    while r < n + 8:
        r *= 2
    return r


def generate(rng: random.Random) -> str:
    lines: list[str] = []
    globals_: list[str] = []
    helpers = [
        f"func @poke{s}(%p: ptr, %off: i64, %v: i64) {{\nentry:\n"
        f"  %q = ptradd %p, %off\n  store {s}, %v, %q\n  ret\n}}\n"
        for s in SIZES
    ]
    body: list[str] = []
    objects: list[tuple[str, int]] = []
    for i in range(rng.randint(2, 5)):
        size = rng.randint(1, 120)
        kind = rng.choice(("malloc", "alloca", "global"))
        if kind == "global":
            globals_.append(f"global @g{i} {size}")
            body.append(f"  %o{i} = gaddr @g{i}")
        else:
            body.append(f"  %o{i} = {kind} {size}")
        objects.append((f"%o{i}", size))
    body.append("  %holder = malloc 8")

    label = "entry"
    for k in range(rng.randint(1, 6)):
        name, size = rng.choice(objects)
        span = _rounded(size)
        off = rng.randint(-2 * span, 3 * span)
        s = rng.choice(SIZES)
        value = PATTERN & ((1 << (8 * s)) - 1)
        how = rng.choice(("direct", "call", "loaded", "loop", "far", "tagbits"))
        if how == "direct":
            body += [f"  %q{k} = ptradd {name}, {off}", f"  store {s}, {value}, %q{k}"]
        elif how == "call":
            body.append(f"  call @poke{s}({name}, {off}, {value})")
        elif how == "loaded":
            body += [f"  store ptr, {name}, %holder", f"  %l{k} = load ptr, %holder",
                     f"  %q{k} = ptradd %l{k}, {off}", f"  store {s}, {value}, %q{k}"]
        elif how == "far":
            other, _ = rng.choice(objects)
            body += [f"  %a{k} = ptrtoint {other}", f"  %b{k} = ptrtoint {name}",
                     f"  %d{k} = sub %a{k}, %b{k}", f"  %e{k} = add %d{k}, {rng.randint(-8, 8)}",
                     f"  %q{k} = ptradd {name}, %e{k}", f"  store {s}, {value}, %q{k}"]
        elif how == "tagbits":
            garbage = rng.randrange(1, 1 << 17) << 46
            body += [f"  %q{k} = ptradd {name}, {garbage + (off % span)}",
                     f"  store {s}, {value}, %q{k}"]
        else:
            start = rng.randint(-span, span)
            count = rng.randint(2, 2 * span // s + 2)
            body += [f"  br loop{k}", f"loop{k}:",
                     f"  %i{k} = phi i64 [0, {label}], [%n{k}, loop{k}]",
                     f"  %x{k} = add %i{k}, {start}",
                     f"  %q{k} = ptradd {name}, %x{k}",
                     f"  store {s}, {value}, %q{k}",
                     f"  %n{k} = add %i{k}, {s}",
                     f"  %c{k} = icmp slt %n{k}, {count * s}",
                     f"  brcond %c{k}, loop{k}, after{k}", f"after{k}:"]
            label = f"after{k}"
    body.append("  ret 0")
    lines += globals_
    lines += helpers
    lines.append("func @main() -> i64 {\nentry:")
    lines += body
    lines.append("}")
    return "\n".join(lines) + "\n"


class NeighborOracle:
    """Write hook that snapshots every other live object around each store.

    ``violations`` collects stores that changed a byte in the requested
    region of an object other than the one the store's check was bound to,
    or that landed outside every live object's padded extent.
    """

    def __init__(self):
        self.violations: list[str] = []
        self.stores = 0
        self._before: list[tuple[int, int, bytes]] = []

    def __call__(self, phase, event, executor):
        space = executor.space
        if phase == "pre":
            self.stores += 1
            owner = space.object_at(event.addr)
            if owner is None or not owner.live or event.addr + event.size > owner.end:
                self.violations.append(f"write at {event.addr:#x} outside any live object")
            intended = event.bounds.base if event.bounds is not None else None
            self._before = [(r.base, r.requested, space.read_bytes(r.base, r.requested))
                            for r in space.live_objects() if r.base != intended]
            return
        for base, length, data in self._before:
            if space.read_bytes(base, length) != data:
                self.violations.append(f"store at {event.addr:#x} modified object at {base:#x}")
