from __future__ import annotations

import pytest

from satmem.harness import compile_and_run
from satmem.instrument import Mode, PassConfig
from satmem.interp import DISCARD_BASE, Exited, Segfault, Trapped

HEAD = "extern @print_i64(i64)\nextern @putchar(i64)\nextern @read_byte() -> i64\n"


def wrap(body: str, head: str = HEAD) -> str:
    return f"{head}func @main() -> i64 {{\nentry:\n{body}\n}}\n"


def run(src: str, mode=Mode.SATURATE, data: bytes = b"", **kw):
    tbi = kw.pop("address_tagging", False)
    return compile_and_run(src, PassConfig(mode, address_tagging=tbi), data, **kw)


OVERFLOW = wrap("""  %buf = malloc 24
  %victim = malloc 8
  store 8, 7, %victim
  br loop
loop:
  %i = phi i64 [0, entry], [%i2, loop]
  %q = ptradd %buf, %i
  store 1, 0x41, %q
  %i2 = add %i, 1
  %c = icmp slt %i2, 40
  brcond %c, loop, done
done:
  %v = load 8, %victim
  callext @print_i64(%v)
  ret 0""")


def test_overflow_saturate_keeps_neighbor():
    out = run(OVERFLOW)
    assert out.status == Exited(0)
    assert out.output == b"7\n"
    assert out.stats.oob_writes_redirected == 8
    assert out.stats.corrections_overflow == 8


def test_overflow_failstop_traps_at_first_oob_store():
    out = run(OVERFLOW, Mode.FAILSTOP)
    assert out.status == Trapped("oob-store", "@main:loop:2")
    # the victim initialisation, 32 in-bounds stores, then the failing one
    assert out.stats.checks_executed == 34


def test_overflow_off_corrupts_neighbor():
    out = run(OVERFLOW, Mode.OFF)
    assert out.status == Exited(0)
    assert out.output == b"%d\n" % 0x4141414141414141


def test_overflow_oblivious_discards():
    out = run(OVERFLOW, Mode.OBLIVIOUS)
    assert out.output == b"7\n"
    assert out.stats.oob_writes_redirected == 8


def test_oblivious_read_manufactures_zero():
    src = wrap("  %a = malloc 8\n  %b = malloc 8\n  store 8, 55, %b\n"
               "  %q = ptradd %a, 16\n  %v = load 8, %q\n  callext @print_i64(%v)\n  ret 0")
    assert run(src, Mode.OFF).output == b"55\n"
    oblivious = run(src, Mode.OBLIVIOUS)
    assert oblivious.output == b"0\n"
    assert oblivious.stats.oob_reads_redirected == 1
    # saturate reads the last in-bounds word of the object instead
    assert run(src, Mode.SATURATE).output == b"0\n"


def test_saturated_store_lands_in_padding():
    src = wrap("  %a = malloc 20\n  %b = malloc 8\n  store 8, 5, %b\n"
               "  store 8, 0x1111111111111111, %a\n"
               "  %q = ptradd %a, 30\n  store 4, 0x22222222, %q\n"
               "  %v = load 8, %a\n  %w = load 8, %b\n  %h = ptradd %a, 28\n  %x = load 4, %h\n"
               "  callext @print_i64(%v)\n  callext @print_i64(%w)\n  callext @print_i64(%x)\n  ret 0")
    out = run(src)
    assert out.output == b"%d\n5\n%d\n" % (0x1111111111111111, 0x22222222)
    assert out.stats.corrections_overflow == 1


def test_underflow_corrects_to_base():
    src = wrap("  %a = malloc 8\n  %b = malloc 24\n  store 8, 5, %a\n"
               "  %q = ptradd %b, -32\n  store 8, 9, %q\n  %v = load 8, %b\n  %w = load 8, %a\n"
               "  callext @print_i64(%v)\n  callext @print_i64(%w)\n  ret 0")
    out = run(src)
    assert out.output == b"9\n5\n"
    assert out.stats.corrections_underflow == 1
    assert run(src, Mode.OFF).output == b"0\n9\n"


def test_division_by_zero_traps_in_every_mode():
    src = wrap("  %z = callext @read_byte()\n  %n = add %z, 1\n  %v = sdiv 10, %n\n  ret %v")
    for mode in Mode:
        assert run(src, mode).status == Trapped("arith", "@main:entry:2")
        assert run(src, mode, b"\x04").status == Exited(2)


def test_step_budget():
    src = wrap("  br spin\nspin:\n  br spin")
    for mode in Mode:
        out = run(src, mode, step_budget=10_000)
        assert isinstance(out.status, Trapped) and out.status.reason == "budget"


def test_unbounded_recursion_traps():
    src = "func @f(%n: i64) -> i64 {\nentry:\n  %m = add %n, 1\n  %r = call @f(%m)\n  ret %r\n}\n" + \
        wrap("  %r = call @f(0)\n  ret %r", "")
    assert run(src).status.reason == "call-depth"


def test_free_errors():
    twice = wrap("  %p = malloc 8\n  free %p\n  free %p\n  ret 0")
    assert run(twice).status.reason == "double-free"
    interior = wrap("  %p = malloc 8\n  %q = ptradd %p, 4\n  free %q\n  ret 0")
    assert run(interior).status.reason == "invalid-free"


def test_off_mode_segfaults_on_wild_pointer():
    src = wrap("  %p = inttoptr 0x4141414141414141\n  store 8, 1, %p\n  ret 0")
    out = run(src, Mode.OFF)
    assert out.status == Segfault(0x4141414141414141 & ((1 << 46) - 1))
    assert out.exit_code == 139


def test_untagged_pointer_goes_unchecked_in_saturate():
    src = wrap("  %h = malloc 16\n  %i = ptrtoint %h\n  %p = inttoptr %i\n"
               "  %q = ptradd %p, 20\n  store 1, 3, %q\n  ret 0")
    out = run(src)
    assert out.status == Exited(0)
    assert out.stats.corrections_overflow == 0


def test_address_tagging_halves_masks_on_load_loop():
    src = wrap("""  %a = malloc 800
  br loop
loop:
  %i = phi i64 [0, entry], [%i2, loop]
  %acc = phi i64 [0, entry], [%acc2, loop]
  %o = shl %i, 3
  %q = ptradd %a, %o
  %v = load 8, %q
  %acc2 = add %acc, %v
  %i2 = add %i, 1
  %c = icmp slt %i2, 100
  brcond %c, loop, done
done:
  ret %acc2""")
    plain = run(src).stats
    tbi = run(src, address_tagging=True).stats
    assert plain.checks_executed == tbi.checks_executed == 100
    assert plain.masks_executed == 200
    assert tbi.masks_executed == 100


def test_intrinsics_and_io():
    head = HEAD + ("extern @memset(ptr, i64, i64)\nextern @memcpy(ptr, ptr, i64)\n"
                   "extern @print(ptr, i64)\nextern @strlen(ptr) -> i64\nextern @exit(i64)\n")
    src = wrap("  %a = malloc 8\n  %b = malloc 8\n  callext @memset(%a, 0x61, 3)\n"
               "  callext @memcpy(%b, %a, 4)\n  %n = callext @strlen(%b)\n"
               "  callext @print(%b, %n)\n  %ch = callext @read_byte()\n  callext @putchar(%ch)\n"
               "  %e = callext @read_byte()\n  callext @print_i64(%e)\n  callext @exit(3)\n  ret 0", head)
    out = run(src, data=b"Z")
    assert out.output == b"aaaZ-1\n"
    assert out.status == Exited(3)


def test_runs_are_deterministic():
    a, b = run(OVERFLOW), run(OVERFLOW)
    assert (a.status, a.output, a.stats) == (b.status, b.output, b.stats)


def test_discard_page_is_outside_every_region():
    from satmem.memory import REGION_RANGES
    assert all(hi <= DISCARD_BASE for _, hi in REGION_RANGES.values())


def test_stack_objects_die_on_return():
    src = ("func @leak() -> ptr {\nentry:\n  %s = alloca 8\n  ret %s\n}\n"
           + wrap("  %p = call @leak()\n  ret 0", ""))
    out = run(src)
    assert out.status == Exited(0)
    assert [r.live for r in out.space.objects.values()] == [False]


@pytest.mark.parametrize("mode", list(Mode))
def test_corrections_never_exceed_checks(mode):
    s = run(OVERFLOW, mode).stats
    assert s.corrections_overflow + s.corrections_underflow <= s.checks_executed
