"""Interpreter for (instrumented) programs over a simulated address space.

Memory semantics per mode, applied by ``check`` instructions:

* saturate  - out-of-bounds addresses are clamped to the object boundary;
* failstop  - the run stops with ``Trapped``;
* oblivious - writes are discarded and reads return 0;
* off       - no checks; touching unmapped memory gives ``Segfault``.

The memory unit ignores address bits above the canonical 46, the way a
top-byte-ignore MMU would; the pass decides whether explicit strips are
needed before dereference.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Callable

from .codec import ADDR_LIMIT, ADDR_MASK, TAG_MASK, U64, Bounds, get_codec
from .errors import FreeError, LinkError, OutOfMemory, SegmentationFault
from .instrument import Mode, PassConfig
from .ir.nodes import BINOPS, I64, PTR, VOID, Const, Function, Program, Ref
from .memory import AddressSpace, FragmentationReport, Region

DEFAULT_STEP_BUDGET = 10**8
MAX_CALL_DEPTH = 200
# reads here return 0 and writes are dropped (oblivious mode redirect target)
DISCARD_BASE = ADDR_LIMIT - 4096

INTRINSICS = {
    "print": ([PTR, I64], VOID),
    "puts": ([PTR], VOID),
    "print_i64": ([I64], VOID),
    "putchar": ([I64], VOID),
    "read_byte": ([], I64),
    "exit": ([I64], VOID),
    "memcpy": ([PTR, PTR, I64], VOID),
    "memset": ([PTR, I64, I64], VOID),
    "strlen": ([PTR], I64),
    "strchr": ([PTR, I64], PTR),
}


@dataclass
class ExecStats:
    instrs_total: int = 0
    checks_executed: int = 0
    masks_executed: int = 0
    corrections_overflow: int = 0
    corrections_underflow: int = 0
    oob_writes_redirected: int = 0
    oob_reads_redirected: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class Exited:
    code: int


@dataclass(frozen=True)
class Trapped:
    reason: str
    instr: str | None = None


@dataclass(frozen=True)
class Segfault:
    addr: int


Status = Exited | Trapped | Segfault


@dataclass
class ExecOutcome:
    status: Status
    output: bytes
    stats: ExecStats
    fragmentation: FragmentationReport
    space: AddressSpace = field(repr=False, compare=False, default=None)
    global_addrs: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    @property
    def exit_code(self) -> int:
        if isinstance(self.status, Exited):
            return self.status.code
        return 101 if isinstance(self.status, Trapped) else 139


@dataclass(frozen=True)
class WriteEvent:
    """A store about to reach memory, with the bounds its check used."""

    addr: int
    size: int
    bounds: Bounds | None


class _Trap(Exception):
    def __init__(self, reason: str, instr: str | None = None):
        self.reason = reason
        self.instr = instr


class _Exit(Exception):
    def __init__(self, code: int):
        self.code = code


def _signed(v: int) -> int:
    return v - (1 << 64) if v & (1 << 63) else v


def _binop(op: str) -> Callable[[int, int], int]:
    if op == "add":
        return lambda a, b: (a + b) & U64
    if op == "sub":
        return lambda a, b: (a - b) & U64
    if op == "mul":
        return lambda a, b: (a * b) & U64
    if op == "and":
        return operator.and_
    if op == "or":
        return operator.or_
    if op == "xor":
        return operator.xor
    if op == "shl":
        return lambda a, b: (a << (b & 63)) & U64
    if op == "lshr":
        return lambda a, b: a >> (b & 63)
    if op == "ashr":
        return lambda a, b: (_signed(a) >> (b & 63)) & U64
    if op in ("udiv", "urem", "sdiv", "srem"):
        def div(a: int, b: int) -> int:
            if b == 0:
                raise _Trap("arith")
            if op == "udiv":
                return a // b
            if op == "urem":
                return a % b
            sa, sb = _signed(a), _signed(b)
            q = abs(sa) // abs(sb)
            if (sa < 0) != (sb < 0):
                q = -q
            return (q if op == "sdiv" else sa - q * sb) & U64
        return div
    raise ValueError(op)


_ICMP = {
    "eq": lambda a, b: a == b,
    "ne": lambda a, b: a != b,
    "ult": lambda a, b: a < b,
    "ule": lambda a, b: a <= b,
    "ugt": lambda a, b: a > b,
    "uge": lambda a, b: a >= b,
    "slt": lambda a, b: _signed(a) < _signed(b),
    "sle": lambda a, b: _signed(a) <= _signed(b),
    "sgt": lambda a, b: _signed(a) > _signed(b),
    "sge": lambda a, b: _signed(a) >= _signed(b),
}


def _getter(operand):
    if isinstance(operand, Const):
        value = operand.value & U64
        return lambda env: value
    return operator.itemgetter(operand.name)


class _CompiledBlock:
    __slots__ = ("label", "phis", "body", "term", "cost")

    def __init__(self, label, phis, body, term):
        self.label = label
        self.phis = phis
        self.body = body
        self.term = term
        self.cost = len(phis) + len(body) + 1


class Executor:
    """One program run. Create a new instance per run."""

    def __init__(self, program: Program, cfg: PassConfig, input: bytes = b"", *,
                 step_budget: int = DEFAULT_STEP_BUDGET,
                 write_hook: Callable[[str, WriteEvent, "Executor"], None] | None = None):
        self.program = program
        self.cfg = cfg
        self.codec = get_codec(cfg.codec)
        self.space = AddressSpace(self.codec)
        self.stats = ExecStats()
        self.output = bytearray()
        self.input = bytes(input)
        self.input_pos = 0
        self.step_budget = step_budget
        self.write_hook = write_hook
        self.strict = cfg.mode is Mode.OFF
        self.tagged = cfg.checked
        self.global_addrs: dict[str, int] = {}
        self.depth = 0
        self._last_bounds: Bounds | None = None
        self._current: str | None = None
        self._functions: dict[str, dict[str, _CompiledBlock]] = {}
        self._entry: dict[str, str] = {}
        self._link()

    # -- setup -----------------------------------------------------------

    def _link(self) -> None:
        for ext in self.program.externals:
            sig = INTRINSICS.get(ext.name)
            if sig is None:
                raise LinkError(f"no runtime binding for extern @{ext.name}")
            if (list(ext.params), ext.ret) != (sig[0], sig[1]):
                raise LinkError(f"extern @{ext.name} declared with the wrong signature")

    def _load_globals(self) -> None:
        for g in self.program.globals:
            raw, record = self.space.allocate(g.size, Region.GLOBAL, name=g.name)
            self.global_addrs[g.name] = record.base
            if g.init:
                self.space.write_bytes(record.base, g.init)

    # -- entry point -----------------------------------------------------

    def run(self) -> ExecOutcome:
        try:
            self._load_globals()
            for name in self.program.ctors:
                self.call(name, [])
            ret = self.call("main", [])
            status: Status = Exited(_signed(ret) if ret is not None else 0)
        except _Exit as exc:
            status = Exited(exc.code)
        except _Trap as exc:
            status = Trapped(exc.reason, exc.instr or self._current)
        except SegmentationFault as exc:
            status = Segfault(exc.addr)
        except RecursionError:
            status = Trapped("call-depth", self._current)
        return ExecOutcome(status, bytes(self.output), self.stats,
                           self.space.fragmentation_report(), self.space, dict(self.global_addrs))

    # -- calls -----------------------------------------------------------

    def call(self, name: str, args: list[int]) -> int | None:
        blocks = self._functions.get(name)
        if blocks is None:
            blocks = self._compile(self.program.function(name))
        fn = self.program.function(name)
        env = {p.name: v for p, v in zip(fn.params, args)}
        self.depth += 1
        if self.depth > MAX_CALL_DEPTH:
            raise _Trap("call-depth", f"@{name}")
        stack_objects: list[int] = []
        env["\0stack"] = stack_objects
        try:
            block = blocks[self._entry[name]]
            prev = None
            stats = self.stats
            budget = self.step_budget
            while True:
                stats.instrs_total += block.cost
                if stats.instrs_total > budget:
                    raise _Trap("budget", f"@{name}:{block.label}")
                if block.phis:
                    values = [(dest, arms[prev](env)) for dest, arms in block.phis]
                    for dest, v in values:
                        env[dest] = v
                for step in block.body:
                    step(env)
                done, target = block.term(env)
                if done:
                    return target
                prev = block.label
                block = blocks[target]
        finally:
            self.depth -= 1
            for oid in stack_objects:
                self.space.objects[oid].live = False

    # -- compilation to closures ----------------------------------------

    def _compile(self, fn: Function) -> dict[str, _CompiledBlock]:
        blocks = {}
        for block in fn.blocks:
            phis = []
            body = []
            for idx, instr in enumerate(block.instrs):
                where = f"@{fn.name}:{block.label}:{idx}"
                if instr.op == "phi":
                    phis.append((instr.dest, {label: _getter(v) for v, label in instr.incoming}))
                elif instr.is_terminator:
                    term = self._compile_term(instr, where)
                else:
                    body.append(self._compile_instr(instr, where))
            blocks[block.label] = _CompiledBlock(block.label, phis, body, term)
        self._functions[fn.name] = blocks
        self._entry[fn.name] = fn.blocks[0].label
        return blocks

    def _compile_term(self, instr, where):
        if instr.op == "br":
            target = instr.targets[0]
            return lambda env: (False, target)
        if instr.op == "brcond":
            cond = _getter(instr.args[0])
            t, f = instr.targets
            return lambda env: (False, t if cond(env) else f)
        if instr.args:
            value = _getter(instr.args[0])
            return lambda env: (True, value(env))
        return lambda env: (True, None)

    def _compile_instr(self, instr, where):  # noqa: C901 - one branch per opcode
        op = instr.op
        dest = instr.dest
        args = [_getter(a) for a in instr.args]
        stats = self.stats
        space = self.space

        if op in BINOPS:
            f = _binop(op)
            a, b = args

            def step(env):
                try:
                    env[dest] = f(a(env), b(env))
                except _Trap as exc:
                    exc.instr = where
                    raise
            return step
        if op == "icmp":
            f = _ICMP[instr.pred]
            a, b = args

            def step(env):
                env[dest] = 1 if f(a(env), b(env)) else 0
            return step
        if op in ("ptradd",):
            a, b = args

            def step(env):
                env[dest] = (a(env) + b(env)) & U64
            return step
        if op in ("cast", "ptrtoint", "inttoptr"):
            a = args[0]

            def step(env):
                env[dest] = a(env)
            return step
        if op == "strip":
            a = args[0]

            def step(env):
                stats.masks_executed += 1
                env[dest] = a(env) & ADDR_MASK
            return step
        if op == "load":
            a = args[0]
            size = instr.size

            def step(env):
                env[dest] = self._read(a(env), size)
            return step
        if op == "store":
            v, a = args
            size = instr.size

            def step(env):
                self._write(a(env), size, v(env), where)
            return step
        if op == "check":
            return self._compile_check(instr, args, where)
        if op == "alloca":
            size = instr.size

            def step(env):
                try:
                    raw, record = space.allocate(size, Region.STACK)
                except OutOfMemory:
                    raise _Trap("stack-overflow", where) from None
                env["\0stack"].append(record.id)
                env[dest] = raw if self.tagged else raw & ADDR_MASK
            return step
        if op == "malloc":
            a = args[0]

            def step(env):
                size = a(env)
                try:
                    raw, _ = space.allocate(size, Region.HEAP)
                except (OutOfMemory, ValueError):
                    env[dest] = 0
                    return
                env[dest] = raw if self.tagged else raw & ADDR_MASK
            return step
        if op == "free":
            a = args[0]

            def step(env):
                addr = a(env) & ADDR_MASK
                if addr == 0:
                    return
                record = space.object_based_at(addr)
                if record is None or record.region is not Region.HEAP:
                    raise _Trap("invalid-free", where)
                try:
                    space.release(record.id)
                except FreeError:
                    raise _Trap("double-free", where) from None
            return step
        if op == "gaddr":
            name = instr.symbol

            def step(env):
                env[dest] = self.global_addrs[name]
            return step
        if op == "mktag":
            a = args[0]
            layout = self.codec.layout(instr.size)

            def step(env):
                env[dest] = self.codec.tag(a(env) & ADDR_MASK, layout)
            return step
        if op == "retag":
            a, b = args

            def step(env):
                stats.masks_executed += 1
                env[dest] = (b(env) & TAG_MASK) | (a(env) & ADDR_MASK)
            return step
        if op == "shadowld":
            name = instr.symbol

            def step(env):
                env[dest] = space.read(self.global_addrs[name], 8)
            return step
        if op == "shadowst":
            name = instr.symbol
            a = args[0]

            def step(env):
                space.write(self.global_addrs[name], 8, a(env))
            return step
        if op == "call":
            name = instr.symbol

            def step(env):
                self._current = where
                result = self.call(name, [g(env) for g in args])
                if dest is not None:
                    env[dest] = result
            return step
        if op == "callext":
            name = instr.symbol

            def step(env):
                self._current = where
                result = self._intrinsic(name, [g(env) for g in args], where)
                if dest is not None:
                    env[dest] = result & U64
            return step
        raise ValueError(f"cannot execute opcode {op!r}")

    def _compile_check(self, instr, args, where):
        p, b = args
        size = instr.size
        kind = instr.pred
        dest = instr.dest
        stats = self.stats
        decode = self.codec.decode
        mode = self.cfg.mode
        discard = DISCARD_BASE

        def step(env):
            ptr = p(env)
            bp = b(env)
            stats.checks_executed += 1
            stats.masks_executed += 1
            addr = ptr & ADDR_MASK
            bounds = decode(bp)
            self._last_bounds = bounds
            if addr < bounds.base:
                stats.corrections_underflow += 1
                corrected = bounds.base
            elif addr > bounds.bound - size:
                stats.corrections_overflow += 1
                corrected = bounds.bound - size
            else:
                env[dest] = (bp & TAG_MASK) | addr
                return
            if mode is Mode.FAILSTOP:
                raise _Trap(f"oob-{kind}", where)
            if kind == "store":
                stats.oob_writes_redirected += 1
            elif kind == "load":
                stats.oob_reads_redirected += 1
            if mode is Mode.OBLIVIOUS and kind != "arg":
                self._last_bounds = None
                env[dest] = discard
            else:
                env[dest] = (bp & TAG_MASK) | corrected
        return step

    # -- memory ----------------------------------------------------------

    def _read(self, raw: int, size: int) -> int:
        addr = raw & ADDR_MASK
        if addr >= DISCARD_BASE and not self.strict:
            return 0
        return self.space.read(addr, size, self.strict)

    def _write(self, raw: int, size: int, value: int, where: str) -> None:
        addr = raw & ADDR_MASK
        if addr >= DISCARD_BASE and not self.strict:
            return
        hook = self.write_hook
        if hook is not None:
            event = WriteEvent(addr, size, self._last_bounds)
            hook("pre", event, self)
            self.space.write(addr, size, value, self.strict)
            hook("post", event, self)
        else:
            self.space.write(addr, size, value, self.strict)

    def _bytes(self, raw: int, length: int) -> bytes:
        addr = raw & ADDR_MASK
        if self.strict and length and not self.space.is_mapped(addr, length):
            raise SegmentationFault(addr)
        return self.space.read_bytes(addr, length)

    def _cstring(self, raw: int) -> bytes:
        addr = raw & ADDR_MASK
        out = bytearray()
        while True:
            byte = self.space.read(addr + len(out), 1, self.strict)
            if byte == 0:
                return bytes(out)
            out.append(byte)
            if len(out) > 1 << 20:
                raise _Trap("unterminated-string")

    # -- uninstrumented library ------------------------------------------

    def _intrinsic(self, name: str, args: list[int], where: str) -> int:
        if name == "print":
            self.output += self._bytes(args[0], _signed(args[1]) if _signed(args[1]) > 0 else 0)
        elif name == "puts":
            self.output += self._cstring(args[0]) + b"\n"
        elif name == "print_i64":
            self.output += f"{_signed(args[0])}\n".encode()
        elif name == "putchar":
            self.output.append(args[0] & 0xFF)
        elif name == "read_byte":
            if self.input_pos >= len(self.input):
                return U64  # -1
            self.input_pos += 1
            return self.input[self.input_pos - 1]
        elif name == "exit":
            raise _Exit(_signed(args[0]))
        elif name == "memcpy":
            length = _signed(args[2])
            if length > 0:
                data = self._bytes(args[1], length)
                self._raw_fill(args[0], data)
        elif name == "memset":
            length = _signed(args[2])
            if length > 0:
                self._raw_fill(args[0], bytes([args[1] & 0xFF]) * length)
        elif name == "strlen":
            return len(self._cstring(args[0]))
        elif name == "strchr":
            # the library hands back a plain address: no tag survives the boundary
            text = self._cstring(args[0])
            pos = text.find(bytes([args[1] & 0xFF]))
            return 0 if pos < 0 else (args[0] & ADDR_MASK) + pos
        return 0

    def _raw_fill(self, raw: int, data: bytes) -> None:
        addr = raw & ADDR_MASK
        if self.strict and not self.space.is_mapped(addr, len(data)):
            raise SegmentationFault(addr)
        self.space.write_bytes(addr, data)


def run(program: Program, cfg: PassConfig, input: bytes = b"", **kwargs) -> ExecOutcome:
    """Execute an instrumented program from ``main`` (after its constructors)."""
    return Executor(program, cfg, input, **kwargs).run()
