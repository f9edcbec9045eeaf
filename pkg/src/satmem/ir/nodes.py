"""Data model for the ``.sir`` intermediate representation."""

from __future__ import annotations

from dataclasses import dataclass, field

I64 = "i64"
PTR = "ptr"
VOID = "void"
VALUE_TYPES = (I64, PTR)

BINOPS = ("add", "sub", "mul", "sdiv", "srem", "udiv", "urem",
          "and", "or", "xor", "shl", "lshr", "ashr")
ICMP_PREDS = ("eq", "ne", "slt", "sle", "sgt", "sge", "ult", "ule", "ugt", "uge")
CHECK_KINDS = ("load", "store", "arg")
TERMINATORS = ("br", "brcond", "ret")

# opcodes only the instrumentation pass emits
PASS_OPS = ("mktag", "retag", "strip", "check", "shadowld", "shadowst")


@dataclass(frozen=True)
class Const:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Ref:
    name: str  # without the leading '%'

    def __str__(self) -> str:
        return f"%{self.name}"


Operand = Const | Ref


@dataclass
class Instr:
    """One instruction. Which fields are meaningful depends on ``op``.

    ``size`` is the access size of load/store/check, the byte count of alloca
    and mktag; ``ty`` is the value type of load/store/phi; ``symbol`` names the
    callee or global; ``pred`` holds the icmp predicate or check kind.
    """

    op: str
    dest: str | None = None
    args: tuple[Operand, ...] = ()
    size: int | None = None
    ty: str | None = None
    symbol: str | None = None
    pred: str | None = None
    incoming: tuple[tuple[Operand, str], ...] = ()
    targets: tuple[str, ...] = ()
    loc: tuple[int, int] | None = field(default=None, compare=False, repr=False)

    @property
    def is_terminator(self) -> bool:
        return self.op in TERMINATORS

    def uses(self) -> list[str]:
        names = [a.name for a in self.args if isinstance(a, Ref)]
        names += [v.name for v, _ in self.incoming if isinstance(v, Ref)]
        return names


@dataclass
class Block:
    label: str
    instrs: list[Instr] = field(default_factory=list)
    loc: tuple[int, int] | None = field(default=None, compare=False, repr=False)

    @property
    def phis(self) -> list[Instr]:
        return [i for i in self.instrs if i.op == "phi"]

    @property
    def terminator(self) -> Instr | None:
        if self.instrs and self.instrs[-1].is_terminator:
            return self.instrs[-1]
        return None

    def successors(self) -> tuple[str, ...]:
        term = self.terminator
        return term.targets if term is not None else ()


@dataclass
class Param:
    name: str
    ty: str
    byval: bool = False


@dataclass
class Function:
    name: str
    params: list[Param] = field(default_factory=list)
    ret: str = VOID
    blocks: list[Block] = field(default_factory=list)
    loc: tuple[int, int] | None = field(default=None, compare=False, repr=False)

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def block_map(self) -> dict[str, Block]:
        return {b.label: b for b in self.blocks}

    def predecessors(self) -> dict[str, list[str]]:
        preds: dict[str, list[str]] = {b.label: [] for b in self.blocks}
        for b in self.blocks:
            for succ in b.successors():
                if succ in preds and b.label not in preds[succ]:
                    preds[succ].append(b.label)
        return preds

    def definitions(self) -> dict[str, Instr | Param]:
        defs: dict[str, Instr | Param] = {p.name: p for p in self.params}
        for b in self.blocks:
            for i in b.instrs:
                if i.dest is not None:
                    defs[i.dest] = i
        return defs


@dataclass
class GlobalDef:
    name: str
    size: int
    init: bytes | None = None
    loc: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass
class External:
    name: str
    params: list[str] = field(default_factory=list)
    ret: str = VOID
    loc: tuple[int, int] | None = field(default=None, compare=False, repr=False)


@dataclass
class Program:
    globals: list[GlobalDef] = field(default_factory=list)
    externals: list[External] = field(default_factory=list)
    functions: list[Function] = field(default_factory=list)
    ctors: list[str] = field(default_factory=list)

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def has_function(self, name: str) -> bool:
        return any(f.name == name for f in self.functions)

    def external(self, name: str) -> External:
        for e in self.externals:
            if e.name == name:
                return e
        raise KeyError(name)

    def global_def(self, name: str) -> GlobalDef:
        for g in self.globals:
            if g.name == name:
                return g
        raise KeyError(name)


def value_type(instr: Instr, program: Program | None = None) -> str | None:
    """Type of the value ``instr`` defines, or None if it defines nothing."""
    op = instr.op
    if op in ("alloca", "malloc", "gaddr", "ptradd", "cast", "inttoptr",
              "mktag", "retag", "strip", "check", "shadowld"):
        return PTR
    if op in ("ptrtoint", "icmp") or op in BINOPS:
        return I64
    if op in ("load", "phi"):
        return instr.ty
    if op in ("call", "callext") and program is not None:
        try:
            target = program.function(instr.symbol) if op == "call" else program.external(instr.symbol)
        except KeyError:
            return None
        return target.ret if target.ret != VOID else None
    return None
