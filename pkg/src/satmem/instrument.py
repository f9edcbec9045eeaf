"""The instrumentation pass.

The pass rewrites a validated program so that every load and store goes
through a ``check`` against a *baseptr*: a register-only tagged pointer to the
base of the object the dereferenced pointer was derived from.  Baseptrs come
from

* the allocation result itself (malloc, alloca),
* a shadow global holding the tagged address of a program global,
* the origin of a ``ptradd``/``cast``,
* a phi over the incoming baseptrs,
* the value itself for parameters, loaded pointers, ``inttoptr`` results and
  call results (the tag travels inside the value).

Pointers leaving instrumented code (``callext`` arguments, ``byval``
parameters) are stripped of their tag; pointers passed to instrumented
functions are checked first so the callee can rebuild an accurate baseptr.
"""

from __future__ import annotations

import copy
import enum
import itertools
from collections import defaultdict
from dataclasses import dataclass, field

from .codec import CodecKind
from .errors import PassError
from .ir.nodes import PTR, Block, Function, GlobalDef, Instr, Param, Program, Ref

SHADOW_PREFIX = "__sma_"
CTOR_NAME = "__sma_ctor"


class Mode(enum.Enum):
    SATURATE = "saturate"
    FAILSTOP = "failstop"
    OBLIVIOUS = "oblivious"
    OFF = "off"


@dataclass(frozen=True)
class PassConfig:
    mode: Mode = Mode.SATURATE
    codec: CodecKind = CodecKind.BUDDY
    address_tagging: bool = False
    strip_on_ptrtoint: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "codec", CodecKind(self.codec))

    @property
    def checked(self) -> bool:
        return self.mode is not Mode.OFF


# -- baseptr expressions -----------------------------------------------------


@dataclass(frozen=True)
class SelfValue:
    name: str


@dataclass(frozen=True)
class ShadowGlobalLoad:
    global_name: str


@dataclass(frozen=True)
class Inherit:
    """Baseptr of another value; used for back edges through loop phis."""

    origin: str


@dataclass(frozen=True)
class PhiOfBases:
    phi: str
    block: str
    arms: tuple  # ((label, expr), ...)

    @property
    def uniform(self):
        """The single expression every arm agrees on, or None."""
        exprs = {e for _, e in self.arms}
        return exprs.pop() if len(exprs) == 1 else None


BaseptrExpr = SelfValue | ShadowGlobalLoad | Inherit | PhiOfBases


@dataclass(frozen=True)
class CheckPlan:
    instr_id: str
    pointer: str
    baseptr: BaseptrExpr
    access_size: int
    kind: str  # "load" | "store"


@dataclass
class Instrumented:
    program: Program
    plans: list[CheckPlan] = field(default_factory=list)


_SELF_BASED = ("malloc", "alloca", "load", "inttoptr", "call", "callext",
               "mktag", "retag", "check", "strip", "shadowld")


class BaseptrResolver:
    """Walks use-def chains of one function; results are memoized."""

    def __init__(self, fn: Function):
        self.fn = fn
        self.defs = fn.definitions()
        self.block_of = {i.dest: b.label for b in fn.blocks for i in b.instrs if i.dest is not None}
        self.memo: dict[str, BaseptrExpr] = {}
        self._active: set[str] = set()

    def resolve(self, name: str) -> BaseptrExpr:
        if name in self.memo:
            return self.memo[name]
        if name in self._active:
            return Inherit(name)
        d = self.defs.get(name)
        if d is None:
            raise PassError(f"%{name} is not defined in @{self.fn.name}")
        if isinstance(d, Param):
            if d.ty != PTR:
                raise PassError(f"%{name} is not a pointer")
            result: BaseptrExpr = SelfValue(name)
        elif d.op in _SELF_BASED:
            if d.op in ("load", "call", "callext") and not self._is_ptr(d):
                raise PassError(f"%{name} is not a pointer")
            result = SelfValue(name)
        elif d.op == "gaddr":
            result = ShadowGlobalLoad(d.symbol)
        elif d.op in ("ptradd", "cast"):
            origin = d.args[0]
            if not isinstance(origin, Ref):
                raise PassError(f"%{name} derives from a constant")
            result = self.resolve(origin.name)
        elif d.op == "phi" and d.ty == PTR:
            result = self._resolve_phi(d)
        else:
            raise PassError(f"%{name} ({d.op}) is not a pointer")
        self.memo[name] = result
        return result

    def _is_ptr(self, instr: Instr) -> bool:
        return instr.ty == PTR if instr.op == "load" else True

    def _resolve_phi(self, phi: Instr) -> PhiOfBases:
        self._active.add(phi.dest)
        try:
            arms = []
            for value, label in phi.incoming:
                if not isinstance(value, Ref):
                    raise PassError(f"phi %{phi.dest} has a constant pointer arm")
                arms.append((label, self.resolve(value.name)))
        finally:
            self._active.discard(phi.dest)
        others = {e for _, e in arms if e != Inherit(phi.dest)}
        if len(others) == 1:
            # a loop that only re-derives from one origin: the fixed point is that origin
            only = others.pop()
            arms = [(label, only) for label, _ in arms]
        return PhiOfBases(phi.dest, self.block_of[phi.dest], tuple(arms))


def resolve_baseptr(name: str, fn: Function) -> BaseptrExpr:
    return BaseptrResolver(fn).resolve(name)


# -- rewriting helpers ------------------------------------------------------


class _Rewriter:
    """Per-function state: fresh names, baseptr materialization, insertions."""

    def __init__(self, fn: Function):
        self.fn = fn
        self.resolver = BaseptrResolver(fn)
        taken = set(fn.definitions())
        self._names = (f"__t{n}" for n in itertools.count() if f"__t{n}" not in taken)
        self.entry_head: list[Instr] = []
        self.phi_head: dict[str, list[Instr]] = defaultdict(list)
        self._cache: dict[object, Ref] = {}

    def fresh(self) -> str:
        return next(self._names)

    def baseptr(self, pointer: str) -> tuple[BaseptrExpr, Ref]:
        expr = self.resolver.resolve(pointer)
        return expr, self.materialize(expr)

    def materialize(self, expr: BaseptrExpr) -> Ref:
        if isinstance(expr, SelfValue):
            return Ref(expr.name)
        if isinstance(expr, Inherit):
            return self.materialize(self.resolver.resolve(expr.origin))
        if isinstance(expr, ShadowGlobalLoad):
            key = ("shadow", expr.global_name)
            if key not in self._cache:
                ref = self._cache[key] = Ref(self.fresh())
                self.entry_head.append(Instr("shadowld", ref.name, symbol=SHADOW_PREFIX + expr.global_name))
            return self._cache[key]
        uniform = expr.uniform
        if uniform is not None:
            return self.materialize(uniform)
        key = ("phi", expr.phi)
        if key not in self._cache:
            ref = self._cache[key] = Ref(self.fresh())
            arms = tuple((self.materialize(e), label) for label, e in expr.arms)
            self.phi_head[expr.block].append(Instr("phi", ref.name, ty=PTR, incoming=arms))
        return self._cache[key]

    def finish(self) -> None:
        for block in self.fn.blocks:
            extra = list(self.phi_head.get(block.label, ()))
            if block is self.fn.blocks[0]:
                extra += self.entry_head
            if extra:
                n = len(block.phis)
                block.instrs[n:n] = extra


def _rewrite_functions(program: Program, body) -> list:
    results = []
    for fn in program.functions:
        if fn.name == CTOR_NAME:
            continue
        rw = _Rewriter(fn)
        for block in fn.blocks:
            out: list[Instr] = []
            for idx, instr in enumerate(block.instrs):
                results += body(rw, block, idx, instr, out) or []
                out.append(instr)
            block.instrs = out
        rw.finish()
    return results


# -- pass steps -------------------------------------------------------------


def add_shadow_globals(program: Program) -> Program:
    """Add one hidden pointer-sized global per program global and a constructor
    that stores each global's tagged base address into it."""
    p = copy.deepcopy(program)
    if CTOR_NAME in p.ctors:
        return p
    originals = [g for g in p.globals if not g.name.startswith(SHADOW_PREFIX)]
    ctor = Function(CTOR_NAME, [], blocks=[Block("entry")])
    body = ctor.blocks[0].instrs
    for n, g in enumerate(originals):
        p.globals.append(GlobalDef(SHADOW_PREFIX + g.name, 8))
        body.append(Instr("gaddr", f"a{n}", symbol=g.name))
        body.append(Instr("mktag", f"t{n}", args=(Ref(f"a{n}"),), size=g.size))
        body.append(Instr("shadowst", symbol=SHADOW_PREFIX + g.name, args=(Ref(f"t{n}"),)))
    body.append(Instr("ret"))
    p.functions.insert(0, ctor)
    p.ctors.insert(0, CTOR_NAME)
    return p


def integer_use_policy(program: Program, cfg: PassConfig) -> Program:
    """Strip tags where pointers become integers or are compared."""
    p = copy.deepcopy(program)
    if not cfg.checked:
        return p
    types = _pointer_names(p)

    def body(rw: _Rewriter, block, idx, instr: Instr, out: list) -> None:
        if instr.op == "ptrtoint" and cfg.strip_on_ptrtoint:
            instr.args = (_stripped(rw, instr.args[0], out),)
        elif instr.op == "icmp":
            ptrs = types[rw.fn.name]
            if all(isinstance(a, Ref) and a.name in ptrs for a in instr.args):
                instr.args = tuple(_stripped(rw, a, out) for a in instr.args)

    _rewrite_functions(p, body)
    return p


def apply_boundary_rules(program: Program, cfg: PassConfig = PassConfig()) -> Program:
    """Strip pointers handed to externals and ``byval`` params; check pointers
    handed to instrumented functions.

    Pointers that leave the function's SSA values (stored to memory or
    returned) are re-tagged from their baseptr, so a global's address, which
    carries no tag of its own, keeps its bounds after a round trip through
    memory.
    """
    p = copy.deepcopy(program)
    if not cfg.checked:
        return p
    ptrs_by_fn = _pointer_names(p)

    def body(rw: _Rewriter, block, idx, instr: Instr, out: list) -> None:
        ptrs = ptrs_by_fn[rw.fn.name]
        if instr.op == "callext":
            instr.args = tuple(_stripped(rw, a, out) if _is_ptr(a, ptrs) else a for a in instr.args)
        elif instr.op == "store" and instr.ty == PTR and _is_ptr(instr.args[0], ptrs):
            instr.args = (_retagged(rw, instr.args[0], out), instr.args[1])
        elif instr.op == "ret" and instr.args and _is_ptr(instr.args[0], ptrs):
            instr.args = (_retagged(rw, instr.args[0], out),)
        elif instr.op == "call":
            callee = p.function(instr.symbol)
            args = []
            for param, arg in zip(callee.params, instr.args):
                if _is_ptr(arg, ptrs):
                    _, bp = rw.baseptr(arg.name)
                    checked = Ref(rw.fresh())
                    out.append(Instr("check", checked.name, args=(arg, bp), size=1, pred="arg"))
                    arg = checked
                    if param.byval and not cfg.address_tagging:
                        arg = _stripped(rw, arg, out)
                args.append(arg)
            instr.args = tuple(args)

    _rewrite_functions(p, body)
    return p


def insert_checks(program: Program, cfg: PassConfig) -> tuple[Program, list[CheckPlan]]:
    """Guard every load and store; returns the rewritten program and one plan
    per guarded access (no plans when ``cfg.mode`` is off)."""
    p = copy.deepcopy(program)

    def body(rw: _Rewriter, block: Block, idx: int, instr: Instr, out: list):
        if instr.op not in ("load", "store"):
            return None
        slot = 0 if instr.op == "load" else 1
        pointer = instr.args[slot]
        address: Ref = pointer
        plans = []
        if cfg.checked:
            expr, bp = rw.baseptr(pointer.name)
            address = Ref(rw.fresh())
            out.append(Instr("check", address.name, args=(pointer, bp), size=instr.size, pred=instr.op))
            plans.append(CheckPlan(f"@{rw.fn.name}:{block.label}:{idx}", pointer.name, expr,
                                   instr.size, instr.op))
        if not cfg.address_tagging:
            address = _stripped(rw, address, out)
        args = list(instr.args)
        args[slot] = address
        instr.args = tuple(args)
        return plans

    plans = _rewrite_functions(p, body)
    return p, plans


def instrument(program: Program, cfg: PassConfig) -> Instrumented:
    """Run the whole pass for ``cfg``.

    In off mode only dereference strips are inserted, giving an unprotected
    baseline with the same allocation layout.
    """
    p = program
    if cfg.checked:
        p = add_shadow_globals(p)
        p = integer_use_policy(p, cfg)
        p = apply_boundary_rules(p, cfg)
    p, plans = insert_checks(p, cfg)
    return Instrumented(p, plans)


# -- static verification of pass output ------------------------------------


def verify_instrumented(program: Program, cfg: PassConfig) -> list[str]:
    """Problems found by scanning instrumented IR.

    Every load/store must take its address from a check (through a strip
    unless address tagging is on), and no pass-made baseptr may be stored to
    memory.
    """
    problems = []
    for fn in program.functions:
        if fn.name == CTOR_NAME:
            continue
        defs = fn.definitions()
        baseptrs = set()
        for block in fn.blocks:
            for instr in block.instrs:
                if instr.op == "check" and isinstance(instr.args[1], Ref):
                    d = defs.get(instr.args[1].name)
                    if isinstance(d, Instr) and d.op in ("shadowld", "phi") and d.dest.startswith("__"):
                        baseptrs.add(d.dest)
        for block in fn.blocks:
            for idx, instr in enumerate(block.instrs):
                where = f"@{fn.name}:{block.label}:{idx}"
                if instr.op == "store" and isinstance(instr.args[0], Ref) and instr.args[0].name in baseptrs:
                    problems.append(f"{where}: baseptr %{instr.args[0].name} stored to memory")
                if instr.op not in ("load", "store"):
                    continue
                addr = instr.args[0 if instr.op == "load" else 1]
                d = defs.get(addr.name) if isinstance(addr, Ref) else None
                if not cfg.address_tagging:
                    if not (isinstance(d, Instr) and d.op == "strip"):
                        problems.append(f"{where}: dereference of an unstripped address")
                        continue
                    inner = d.args[0]
                    d = defs.get(inner.name) if isinstance(inner, Ref) else None
                if cfg.checked:
                    if not (isinstance(d, Instr) and d.op == "check" and d.pred == instr.op
                            and d.size == instr.size):
                        problems.append(f"{where}: {instr.op} is not guarded by a matching check")
    return problems


# -- small helpers -----------------------------------------------------------


def _stripped(rw: _Rewriter, operand, out: list[Instr]):
    if not isinstance(operand, Ref):
        return operand
    name = rw.fresh()
    out.append(Instr("strip", name, args=(operand,)))
    return Ref(name)


def _retagged(rw: _Rewriter, operand: Ref, out: list[Instr]) -> Ref:
    expr, bp = rw.baseptr(operand.name)
    if expr == SelfValue(operand.name):
        return operand
    name = rw.fresh()
    out.append(Instr("retag", name, args=(operand, bp)))
    return Ref(name)


def _is_ptr(operand, ptrs: set[str]) -> bool:
    return isinstance(operand, Ref) and operand.name in ptrs


def _pointer_names(program: Program) -> dict[str, set[str]]:
    from .ir.nodes import value_type
    out = {}
    for fn in program.functions:
        names = {p.name for p in fn.params if p.ty == PTR}
        for block in fn.blocks:
            for instr in block.instrs:
                if instr.dest is not None and value_type(instr, program) == PTR:
                    names.add(instr.dest)
        out[fn.name] = names
    return out
