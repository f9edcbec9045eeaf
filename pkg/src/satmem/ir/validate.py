"""SSA, control-flow and type checks for parsed programs."""

from __future__ import annotations

from .nodes import (BINOPS, I64, PTR, VOID, Const, Function, Instr, Param, Program, Ref,
                    value_type)
from .parser import Diagnostic

ACCESS_SIZES = (1, 2, 4, 8)


def _diag(kind: str, message: str, loc) -> Diagnostic:
    line, col = loc if loc is not None else (None, None)
    return Diagnostic(kind, message, line, col)


def reachable_blocks(fn: Function) -> list[str]:
    if not fn.blocks:
        return []
    blocks = fn.block_map()
    seen = [fn.blocks[0].label]
    stack = [fn.blocks[0].label]
    while stack:
        for succ in blocks[stack.pop()].successors():
            if succ in blocks and succ not in seen:
                seen.append(succ)
                stack.append(succ)
    return seen


def dominators(fn: Function) -> dict[str, set[str]]:
    """Dominator sets of the reachable blocks (iterative data-flow)."""
    order = reachable_blocks(fn)
    if not order:
        return {}
    preds = fn.predecessors()
    entry = order[0]
    every = set(order)
    dom = {label: set(every) for label in order}
    dom[entry] = {entry}
    changed = True
    while changed:
        changed = False
        for label in order[1:]:
            incoming = [dom[p] for p in preds[label] if p in dom]
            new = set.intersection(*incoming) if incoming else set()
            new = new | {label}
            if new != dom[label]:
                dom[label] = new
                changed = True
    return dom


def validate(program: Program) -> list[Diagnostic]:
    """Return every violated invariant; an empty list means the program is valid."""
    diags: list[Diagnostic] = []
    seen: dict[str, str] = {}
    for kind, items in (("global", program.globals), ("extern", program.externals),
                        ("function", program.functions)):
        for item in items:
            if item.name in seen:
                diags.append(_diag("duplicate-definition",
                                   f"@{item.name} already defined as a {seen[item.name]}", item.loc))
            else:
                seen[item.name] = kind
    for g in program.globals:
        if g.size < 1:
            diags.append(_diag("type-error", f"global @{g.name} has size {g.size}", g.loc))
        elif g.init is not None and len(g.init) > g.size:
            diags.append(_diag("type-error", f"initializer of @{g.name} is larger than the global", g.loc))

    mains = [f for f in program.functions if f.name == "main"]
    if len(mains) != 1:
        diags.append(_diag("missing-main" if not mains else "duplicate-definition",
                           f"expected exactly one @main, found {len(mains)}", None))
    elif mains[0].params:
        diags.append(_diag("type-error", "@main takes no parameters", mains[0].loc))
    for name in program.ctors:
        if not program.has_function(name):
            diags.append(_diag("undefined-symbol", f"ctor @{name} is not a function", None))
        elif program.function(name).params:
            diags.append(_diag("type-error", f"ctor @{name} takes no parameters", None))

    for fn in program.functions:
        diags += _validate_function(program, fn)
    return diags


def _validate_function(program: Program, fn: Function) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    if not fn.blocks:
        return [_diag("empty-function", f"@{fn.name} has no blocks", fn.loc)]

    labels: set[str] = set()
    for block in fn.blocks:
        if block.label in labels:
            diags.append(_diag("duplicate-definition", f"block {block.label} defined twice", block.loc))
        labels.add(block.label)

    # structure: terminators, phi placement, branch targets
    for block in fn.blocks:
        if block.terminator is None:
            loc = block.instrs[-1].loc if block.instrs else block.loc
            diags.append(_diag("missing-terminator", f"block {block.label} does not end in br/brcond/ret", loc))
        seen_non_phi = False
        for idx, instr in enumerate(block.instrs):
            if instr.is_terminator and idx != len(block.instrs) - 1:
                diags.append(_diag("misplaced-terminator", f"{instr.op} in the middle of {block.label}", instr.loc))
            if instr.op == "phi":
                if seen_non_phi:
                    diags.append(_diag("misplaced-phi", "phi after a non-phi instruction", instr.loc))
            else:
                seen_non_phi = True
            for target in instr.targets:
                if target not in labels:
                    diags.append(_diag("undefined-block", f"branch to unknown block {target}", instr.loc))

    # SSA single definition
    types: dict[str, str] = {}
    where: dict[str, tuple[str, int]] = {}
    for p in fn.params:
        if p.name in types:
            diags.append(_diag("duplicate-definition", f"%{p.name} defined twice", fn.loc))
        types[p.name] = p.ty
        where[p.name] = (fn.blocks[0].label, -1)
    for block in fn.blocks:
        for idx, instr in enumerate(block.instrs):
            if instr.dest is None:
                continue
            if instr.dest in types:
                diags.append(_diag("duplicate-definition", f"%{instr.dest} defined twice", instr.loc))
                continue
            ty = value_type(instr, program)
            types[instr.dest] = ty if ty is not None else "?"
            where[instr.dest] = (block.label, idx)

    if diags:
        return diags

    reachable = set(reachable_blocks(fn))
    preds = fn.predecessors()
    dom = dominators(fn)

    def dominates_use(name: str, block: str, idx: int) -> bool:
        def_block, def_idx = where[name]
        if def_block == block:
            return def_idx < idx
        return def_block in dom.get(block, ())

    for block in fn.blocks:
        for idx, instr in enumerate(block.instrs):
            if instr.op == "phi":
                if block.label not in reachable:
                    diags.append(_diag("unreachable-phi", f"phi in unreachable block {block.label}", instr.loc))
                    continue
                arm_labels = [label for _, label in instr.incoming]
                for label in arm_labels:
                    if label not in preds[block.label]:
                        diags.append(_diag("phi-not-predecessor",
                                           f"{label} is not a predecessor of {block.label}", instr.loc))
                for p in preds[block.label]:
                    if p in reachable and arm_labels.count(p) != 1:
                        diags.append(_diag("phi-missing-arm",
                                           f"phi needs exactly one arm for predecessor {p}", instr.loc))
                for value, label in instr.incoming:
                    if isinstance(value, Ref):
                        if value.name not in types:
                            diags.append(_diag("undefined-value", f"%{value.name} is never defined", instr.loc))
                        elif label in reachable and label in labels:
                            pred_len = len(fn.block(label).instrs)
                            if not dominates_use(value.name, label, pred_len):
                                diags.append(_diag("use-before-def",
                                                   f"%{value.name} does not dominate the end of {label}", instr.loc))
            else:
                for name in instr.uses():
                    if name not in types:
                        diags.append(_diag("undefined-value", f"%{name} is never defined", instr.loc))
                    elif block.label in reachable and not dominates_use(name, block.label, idx):
                        diags.append(_diag("use-before-def", f"%{name} used before its definition", instr.loc))
            diags += _check_types(program, fn, instr, types)
    return diags


def _operand_type(op, types: dict[str, str]) -> str | None:
    if isinstance(op, Const):
        return I64
    return types.get(op.name)


def _check_types(program: Program, fn: Function, instr: Instr, types: dict[str, str]) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def want(index: int, expected: str, what: str) -> None:
        if index >= len(instr.args):
            diags.append(_diag("type-error", f"{instr.op} is missing its {what}", instr.loc))
            return
        actual = _operand_type(instr.args[index], types)
        if actual is not None and actual != expected:
            diags.append(_diag("type-error",
                               f"{instr.op} {what} must be {expected}, got {actual} ({instr.args[index]})",
                               instr.loc))

    op = instr.op
    if op == "alloca":
        if instr.size is None or instr.size < 1:
            diags.append(_diag("type-error", "alloca size must be positive", instr.loc))
    elif op == "malloc":
        want(0, I64, "size")
    elif op in ("free", "cast", "ptrtoint", "strip"):
        want(0, PTR, "pointer operand")
    elif op == "inttoptr":
        want(0, I64, "integer operand")
    elif op in ("gaddr", "shadowld", "shadowst"):
        try:
            program.global_def(instr.symbol)
        except KeyError:
            diags.append(_diag("undefined-symbol", f"@{instr.symbol} is not a global", instr.loc))
        if op == "shadowst":
            want(0, PTR, "value")
    elif op == "ptradd":
        want(0, PTR, "pointer operand")
        want(1, I64, "offset")
    elif op == "retag":
        want(0, PTR, "pointer operand")
        want(1, PTR, "base pointer")
    elif op == "mktag":
        want(0, PTR, "pointer operand")
        if instr.size is None or instr.size < 1:
            diags.append(_diag("type-error", "mktag size must be positive", instr.loc))
    elif op == "phi":
        for value, _ in instr.incoming:
            actual = _operand_type(value, types)
            if actual is not None and actual != instr.ty:
                diags.append(_diag("type-error", f"phi {instr.ty} arm {value} has type {actual}", instr.loc))
    elif op in ("load", "store", "check"):
        if instr.size not in ACCESS_SIZES:
            diags.append(_diag("type-error", f"{op} size must be 1, 2, 4 or 8", instr.loc))
        if op == "load":
            want(0, PTR, "address")
        elif op == "store":
            want(0, instr.ty, "value")
            want(1, PTR, "address")
        else:
            want(0, PTR, "pointer operand")
            want(1, PTR, "base pointer")
    elif op == "icmp":
        a, b = (_operand_type(x, types) for x in instr.args)
        if a is not None and b is not None and a != b:
            diags.append(_diag("type-error", f"icmp compares {a} with {b}", instr.loc))
    elif op in BINOPS:
        want(0, I64, "left operand")
        want(1, I64, "right operand")
    elif op in ("call", "callext"):
        diags += _check_call(program, instr, types)
    elif op == "brcond":
        want(0, I64, "condition")
    elif op == "ret":
        if fn.ret == VOID:
            if instr.args:
                diags.append(_diag("type-error", f"@{fn.name} returns void", instr.loc))
        elif not instr.args:
            diags.append(_diag("type-error", f"@{fn.name} must return {fn.ret}", instr.loc))
        else:
            want(0, fn.ret, "return value")
    return diags


def _check_call(program: Program, instr: Instr, types: dict[str, str]) -> list[Diagnostic]:
    diags = []
    try:
        if instr.op == "call":
            target = program.function(instr.symbol)
            params = [p.ty for p in target.params]
        else:
            target = program.external(instr.symbol)
            params = list(target.params)
    except KeyError:
        kind = "function" if instr.op == "call" else "extern"
        return [_diag("undefined-symbol", f"@{instr.symbol} is not a declared {kind}", instr.loc)]
    if len(params) != len(instr.args):
        diags.append(_diag("type-error", f"@{instr.symbol} takes {len(params)} arguments, got {len(instr.args)}",
                           instr.loc))
    for i, (ty, arg) in enumerate(zip(params, instr.args)):
        actual = _operand_type(arg, types)
        if actual is not None and actual != ty:
            diags.append(_diag("type-error", f"argument {i} of @{instr.symbol} must be {ty}, got {actual}",
                               instr.loc))
    if instr.dest is not None and target.ret == VOID:
        diags.append(_diag("type-error", f"@{instr.symbol} returns nothing", instr.loc))
    return diags


def param_of(fn: Function, name: str) -> Param | None:
    for p in fn.params:
        if p.name == name:
            return p
    return None
