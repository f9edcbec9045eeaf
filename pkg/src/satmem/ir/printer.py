"""Canonical text form; ``parse(pretty_print(p)) == p`` for every valid program."""

from __future__ import annotations

from .nodes import BINOPS, PTR, VOID, Function, Instr, Program


def _ret_suffix(ret: str) -> str:
    return "" if ret == VOID else f" -> {ret}"


def _access(instr: Instr) -> str:
    return PTR if instr.ty == PTR else str(instr.size)


def format_instr(instr: Instr) -> str:
    op = instr.op
    a = [str(x) for x in instr.args]
    if op == "alloca":
        body = f"alloca {instr.size}"
    elif op in ("malloc", "free", "cast", "ptrtoint", "inttoptr", "strip"):
        body = f"{op} {a[0]}"
    elif op in ("gaddr", "shadowld"):
        body = f"{op} @{instr.symbol}"
    elif op == "shadowst":
        body = f"shadowst @{instr.symbol}, {a[0]}"
    elif op in ("ptradd", "retag") or op in BINOPS:
        body = f"{op} {a[0]}, {a[1]}"
    elif op == "mktag":
        body = f"mktag {a[0]}, {instr.size}"
    elif op == "phi":
        arms = ", ".join(f"[{v}, {label}]" for v, label in instr.incoming)
        body = f"phi {instr.ty} {arms}"
    elif op == "load":
        body = f"load {_access(instr)}, {a[0]}"
    elif op == "store":
        body = f"store {_access(instr)}, {a[0]}, {a[1]}"
    elif op == "icmp":
        body = f"icmp {instr.pred} {a[0]}, {a[1]}"
    elif op in ("call", "callext"):
        body = f"{op} @{instr.symbol}({', '.join(a)})"
    elif op == "check":
        body = f"check {instr.pred} {instr.size}, {a[0]}, {a[1]}"
    elif op == "br":
        body = f"br {instr.targets[0]}"
    elif op == "brcond":
        body = f"brcond {a[0]}, {instr.targets[0]}, {instr.targets[1]}"
    elif op == "ret":
        body = f"ret {a[0]}" if a else "ret"
    else:
        raise ValueError(f"cannot print opcode {op!r}")
    return f"%{instr.dest} = {body}" if instr.dest is not None else body


def _format_function(fn: Function) -> list[str]:
    params = []
    for p in fn.params:
        params.append(f"%{p.name}: {p.ty}" + (" byval" if p.byval else ""))
    lines = [f"func @{fn.name}({', '.join(params)}){_ret_suffix(fn.ret)} {{"]
    if not fn.blocks:
        # an empty body is invalid; print a placeholder so the text stays parseable
        lines += ["entry:", "  ret"]
    for block in fn.blocks:
        lines.append(f"{block.label}:")
        lines += [f"  {format_instr(i)}" for i in block.instrs]
    lines.append("}")
    return lines


def pretty_print(program: Program) -> str:
    lines: list[str] = []
    for ext in program.externals:
        lines.append(f"extern @{ext.name}({', '.join(ext.params)}){_ret_suffix(ext.ret)}")
    for g in program.globals:
        line = f"global @{g.name} {g.size}"
        if g.init is not None:
            line += " = [" + " ".join(f"{b:02x}" for b in g.init) + "]"
        lines.append(line)
    for name in program.ctors:
        lines.append(f"ctor @{name}")
    for fn in program.functions:
        if lines:
            lines.append("")
        lines += _format_function(fn)
    return "\n".join(lines) + "\n"
