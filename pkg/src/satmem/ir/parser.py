"""Line-oriented parser for ``.sir`` text."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import IrError
from .nodes import (BINOPS, CHECK_KINDS, ICMP_PREDS, PTR, VALUE_TYPES, VOID, Block,
                    Const, External, Function, GlobalDef, Instr, Param, Program, Ref)


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str
    line: int | None = None
    col: int | None = None

    def __str__(self) -> str:
        where = f"{self.line}:{self.col}: " if self.line is not None else ""
        return f"{where}{self.kind}: {self.message}"


class _SyntaxError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(message)
        self.diagnostic = Diagnostic("syntax-error", message, line, col)


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<local>%[A-Za-z0-9_.$]+)
  | (?P<symbol>@[A-Za-z0-9_.$]+)
  | (?P<int>-?(?:0[xX][0-9A-Fa-f]+|\d+))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<arrow>->)
  | (?P<punct>[(),:=\[\]{}])
""", re.X)

_NAME = r"[A-Za-z0-9_.$]+"
_LABEL = re.compile(r"^([A-Za-z_][A-Za-z0-9_.]*):$")
_GLOBAL = re.compile(rf"^global\s+@({_NAME})\s+(\S+)(?:\s*=\s*\[([^\]]*)\])?$")
_CTOR = re.compile(rf"^ctor\s+@({_NAME})$")


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _tokenize(text: str, line: int, col0: int) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise _SyntaxError(f"unexpected character {text[pos]!r}", line, col0 + pos)
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), col0 + pos))
        pos = m.end()
    return toks


class _Cursor:
    def __init__(self, toks: list[_Tok], line: int, end_col: int):
        self.toks = toks
        self.i = 0
        self.line = line
        self.end_col = end_col

    def error(self, message: str) -> _SyntaxError:
        col = self.toks[self.i].col if self.i < len(self.toks) else self.end_col
        return _SyntaxError(message, self.line, col)

    def peek(self, offset: int = 0) -> _Tok | None:
        j = self.i + offset
        return self.toks[j] if j < len(self.toks) else None

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text == text

    def next(self, what: str = "token") -> _Tok:
        tok = self.peek()
        if tok is None:
            raise self.error(f"expected {what}, found end of line")
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.peek()
        if tok is None or tok.text != text:
            raise self.error(f"expected {text!r}")
        self.i += 1
        return tok

    def kind(self, kind: str, what: str) -> _Tok:
        tok = self.peek()
        if tok is None or tok.kind != kind:
            raise self.error(f"expected {what}")
        self.i += 1
        return tok

    def done(self) -> None:
        if self.i < len(self.toks):
            raise self.error(f"unexpected {self.toks[self.i].text!r}")

    # -- composite pieces --------------------------------------------------

    def operand(self) -> Const | Ref:
        tok = self.peek()
        if tok is not None and tok.kind == "local":
            self.i += 1
            return Ref(tok.text[1:])
        if tok is not None and tok.kind == "int":
            self.i += 1
            return Const(int(tok.text, 0))
        raise self.error("expected a value (%name or integer)")

    def integer(self, what: str = "integer") -> int:
        return int(self.kind("int", what).text, 0)

    def label(self) -> str:
        tok = self.peek()
        if tok is None or tok.kind != "ident":
            raise self.error("expected a block label")
        self.i += 1
        return tok.text

    def symbol(self) -> str:
        return self.kind("symbol", "@name").text[1:]

    def value_type(self, allow_void: bool = False) -> str:
        tok = self.kind("ident", "a type")
        allowed = VALUE_TYPES + ((VOID,) if allow_void else ())
        if tok.text not in allowed:
            self.i -= 1
            raise self.error(f"unknown type {tok.text!r}")
        return tok.text

    def call_args(self) -> tuple:
        self.expect("(")
        args = []
        if not self.at(")"):
            args.append(self.operand())
            while self.at(","):
                self.i += 1
                args.append(self.operand())
        self.expect(")")
        return tuple(args)


def _strip_comment(line: str) -> str:
    pos = line.find("#")
    return line if pos < 0 else line[:pos]


def parse(text: str, validate: bool = True) -> Program:
    """Parse ``.sir`` text; raises :class:`IrError` with located diagnostics.

    With ``validate`` (the default) the SSA, CFG and typing rules are checked
    as well and any violation is raised the same way.
    """
    try:
        program = _Parser(text).run()
    except _SyntaxError as exc:
        raise IrError([exc.diagnostic]) from None
    if validate:
        from .validate import validate as _validate
        diagnostics = _validate(program)
        if diagnostics:
            raise IrError(diagnostics)
    return program


class _Parser:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.program = Program()
        self.func: Function | None = None
        self.block: Block | None = None

    def run(self) -> Program:
        for lineno, raw in enumerate(self.lines, start=1):
            body = _strip_comment(raw)
            stripped = body.strip()
            if not stripped:
                continue
            col = body.index(stripped[0]) + 1
            if self.func is None:
                self._top_level(stripped, lineno, col)
            else:
                self._in_function(stripped, lineno, col)
        if self.func is not None:
            loc = self.func.loc or (len(self.lines), 1)
            raise _SyntaxError(f"function @{self.func.name} is missing its closing '}}'", *loc)
        return self.program

    # -- top level ---------------------------------------------------------

    def _top_level(self, text: str, line: int, col: int) -> None:
        if text.startswith("global"):
            m = _GLOBAL.match(text)
            if m is None:
                raise _SyntaxError("malformed global; expected 'global @name SIZE [= [hex bytes]]'", line, col)
            try:
                size = int(m.group(2), 0)
            except ValueError:
                raise _SyntaxError(f"bad global size {m.group(2)!r}", line, col) from None
            init = None
            if m.group(3) is not None:
                try:
                    init = bytes(int(b, 16) for b in m.group(3).split())
                except ValueError:
                    raise _SyntaxError("initializer must be hex bytes", line, col) from None
            self.program.globals.append(GlobalDef(m.group(1), size, init, loc=(line, col)))
            return
        if text.startswith("ctor"):
            m = _CTOR.match(text)
            if m is None:
                raise _SyntaxError("malformed ctor; expected 'ctor @name'", line, col)
            self.program.ctors.append(m.group(1))
            return
        cur = _Cursor(_tokenize(text, line, col), line, col + len(text))
        head = cur.next("declaration")
        if head.text == "extern":
            name = cur.symbol()
            cur.expect("(")
            params = []
            if not cur.at(")"):
                params.append(cur.value_type())
                while cur.at(","):
                    cur.next()
                    params.append(cur.value_type())
            cur.expect(")")
            ret = VOID
            if cur.at("->"):
                cur.next()
                ret = cur.value_type(allow_void=True)
            cur.done()
            self.program.externals.append(External(name, params, ret, loc=(line, col)))
        elif head.text == "func":
            name = cur.symbol()
            cur.expect("(")
            params = []
            if not cur.at(")"):
                params.append(self._param(cur))
                while cur.at(","):
                    cur.next()
                    params.append(self._param(cur))
            cur.expect(")")
            ret = VOID
            if cur.at("->"):
                cur.next()
                ret = cur.value_type(allow_void=True)
            cur.expect("{")
            cur.done()
            self.func = Function(name, params, ret, loc=(line, col))
            self.block = None
        else:
            raise _SyntaxError(f"unexpected {head.text!r} at top level", line, head.col)

    @staticmethod
    def _param(cur: _Cursor) -> Param:
        name = cur.kind("local", "%param").text[1:]
        cur.expect(":")
        ty = cur.value_type()
        byval = False
        if cur.at("byval"):
            cur.next()
            byval = True
            if ty != PTR:
                raise cur.error("byval applies to ptr parameters only")
        return Param(name, ty, byval)

    # -- function bodies ---------------------------------------------------

    def _in_function(self, text: str, line: int, col: int) -> None:
        assert self.func is not None
        if text == "}":
            self.program.functions.append(self.func)
            self.func = None
            self.block = None
            return
        m = _LABEL.match(text)
        if m is not None:
            self.block = Block(m.group(1), loc=(line, col))
            self.func.blocks.append(self.block)
            return
        if self.block is None:
            raise _SyntaxError("instruction outside of a block; add a label first", line, col)
        cur = _Cursor(_tokenize(text, line, col), line, col + len(text))
        instr = _instruction(cur)
        instr.loc = (line, col)
        self.block.instrs.append(instr)


_NO_DEST_OPS = ("store", "free", "br", "brcond", "ret", "shadowst")
_OPTIONAL_DEST_OPS = ("call", "callext")


def _instruction(cur: _Cursor) -> Instr:
    dest = None
    first = cur.peek()
    if first is not None and first.kind == "local" and (cur.peek(1) or _Tok("", "", 0)).text == "=":
        dest = cur.next().text[1:]
        cur.next()
    op_tok = cur.kind("ident", "an opcode")
    op = op_tok.text
    if dest is not None and op in _NO_DEST_OPS:
        raise _SyntaxError(f"'{op}' does not produce a value", cur.line, op_tok.col)
    if dest is None and op not in _NO_DEST_OPS + _OPTIONAL_DEST_OPS:
        raise _SyntaxError(f"'{op}' needs a result name", cur.line, op_tok.col)

    instr = Instr(op, dest)
    if op == "alloca":
        instr.size = cur.integer("allocation size")
    elif op == "malloc":
        instr.args = (cur.operand(),)
    elif op in ("free", "cast", "ptrtoint", "inttoptr", "strip"):
        instr.args = (cur.operand(),)
    elif op in ("gaddr", "shadowld"):
        instr.symbol = cur.symbol()
    elif op == "shadowst":
        instr.symbol = cur.symbol()
        cur.expect(",")
        instr.args = (cur.operand(),)
    elif op in ("ptradd", "retag"):
        a = cur.operand()
        cur.expect(",")
        instr.args = (a, cur.operand())
    elif op == "mktag":
        a = cur.operand()
        cur.expect(",")
        instr.args = (a,)
        instr.size = cur.integer("object size")
    elif op == "phi":
        instr.ty = cur.value_type()
        incoming = [_phi_arm(cur)]
        while cur.at(","):
            cur.next()
            incoming.append(_phi_arm(cur))
        instr.incoming = tuple(incoming)
    elif op == "load":
        instr.ty, instr.size = _access_type(cur)
        cur.expect(",")
        instr.args = (cur.operand(),)
    elif op == "store":
        instr.ty, instr.size = _access_type(cur)
        cur.expect(",")
        value = cur.operand()
        cur.expect(",")
        instr.args = (value, cur.operand())
    elif op == "icmp":
        pred = cur.kind("ident", "a comparison predicate")
        if pred.text not in ICMP_PREDS:
            raise _SyntaxError(f"unknown predicate {pred.text!r}", cur.line, pred.col)
        instr.pred = pred.text
        a = cur.operand()
        cur.expect(",")
        instr.args = (a, cur.operand())
    elif op in BINOPS:
        a = cur.operand()
        cur.expect(",")
        instr.args = (a, cur.operand())
    elif op in ("call", "callext"):
        instr.symbol = cur.symbol()
        instr.args = cur.call_args()
    elif op == "check":
        kind = cur.kind("ident", "check kind")
        if kind.text not in CHECK_KINDS:
            raise _SyntaxError(f"unknown check kind {kind.text!r}", cur.line, kind.col)
        instr.pred = kind.text
        instr.size = cur.integer("access size")
        cur.expect(",")
        p = cur.operand()
        cur.expect(",")
        instr.args = (p, cur.operand())
    elif op == "br":
        instr.targets = (cur.label(),)
    elif op == "brcond":
        c = cur.operand()
        cur.expect(",")
        t = cur.label()
        cur.expect(",")
        instr.args = (c,)
        instr.targets = (t, cur.label())
    elif op == "ret":
        if cur.peek() is not None:
            instr.args = (cur.operand(),)
    else:
        raise _SyntaxError(f"unknown opcode {op!r}", cur.line, op_tok.col)
    cur.done()
    return instr


def _phi_arm(cur: _Cursor) -> tuple:
    cur.expect("[")
    value = cur.operand()
    cur.expect(",")
    label = cur.label()
    cur.expect("]")
    return value, label


def _access_type(cur: _Cursor) -> tuple[str, int]:
    tok = cur.peek()
    if tok is not None and tok.text == PTR:
        cur.next()
        return PTR, 8
    return "i64", cur.integer("access size or 'ptr'")
