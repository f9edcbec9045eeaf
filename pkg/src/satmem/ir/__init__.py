"""Textual SSA intermediate representation: data model, parser, printer, validator."""

from .nodes import (BINOPS, I64, PTR, VOID, Block, Const, External, Function, GlobalDef,
                    Instr, Param, Program, Ref, value_type)
from .parser import Diagnostic, parse
from .printer import format_instr, pretty_print
from .validate import dominators, reachable_blocks, validate

__all__ = [
    "BINOPS", "I64", "PTR", "VOID", "Block", "Const", "Diagnostic", "External", "Function",
    "GlobalDef", "Instr", "Param", "Program", "Ref", "dominators", "format_instr", "parse",
    "pretty_print", "reachable_blocks", "validate", "value_type",
]
