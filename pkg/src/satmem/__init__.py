"""Saturating bounds enforcement for a small SSA IR.

Out-of-bounds loads and stores are redirected to the boundary of the object
their pointer was derived from instead of stopping the program.  The package
holds the pointer tag codec, a padded allocator, the instrumentation pass, an
interpreter and a corpus harness.
"""

from .codec import (Bounds, CodecKind, Verdict, decode, make_tagged, round_size, saturate,
                    strip)
from .harness import compile_and_run, run_corpus
from .instrument import Mode, PassConfig, instrument
from .interp import ExecOutcome, ExecStats, Exited, Segfault, Trapped, run
from .ir import parse, pretty_print, validate
from .memory import AddressSpace, Region

__version__ = "0.1.0"

__all__ = [
    "AddressSpace", "Bounds", "CodecKind", "ExecOutcome", "ExecStats", "Exited", "Mode",
    "PassConfig", "Region", "Segfault", "Trapped", "Verdict", "compile_and_run", "decode",
    "instrument", "make_tagged", "parse", "pretty_print", "round_size", "run", "run_corpus",
    "saturate", "strip", "validate",
]
