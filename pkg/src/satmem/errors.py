"""Exception hierarchy shared by the codec, the store, the IR tools and the runtime."""

from __future__ import annotations


class SatmemError(Exception):
    """Base class for every error raised by this package."""


class SizeError(SatmemError, ValueError):
    """Requested allocation size is zero or too large to encode."""


class AlignmentError(SatmemError, ValueError):
    """Base address does not satisfy the codec's alignment rule."""


class CheckConfigError(SatmemError, ValueError):
    """Access size is not 1, 2, 4 or 8, or is larger than the object."""


class OutOfMemory(SatmemError):
    """A region of the simulated address space has no room left."""


class FreeError(SatmemError):
    """Release of an unknown or already released object."""


class SegmentationFault(SatmemError):
    """Access to an address that no allocation ever mapped."""

    def __init__(self, addr: int):
        super().__init__(f"segmentation fault at {addr:#x}")
        self.addr = addr


class IrError(SatmemError):
    """Parsing or validation failed; carries the full diagnostic list."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class PassError(SatmemError):
    """The instrumentation pass met IR it cannot handle."""


class LinkError(SatmemError):
    """An external is declared that the runtime cannot bind."""
