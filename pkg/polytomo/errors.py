"""
Exception hierarchy shared by all polytomo modules
"""
from typing import Optional


class PolytomoError(Exception):
    """Base class for all library errors"""


class ValidationError(PolytomoError, ValueError):
    """An operator or data object violates its invariants"""


class AllocationError(PolytomoError, ValueError):
    """Invalid epsilon allocation or unreachable confidence target"""


class ProtocolError(PolytomoError, ValueError):
    """Dataset and protocol shapes do not agree, or a setting has no shots"""


class UnboundedRegionError(PolytomoError):
    """The confidence polyhedron is unbounded (protocol not informationally complete)"""


class EmptyRegionError(PolytomoError):
    """The confidence polyhedron has no feasible point"""


class LpNumericalError(PolytomoError):
    """The LP solver failed numerically; no result is reported"""


class DatasetFormatError(PolytomoError, ValueError):
    """Malformed dataset, candidate, functional or experiment file"""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field={field}")
        if line is not None:
            where.append(f"line={line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
