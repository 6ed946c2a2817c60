"""
Diagnostics and errors shared by every model-forge module.

Findings are reported as ``Diagnostic`` values; operations that cannot
complete raise ``ForgeError``. Both carry a code from the closed set ``CODES``.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

CODES = frozenset({
    # store
    'E-PARSE', 'E-DUP-ID', 'E-DANGLING-LINK', 'E-KIND', 'E-SELF-LINK', 'E-IO',
    # metamodel / validation
    'E-TRACE-KIND', 'E-INHERIT-KIND', 'E-CONNECT-LAYER', 'E-COMPOSE-LAYER',
    'E-TRACE-MISSING', 'E-CYCLE', 'E-ABSTRACT-BEHAVIOR', 'E-NOT-SYSTEM',
    'W-NO-BEHAVIOR', 'W-UNPRESENTED', 'E-UNKNOWN-BLOCK',
    'E-DANGLING-REF', 'E-SELECTION-MISSING', 'E-SELECTION-AMBIGUOUS',
    'E-ABSTRACT-IN-SPECIFIC', 'E-PARAM-MISSING',
    # derivation
    'E-SELECTION-ABSTRACT', 'E-SELECTION-FOREIGN',
    # behavior
    'W-REBIND', 'E-LEAF-NO-BEHAVIOR', 'E-ROLE-CARDINALITY', 'E-RUNTIME-MISMATCH',
    'E-UNKNOWN-KERNEL', 'E-PARAM-CONFLICT', 'E-PARAM-TYPE', 'E-PARAM-UNKNOWN', 'E-HOOK-FAILURE',
    # simkernel
    'E-RANGE', 'E-SIM-PARAMS',
    # cli
    'E-UNKNOWN-VIEW',
})


class Severity(str, Enum):
    ERROR = 'error'
    WARNING = 'warning'


def _check_code(code: str) -> None:
    if code not in CODES:
        raise ValueError(f"unknown diagnostic code {code!r}")


@dataclass(frozen=True)
class Diagnostic:
    """A single finding about a block or relation"""
    code: str
    message: str
    subject: str
    severity: Severity = Severity.ERROR

    def __post_init__(self):
        _check_code(self.code)

    @classmethod
    def error(cls, code: str, subject: str, message: str) -> 'Diagnostic':
        return cls(code=code, message=message, subject=subject, severity=Severity.ERROR)

    @classmethod
    def warning(cls, code: str, subject: str, message: str) -> 'Diagnostic':
        return cls(code=code, message=message, subject=subject, severity=Severity.WARNING)

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def render(self) -> str:
        return f"{self.severity.value} {self.code} {self.subject}: {self.message}"


class ForgeError(Exception):
    """Raised when an operation aborts; ``code`` is one of ``CODES``"""

    def __init__(self, code: str, message: str, subject: Optional[str] = None,
                 step: Optional[int] = None, diagnostics: Optional[Sequence[Diagnostic]] = None):
        _check_code(code)
        self.code = code
        self.message = message
        self.subject = subject
        self.step = step
        self.diagnostics: List[Diagnostic] = list(diagnostics or [])
        super().__init__(self.render())

    def render(self) -> str:
        where = f" {self.subject}" if self.subject else ""
        at = f" (step t={self.step})" if self.step is not None else ""
        return f"error {self.code}{where}: {self.message}{at}"


def has_errors(diagnostics: Sequence[Diagnostic]) -> bool:
    return any(d.is_error for d in diagnostics)


def render_diagnostics(diagnostics: Sequence[Diagnostic]) -> List[str]:
    return [d.render() for d in diagnostics]
