"""Exception types shared across the package.

Terminal signals (ReadingComplete, FallbackRequired) are exceptions too: they
mark control-flow boundaries the caller must handle, not failures.
"""

from __future__ import annotations


class TraceReviewError(Exception):
    """Base class for every error raised by this package."""


# --- document model ---------------------------------------------------------

class EmptyDocument(TraceReviewError):
    """Ingest received zero blocks."""


class MalformedBlock(TraceReviewError):
    """A block record is structurally invalid. Carries the offending index."""

    def __init__(self, index: int, reason: str):
        super().__init__(f"block {index}: {reason}")
        self.index = index
        self.reason = reason


class AnchorOutOfRange(TraceReviewError):
    """Anchor references a missing page or line numbers outside the page."""


class FallbackRequired(TraceReviewError):
    """Signal: exact per-line geometry unavailable, route to the fallback rect."""


class BadGeometry(TraceReviewError):
    """Layout input geometry is unusable (nonpositive area or height)."""


class DuplicateAnnotation(TraceReviewError):
    """Two annotations share an id within one render plan."""


# --- providers ---------------------------------------------------------------

class ProviderError(TraceReviewError):
    """A provider port failed outright (timeout, transport, refused call)."""


class MalformedProviderOutput(TraceReviewError):
    """A provider returned something structurally invalid for the pipeline."""


class EvidenceOutOfSpan(TraceReviewError):
    """Span evidence cites an anchor outside the span that was just read."""


class ReadingComplete(TraceReviewError):
    """Signal: the read cursor has no unvisited span left."""


class IncompleteSetting(TraceReviewError):
    """A claim setting is missing one of task, benchmark, or primary metric."""


# --- packaging ---------------------------------------------------------------

class NotReady(TraceReviewError):
    """Export refused: the readiness gate failed. Carries the reason list."""

    def __init__(self, reasons: list[str]):
        super().__init__("package not ready: " + ", ".join(reasons))
        self.reasons = list(reasons)


class PackageIntegrityError(TraceReviewError):
    """A bundle failed cross-file consistency checks on import."""


# --- evaluation: coverage ----------------------------------------------------

class EmptyDenominator(TraceReviewError):
    """A coverage metric was requested over an empty issue list."""


class DuplicateLabel(TraceReviewError):
    """Two label records share the (system, paper, issue) key."""


class UnknownIssue(TraceReviewError):
    """A label record cites a (paper, issue) pair absent from the issue list."""


class MalformedRecord(TraceReviewError):
    """A structured evaluation record is missing fields or has bad values."""


# --- evaluation: ranking -----------------------------------------------------

class ChainParseError(TraceReviewError):
    """Base for per-chain parse failures; callers drop the instance and count it."""


class EmptyChain(ChainParseError):
    """Chain text is empty or whitespace only."""


class MalformedToken(ChainParseError):
    """A split produced an empty or unusable segment (doubled operators etc.)."""


class UnknownSystem(ChainParseError):
    """Chain names a system outside the roster."""


class DuplicateSystem(ChainParseError):
    """Chain names the same system twice."""


class DisconnectedComparisons(TraceReviewError):
    """The comparison graph does not connect all systems."""


class DegenerateMLE(TraceReviewError):
    """Ability estimates diverge (some system or group never loses or never wins)."""


class InvalidAbility(TraceReviewError):
    """Rating conversion received a nonpositive ability."""


class BootstrapFailed(TraceReviewError):
    """Every bootstrap resample was degenerate; no interval can be formed."""
