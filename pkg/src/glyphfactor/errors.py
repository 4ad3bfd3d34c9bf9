"""Exception hierarchy shared across the package."""


class GlyphError(Exception):
    """Base class for all package-specific errors."""


class UnknownLabelError(GlyphError, KeyError):
    """A style/character/component id is not part of the script or head range."""


class CoverageError(GlyphError):
    """A required component is not available from the given glyphs."""


class SamplingError(GlyphError):
    """No feasible training pair could be drawn within the retry budget."""


class LayoutError(GlyphError):
    """Layout slots do not match the character decomposition."""


class ShapeError(GlyphError, ValueError):
    """Tensor or image shape does not match the declared contract."""


class SchemaError(GlyphError):
    """A persisted artifact (checkpoint, manifest, script file) fails validation."""


class ConfigError(GlyphError):
    """Invalid configuration value; message names the offending field."""


class CorpusIOError(GlyphError, OSError):
    """Corpus files are missing or unreadable."""


class EmptyBatchError(GlyphError, ValueError):
    """A reduction was requested over an empty batch or list."""


class ReferenceSetError(GlyphError):
    """Reference set is empty or otherwise unusable."""


class DomainError(GlyphError, ValueError):
    """Scalar argument outside its mathematical domain."""


class NumericError(GlyphError, ValueError):
    """Non-finite value where a finite one is required."""
