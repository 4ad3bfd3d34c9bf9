"""Few-shot glyph generation with component-wise style factors."""

__version__ = "0.1.0"
