"""Speaker identification for quotations in literary text via prompt-based generation."""

__version__ = "0.1.0"
