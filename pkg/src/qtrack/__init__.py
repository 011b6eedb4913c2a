"""qtrack: context-aware query tracking for conversational product search."""

__version__ = "0.1.0"
