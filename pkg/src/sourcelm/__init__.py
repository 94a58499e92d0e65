"""Token-level language modeling for Python source code."""

__version__ = "0.1.0"
