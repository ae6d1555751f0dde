"""Singular measures and distributions on the circle, with numerical certificates."""
from __future__ import annotations

__version__ = "0.1.0"
