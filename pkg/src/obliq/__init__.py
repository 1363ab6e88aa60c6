"""Oblivious relational query engine over a simulated untrusted block store."""

from __future__ import annotations

__version__ = "0.1.0"
