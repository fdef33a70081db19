"""Exact shadowing experiments for linear cellular automata on group subshifts over N^r."""

from __future__ import annotations

__version__ = "0.1.0"
