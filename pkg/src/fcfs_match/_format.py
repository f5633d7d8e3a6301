"""Numeric output formatting shared by report serializers."""

from __future__ import annotations


def fmt12(x: float) -> str:
    """Scientific notation with 12 fractional digits; parses back to within
    1e-12 relative of the in-memory value."""
    return format(float(x), ".12e")


def round12(x: float) -> float:
    """The float that fmt12 would print (used for JSON payloads)."""
    return float(fmt12(x))
