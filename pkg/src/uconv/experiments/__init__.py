"""Desk-scale versions of the four numerical experiments."""

from .report import RunReport

__all__ = ["RunReport"]
