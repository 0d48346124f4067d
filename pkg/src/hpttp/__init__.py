"""Hybrid periodic train timetabling with passenger routing and rolling-stock circulation."""
from __future__ import annotations

__version__ = "0.1.0"
