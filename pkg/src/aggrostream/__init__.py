"""Streaming aggression detection for short social-media posts."""

__version__ = "0.1.0"
