"""Conditional optimal-transport flow matching on small synthetic tasks."""

__version__ = "0.1.0"
