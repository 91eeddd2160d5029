"""Desk-scale design physics for a hybrid microwave-optical scanning probe."""

__version__ = "0.1.0"
