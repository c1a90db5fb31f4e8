"""Additive-manufacturing spare-part supply chain design."""

__version__ = "0.1.0"
