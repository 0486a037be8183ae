"""Taylor-expansion attribution framework with exact polynomial oracles."""

__version__ = "0.1.0"
