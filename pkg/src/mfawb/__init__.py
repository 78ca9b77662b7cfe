"""Multi-factor authentication protocol workbench."""

__version__ = "0.1.0"
