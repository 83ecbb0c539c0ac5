"""Ghost interference / ghost imaging simulator and EPR-inequality estimators."""

__version__ = "0.1.0"
