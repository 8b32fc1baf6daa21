"""Research-productivity scoring and recruitment-audit engine."""

__version__ = "0.1.0"
