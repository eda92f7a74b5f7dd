"""DDI analytics over dispensation intervals."""

__version__ = "0.1.0"
