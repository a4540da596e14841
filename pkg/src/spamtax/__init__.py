"""spamtax: spam email multi-classification toolkit."""

__version__ = "0.1.0"
