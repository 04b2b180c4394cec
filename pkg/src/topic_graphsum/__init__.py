"""Topic-aware graph attention extractive summarizer."""

__version__ = "0.1.0"
