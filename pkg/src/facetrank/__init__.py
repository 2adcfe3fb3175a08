"""Faceted document retrieval with neural reranking."""

__version__ = "0.1.0"
