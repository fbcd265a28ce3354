"""Dual-view contrastive TabNet embeddings for cohort-level mutation signatures."""

__version__ = "0.1.0"
