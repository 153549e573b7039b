"""Cross-modal matching with Wasserstein-aligned shared embeddings."""

__version__ = "0.1.0"
