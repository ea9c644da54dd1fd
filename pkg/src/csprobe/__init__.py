"""csprobe: probing analyses for code-switched text over precomputed embeddings."""

__version__ = "0.1.0"
