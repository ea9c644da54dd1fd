"""csextract: per-layer embedding extraction to CSEM containers."""

__version__ = "0.1.0"
