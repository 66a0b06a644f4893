"""Bilinear knowledge-base embeddings trained jointly with a relation autoencoder."""

__version__ = "0.1.0"
