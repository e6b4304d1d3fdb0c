"""
File formats: embedding matrices (CSV and OSSD binary) and model bundles.
"""

from .embedding_store import EmbeddingMatrix, format_float, read_embeddings, write_embeddings
from .model_store import ModelBundle, ModelManifest, load_model, save_model

__all__ = [
    "EmbeddingMatrix",
    "format_float",
    "read_embeddings",
    "write_embeddings",
    "ModelBundle",
    "ModelManifest",
    "load_model",
    "save_model",
]
