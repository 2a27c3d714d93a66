"""DGA detection from domain co-occurrence embeddings trained incrementally."""
from .embed import DomainVector, EmbedConfig, EmbeddingModel, OutOfVocabulary
from .classify import LogRegModel, Verdict
from .preprocess import Document, Preprocessor

__all__ = [
    "Document",
    "DomainVector",
    "EmbedConfig",
    "EmbeddingModel",
    "LogRegModel",
    "OutOfVocabulary",
    "Preprocessor",
    "Verdict",
]
__version__ = "0.1.0"
