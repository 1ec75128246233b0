"""Sentence-embedding exporter for the matcher pipeline's binary store."""

from .export import DEFAULT_MODEL, ExportError, ExportJob, ModelLoadError, export
from .writer import read_embedding_file, write_embedding_file

__version__ = "0.1.0"
