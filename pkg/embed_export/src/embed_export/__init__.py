"""Embedding export tool: pretrained speech encoder -> W2VE sidecar files."""

from .exporter import (
    ExportError,
    ExportJob,
    ExportResult,
    export,
    load_audio,
    read_manifest,
)

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "ExportJob",
    "ExportResult",
    "export",
    "load_audio",
    "read_manifest",
    "__version__",
]
