"""Frozen CNN backbone feature exporter for anomaly-detection corpora."""

from .export import ExportError, ExportJob, export_corpus, layer_shapes

__version__ = "0.1.0"
