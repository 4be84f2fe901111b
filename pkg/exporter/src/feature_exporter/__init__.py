"""Feature exporter: pretrained encoders -> PZT grids and embeddings."""

from .encoders import ExporterError, LayoutError, ToyEncoder, load_encoder
from .export import ExportManifest, export_features

__all__ = ["ExporterError", "LayoutError", "ToyEncoder", "load_encoder",
           "ExportManifest", "export_features"]
