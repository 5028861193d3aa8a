"""deepdim-exporter: stream VGG19 layer activations into ACTV files."""

from .export import ExportError, ExportJob, export_activations
from .vgg19 import LAYER_DIMS, LAYER_NAMES

__version__ = "0.1.0"

__all__ = ["ExportError", "ExportJob", "export_activations", "LAYER_DIMS", "LAYER_NAMES"]
