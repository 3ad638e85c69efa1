"""Transformer-classifier bridge for the hierarchical explanation pipeline."""
from .exporter import AdapterConfig, AlignmentError, ClassifierBridge, export
from .tiny import make_tiny_model

__version__ = "0.1.0"
