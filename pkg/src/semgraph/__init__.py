"""Semantic world graphs from depth, detections and a class taxonomy."""

__version__ = "0.1.0"
