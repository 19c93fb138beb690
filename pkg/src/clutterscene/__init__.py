"""Procedural cluttered-scene generation with a graph grammar, and learned object search."""

__version__ = "0.1.0"
