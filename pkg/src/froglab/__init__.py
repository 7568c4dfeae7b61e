"""Frog models on weighted rooted trees."""
from importlib import metadata

try:
    __version__ = metadata.version("froglab")
except metadata.PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.1.0"
