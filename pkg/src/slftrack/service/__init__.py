"""HTTP service exposing the library."""
from .app import app

__all__ = ["app"]
