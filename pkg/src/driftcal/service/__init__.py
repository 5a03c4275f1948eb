"""HTTP layer: FastAPI app factory and wire schemas."""

from .app import create_app

__all__ = ["create_app"]
