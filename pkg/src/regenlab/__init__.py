"""Diffusions in random environments: simulation, regeneration times and renewal statistics."""

__version__ = "0.1.0"

from .backend import NAME as BACKEND  # noqa: E402
