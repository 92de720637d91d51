"""Quadratic mean-field Lindblad dynamics for pair collisions in atomic gases."""

__version__ = "0.1.0"

from . import continuum, ensemble, meanfield, qcore  # noqa: E402,F401
