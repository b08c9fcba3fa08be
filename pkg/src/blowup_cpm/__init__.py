"""Closest point solvers for diffusion on blown-up singular curves and surfaces."""

from .varieties import catalogue, CATALOGUE_NAMES

__all__ = ["catalogue", "CATALOGUE_NAMES"]
