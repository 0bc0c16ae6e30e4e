"""Small helpers for probability-simplex geometry.

Vectors on an alphabet of size k live in R^k; the tangent space of the
simplex is the set of vectors whose coordinates sum to zero.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np
from scipy.linalg import helmert

SIMPLEX_TOL = 1e-12


def as_distribution(p, tol: float = SIMPLEX_TOL, name: str = "vector") -> np.ndarray:
    """Validate and return ``p`` as a probability vector."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if np.any(p < -tol):
        raise ValueError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"{name} does not sum to 1 within {tol}")
    return p


def tangent_basis(k: int) -> np.ndarray:
    """Orthonormal basis of the simplex tangent space, shape (k-1, k).

    Rows are orthonormal and each sums to zero (Helmert construction).
    """
    return helmert(k)


def project_tangent(v: np.ndarray) -> np.ndarray:
    """Project onto zero-sum vectors by removing the coordinate mean."""
    v = np.asarray(v, dtype=float)
    return v - v.mean(axis=-1, keepdims=True)


def simplex_grid(dim: int, points_per_edge: int) -> np.ndarray:
    """Regular grid on the probability simplex, shape (n_points, dim).

    ``points_per_edge`` counts grid points along each edge, so the grid
    spacing is 1/(points_per_edge - 1).
    """
    if points_per_edge < 2:
        raise ValueError("need at least two points per edge")
    m = points_per_edge - 1
    # Compositions of m into dim nonnegative parts via stars and bars.
    points = []
    for cuts in combinations(range(m + dim - 1), dim - 1):
        parts = []
        prev = -1
        for c in cuts:
            parts.append(c - prev - 1)
            prev = c
        parts.append(m + dim - 2 - prev)
        points.append(parts)
    return np.asarray(points, dtype=float) / m
