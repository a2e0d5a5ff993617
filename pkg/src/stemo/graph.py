"""Graph data model and spatial adjacency construction.

The spatial adjacency uses a Gaussian kernel over pairwise distances,
A_ij = exp(-d_ij^2 / eta^2) off the diagonal, followed by the usual
self-loop + symmetric degree normalization D^{-1/2} (A + I) D^{-1/2}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graph inputs (asymmetry, missing nodes, ...)."""


@dataclass
class Graph:
    """Node set with pairwise distances (and optionally the coordinates they came from)."""

    node_ids: list[str]
    dist: np.ndarray
    coords: np.ndarray | None = None

    def __post_init__(self):
        self.dist = np.asarray(self.dist, dtype=np.float64)
        n = len(self.node_ids)
        if n < 2:
            raise GraphError(f"graph needs at least 2 nodes, got {n}")
        if self.dist.shape != (n, n):
            raise GraphError(f"distance matrix shape {self.dist.shape}, expected ({n}, {n})")
        if np.any(self.dist < 0):
            raise GraphError("negative pairwise distance")
        if not np.allclose(self.dist, self.dist.T):
            raise GraphError("distance matrix is not symmetric")
        if np.any(np.diag(self.dist) != 0):
            raise GraphError("distance matrix diagonal must be zero")

    @property
    def n(self) -> int:
        return len(self.node_ids)


@dataclass
class SpatialAdjacency:
    """Gaussian-kernel adjacency and its degree-normalized form."""

    a_s: np.ndarray
    a_s_norm: np.ndarray
    eta: float


def coords_to_distances(coords: np.ndarray) -> np.ndarray:
    """Euclidean pairwise distances from an (n, 2) coordinate array."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or np.any(~np.isfinite(coords)):
        bad = np.where(~np.isfinite(coords))[0] if coords.ndim == 2 else []
        raise GraphError(f"bad coordinates (non-finite rows: {list(np.unique(bad))})")
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def default_eta(dist: np.ndarray) -> float:
    """Bandwidth default: std of the off-diagonal distances."""
    n = dist.shape[0]
    off = dist[~np.eye(n, dtype=bool)]
    eta = float(np.std(off))
    if eta <= 0:
        eta = 1.0  # all nodes co-located; any positive bandwidth works
    return eta


def build_spatial_adjacency(g: Graph, eta: float | None = None) -> SpatialAdjacency:
    """Kernelized adjacency with self-loops and symmetric normalization.

    Off-diagonal entries are exp(-d_ij^2 / eta^2) with a zero diagonal; the
    normalized matrix adds the identity before computing D^{-1/2} A D^{-1/2}.
    """
    if eta is None:
        eta = default_eta(g.dist)
    if eta <= 0:
        raise GraphError(f"eta must be positive, got {eta}")
    a_s = np.exp(-(g.dist ** 2) / (eta ** 2))
    np.fill_diagonal(a_s, 0.0)
    a_tilde = a_s + np.eye(g.n)
    deg = a_tilde.sum(axis=1)
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    a_norm = a_tilde * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
    return SpatialAdjacency(a_s=a_s, a_s_norm=a_norm, eta=float(eta))
