"""Uniform cell-centered grids on the unit torus and face-difference helpers."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform grid of `cells` cells per axis on [0,1)^dim, periodic."""

    dim: int
    cells: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.cells < 2:
            raise ValueError(f"cells must be >= 2, got {self.cells}")

    @property
    def h(self):
        return 1.0 / self.cells

    @property
    def cell_volume(self):
        return self.h**self.dim

    @property
    def shape(self):
        return (self.cells,) * self.dim

    def centers(self):
        """Cell centers: (N,) in 1D, pair of (N,N) meshgrids in 2D."""
        c = (np.arange(self.cells) + 0.5) * self.h
        if self.dim == 1:
            return c
        return np.meshgrid(c, c, indexing="ij")

    def faces(self, axis=0):
        """Face positions along `axis`: face k sits between cells k and k+1."""
        return (np.arange(self.cells) + 1.0) * self.h


def forward_diff(u, axis=0):
    """u[i+1] - u[i] with periodic wrap, living on the faces along `axis`."""
    return np.roll(u, -1, axis=axis) - u


def backward_diff(u, axis=0):
    return u - np.roll(u, 1, axis=axis)


def face_divergence(flux, axis=0):
    """Cell-centered divergence of a face field: flux[i] - flux[i-1]."""
    return flux - np.roll(flux, 1, axis=axis)


def harmonic_face_mean(values, axis=0):
    """Harmonic mean of adjacent cell values, on the faces along `axis`."""
    nxt = np.roll(values, -1, axis=axis)
    return 2.0 * values * nxt / (values + nxt)
