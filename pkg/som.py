"""
Self-Organizing Map - Grid of representations and its losses
Nearest lookup, annealed soft weights, SOM and commitment losses, k-means init
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

import diffcore as dc
from diffcore import Tensor
from errors import CheckpointError, NumericalError, ShapeError, SomError


class GridIndex(NamedTuple):
    row: int
    col: int


class SomGrid:
    """
    N_r x N_c grid of D-dimensional representations g_ij, stored row-major
    as one trainable tensor of shape (N_r, N_c, D).
    """

    def __init__(self, n_rows, n_cols, latent_dim, representations=None, name="som"):
        if n_rows < 1 or n_cols < 1 or latent_dim < 1:
            raise SomError(f"som grid needs positive sizes, got {n_rows}x{n_cols}x{latent_dim}")
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.latent_dim = int(latent_dim)

        if representations is None:
            representations = np.zeros((self.n_rows, self.n_cols, self.latent_dim))
        values = np.asarray(representations, dtype=np.float64).reshape(
            self.n_rows, self.n_cols, self.latent_dim)
        if not np.all(np.isfinite(values)):
            raise NumericalError("som grid: representations must be finite")
        self.representations = Tensor(values, requires_grad=True, name=f"{name}.g")

    @classmethod
    def random(cls, n_rows, n_cols, latent_dim, rng, spread=1.0):
        return cls(n_rows, n_cols, latent_dim,
                   rng.normal(0.0, spread, size=(n_rows, n_cols, latent_dim)))

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def n_cells(self):
        return self.n_rows * self.n_cols

    def flat(self) -> Tensor:
        """Representations as a (N_r*N_c, D) tensor on the tape."""
        return dc.reshape(self.representations, (self.n_cells, self.latent_dim))

    def vectors(self) -> np.ndarray:
        return self.representations.values.reshape(self.n_cells, self.latent_dim).copy()

    def cell(self, linear_index) -> GridIndex:
        row, col = divmod(int(linear_index), self.n_cols)
        return GridIndex(row, col)

    def linear_index(self, index) -> int:
        return int(index[0]) * self.n_cols + int(index[1])

    def coordinates(self) -> np.ndarray:
        """(N_r*N_c, 2) integer grid coordinates in row-major order."""
        rows, cols = np.indices(self.shape)
        return np.stack([rows.ravel(), cols.ravel()], axis=1)

    def assign(self, centers):
        """Write k centers into the grid in row-major order."""
        centers = np.asarray(centers, dtype=np.float64)
        if centers.shape != (self.n_cells, self.latent_dim):
            raise ShapeError(
                f"som assign: expected {(self.n_cells, self.latent_dim)}, got {centers.shape}")
        self.representations.values = centers.reshape(self.n_rows, self.n_cols, self.latent_dim)
        self.representations.grad = None

    def flip(self, axis):
        """Reflect the grid along rows (axis 0) or columns (axis 1)."""
        self.representations.values = np.flip(self.representations.values, axis=axis).copy()
        self.representations.grad = None

    def to_dict(self):
        return {
            'n_rows': self.n_rows,
            'n_cols': self.n_cols,
            'latent_dim': self.latent_dim,
            'layout': 'row-major',
            'representations': self.representations.values.ravel().tolist()
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data['n_rows'], data['n_cols'], data['latent_dim'], data['representations'])
        except (KeyError, ValueError) as e:
            raise CheckpointError(f"som: malformed grid record ({e})") from None


def _grid_vectors(grid):
    return grid.vectors() if isinstance(grid, SomGrid) else np.asarray(grid, dtype=np.float64)


def nearest_indices(grid: SomGrid, z) -> np.ndarray:
    """Row-major index of the closest representation for each row of z."""
    z = np.atleast_2d(z.values if isinstance(z, Tensor) else np.asarray(z, dtype=np.float64))
    if z.shape[1] != grid.latent_dim:
        raise ShapeError(f"nearest: latent dim {z.shape[1]} vs grid dim {grid.latent_dim}")
    if np.any(np.isnan(z)):
        raise NumericalError("nearest: latent contains NaN")
    distances = cdist(z, grid.vectors(), "sqeuclidean")
    # argmin keeps the first minimum: ties go to the smallest row-major index
    return np.argmin(distances, axis=1)


def nearest(grid: SomGrid, z) -> GridIndex:
    """epsilon = argmin_(i,j) |z - g_ij|."""
    z = z.values if isinstance(z, Tensor) else np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ShapeError(f"nearest: expected a single latent vector, got shape {z.shape}")
    return grid.cell(nearest_indices(grid, z)[0])


def gather_representations(grid: SomGrid, indices) -> Tensor:
    """g_eps for each row-major index, differentiable w.r.t. the grid."""
    return dc.take_rows(grid.flat(), indices)


def cluster_counts(grid: SomGrid, z) -> np.ndarray:
    """Number of latents assigned to each cell, shaped like the grid."""
    indices = nearest_indices(grid, z)
    return np.bincount(indices, minlength=grid.n_cells).reshape(grid.shape)


@dataclass
class TauSchedule:
    """Exponential decay of the neighbourhood width over the SOM phase."""
    tau_min: float = 0.1
    tau_max: float = 1.0
    total_iterations: int = 1

    def __post_init__(self):
        if not (0 < self.tau_min <= self.tau_max):
            raise SomError(f"tau schedule needs 0 < tau_min <= tau_max, "
                           f"got {self.tau_min} and {self.tau_max}")
        if self.total_iterations < 1:
            raise SomError(f"tau schedule needs T >= 1, got {self.total_iterations}")

    def at(self, grid_shape, t):
        if t < 0:
            raise SomError(f"tau_at: negative iteration {t}")
        n_cells = int(grid_shape[0]) * int(grid_shape[1])
        t = min(t, self.total_iterations)
        if t == 0:
            return n_cells * self.tau_max
        if t == self.total_iterations:
            return n_cells * self.tau_min
        ratio = self.tau_min / self.tau_max
        return n_cells * self.tau_max * ratio ** (t / self.total_iterations)


def tau_at(schedule: TauSchedule, grid: SomGrid, t: int) -> float:
    """tau(t) = N_r N_c tau_max (tau_min/tau_max)^(t/T); t beyond T is clamped."""
    return schedule.at(grid.shape, t)


def soft_weights(eps, grid_shape, tau) -> np.ndarray:
    """
    Normalized weights exp(-|eps - (i,j)|_1^2 / 2 tau) over the grid.
    Returns an array shaped like the grid that sums to one.
    """
    if not tau > 0:
        raise SomError(f"soft_weights: tau must be positive, got {tau}")
    rows, cols = np.indices(tuple(grid_shape))
    l1 = np.abs(rows - eps[0]) + np.abs(cols - eps[1])
    w = np.exp(-(l1.astype(np.float64) ** 2) / (2.0 * tau))
    return w / w.sum()


def soft_weight_matrix(indices, grid_shape, tau) -> np.ndarray:
    """Batched soft_weights: (batch, N_r*N_c) for row-major indices."""
    if not tau > 0:
        raise SomError(f"soft_weights: tau must be positive, got {tau}")
    rows, cols = np.indices(tuple(grid_shape))
    coords = np.stack([rows.ravel(), cols.ravel()], axis=1)
    chosen = coords[np.asarray(indices, dtype=np.intp)]
    l1 = np.abs(chosen[:, None, :] - coords[None, :, :]).sum(axis=-1)
    w = np.exp(-(l1.astype(np.float64) ** 2) / (2.0 * tau))
    return w / w.sum(axis=1, keepdims=True)


def hard_weight_matrix(indices, n_cells) -> np.ndarray:
    """Indicator of the nearest cell: the hard-assignment SOM."""
    indices = np.asarray(indices, dtype=np.intp)
    w = np.zeros((indices.size, n_cells))
    w[np.arange(indices.size), indices] = 1.0
    return w


def _weighted_distances(grid, z, weights):
    z = dc.stop_gradient(z)
    batch = z.shape[0]
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim == 3:
        weights = weights.reshape(weights.shape[0], -1)
    if weights.shape != (batch, grid.n_cells):
        raise ShapeError(
            f"som_loss: weights of shape {weights.shape} do not match "
            f"batch {batch} on a {grid.n_rows}x{grid.n_cols} grid")
    diff = dc.reshape(z, (batch, 1, grid.latent_dim)) - \
        dc.reshape(grid.flat(), (1, grid.n_cells, grid.latent_dim))
    distances = dc.sum_squares(diff, axis=-1)
    return dc.sum(distances * Tensor(weights))


def som_loss(grid: SomGrid, z_u, z_v, w_u, w_v) -> Tensor:
    """
    Batch mean of sum_ij w^u_ij |sg[z^u] - g_ij|^2 + w^v_ij |sg[z^v] - g_ij|^2.
    Only the representations receive gradient.
    """
    z_u, z_v = dc.as_tensor(z_u), dc.as_tensor(z_v)
    total = _weighted_distances(grid, z_u, w_u) + _weighted_distances(grid, z_v, w_v)
    return dc.scale(total, 1.0 / z_u.shape[0])


def commit_loss(z_u, z_v, g_eps_u, g_eps_v) -> Tensor:
    """Batch mean of |z^u - g_eps^u|^2 + |z^v - g_eps^v|^2."""
    z_u = dc.as_tensor(z_u)
    if z_u.shape != dc.as_tensor(g_eps_u).shape:
        raise ShapeError(f"commit_loss: z {z_u.shape} vs g {dc.as_tensor(g_eps_u).shape}")
    total = dc.sum_squares(z_u - g_eps_u) + dc.sum_squares(z_v - g_eps_v)
    return dc.scale(total, 1.0 / z_u.shape[0])


def _kmeans_plus_plus(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = cdist(points, centers[:1], "sqeuclidean")[:, 0]

    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            choice = rng.choice(n, p=closest / total)
        else:
            choice = rng.integers(n)
        centers[c] = points[choice]
        closest = np.minimum(closest, cdist(points, centers[c:c + 1], "sqeuclidean")[:, 0])

    return centers


def kmeans_init(latents, k, seed, max_iter=100) -> np.ndarray:
    """
    Lloyd's algorithm from k-means++ seeds; stops at an assignment fixpoint
    or after max_iter rounds. Returns (k, D) centers.
    """
    points = np.asarray(latents, dtype=np.float64)
    if points.ndim != 2:
        raise ShapeError(f"kmeans_init: expected (n, D) latents, got {points.shape}")
    n = points.shape[0]
    if n < k:
        raise SomError(f"kmeans_init: {n} latents cannot seed {k} clusters")
    if not np.all(np.isfinite(points)):
        raise NumericalError("kmeans_init: latents must be finite")

    rng = np.random.default_rng(seed)
    centers = _kmeans_plus_plus(points, k, rng)
    labels = None

    for _ in range(max_iter):
        distances = cdist(points, centers, "sqeuclidean")
        new_labels = np.argmin(distances, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels

        nearest_distance = distances[np.arange(n), labels]
        for cluster in range(k):
            members = points[labels == cluster]
            if len(members):
                centers[cluster] = members.mean(axis=0)
            else:
                # reseed at the point worst served by its current center
                farthest = int(np.argmax(nearest_distance))
                centers[cluster] = points[farthest]
                nearest_distance[farthest] = 0.0

    return centers
