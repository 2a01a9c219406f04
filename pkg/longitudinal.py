"""
Longitudinal Consistency - Subject trajectories and reference trajectories
EMA aggregation of batch trajectories per SOM cell and the direction loss
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

import diffcore as dc
from diffcore import Tensor
from errors import CheckpointError, DataError, ShapeError, SomError

NORM_EPS = 1e-12


def trajectory(z_u, z_v, delta_t) -> Tensor:
    """
    dz = (z^v - z^u) / dt. Accepts single vectors with a scalar dt or
    (batch, D) matrices with one dt per row.
    """
    z_u, z_v = dc.as_tensor(z_u), dc.as_tensor(z_v)
    if z_u.shape != z_v.shape:
        raise ShapeError(f"trajectory: z_u {z_u.shape} vs z_v {z_v.shape}")
    delta_t = np.asarray(delta_t, dtype=np.float64)
    if np.any(~(delta_t > 0)):
        raise DataError("trajectory: delta_t must be positive")

    if z_u.ndim == 2:
        delta_t = np.broadcast_to(delta_t, (z_u.shape[0],)).reshape(-1, 1)
    elif delta_t.size != 1:
        raise ShapeError(f"trajectory: one delta_t expected for a single pair, got {delta_t.size}")
    return (z_v - z_u) * Tensor(1.0 / delta_t)


class ReferenceTrajectories:
    """
    Average trajectory dg_ij per SOM cell, maintained by EMA outside autodiff.
    Cells start uninitialized and are never read until first hit.
    """

    def __init__(self, n_rows, n_cols, latent_dim, values=None, initialized=None):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.latent_dim = int(latent_dim)
        shape = (self.n_rows, self.n_cols, self.latent_dim)
        self.values = np.zeros(shape) if values is None else \
            np.asarray(values, dtype=np.float64).reshape(shape)
        self.initialized = np.zeros(shape[:2], dtype=bool) if initialized is None else \
            np.asarray(initialized, dtype=bool).reshape(shape[:2])

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def n_cells(self):
        return self.n_rows * self.n_cols

    def flat_values(self):
        return self.values.reshape(self.n_cells, self.latent_dim)

    def flat_initialized(self):
        return self.initialized.reshape(self.n_cells)

    def uninitialized_count(self):
        return int((~self.initialized).sum())

    def flip(self, axis):
        self.values = np.flip(self.values, axis=axis).copy()
        self.initialized = np.flip(self.initialized, axis=axis).copy()

    def to_dict(self):
        return {
            'values': self.values.ravel().tolist(),
            'initialized': self.initialized.ravel().tolist()
        }

    @classmethod
    def from_dict(cls, data, n_rows, n_cols, latent_dim):
        try:
            return cls(n_rows, n_cols, latent_dim, data['values'], data['initialized'])
        except (KeyError, ValueError) as e:
            raise CheckpointError(f"reference trajectories: malformed record ({e})") from None


@dataclass
class BatchTrajectoryStats:
    """Per-cell sums and counts of detached trajectories for one batch."""
    sums: np.ndarray
    counts: np.ndarray
    batch_size: int

    @classmethod
    def from_batch(cls, delta_z, eps_u, n_cells):
        delta_z = np.asarray(delta_z.values if isinstance(delta_z, Tensor) else delta_z,
                             dtype=np.float64)
        eps_u = np.asarray(eps_u, dtype=np.intp)
        if delta_z.shape[0] != eps_u.shape[0]:
            raise ShapeError(f"trajectory stats: {delta_z.shape[0]} trajectories, "
                             f"{eps_u.shape[0]} cell indices")
        sums = np.zeros((n_cells, delta_z.shape[1]))
        np.add.at(sums, eps_u, delta_z)
        counts = np.bincount(eps_u, minlength=n_cells)
        return cls(sums, counts, int(delta_z.shape[0]))

    def mean_trajectories(self):
        """dh_ij where |Omega_ij| > 0, zeros elsewhere."""
        means = np.zeros_like(self.sums)
        hit = self.counts > 0
        means[hit] = self.sums[hit] / self.counts[hit, None]
        return means


def ema_update(refs: ReferenceTrajectories, stats: BatchTrajectoryStats, alpha, t):
    """
    dg <- dh at t = 0 (or on a cell's first hit), unchanged when the cell
    got no samples, alpha*dg + (1-alpha)*dh otherwise.
    """
    if not (0 < alpha < 1):
        raise SomError(f"ema_update: alpha must lie in (0, 1), got {alpha}")
    if t < 0:
        raise SomError(f"ema_update: negative iteration {t}")
    if stats.sums.shape != (refs.n_cells, refs.latent_dim):
        raise ShapeError(f"ema_update: stats {stats.sums.shape} vs "
                         f"{(refs.n_cells, refs.latent_dim)} reference cells")

    hit = stats.counts > 0
    known = refs.flat_initialized()
    delta_h = stats.mean_trajectories()

    fresh = hit & (~known | (t == 0))
    blend = hit & ~fresh

    values = refs.flat_values().copy()
    values[fresh] = delta_h[fresh]
    values[blend] = alpha * values[blend] + (1.0 - alpha) * delta_h[blend]

    refs.values = values.reshape(refs.values.shape)
    refs.initialized = (known | hit).reshape(refs.shape)


class DirectionLoss(NamedTuple):
    loss: Tensor
    included: int
    excluded: int


def direction_loss(delta_z, refs: ReferenceTrajectories, eps_u) -> DirectionLoss:
    """
    Mean over usable samples of 1 - cos(dz, sg[dg_eps^u]). Samples whose
    cell is uninitialized, or where either vector is numerically zero, are
    left out and counted as excluded.
    """
    delta_z = dc.as_tensor(delta_z)
    eps_u = np.asarray(eps_u, dtype=np.intp)
    if delta_z.ndim != 2 or delta_z.shape[0] != eps_u.shape[0]:
        raise ShapeError(f"direction_loss: trajectories {delta_z.shape} "
                         f"vs {eps_u.shape[0]} cell indices")

    references = refs.flat_values()[eps_u]
    usable = refs.flat_initialized()[eps_u] \
        & (np.linalg.norm(delta_z.values, axis=1) > NORM_EPS) \
        & (np.linalg.norm(references, axis=1) > NORM_EPS)
    rows = np.flatnonzero(usable)
    excluded = int(eps_u.shape[0] - rows.size)

    if rows.size == 0:
        return DirectionLoss(Tensor(0.0), 0, excluded)

    cos = dc.cosine(dc.take_rows(delta_z, rows), Tensor(references[rows]))
    return DirectionLoss(1.0 - dc.mean(cos), int(rows.size), excluded)
