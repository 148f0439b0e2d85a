"""Sampling of the two driving Q-Wiener processes.

Each process W_j is expanded over the eigenbasis with per-mode variance
damping (1+lambda_k)^(-gamma_j); what is stored per path is the table
of raw Brownian increments dB[j][k][n] (standard normals scaled by
sqrt(dt_n)).  Tables are addressed through the counter-based generator
in :mod:`gmspde.rng`, so a path is a pure function of
(master_seed, path_index) and extending the mode count leaves existing
modes untouched.

Coupled time grids for step-halving studies are built finest-first:
the finest grid is sampled directly and coarser levels are obtained by
pairwise summation, which reproduces the refinement coupling of a
Brownian bridge while keeping the sum identity exact in floating point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import rng
from .fields import Field
from .spectral import SpectralBasis


@dataclass(frozen=True)
class NoiseSpec:
    """Decay exponents and mode truncation for the pair (W_1, W_2)."""

    gamma1: float
    gamma2: float
    mode_count: int
    master_seed: int = 0

    def __post_init__(self):
        if self.mode_count < 1:
            raise ValueError("mode_count must be >= 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be a nonnegative integer")

    def gamma(self, j):
        if j == 1:
            return self.gamma1
        if j == 2:
            return self.gamma2
        raise ValueError(f"process index must be 1 or 2, got {j}")

    def validate_for_dim(self, dim):
        """Trace-class condition gamma_j > d; smaller values only warn."""
        msgs = []
        for j in (1, 2):
            g = self.gamma(j)
            if g <= dim:
                msgs.append(
                    f"gamma{j} = {g:g} <= d = {dim}: covariance decay below "
                    "the trace-class margin; proceeding anyway"
                )
        for m in msgs:
            warnings.warn(m, stacklevel=2)
        return msgs


@dataclass(frozen=True)
class NoisePath:
    """Seeded per-mode Brownian increment table on a time grid."""

    spec: NoiseSpec
    time_grid: np.ndarray          # (N+1,) strictly increasing, starts at 0
    increments: np.ndarray         # (2, K, N) scaled by sqrt(dt_n)
    path_index: int

    @property
    def n_steps(self):
        return self.increments.shape[2]

    @property
    def dts(self):
        return np.diff(self.time_grid)


def uniform_grid(horizon, n_steps):
    if n_steps < 1 or horizon <= 0:
        raise ValueError("need horizon > 0 and at least one step")
    return np.linspace(0.0, horizon, n_steps + 1)


def sample_path(spec: NoiseSpec, time_grid, path_index: int) -> NoisePath:
    """Draw the full increment table for one path.

    Entry (j, k, n) is sqrt(dt_n) times a standard normal that depends
    only on (master_seed, path_index, j, k, n).
    """
    time_grid = np.asarray(time_grid, dtype=float)
    if time_grid.ndim != 1 or time_grid.size < 2:
        raise ValueError("time grid needs at least two points")
    dts = np.diff(time_grid)
    if np.any(dts <= 0):
        raise ValueError("time grid must be strictly increasing")
    if time_grid[0] != 0.0:
        raise ValueError("time grid must start at t = 0")
    k_ids = np.arange(spec.mode_count)
    n_ids = np.arange(dts.size)
    table = np.empty((2, spec.mode_count, dts.size))
    scale = np.sqrt(dts)
    for j in (1, 2):
        z = rng.normal_table(spec.master_seed, path_index, j, k_ids, n_ids)
        table[j - 1] = z * scale
    return NoisePath(spec=spec, time_grid=time_grid, increments=table,
                     path_index=path_index)


def mode_increment_batch(spec: NoiseSpec, path_indices, j, k, n, dt):
    """The (j, k, n) increment of many paths at once.

    Vectorized counterpart of indexing ``sample_path(...).increments``;
    the numbers are identical by the counter keying.
    """
    z = rng.normal_batch(spec.master_seed, path_indices, j, k, n)
    return z * np.sqrt(dt)


def coarsen_path(path: NoisePath) -> NoisePath:
    """Halve the time resolution by summing increment pairs.

    The sums are stored, so fine pairs reproduce the returned coarse
    increments exactly; this is the coupling used by step-halving
    convergence runs.
    """
    n = path.n_steps
    if n % 2 != 0:
        raise ValueError(f"cannot pair an odd number of steps ({n})")
    inc = path.increments
    coarse = inc[:, :, 0::2] + inc[:, :, 1::2]
    return NoisePath(
        spec=path.spec,
        time_grid=path.time_grid[::2],
        increments=coarse,
        path_index=path.path_index,
    )


def coupled_path_hierarchy(spec, fine_grid, path_index, levels):
    """Sample the finest grid and derive ``levels`` coupled coarsenings.

    Returns paths ordered coarsest first; each entry's increments are
    exact pairwise sums of the next finer entry's.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    fine = sample_path(spec, fine_grid, path_index)
    chain = [fine]
    for _ in range(levels - 1):
        chain.append(coarsen_path(chain[-1]))
    return chain[::-1]


def increment_field(path: NoisePath, n: int, j: int,
                    basis: SpectralBasis, spec: NoiseSpec | None = None) -> Field:
    """Modal field of the W_j increment over step n.

    Coefficient k is (1+lambda_k)^(-gamma_j/2) dB[j][k][n].
    """
    spec = path.spec if spec is None else spec
    if not (0 <= n < path.n_steps):
        raise ValueError(f"step {n} out of range [0, {path.n_steps})")
    if basis.mode_count != spec.mode_count:
        raise ValueError(
            f"basis has {basis.mode_count} modes, noise spec has {spec.mode_count}"
        )
    damp = (1.0 + basis.eigenvalues) ** (-0.5 * spec.gamma(j))
    modal = damp * path.increments[j - 1, :, n]
    return Field(basis, modal=modal)


def covariance_multipliers(basis: SpectralBasis, spec: NoiseSpec, j: int):
    """Per-mode variance factors (1+lambda_k)^(-gamma_j)."""
    return (1.0 + basis.eigenvalues) ** (-spec.gamma(j))


def trace_of_Q(basis: SpectralBasis, spec: NoiseSpec, j: int) -> float:
    """Partial trace of the covariance over the truncation."""
    return float(np.sum(covariance_multipliers(basis, spec, j)))


def dump_increments(path: NoisePath, file) -> None:
    """Raw float64 little-endian dump of the (2, K, N) table (row-major)."""
    path.increments.astype("<f8").tofile(file)
