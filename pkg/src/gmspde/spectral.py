"""Neumann-Laplacian eigenbasis on intervals and rectangles.

Two eigenvalue conventions are supported on an interval of length a:

* ``neumann_cosine``: e_k(x) = sqrt(2/a) cos(k pi x / a),  lambda_k = (k pi / a)^2
* ``paper_1d``:       e_k(x) = sqrt(2/a) cos(2 k pi x / a), lambda_k = (2 k pi / a)^2

Both families satisfy homogeneous Neumann conditions; on the unit
interval the second reproduces lambda_k = 4 pi^2 k^2 exactly.  In 2d the
modes are tensor products of 1d cosines on a rectangle [0,a] x [0,b]
with lambda_{l,m} = (l pi / a)^2 + (m pi / b)^2, sorted by eigenvalue
with a lexicographic tie-break on (l, m).

Quadrature is the trapezoidal rule on the uniform tensor grid with N
panels per axis (N+1 nodes).  For cosine products with mode indices
below N/2 the rule is exact, so the stored basis is orthonormal to
rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONVENTIONS = ("neumann_cosine", "paper_1d")


@dataclass(frozen=True)
class DomainSpec:
    """Interval or rectangle with grid resolution and mode convention."""

    dim: int
    lengths: tuple[float, ...]
    eigenvalue_convention: str = "neumann_cosine"
    grid_points_per_axis: int = 64

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.lengths) != self.dim:
            raise ValueError(
                f"expected {self.dim} length(s), got {len(self.lengths)}"
            )
        if any(a <= 0 for a in self.lengths):
            raise ValueError(f"domain lengths must be positive, got {self.lengths}")
        if self.eigenvalue_convention not in CONVENTIONS:
            raise ValueError(
                f"unknown eigenvalue convention {self.eigenvalue_convention!r}; "
                f"choose from {CONVENTIONS}"
            )
        if self.eigenvalue_convention == "paper_1d" and self.dim != 1:
            raise ValueError("paper_1d convention is only valid in one dimension")
        n = self.grid_points_per_axis
        if n < 4 or n % 2 != 0:
            raise ValueError(f"grid_points_per_axis must be even and >= 4, got {n}")

    @property
    def volume(self):
        return float(np.prod(self.lengths))


@dataclass(frozen=True)
class SpectralBasis:
    """Truncated orthonormal eigenbasis with its quadrature grid.

    ``eval_table`` holds e_k at every grid node (flattened row-major),
    one row per mode, so projection and synthesis are plain mat-vecs.
    """

    domain: DomainSpec
    mode_count: int
    eigenvalues: np.ndarray            # (K,) nondecreasing, eigenvalues[0] == 0
    mode_indices: np.ndarray           # (K, dim) integer index tuples
    frequencies: np.ndarray            # (K, dim) angular factors per axis
    normalization: np.ndarray          # (K,) scalars giving unit L2 norm
    axes: tuple[np.ndarray, ...]       # per-axis node coordinates
    weights: np.ndarray                # (n_nodes,) tensor trapezoid weights
    eval_table: np.ndarray             # (K, n_nodes)
    _grad_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def grid_shape(self):
        return tuple(len(ax) for ax in self.axes)

    @property
    def n_nodes(self):
        return self.eval_table.shape[1]

    @property
    def volume(self):
        return self.domain.volume

    def project(self, nodal_flat):
        """Quadrature inner products <f, e_k> for all modes."""
        return self.eval_table @ (self.weights * nodal_flat)

    def synthesize(self, modal):
        """Nodal samples of sum_k modal_k e_k (flattened)."""
        return self.eval_table.T @ modal

    def gradient_table(self, axis):
        """Nodal samples of d(e_k)/dx_axis, cached on first use."""
        if axis not in self._grad_cache:
            self._grad_cache[axis] = _build_gradient_table(self, axis)
        return self._grad_cache[axis]

    def integrate(self, nodal_flat):
        return float(self.weights @ nodal_flat)


def _mode_list_1d(domain, count):
    idx = np.arange(count, dtype=int).reshape(-1, 1)
    a = domain.lengths[0]
    k = np.arange(count)
    if domain.eigenvalue_convention == "paper_1d":
        # literal form of the stated eigenvalues (on the unit interval)
        lam = 4.0 * np.pi**2 * k**2 / a**2
    else:
        lam = (np.pi * k / a) ** 2
    return lam, idx


def _mode_list_2d(domain, count):
    a, b = domain.lengths
    cand = []
    for l in range(count):
        for m in range(count):
            lam = (l * np.pi / a) ** 2 + (m * np.pi / b) ** 2
            cand.append((lam, l, m))
    cand.sort(key=lambda t: (t[0], t[1], t[2]))
    cand = cand[:count]
    lam = np.array([c[0] for c in cand])
    idx = np.array([[c[1], c[2]] for c in cand], dtype=int)
    return lam, idx


def build_basis(domain: DomainSpec, mode_count: int) -> SpectralBasis:
    """Construct the first ``mode_count`` eigenpairs on the domain grid.

    Rejects mode counts whose highest index would alias on the grid
    (index must stay below N/2), reporting the minimum N that works.
    """
    if mode_count < 1:
        raise ValueError("mode_count must be >= 1")
    n = domain.grid_points_per_axis
    if domain.dim == 1:
        lam, idx = _mode_list_1d(domain, mode_count)
    else:
        lam, idx = _mode_list_2d(domain, mode_count)
    max_idx = int(idx.max())
    if max_idx >= n // 2:
        n_min = 2 * (max_idx + 1)
        raise ValueError(
            f"mode index {max_idx} aliases on a grid with {n} points per axis; "
            f"need grid_points_per_axis >= {n_min}"
        )

    axes = tuple(
        np.linspace(0.0, length, n + 1) for length in domain.lengths
    )
    w_axes = []
    for length in domain.lengths:
        w = np.full(n + 1, length / n)
        w[0] *= 0.5
        w[-1] *= 0.5
        w_axes.append(w)
    if domain.dim == 1:
        weights = w_axes[0]
    else:
        weights = np.outer(w_axes[0], w_axes[1]).ravel()

    freqs = np.zeros((mode_count, domain.dim))
    norms = np.ones(mode_count)
    table = np.empty((mode_count, weights.size))
    for k in range(mode_count):
        factors = []
        norm = 1.0
        for ax in range(domain.dim):
            length = domain.lengths[ax]
            ki = idx[k, ax]
            if domain.eigenvalue_convention == "paper_1d":
                q = 2.0 * np.pi * ki / length
            else:
                q = np.pi * ki / length
            freqs[k, ax] = q
            c = np.sqrt(1.0 / length) if ki == 0 else np.sqrt(2.0 / length)
            norm *= c
            factors.append(c * np.cos(q * axes[ax]))
        norms[k] = norm
        if domain.dim == 1:
            table[k] = factors[0]
        else:
            table[k] = np.outer(factors[0], factors[1]).ravel()

    return SpectralBasis(
        domain=domain,
        mode_count=mode_count,
        eigenvalues=lam,
        mode_indices=idx,
        frequencies=freqs,
        normalization=norms,
        axes=axes,
        weights=weights,
        eval_table=table,
    )


def _build_gradient_table(basis, axis):
    dom = basis.domain
    if axis < 0 or axis >= dom.dim:
        raise ValueError(f"axis {axis} out of range for dim {dom.dim}")
    k_count = basis.mode_count
    table = np.empty((k_count, basis.n_nodes))
    for k in range(k_count):
        factors = []
        for ax in range(dom.dim):
            length = dom.lengths[ax]
            ki = basis.mode_indices[k, ax]
            q = basis.frequencies[k, ax]
            c = np.sqrt(1.0 / length) if ki == 0 else np.sqrt(2.0 / length)
            if ax == axis:
                factors.append(-c * q * np.sin(q * basis.axes[ax]))
            else:
                factors.append(c * np.cos(q * basis.axes[ax]))
        if dom.dim == 1:
            table[k] = factors[0]
        else:
            table[k] = np.outer(factors[0], factors[1]).ravel()
    return table


def eval_eigenfunction(basis: SpectralBasis, k: int, x) -> float:
    """Pointwise value of e_k at a point inside the domain."""
    if k < 0 or k >= basis.mode_count:
        raise ValueError(f"mode index {k} out of range [0, {basis.mode_count})")
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if pt.size != basis.domain.dim:
        raise ValueError(f"point has {pt.size} coordinates, domain is {basis.domain.dim}d")
    for ax, length in enumerate(basis.domain.lengths):
        if not (0.0 <= pt[ax] <= length):
            raise ValueError(
                f"coordinate {pt[ax]} outside [0, {length}] on axis {ax}"
            )
    val = 1.0
    for ax in range(basis.domain.dim):
        ki = basis.mode_indices[k, ax]
        length = basis.domain.lengths[ax]
        c = np.sqrt(1.0 / length) if ki == 0 else np.sqrt(2.0 / length)
        val *= c * np.cos(basis.frequencies[k, ax] * pt[ax])
    return float(val)


def apply_multiplier(basis: SpectralBasis, modal, g):
    """Diagonal spectral operator: coefficient k is scaled by g(lambda_k).

    Covers (Id+A)^. powers, the smoothing operator S(.), and H^s norms;
    g must be finite on every eigenvalue of the basis.
    """
    modal = np.asarray(modal, dtype=float)
    if modal.shape[-1] != basis.mode_count:
        raise ValueError(
            f"modal length {modal.shape[-1]} != mode count {basis.mode_count}"
        )
    w = np.asarray(g(basis.eigenvalues), dtype=float)
    if not np.all(np.isfinite(w)):
        bad = int(np.flatnonzero(~np.isfinite(w))[0])
        raise ValueError(f"multiplier not finite at eigenvalue index {bad}")
    return modal * w


def check_asymptotics(basis: SpectralBasis):
    """Tightest constants c_low, c_high with c_low <= lambda_k / k^(2/d) <= c_high.

    Evaluated over the nonzero modes k = 1 .. K-1 in sorted order.
    """
    if basis.mode_count < 8:
        raise ValueError("need at least 8 modes to estimate eigenvalue growth")
    k = np.arange(1, basis.mode_count)
    ratios = basis.eigenvalues[1:] / k ** (2.0 / basis.domain.dim)
    return float(ratios.min()), float(ratios.max())
