"""
Domain types for discrete optimal transport
Empirical measures, couplings and tangent fields
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from idd_monitor.exceptions import DimensionError, EmptyInputError


def _frozen(array: np.ndarray) -> np.ndarray:
    if (isinstance(array, np.ndarray) and not array.flags.writeable
            and array.dtype == np.float64 and array.flags.c_contiguous):
        return array
    array = np.array(array, dtype=float, order='C')
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """
    Weighted point cloud in R^d representing one batch.

    Construction prunes zero-weight atoms, merges coincident atoms (keeping
    the first occurrence order) and normalises the weights to sum to one.
    ``n_samples`` is the raw batch size before merging.
    """
    support: np.ndarray
    weights: Optional[np.ndarray] = None
    n_samples: Optional[int] = None

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        if support.ndim == 1:
            support = support.reshape(-1, 1)
        if support.ndim != 2 or support.shape[1] < 1:
            raise DimensionError(f"Support must be an (n, d) array, got shape {support.shape}")
        if support.shape[0] == 0:
            raise EmptyInputError("Empirical measure needs at least one atom")
        if not np.all(np.isfinite(support)):
            raise DimensionError("Support points must be finite")

        raw_count = support.shape[0]
        if self.weights is None:
            weights = np.full(raw_count, 1.0 / raw_count)
        else:
            weights = np.asarray(self.weights, dtype=float).reshape(-1)
            if weights.shape[0] != raw_count:
                raise DimensionError(
                    f"Got {weights.shape[0]} weights for {raw_count} support points"
                )
            if not np.all(np.isfinite(weights)) or np.any(weights < 0):
                raise DimensionError("Weights must be finite and nonnegative")

        keep = weights > 0
        if not np.any(keep):
            raise EmptyInputError("All atom weights are zero")
        support, weights = support[keep], weights[keep]
        support, weights = _merge_duplicates(support, weights)

        object.__setattr__(self, 'support', _frozen(support))
        object.__setattr__(self, 'weights', _frozen(weights / weights.sum()))
        object.__setattr__(self, 'n_samples', int(self.n_samples or raw_count))

    @classmethod
    def from_points(cls, points, weights=None) -> 'EmpiricalMeasure':
        """Build the empirical measure of a raw batch"""
        points = np.asarray(points, dtype=float)
        count = points.shape[0] if points.ndim else 0
        return cls(points, weights, n_samples=count)

    @property
    def size(self) -> int:
        return self.support.shape[0]

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.support

    def __len__(self):
        return self.size

    def __repr__(self):
        return f"EmpiricalMeasure(n={self.size}, d={self.dim})"


def _merge_duplicates(support: np.ndarray, weights: np.ndarray):
    unique_rows, first_index, inverse = np.unique(
        support, axis=0, return_index=True, return_inverse=True
    )
    if unique_rows.shape[0] == support.shape[0]:
        return support, weights

    inverse = inverse.reshape(-1)
    order = np.argsort(first_index, kind='stable')
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    merged = np.bincount(rank[inverse], weights=weights, minlength=order.size)
    return unique_rows[order], merged


@dataclass(frozen=True, eq=False)
class Coupling:
    """Transport plan with its prescribed marginals"""
    plan: np.ndarray
    source_weights: np.ndarray
    target_weights: np.ndarray
    regularization: float = 0.0

    def __post_init__(self):
        plan = np.asarray(self.plan, dtype=float)
        if plan.shape != (len(self.source_weights), len(self.target_weights)):
            raise DimensionError(
                f"Plan shape {plan.shape} does not match marginals "
                f"({len(self.source_weights)}, {len(self.target_weights)})"
            )
        object.__setattr__(self, 'plan', _frozen(np.maximum(plan, 0.0)))
        object.__setattr__(self, 'source_weights', _frozen(self.source_weights))
        object.__setattr__(self, 'target_weights', _frozen(self.target_weights))

    @property
    def shape(self):
        return self.plan.shape

    @property
    def row_mass(self) -> np.ndarray:
        return self.plan.sum(axis=1)

    @property
    def column_mass(self) -> np.ndarray:
        return self.plan.sum(axis=0)

    @property
    def marginal_violation(self) -> float:
        """Largest absolute deviation of a row or column sum from its marginal"""
        rows = np.abs(self.row_mass - self.source_weights).max()
        cols = np.abs(self.column_mass - self.target_weights).max()
        return float(max(rows, cols))

    def is_feasible(self, tol: float = 1e-7) -> bool:
        return self.marginal_violation <= tol

    def is_deterministic(self, tol: float = 1e-9) -> bool:
        """True when every row puts its mass on a single target atom"""
        return bool(np.all(self.plan.max(axis=1) >= self.row_mass - tol))


@dataclass(frozen=True, eq=False)
class TangentField:
    """Displacement vectors at the reference atoms, an element of L2(reference)"""
    vectors: np.ndarray
    ref_weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim == 1:
            vectors = vectors.reshape(-1, 1)
        ref_weights = np.asarray(self.ref_weights, dtype=float).reshape(-1)
        if vectors.shape[0] != ref_weights.shape[0]:
            raise DimensionError(
                f"Field has {vectors.shape[0]} vectors for {ref_weights.shape[0]} reference atoms"
            )
        if not np.all(np.isfinite(vectors)):
            raise DimensionError("Tangent field entries must be finite")
        object.__setattr__(self, 'vectors', _frozen(vectors))
        object.__setattr__(self, 'ref_weights', _frozen(ref_weights))

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def norm_squared(self) -> float:
        return float(self.ref_weights @ np.einsum('ij,ij->i', self.vectors, self.vectors))

    def flatten(self) -> np.ndarray:
        """sqrt-weight scaled coordinates; Euclidean products equal weighted L2 products"""
        return (np.sqrt(self.ref_weights)[:, None] * self.vectors).reshape(-1)

    @classmethod
    def from_flat(cls, flat: np.ndarray, ref_weights: np.ndarray, dim: int) -> 'TangentField':
        ref_weights = np.asarray(ref_weights, dtype=float)
        vectors = np.asarray(flat, dtype=float).reshape(-1, dim) / np.sqrt(ref_weights)[:, None]
        return cls(vectors, ref_weights)

    def __add__(self, other: 'TangentField') -> 'TangentField':
        return TangentField(self.vectors + other.vectors, self.ref_weights)

    def __sub__(self, other: 'TangentField') -> 'TangentField':
        return TangentField(self.vectors - other.vectors, self.ref_weights)

    def scaled(self, factor: float) -> 'TangentField':
        return TangentField(factor * self.vectors, self.ref_weights)
