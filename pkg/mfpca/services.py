"""
Tangent-space functional PCA for IDD Monitor
Weighted L2 eigenbasis of calibration tangent fields, scores, T2 and SPE statistics
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from django.conf import settings

from idd_monitor.exceptions import (
    ConfigError, DegenerateVarianceError, DimensionError, InsufficientSamplesError,
)
from transport.measures import TangentField

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """
    Mean field, eigenpairs and truncation level of a fitted model.

    ``components`` holds the r eigenfields as an (r, m, d) array; they are
    orthonormal in L2 of the reference weights.
    """
    mean_field: TangentField
    eigenvalues: np.ndarray
    components: np.ndarray
    K: int
    n0: int

    def __post_init__(self):
        eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        components = np.asarray(self.components, dtype=float)
        if components.shape[0] != eigenvalues.shape[0] or components.shape[1:] != self.mean_field.vectors.shape:
            raise DimensionError(
                f"Components of shape {components.shape} do not fit {eigenvalues.shape[0]} eigenvalues "
                f"on a grid of shape {self.mean_field.vectors.shape}"
            )
        if not 1 <= self.K <= eigenvalues.shape[0]:
            raise ConfigError(f"K must lie in [1, {eigenvalues.shape[0]}], got {self.K}")
        flat = np.sqrt(self.ref_weights)[None, :, None] * components
        object.__setattr__(self, 'eigenvalues', eigenvalues)
        object.__setattr__(self, 'components', components)
        object.__setattr__(self, '_flat', flat.reshape(components.shape[0], -1).T.copy())

    @property
    def ref_weights(self) -> np.ndarray:
        return self.mean_field.ref_weights

    @property
    def rank(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def total_variance(self) -> float:
        return float(self.eigenvalues.sum())

    @property
    def flat_components(self) -> np.ndarray:
        """(m*d, r) matrix of sqrt-weight scaled eigenfields"""
        return self._flat

    def eigenfield(self, index: int) -> TangentField:
        return TangentField(self.components[index], self.ref_weights)

    def with_K(self, K: int) -> 'EigenBasis':
        return replace(self, K=K)


@dataclass(frozen=True)
class ChartStatistics:
    t2: float
    spe: float
    scores: np.ndarray


def _check_grid(field: TangentField, reference: TangentField):
    if field.vectors.shape != reference.vectors.shape:
        raise DimensionError(f"Field shape {field.vectors.shape} does not match grid {reference.vectors.shape}")
    if not np.allclose(field.ref_weights, reference.ref_weights, rtol=0, atol=1e-12):
        raise DimensionError("Fields live on different reference weights")


def weighted_inner(f: TangentField, g: TangentField) -> float:
    """Inner product in L2 of the shared reference weights"""
    _check_grid(f, g)
    return float(f.ref_weights @ np.einsum('ij,ij->i', f.vectors, g.vectors))


def _stack(fields: Sequence[TangentField]) -> np.ndarray:
    first = fields[0]
    for other in fields[1:]:
        _check_grid(other, first)
    return np.stack([field.flatten() for field in fields])


def select_K(basis: EigenBasis, variance_fraction: float) -> int:
    """Smallest K whose leading eigenvalues explain the requested fraction"""
    if not 0 < variance_fraction <= 1:
        raise ConfigError(f"variance_fraction must lie in (0, 1], got {variance_fraction}")
    explained = np.cumsum(basis.eigenvalues) / basis.total_variance
    K = int(np.searchsorted(explained, variance_fraction - 1e-12)) + 1
    return min(K, basis.rank)


def tail_energy(basis: EigenBasis, K: int) -> float:
    """Sum of the eigenvalues beyond the first K"""
    if not 0 <= K <= basis.rank:
        raise ConfigError(f"K must lie in [0, {basis.rank}], got {K}")
    return float(basis.eigenvalues[K:].sum())


def isometry_components(basis: EigenBasis, epsilon: float) -> int:
    """Smallest K whose relative tail energy is at most epsilon squared"""
    if not 0 < epsilon:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    tails = basis.total_variance - np.cumsum(basis.eigenvalues)
    within = np.flatnonzero(tails <= epsilon ** 2 * basis.total_variance + 1e-15)
    # rounding can leave the last tail just above the bound
    return int(within[0]) + 1 if within.size else len(basis.eigenvalues)


def fit_basis(
    fields: Sequence[TangentField],
    n_components: Optional[int] = None,
    variance_fraction: Optional[float] = None,
    eigen_floor: Optional[float] = None,
) -> EigenBasis:
    """Eigendecomposition of the empirical covariance through the n0 x n0 Gram matrix"""
    n0 = len(fields)
    if n0 < 3:
        raise InsufficientSamplesError(f"Functional PCA needs at least 3 fields, got {n0}")
    if variance_fraction is None:
        variance_fraction = getattr(settings, 'IDD_VARIANCE_FRACTION', 0.9)
    if eigen_floor is None:
        eigen_floor = getattr(settings, 'IDD_EIGEN_FLOOR', 1e-10)

    flats = _stack(fields)
    mean_flat = flats.mean(axis=0)
    centered = flats - mean_flat
    reference = fields[0]
    mean_field = TangentField.from_flat(mean_flat, reference.ref_weights, reference.dim)

    gram = centered @ centered.T / (n0 - 1)
    eigenvalues, vectors = np.linalg.eigh(gram)
    eigenvalues, vectors = eigenvalues[::-1], vectors[:, ::-1]
    if not np.any(centered) or eigenvalues[0] <= 0:
        raise DegenerateVarianceError("Calibration tangent fields have zero total variance")

    keep = eigenvalues > eigenvalues[0] * eigen_floor
    rank = min(int(keep.sum()), n0 - 1, centered.shape[1])
    eigenvalues, vectors = eigenvalues[:rank], vectors[:, :rank]

    components_flat = centered.T @ vectors / np.sqrt((n0 - 1) * eigenvalues)
    q, r = np.linalg.qr(components_flat)
    components_flat = q * np.sign(np.diag(r))
    components = (
        components_flat.T.reshape(rank, reference.size, reference.dim)
        / np.sqrt(reference.ref_weights)[None, :, None]
    )

    basis = EigenBasis(mean_field, eigenvalues, components, K=1, n0=n0)
    cap = max(1, min(rank, n0 // 2))
    if n_components is None:
        K = min(select_K(basis, variance_fraction), cap)
    elif n_components > rank:
        logger.warning(f"Requested K={n_components} exceeds rank {rank}; using K={rank}")
        K = rank
    elif n_components < 1:
        raise ConfigError(f"n_components must be at least 1, got {n_components}")
    else:
        K = n_components

    logger.info(f"Fitted tangent basis: n0={n0}, rank={rank}, K={K}, total variance {eigenvalues.sum():.6g}")
    return basis.with_K(K)


def project_scores(basis: EigenBasis, field: TangentField) -> np.ndarray:
    """Scores of the centered field on all r eigenfields"""
    _check_grid(field, basis.mean_field)
    return basis.flat_components.T @ (field.flatten() - basis.mean_field.flatten())


def t2_statistic(basis: EigenBasis, scores: np.ndarray) -> float:
    K = basis.K
    scores = np.asarray(scores, dtype=float)[:K]
    return float(np.sum(scores ** 2 / basis.eigenvalues[:K]))


def spe_statistic(basis: EigenBasis, field: TangentField) -> float:
    """Squared residual of the centered field outside the leading K eigenfields"""
    _check_grid(field, basis.mean_field)
    delta = field.flatten() - basis.mean_field.flatten()
    leading = basis.flat_components[:, :basis.K]
    residual = delta - leading @ (leading.T @ delta)
    return max(float(residual @ residual), 0.0)


def chart_statistics(basis: EigenBasis, field: TangentField) -> ChartStatistics:
    scores = project_scores(basis, field)
    return ChartStatistics(
        t2=t2_statistic(basis, scores),
        spe=spe_statistic(basis, field),
        scores=scores[:basis.K],
    )


def dense_covariance_eigenvalues(fields: Sequence[TangentField], eigen_floor: float = 1e-10) -> np.ndarray:
    """Nonzero eigenvalues of the dense weighted covariance matrix, for small grids"""
    flats = _stack(fields)
    centered = flats - flats.mean(axis=0)
    covariance = centered.T @ centered / (len(fields) - 1)
    eigenvalues = np.linalg.eigvalsh(covariance)[::-1]
    return eigenvalues[eigenvalues > eigenvalues[0] * eigen_floor]
