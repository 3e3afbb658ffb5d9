"""
Barycenter services for IDD Monitor
Free-support Frechet barycenter of the pre-change calibration measures
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import ot
from django.conf import settings

from idd_monitor.exceptions import ConfigError, DimensionError, EmptyInputError
from transport.measures import EmpiricalMeasure
from transport.services import (
    OptimalTransportService, barycentric_projection, cost_matrix, transport_cost,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BarycenterConfig:
    """Fixed-point iteration settings"""
    m_atoms: int = 128
    tol: float = 1e-5
    max_iter: int = 50
    init_seed: int = 0

    def __post_init__(self):
        if self.m_atoms < 2:
            raise ConfigError(f"m_atoms must be at least 2, got {self.m_atoms}")
        if self.tol <= 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be at least 1, got {self.max_iter}")

    @classmethod
    def from_settings(cls, **overrides) -> 'BarycenterConfig':
        values = {
            'm_atoms': getattr(settings, 'IDD_BARYCENTER_ATOMS', 128),
            'tol': getattr(settings, 'IDD_BARYCENTER_TOL', 1e-5),
            'max_iter': getattr(settings, 'IDD_BARYCENTER_MAX_ITER', 50),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class BarycenterResult:
    """Best iterate of the fixed-point iteration"""
    measure: EmpiricalMeasure
    functional_value: float
    history: List[float] = field(default_factory=list)
    n_iterations: int = 0
    converged: bool = False


def _check_measures(measures: Sequence[EmpiricalMeasure]):
    if len(measures) == 0:
        raise EmptyInputError("Barycenter needs at least one measure")
    dims = {measure.dim for measure in measures}
    if len(dims) != 1:
        raise DimensionError(f"Measures have mixed dimensions {sorted(dims)}")


def frechet_functional(
    candidate: EmpiricalMeasure,
    measures: Sequence[EmpiricalMeasure],
    transport: Optional[OptimalTransportService] = None,
) -> float:
    """Average squared W2 distance from the candidate to the measures"""
    _check_measures(measures)
    transport = transport or OptimalTransportService()
    return float(np.mean([transport.squared_distance(candidate, measure) for measure in measures]))


class BarycenterService:
    """Free-support barycenter: POT network simplex iteration, or averaged barycentric projections"""

    def __init__(self, config: Optional[BarycenterConfig] = None,
                 transport: Optional[OptimalTransportService] = None, workers: Optional[int] = None):
        self.config = config or BarycenterConfig.from_settings()
        self.transport = transport or OptimalTransportService()
        self.workers = workers or getattr(settings, 'IDD_WORKERS', 1)

    def initial_support(self, measures: Sequence[EmpiricalMeasure]) -> np.ndarray:
        """Seeded subsample of the distinct pooled points, independent of measure order"""
        pooled = np.unique(np.vstack([measure.support for measure in measures]), axis=0)
        m = min(self.config.m_atoms, pooled.shape[0])
        rng = np.random.default_rng(self.config.init_seed)
        chosen = np.sort(rng.choice(pooled.shape[0], size=m, replace=False))
        return pooled[chosen]

    def _project(self, candidate: EmpiricalMeasure, measure: EmpiricalMeasure):
        cost = cost_matrix(candidate, measure)
        coupling = self.transport.plan(candidate, measure, cost)
        return barycentric_projection(coupling, measure), transport_cost(coupling, cost)

    def _project_all(self, candidate, measures):
        if self.workers > 1 and len(measures) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                return list(pool.map(lambda measure: self._project(candidate, measure), measures))
        return [self._project(candidate, measure) for measure in measures]

    def fit(self, measures: Sequence[EmpiricalMeasure]) -> BarycenterResult:
        _check_measures(measures)
        candidate = EmpiricalMeasure(self.initial_support(measures))
        if self.transport.solver == 'exact' and candidate.dim > 1:
            return self._fit_network_simplex(measures, candidate)
        return self._fit_fixed_point(measures, candidate)

    def _fit_network_simplex(self, measures, candidate) -> BarycenterResult:
        """
        POT's exact free-support iteration. Each step is a block descent on
        the functional, so the last iterate is the best one; ``tol`` bounds
        the squared displacement of the atoms between steps.
        """
        support, log = ot.lp.free_support_barycenter(
            [measure.support for measure in measures],
            [measure.weights for measure in measures],
            candidate.support,
            b=candidate.weights,
            numItermax=self.config.max_iter,
            stopThr=self.config.tol,
            log=True,
            numThreads=self.workers,
        )
        displacements = log['displacement_square_norms']
        result = EmpiricalMeasure(np.asarray(support), candidate.weights)
        value = float(np.mean([cost for _, cost in self._project_all(result, measures)]))
        converged = bool(displacements) and float(displacements[-1]) <= self.config.tol
        logger.info(
            f"Barycenter with {result.size} atoms after {len(displacements)} network-simplex iterations, "
            f"functional {value:.6g} (converged={converged})"
        )
        return BarycenterResult(result, value, [value], len(displacements), converged)

    def _fit_fixed_point(self, measures, candidate) -> BarycenterResult:
        best, best_value = candidate, np.inf
        history = []
        previous = None
        converged = False
        n_iterations = 0

        for n_iterations in range(1, self.config.max_iter + 1):
            results = self._project_all(candidate, measures)
            value = float(np.mean([cost for _, cost in results]))
            if value < best_value:
                best, best_value = candidate, value
            history.append(best_value)

            if previous is not None and (previous - value) <= self.config.tol * max(previous, np.finfo(float).tiny):
                converged = True
                break
            if value == 0.0:
                converged = True
                break
            previous = value

            support = np.mean([projection for projection, _ in results], axis=0)
            candidate = EmpiricalMeasure(support, candidate.weights)

        logger.info(
            f"Barycenter with {best.size} atoms after {n_iterations} iterations, "
            f"functional {best_value:.6g} (converged={converged})"
        )
        return BarycenterResult(best, best_value, history, n_iterations, converged)


def fit_barycenter(measures: Sequence[EmpiricalMeasure], config: Optional[BarycenterConfig] = None,
                   transport: Optional[OptimalTransportService] = None) -> BarycenterResult:
    return BarycenterService(config, transport).fit(measures)
