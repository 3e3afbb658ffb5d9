"""
Optimal transport services for IDD Monitor
Cost matrices, entropic and exact solvers, barycentric projections and tangent fields
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import ot
from django.conf import settings

from idd_monitor.exceptions import (
    ConfigError, ConvergenceError, DegenerateRowError, DimensionError, OracleSizeError,
)
from .measures import Coupling, EmpiricalMeasure, TangentField

logger = logging.getLogger(__name__)

SOLVERS = ('sinkhorn', 'exact')
BRUTE_FORCE_LIMIT = 8
EMD_MAX_ITER = 1_000_000


def cost_matrix(source: EmpiricalMeasure, target: EmpiricalMeasure) -> np.ndarray:
    """Squared Euclidean distances between the supports"""
    if source.dim != target.dim:
        raise DimensionError(f"Dimension mismatch: {source.dim} vs {target.dim}")
    return ot.dist(source.support, target.support, metric='sqeuclidean')


def default_epsilon(cost: np.ndarray, eps_factor: float = 5e-3) -> float:
    """eps_factor times the median nonzero cost"""
    nonzero = cost[cost > 0]
    scale = float(np.median(nonzero)) if nonzero.size else 1.0
    return eps_factor * scale


def sinkhorn_plan(
    source: EmpiricalMeasure,
    target: EmpiricalMeasure,
    eps: Optional[float] = None,
    tol: float = 1e-7,
    max_iter: int = 10000,
    cost: Optional[np.ndarray] = None,
    eps_factor: float = 5e-3,
) -> Coupling:
    """
    Entropic transport plan from POT's log-domain Sinkhorn.

    The regularization is annealed geometrically from the cost scale down to
    ``eps``; each stage warm-starts the next with its rescaled dual
    potentials. Only the final stage is bound by ``max_iter`` and must reach
    ``tol`` on the marginals.
    """
    if cost is None:
        cost = cost_matrix(source, target)
    elif cost.shape != (source.size, target.size):
        raise DimensionError(f"Cost shape {cost.shape} does not match measures")
    if eps is None:
        eps = default_epsilon(cost, eps_factor)
    if eps <= 0:
        raise ConfigError(f"Regularization must be positive, got {eps}")

    cost = np.ascontiguousarray(cost, dtype=float)
    potentials, previous_eps = None, None
    plan = None
    for stage_eps in _epsilon_ladder(cost, eps):
        final = stage_eps == eps
        warmstart = None
        if potentials is not None:
            # log scalings are potentials over eps
            warmstart = tuple(p * (previous_eps / stage_eps) for p in potentials)
        plan, log = ot.sinkhorn(
            source.weights, target.weights, cost, stage_eps,
            method='sinkhorn_log',
            numItermax=max_iter if final else 100,
            stopThr=tol if final else max(tol, 1e-3),
            log=True, warn=False, warmstart=warmstart,
        )
        potentials, previous_eps = (log['log_u'], log['log_v']), stage_eps

    coupling = Coupling(plan, source.weights, target.weights, regularization=eps)
    violation = coupling.marginal_violation
    if not np.isfinite(violation) or violation > tol:
        raise ConvergenceError(
            f"Sinkhorn did not converge in {max_iter} iterations "
            f"(marginal violation {violation:.3e}, eps {eps:.3e})",
            violation,
        )
    return coupling


def _epsilon_ladder(cost: np.ndarray, eps: float):
    start = max(float(cost.max()), eps)
    ladder = []
    current = start
    while current > 2 * eps:
        ladder.append(current)
        current /= 4.0
    ladder.append(eps)
    return ladder


def exact_plan_1d(source: EmpiricalMeasure, target: EmpiricalMeasure) -> Coupling:
    """North-west-corner coupling of the value-sorted supports"""
    if source.dim != 1 or target.dim != 1:
        raise DimensionError(f"exact_plan_1d needs d = 1, got {source.dim} and {target.dim}")
    plan = ot.emd_1d(
        source.support[:, 0], target.support[:, 0], source.weights, target.weights,
        metric='sqeuclidean', dense=True,
    )
    return Coupling(np.asarray(plan), source.weights, target.weights, regularization=0.0)


def brute_force_plan(source: EmpiricalMeasure, target: EmpiricalMeasure) -> Coupling:
    """
    Optimal assignment by exhaustive permutation search.

    Ties are broken towards the lexicographically smallest permutation.
    """
    n = source.size
    if n > BRUTE_FORCE_LIMIT or target.size > BRUTE_FORCE_LIMIT:
        raise OracleSizeError(f"Brute force is limited to {BRUTE_FORCE_LIMIT} atoms, got {n}")
    if target.size != n:
        raise DimensionError(f"Brute force needs equal sizes, got {n} and {target.size}")
    uniform = np.full(n, 1.0 / n)
    if not (np.allclose(source.weights, uniform, atol=1e-12) and np.allclose(target.weights, uniform, atol=1e-12)):
        raise ConfigError("Brute force needs equal-weight measures")

    cost = cost_matrix(source, target)
    perms = np.array(list(itertools.permutations(range(n))))
    totals = cost[np.arange(n), perms].sum(axis=1)
    best = totals.min()
    chosen = perms[np.flatnonzero(totals <= best + 1e-12 * max(1.0, best))[0]]

    plan = np.zeros((n, n))
    plan[np.arange(n), chosen] = 1.0 / n
    return Coupling(plan, source.weights, target.weights, regularization=0.0)


def exact_plan(source: EmpiricalMeasure, target: EmpiricalMeasure, cost: Optional[np.ndarray] = None) -> Coupling:
    """Unregularized optimal plan: quantile coupling in d = 1, network simplex otherwise"""
    if source.dim == 1 and target.dim == 1:
        return exact_plan_1d(source, target)
    if cost is None:
        cost = cost_matrix(source, target)

    plan, log = ot.emd(
        source.weights, target.weights, np.ascontiguousarray(cost, dtype=float),
        numItermax=EMD_MAX_ITER, log=True,
    )
    if log.get('warning'):
        raise ConvergenceError(f"Network simplex failed: {log['warning']}", violation=np.inf)
    return Coupling(plan, source.weights, target.weights, regularization=0.0)


def transport_cost(coupling: Coupling, cost: np.ndarray) -> float:
    """Sum of plan times cost"""
    if coupling.shape != np.shape(cost):
        raise DimensionError(f"Plan shape {coupling.shape} does not match cost shape {np.shape(cost)}")
    return float(np.sum(coupling.plan * cost))


def w2(coupling: Coupling, cost: np.ndarray) -> float:
    return float(np.sqrt(max(transport_cost(coupling, cost), 0.0)))


def barycentric_projection(coupling: Coupling, target: EmpiricalMeasure) -> np.ndarray:
    """Conditional mean of the plan for every source atom"""
    if coupling.shape[1] != target.size:
        raise DimensionError(f"Plan has {coupling.shape[1]} columns for {target.size} target atoms")
    mass = coupling.row_mass
    empty = np.flatnonzero(mass <= np.finfo(float).tiny)
    if empty.size:
        raise DegenerateRowError(f"Rows without mass: {empty[:10].tolist()}")
    return (coupling.plan @ target.support) / mass[:, None]


def tangent_field(projection: np.ndarray, source: EmpiricalMeasure) -> TangentField:
    """Displacement from each source atom to its projection"""
    projection = np.asarray(projection, dtype=float)
    if projection.ndim == 1:
        projection = projection.reshape(-1, 1)
    if projection.shape != source.support.shape:
        raise DimensionError(f"Projection shape {projection.shape} does not match support {source.support.shape}")
    return TangentField(projection - source.support, source.weights)


@dataclass(frozen=True)
class VarianceDecomposition:
    """Split of a plan's transport cost into displacement energy and conditional spread"""
    displacement: float
    transport_cost: float
    conditional_spread: float

    @property
    def residual(self) -> float:
        return self.transport_cost - self.conditional_spread - self.displacement


def variance_decomposition(
    coupling: Coupling, source: EmpiricalMeasure, target: EmpiricalMeasure,
) -> VarianceDecomposition:
    """Displacement energy is weighted by the plan's row masses"""
    projection = barycentric_projection(coupling, target)
    displacement = coupling.row_mass @ np.sum((source.support - projection) ** 2, axis=1)
    spread = np.sum(coupling.plan * ot.dist(projection, target.support, metric='sqeuclidean'))
    total = transport_cost(coupling, cost_matrix(source, target))
    return VarianceDecomposition(float(displacement), total, float(spread))


class OptimalTransportService:
    """Dispatches plan computations to the configured solver"""

    def __init__(self, solver=None, eps_factor=None, marginal_tol=None, max_iter=None):
        self.solver = solver or getattr(settings, 'IDD_OT_SOLVER', 'sinkhorn')
        self.eps_factor = eps_factor if eps_factor is not None else getattr(settings, 'IDD_SINKHORN_EPS_FACTOR', 5e-3)
        self.marginal_tol = marginal_tol if marginal_tol is not None else getattr(settings, 'IDD_MARGINAL_TOL', 1e-7)
        self.max_iter = max_iter if max_iter is not None else getattr(settings, 'IDD_SINKHORN_MAX_ITER', 10000)
        if self.solver not in SOLVERS:
            raise ConfigError(f"Unknown solver '{self.solver}', expected one of {SOLVERS}")

    @classmethod
    def from_snapshot(cls, snapshot: dict) -> 'OptimalTransportService':
        return cls(**snapshot)

    def snapshot(self) -> dict:
        return {
            'solver': self.solver,
            'eps_factor': float(self.eps_factor),
            'marginal_tol': float(self.marginal_tol),
            'max_iter': int(self.max_iter),
        }

    def plan(self, source: EmpiricalMeasure, target: EmpiricalMeasure, cost: Optional[np.ndarray] = None) -> Coupling:
        """Exact quantile coupling in d = 1 whatever the solver, else the configured solver"""
        if source.dim == 1 and target.dim == 1:
            return exact_plan_1d(source, target)
        if cost is None:
            cost = cost_matrix(source, target)
        if self.solver == 'exact':
            return exact_plan(source, target, cost)
        return sinkhorn_plan(
            source, target, cost=cost, tol=self.marginal_tol,
            max_iter=self.max_iter, eps_factor=self.eps_factor,
        )

    def squared_distance(self, source: EmpiricalMeasure, target: EmpiricalMeasure) -> float:
        cost = cost_matrix(source, target)
        return transport_cost(self.plan(source, target, cost), cost)

    def tangent(self, reference: EmpiricalMeasure, measure: EmpiricalMeasure) -> TangentField:
        """Tangent field of ``measure`` at ``reference``"""
        coupling = self.plan(reference, measure)
        return tangent_field(barycentric_projection(coupling, measure), reference)
