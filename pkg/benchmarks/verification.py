"""
Oracle and invariant suites run by the verify command
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np

from detection.services import arl_lower_bound, exceedance_probability, order_statistic_index
from mfpca.services import dense_covariance_eigenvalues, fit_basis
from synthgen.services import iman_conover, monotonicity_check, random_deformation
from transport.measures import Coupling, EmpiricalMeasure, TangentField
from transport.services import (
    brute_force_plan, cost_matrix, exact_plan, exact_plan_1d, sinkhorn_plan,
    transport_cost, variance_decomposition, OptimalTransportService,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str = ''


def _uniform(points) -> EmpiricalMeasure:
    return EmpiricalMeasure.from_points(points)


def transport_suite(seed: int = 0, full: bool = False) -> List[CheckResult]:
    """Sinkhorn against exhaustive assignment and the 1-D quantile coupling"""
    rng = np.random.default_rng(seed)
    checks = []

    worst = 0.0
    for _ in range(200 if full else 40):
        n = int(rng.integers(2, 7))
        d = int(rng.integers(1, 4))
        source, target = _uniform(rng.uniform(size=(n, d))), _uniform(rng.uniform(size=(n, d)))
        cost = cost_matrix(source, target)
        exact = transport_cost(brute_force_plan(source, target), cost)
        entropic = transport_cost(sinkhorn_plan(source, target, cost=cost, eps_factor=1e-3), cost)
        worst = max(worst, abs(entropic - exact) / max(exact, 1e-12))
    checks.append(CheckResult('transport', 'sinkhorn_matches_brute_force', worst <= 0.05, f"worst relative gap {worst:.3e}"))

    worst = 0.0
    for _ in range(50 if full else 20):
        source = _uniform(rng.normal(size=(int(rng.integers(3, 12)), 1)))
        target = _uniform(rng.normal(loc=1.0, size=(int(rng.integers(3, 12)), 1)))
        cost = cost_matrix(source, target)
        exact = transport_cost(exact_plan_1d(source, target), cost)
        entropic = transport_cost(sinkhorn_plan(source, target, cost=cost, eps_factor=1e-3), cost)
        worst = max(worst, abs(entropic - exact) / max(exact, 1e-12))
    checks.append(CheckResult('transport', 'sinkhorn_matches_quantile_coupling', worst <= 0.01, f"worst relative gap {worst:.3e}"))

    residual, contraction_ok = 0.0, True
    for _ in range(100 if full else 30):
        n, m, d = (int(v) for v in rng.integers(2, 9, size=3))
        source, target = _uniform(rng.normal(size=(n, d))), _uniform(rng.normal(size=(m, d)))
        plan = rng.uniform(size=(n, m))
        plan /= plan.sum()
        coupling = Coupling(plan, plan.sum(axis=1), plan.sum(axis=0))
        parts = variance_decomposition(coupling, source, target)
        residual = max(residual, abs(parts.residual))
        contraction_ok &= parts.displacement <= parts.transport_cost + 1e-12
    checks.append(CheckResult('transport', 'variance_decomposition', residual <= 1e-10, f"max residual {residual:.3e}"))
    checks.append(CheckResult('transport', 'projection_contraction', bool(contraction_ok)))

    exact_error, sinkhorn_error = 0.0, 0.0
    exact_service = OptimalTransportService(solver='exact')
    entropic_service = OptimalTransportService(solver='sinkhorn', eps_factor=1e-3)
    for _ in range(50 if full else 10):
        d = int(rng.integers(1, 4))
        points = rng.uniform(size=(int(rng.integers(5, 20)), d))
        shift = rng.normal(size=d)
        source, target = _uniform(points), _uniform(points + shift)
        field = exact_service.tangent(source, target)
        exact_error = max(exact_error, float(np.abs(field.vectors - shift).max()),
                          abs(np.sqrt(exact_service.squared_distance(source, target)) - np.linalg.norm(shift)))
        entropic = np.sqrt(entropic_service.squared_distance(source, target))
        sinkhorn_error = max(sinkhorn_error, abs(entropic - np.linalg.norm(shift)) / np.linalg.norm(shift))
    checks.append(CheckResult('transport', 'translation_identity_exact', exact_error <= 1e-6, f"max error {exact_error:.3e}"))
    checks.append(CheckResult('transport', 'translation_identity_sinkhorn', sinkhorn_error <= 0.02,
                              f"max relative error {sinkhorn_error:.3e}"))

    source, target = _uniform(rng.normal(size=(6, 2))), _uniform(rng.normal(size=(6, 2)))
    gap = abs(transport_cost(exact_plan(source, target), cost_matrix(source, target))
              - transport_cost(brute_force_plan(source, target), cost_matrix(source, target)))
    checks.append(CheckResult('transport', 'assignment_matches_brute_force', gap <= 1e-10, f"gap {gap:.3e}"))
    return checks


def mfpca_suite(seed: int = 0, full: bool = False) -> List[CheckResult]:
    """Gram-route eigenvalues against the dense covariance, and orthonormal eigenfields"""
    rng = np.random.default_rng(seed)
    worst_gap, worst_orth = 0.0, 0.0
    for _ in range(20):
        m, d, n0 = int(rng.integers(3, 8)), int(rng.integers(1, 3)), int(rng.integers(5, 15))
        weights = rng.dirichlet(np.ones(m))
        fields = [TangentField(rng.normal(size=(m, d)), weights) for _ in range(n0)]
        basis = fit_basis(fields, variance_fraction=1.0, eigen_floor=1e-12)
        dense = dense_covariance_eigenvalues(fields, eigen_floor=1e-12)[:basis.rank]
        worst_gap = max(worst_gap, float(np.abs(basis.eigenvalues - dense).max()))
        flat = basis.flat_components
        worst_orth = max(worst_orth, float(np.abs(flat.T @ flat - np.eye(basis.rank)).max()))
    return [
        CheckResult('mfpca', 'gram_dense_duality', worst_gap <= 1e-8, f"max eigenvalue gap {worst_gap:.3e}"),
        CheckResult('mfpca', 'orthonormal_eigenfields', worst_orth <= 1e-8, f"max deviation {worst_orth:.3e}"),
    ]


def detector_suite(seed: int = 0, full: bool = False) -> List[CheckResult]:
    """Order-statistic arithmetic of the threshold rule"""
    k = order_statistic_index(100, 0.05)
    probability = exceedance_probability(100, 0.05)
    bound = arl_lower_bound(200, 0.01, 0.01)
    return [
        CheckResult('detector', 'order_statistic_index', k == 95, f"k={k}"),
        CheckResult('detector', 'exceedance_probability', abs(probability - 6 / 101) < 1e-15, f"p={probability:.6f}"),
        CheckResult('detector', 'arl_lower_bound', abs(bound - 234.39) < 0.1, f"bound={bound:.2f}"),
    ]


def synthgen_suite(seed: int = 0, full: bool = False) -> List[CheckResult]:
    """Generator optimality, its negative control, and marginal-preserving reordering"""
    rng = np.random.default_rng(seed)
    n_pairs = 100_000 if full else 5_000
    worst = np.inf
    for index in range(20):
        params = random_deformation(int(rng.integers(1, 4)), rng)
        worst = min(worst, monotonicity_check(params, n_pairs, seed=seed + index).worst_margin)
    angle = 3 * np.pi / 4
    rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    control = monotonicity_check(lambda x: x @ rotation.T, 1_000, seed=seed, dim=2)

    sample = rng.beta(2.0, 5.0, size=(200, 3))
    reordered = iman_conover(sample, 0.6, seed=seed)
    preserved = np.array_equal(np.sort(sample, axis=0), np.sort(reordered, axis=0))
    return [
        CheckResult('synthgen', 'deformations_are_monotone', worst >= -1e-10, f"worst margin {worst:.3e}"),
        CheckResult('synthgen', 'rotation_control_fails', not control.passed, f"worst margin {control.worst_margin:.3e}"),
        CheckResult('synthgen', 'iman_conover_preserves_marginals', bool(preserved)),
    ]


SUITES: Dict[str, Callable[..., List[CheckResult]]] = {
    'transport': transport_suite,
    'mfpca': mfpca_suite,
    'detector': detector_suite,
    'synthgen': synthgen_suite,
}


def run_suites(names: Sequence[str] = None, seed: int = 0, full: bool = False) -> List[CheckResult]:
    results = []
    for name in names or SUITES:
        suite_results = SUITES[name](seed=seed, full=full)
        failed = [check.name for check in suite_results if not check.passed]
        if failed:
            logger.error(f"Suite '{name}' failed checks: {', '.join(failed)}")
        else:
            logger.info(f"Suite '{name}' passed {len(suite_results)} checks")
        results.extend(suite_results)
    return results
