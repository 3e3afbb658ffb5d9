"""
Shared fixtures and constants for the IDD Monitor test suite
Small seeded measures, tangent fields and stream specs
"""
import numpy as np

from barycenter.services import BarycenterConfig
from detection.services import DetectorConfig
from synthgen.services import StreamSpec
from transport.measures import EmpiricalMeasure, TangentField
from transport.services import OptimalTransportService


# Test constants
TEST_SEED = 20241018

GAUSSIAN_STREAM = {
    'scenario': 'gaussian_shift',
    'dim': 1,
    'sigma': 0.5,
    'delta': 0.5,
    'batch_size': 40,
    'length': 30,
    'change_point': 15,
    'seed': 3,
}

MIXTURE_STREAM = {
    'scenario': 'mm_reweight',
    'dim': 2,
    'batch_size': 30,
    'length': 12,
    'change_point': 6,
    'seed': 5,
}

POISSON_STREAM = {
    'scenario': 'poisson_spike',
    'batch_size': 50,
    'length': 20,
    'change_point': 10,
    'lambda0': 5.0,
    'alpha_mix': 0.05,
    'k_star': 25,
}

ORDINAL_STREAM = {
    'scenario': 'ordinal_drift',
    'batch_size': 80,
    'length': 20,
    'change_point': 10,
}

SMALL_BENCHMARK = {
    'name': 'unit-benchmark',
    'streams': [dict(GAUSSIAN_STREAM, delta=2.0, length=12, change_point=2)],
    'detectors': [{'name': 'hotelling'}],
    'target_arl0': [20],
    'replications': 6,
    'null_replications': 40,
    'calibration_batches': 20,
    'horizon': 200,
    'arl_tolerance': 0.2,
    'seed': 17,
}


class TestDataFactory:
    """
    Factory for seeded measures and fields used across the suite
    """

    @classmethod
    def rng(cls, offset=0):
        return np.random.default_rng(TEST_SEED + offset)

    @classmethod
    def create_measure(cls, n=8, d=2, offset=0, loc=0.0, scale=1.0):
        points = cls.rng(offset).normal(loc=loc, scale=scale, size=(n, d))
        return EmpiricalMeasure.from_points(points)

    @classmethod
    def create_measures(cls, count=6, n=12, d=2, offset=0):
        return [cls.create_measure(n=n, d=d, offset=offset + i) for i in range(count)]

    @classmethod
    def create_fields(cls, count=10, m=5, d=2, offset=0):
        rng = cls.rng(offset)
        weights = rng.dirichlet(np.ones(m))
        return [TangentField(rng.normal(size=(m, d)), weights) for _ in range(count)]

    @classmethod
    def create_spec(cls, **overrides):
        return StreamSpec(**{**GAUSSIAN_STREAM, **overrides})

    @classmethod
    def exact_transport(cls):
        return OptimalTransportService(solver='exact')

    @classmethod
    def small_detector_config(cls, **overrides):
        values = {
            'alpha_t2': 0.1,
            'alpha_spe': 0.1,
            'barycenter': BarycenterConfig(m_atoms=16, tol=1e-4, max_iter=10),
            'solver': OptimalTransportService(solver='exact').snapshot(),
        }
        values.update(overrides)
        return DetectorConfig(**values)
