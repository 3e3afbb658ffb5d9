"""
Change-point detection services for IDD Monitor
Calibration and online monitoring with the two-chart OR rule
"""
import copy
import logging
import math
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings
from scipy.stats import chi2

from barycenter.services import BarycenterConfig, BarycenterService
from idd_monitor.exceptions import ConfigError, ConvergenceError, DimensionError, InsufficientSamplesError
from mfpca.services import ChartStatistics, EigenBasis, chart_statistics, fit_basis
from transport.measures import EmpiricalMeasure
from transport.services import OptimalTransportService

logger = logging.getLogger(__name__)

THRESHOLD_METHODS = ('empirical', 'chi2')
SPE_FLOOR = 1e-12


class TriggeredBy(Enum):
    """Which chart raised the alarm"""
    NONE = "none"
    T2 = "t2"
    SPE = "spe"
    BOTH = "both"


def order_statistic_index(n: int, alpha: float) -> int:
    """k = ceil((1 - alpha) n), guarded against floating-point noise"""
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    k = math.ceil(round((1 - alpha) * n, 9))
    if not 1 <= k <= n:
        raise ConfigError(f"Order statistic {k} is outside 1..{n} for alpha={alpha}")
    return k


def order_statistic_threshold(values: Sequence[float], alpha: float) -> float:
    """k-th smallest calibration statistic"""
    values = np.sort(np.asarray(values, dtype=float))
    return float(values[order_statistic_index(values.size, alpha) - 1])


def exceedance_probability(n: int, alpha: float) -> float:
    """Chance that an exchangeable fresh statistic exceeds the k-th order statistic"""
    k = order_statistic_index(n, alpha)
    return (n + 1 - k) / (n + 1)


def arl_lower_bound(n0: int, alpha_t2: float, alpha_spe: float) -> float:
    """Finite-sample lower bound on the in-control run length including calibration"""
    for alpha in (alpha_t2, alpha_spe):
        if not 0 < alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    return n0 + 1 + 1.0 / (alpha_t2 + alpha_spe + 2.0 / (n0 + 1))


def threshold_ratio(statistic: float, threshold: float) -> float:
    """statistic / threshold, so that strict exceedance is ratio > 1"""
    if threshold == np.inf:
        return 0.0
    if threshold == -np.inf:
        return np.inf
    if threshold <= 0:
        return np.inf if statistic > threshold else 0.0
    return statistic / threshold


class FittedChart(ABC):
    """A calibrated chart that can score batches one at a time"""

    @abstractmethod
    def step(self, measure: EmpiricalMeasure, t: int):
        """Score one batch; the result carries ``alarm`` and ``ratio``"""

    @abstractmethod
    def scaled(self, factor: float) -> 'FittedChart':
        """Same chart with every threshold multiplied by ``factor``"""

    def exceedance_ratio(self, measure: EmpiricalMeasure, t: int = 0) -> float:
        return self.step(measure, t).ratio


class ChartDetector(ABC):
    """Calibrates a FittedChart from pre-change batches"""
    name = ''

    @abstractmethod
    def calibrate(self, measures: Sequence[EmpiricalMeasure],
                  reference: Optional[Sequence[EmpiricalMeasure]] = None) -> FittedChart:
        pass


@dataclass(frozen=True)
class DetectorConfig:
    alpha_t2: float = 0.01
    alpha_spe: float = 0.01
    n_components: Optional[int] = None
    variance_fraction: float = 0.9
    barycenter: BarycenterConfig = field(default_factory=BarycenterConfig)
    solver: dict = field(default_factory=lambda: OptimalTransportService().snapshot())
    threshold_method: str = 'empirical'
    workers: int = 1

    def __post_init__(self):
        for alpha in (self.alpha_t2, self.alpha_spe):
            if not 0 < alpha < 1:
                raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
        if not 0 < self.variance_fraction <= 1:
            raise ConfigError(f"variance_fraction must lie in (0, 1], got {self.variance_fraction}")
        if self.threshold_method not in THRESHOLD_METHODS:
            raise ConfigError(f"threshold_method must be one of {THRESHOLD_METHODS}")

    @classmethod
    def from_settings(cls, **overrides) -> 'DetectorConfig':
        values = {
            'alpha_t2': getattr(settings, 'IDD_ALPHA_T2', 0.01),
            'alpha_spe': getattr(settings, 'IDD_ALPHA_SPE', 0.01),
            'variance_fraction': getattr(settings, 'IDD_VARIANCE_FRACTION', 0.9),
            'barycenter': BarycenterConfig.from_settings(),
            'solver': OptimalTransportService().snapshot(),
            'workers': getattr(settings, 'IDD_WORKERS', 1),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class MonitorUpdate:
    t: int
    stats: ChartStatistics
    alarm: bool
    triggered_by: TriggeredBy
    ratio: float

    @property
    def t2(self) -> float:
        return self.stats.t2

    @property
    def spe(self) -> float:
        return self.stats.spe


@dataclass(frozen=True, eq=False)
class MonitorModel(FittedChart):
    """Barycenter, eigenbasis and calibrated thresholds of one detector"""
    barycenter: EmpiricalMeasure
    basis: EigenBasis
    thresholds: Tuple[float, float]
    alphas: Tuple[float, float]
    n0: int
    solver: dict
    threshold_method: str = 'empirical'
    calibration_t2: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    calibration_spe: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def __post_init__(self):
        if self.n0 < 3:
            raise InsufficientSamplesError(f"n0 must be at least 3, got {self.n0}")
        object.__setattr__(self, 'thresholds', tuple(float(h) for h in self.thresholds))
        object.__setattr__(self, 'alphas', tuple(float(a) for a in self.alphas))
        for h in self.thresholds:
            if not (math.isfinite(h) and h > 0):
                raise ConfigError(f"Thresholds must be finite and positive, got {self.thresholds}")
        for alpha in self.alphas:
            if not 0 < alpha < 1:
                raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
        object.__setattr__(self, '_transport', OptimalTransportService.from_snapshot(self.solver))

    @property
    def dim(self) -> int:
        return self.barycenter.dim

    @property
    def transport(self) -> OptimalTransportService:
        return self._transport

    def with_thresholds(self, h_t2: float, h_spe: float) -> 'MonitorModel':
        """Copy with the thresholds overridden unchecked; +inf never alarms, -inf alarms at once"""
        model = copy.copy(self)
        object.__setattr__(model, 'thresholds', (float(h_t2), float(h_spe)))
        return model

    def scaled(self, factor: float) -> 'MonitorModel':
        h_t2, h_spe = self.thresholds
        return replace(self, thresholds=(factor * h_t2, factor * h_spe))

    def statistics(self, measure: EmpiricalMeasure) -> ChartStatistics:
        if measure.dim != self.dim:
            raise DimensionError(f"Batch dimension {measure.dim} does not match model dimension {self.dim}")
        return chart_statistics(self.basis, self.transport.tangent(self.barycenter, measure))

    def step(self, measure: EmpiricalMeasure, t: int) -> MonitorUpdate:
        try:
            stats = self.statistics(measure)
        except ConvergenceError as exc:
            raise exc.at_time(t) from exc
        return self.decide(stats, t)

    def decide(self, stats: ChartStatistics, t: int) -> MonitorUpdate:
        h_t2, h_spe = self.thresholds
        over_t2 = stats.t2 > h_t2
        over_spe = stats.spe > h_spe
        if over_t2 and over_spe:
            triggered = TriggeredBy.BOTH
        elif over_t2:
            triggered = TriggeredBy.T2
        elif over_spe:
            triggered = TriggeredBy.SPE
        else:
            triggered = TriggeredBy.NONE
        ratio = max(threshold_ratio(stats.t2, h_t2), threshold_ratio(stats.spe, h_spe))
        return MonitorUpdate(t, stats, over_t2 or over_spe, triggered, ratio)


class IDDDetector(ChartDetector):
    """Intrinsic detector: barycenter tangent fields monitored by T2 and SPE charts"""
    name = 'idd'

    def __init__(self, config: Optional[DetectorConfig] = None):
        self.config = config or DetectorConfig.from_settings()
        self.transport = OptimalTransportService.from_snapshot(self.config.solver)

    def _fields(self, barycenter, measures):
        if self.config.workers > 1 and len(measures) > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                return list(pool.map(lambda measure: self.transport.tangent(barycenter, measure), measures))
        return [self.transport.tangent(barycenter, measure) for measure in measures]

    def calibrate(self, measures: Sequence[EmpiricalMeasure],
                  reference: Optional[Sequence[EmpiricalMeasure]] = None) -> MonitorModel:
        """
        Fit barycenter and eigenbasis on ``measures`` and set both thresholds
        at the order statistic k = ceil((1 - alpha) n) of the reference
        statistics. Without ``reference`` the statistics are in-sample.
        """
        measures = list(measures)
        n0 = len(measures)
        if n0 < 3:
            raise InsufficientSamplesError(f"Calibration needs at least 3 batches, got {n0}")
        config = self.config

        barycenter = BarycenterService(config.barycenter, self.transport, config.workers).fit(measures).measure
        fields = self._fields(barycenter, measures)
        basis = fit_basis(fields, n_components=config.n_components, variance_fraction=config.variance_fraction)

        if reference is not None:
            reference = list(reference)
            if len(reference) < 3:
                raise InsufficientSamplesError(f"Reference sample needs at least 3 batches, got {len(reference)}")
            fields = self._fields(barycenter, reference)
        stats = [chart_statistics(basis, tangent) for tangent in fields]
        t2_values = np.array([s.t2 for s in stats])
        spe_values = np.array([s.spe for s in stats])

        if config.threshold_method == 'chi2':
            h_t2 = float(chi2.ppf(1 - config.alpha_t2, basis.K))
        else:
            h_t2 = order_statistic_threshold(t2_values, config.alpha_t2)
        # in-span calibration residuals are pure rounding noise when K = r
        h_spe = max(order_statistic_threshold(spe_values, config.alpha_spe), SPE_FLOOR * basis.total_variance)

        logger.info(
            f"Calibrated IDD detector on n0={n0} batches: K={basis.K}, "
            f"h_t2={h_t2:.6g}, h_spe={h_spe:.6g}"
        )
        return MonitorModel(
            barycenter=barycenter,
            basis=basis,
            thresholds=(h_t2, h_spe),
            alphas=(config.alpha_t2, config.alpha_spe),
            n0=n0,
            solver=dict(config.solver),
            threshold_method=config.threshold_method,
            calibration_t2=t2_values,
            calibration_spe=spe_values,
        )


def calibrate(measures: Sequence[EmpiricalMeasure], config: Optional[DetectorConfig] = None,
              reference: Optional[Sequence[EmpiricalMeasure]] = None) -> MonitorModel:
    return IDDDetector(config).calibrate(measures, reference=reference)


def step(model: FittedChart, measure: EmpiricalMeasure, t: int):
    return model.step(measure, t)


@dataclass(frozen=True)
class RunLengthResult:
    """First alarm index counted from the first monitoring batch, or censoring"""
    tau: Optional[int]
    censored: bool
    horizon: int

    @property
    def observed(self) -> int:
        """tau, or the number of batches seen when censored"""
        return self.tau if not self.censored else self.horizon


def run_length(model: FittedChart, stream: Iterable[EmpiricalMeasure], horizon: int) -> RunLengthResult:
    if horizon < 1:
        raise ConfigError(f"Horizon must be at least 1, got {horizon}")
    seen = 0
    for t, measure in enumerate(stream, start=1):
        seen = t
        if model.step(measure, t).alarm:
            return RunLengthResult(tau=t, censored=False, horizon=horizon)
        if t >= horizon:
            break
    return RunLengthResult(tau=None, censored=True, horizon=seen)


class MonitorSession:
    """
    Sequential state of one monitored stream.

    In 'benchmark' mode the session stops at the first alarm; in
    'monitoring' mode it keeps flagging without refitting.
    """
    MODES = ('benchmark', 'monitoring')

    def __init__(self, model: FittedChart, mode: str = 'monitoring'):
        if mode not in self.MODES:
            raise ConfigError(f"mode must be one of {self.MODES}")
        self.model = model
        self.mode = mode
        self.t = 0
        self.first_alarm = None
        self.alarm_count = 0

    @property
    def stopped(self) -> bool:
        return self.mode == 'benchmark' and self.first_alarm is not None

    def update(self, measure: EmpiricalMeasure, t: Optional[int] = None):
        if self.stopped:
            return None
        self.t = t if t is not None else self.t + 1
        result = self.model.step(measure, self.t)
        if result.alarm:
            self.alarm_count += 1
            if self.first_alarm is None:
                self.first_alarm = self.t
        return result
