"""
Baseline control charts for IDD Monitor
Hotelling chart on batch means, Poisson c-chart and multinomial max-deviation chart
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from django.conf import settings
from scipy import linalg

from detection.services import (
    ChartDetector, FittedChart, order_statistic_threshold, threshold_ratio,
)
from idd_monitor.exceptions import ConfigError, DegenerateVarianceError, DimensionError, InsufficientSamplesError
from transport.measures import EmpiricalMeasure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChartUpdate:
    t: int
    statistic: float
    alarm: bool
    ratio: float


def _default_alpha() -> float:
    return getattr(settings, 'IDD_ALPHA_T2', 0.01) + getattr(settings, 'IDD_ALPHA_SPE', 0.01)


def _reference(measures, reference):
    measures = list(measures)
    return measures, (list(reference) if reference is not None else measures)


@dataclass(frozen=True, eq=False)
class HotellingMeanModel(FittedChart):
    mean: np.ndarray
    precision: np.ndarray
    threshold: float
    alpha: float
    n0: int

    def statistic(self, measure: EmpiricalMeasure) -> float:
        if measure.dim != self.mean.shape[0]:
            raise DimensionError(f"Batch dimension {measure.dim} does not match chart dimension {self.mean.shape[0]}")
        diff = measure.mean() - self.mean
        return float(diff @ self.precision @ diff)

    def step(self, measure: EmpiricalMeasure, t: int) -> ChartUpdate:
        value = self.statistic(measure)
        return ChartUpdate(t, value, value > self.threshold, threshold_ratio(value, self.threshold))

    def scaled(self, factor: float) -> 'HotellingMeanModel':
        return replace(self, threshold=factor * self.threshold)


class HotellingMeanChart(ChartDetector):
    """Hotelling T2 on batch means with an order-statistic threshold"""
    name = 'hotelling'

    def __init__(self, alpha: Optional[float] = None):
        self.alpha = alpha if alpha is not None else _default_alpha()

    def calibrate(self, measures: Sequence[EmpiricalMeasure],
                  reference: Optional[Sequence[EmpiricalMeasure]] = None) -> HotellingMeanModel:
        measures, reference = _reference(measures, reference)
        n0 = len(measures)
        dim = measures[0].dim
        if n0 < dim + 2:
            raise InsufficientSamplesError(f"Hotelling chart needs at least d + 2 = {dim + 2} batches, got {n0}")

        means = np.array([measure.mean() for measure in measures])
        center = means.mean(axis=0)
        covariance = np.atleast_2d(np.cov(means, rowvar=False))
        total = float(np.trace(covariance))
        scale = np.finfo(float).eps * max(1.0, float(np.abs(means).max()))
        if total <= dim * scale ** 2:
            raise DegenerateVarianceError(f"Batch means of all {n0} calibration batches coincide")
        if np.linalg.matrix_rank(covariance) < dim:
            ridge = 1e-8 * total / dim
            logger.warning(f"Singular covariance of batch means; adding ridge {ridge:.3e}")
            covariance = covariance + ridge * np.eye(dim)
        precision = linalg.inv(covariance)
        precision = (precision + precision.T) / 2

        model = HotellingMeanModel(center, precision, np.inf, self.alpha, n0)
        values = [model.statistic(measure) for measure in reference]
        threshold = order_statistic_threshold(values, self.alpha)
        logger.info(f"Calibrated Hotelling chart on n0={n0} batches, h={threshold:.6g}")
        return replace(model, threshold=threshold)


def batch_count(measure: EmpiricalMeasure) -> float:
    """Total count S_t of a count-valued batch"""
    if measure.n_samples < 1:
        raise DimensionError("Empty batch")
    return float(np.rint(measure.n_samples * measure.mean()[0]))


@dataclass(frozen=True, eq=False)
class CChartModel(FittedChart):
    center: float
    width: float
    n0: int

    @property
    def band(self):
        spread = self.width * np.sqrt(self.center)
        return max(0.0, self.center - spread), self.center + spread

    def statistic(self, measure: EmpiricalMeasure) -> float:
        return batch_count(measure)

    def step(self, measure: EmpiricalMeasure, t: int) -> ChartUpdate:
        total = self.statistic(measure)
        low, high = self.band
        ratio = threshold_ratio(abs(total - self.center), self.width * np.sqrt(self.center))
        return ChartUpdate(t, total, total < low or total > high, ratio)

    def scaled(self, factor: float) -> 'CChartModel':
        return replace(self, width=factor * self.width)


class PoissonCChart(ChartDetector):
    """Shewhart band around the mean batch count"""
    name = 'c_chart'

    def __init__(self, width: float = 3.0):
        self.width = width

    def calibrate(self, measures: Sequence[EmpiricalMeasure],
                  reference: Optional[Sequence[EmpiricalMeasure]] = None) -> CChartModel:
        measures = list(measures)
        if not measures:
            raise InsufficientSamplesError("c-chart needs calibration batches")
        if measures[0].dim != 1:
            raise DimensionError("c-chart needs count-valued (1-D) batches")
        center = float(np.mean([batch_count(measure) for measure in measures]))
        if center <= 0:
            raise ConfigError("Calibration counts are all zero")
        logger.info(f"Calibrated c-chart on {len(measures)} batches, c_bar={center:.6g}")
        return CChartModel(center, self.width, len(measures))


def category_frequencies(measure: EmpiricalMeasure, categories: np.ndarray) -> np.ndarray:
    """Batch frequency of every category; atoms outside the list are ignored"""
    values = measure.support[:, 0]
    hits = values[None, :] == categories[:, None]
    return hits.astype(float) @ measure.weights


@dataclass(frozen=True, eq=False)
class MultinomialModel(FittedChart):
    categories: np.ndarray
    p0: np.ndarray
    active: np.ndarray
    threshold: float
    alpha: float
    n0: int

    def statistic(self, measure: EmpiricalMeasure) -> float:
        if measure.dim != 1:
            raise DimensionError("Multinomial chart needs categorical (1-D) batches")
        p_hat = category_frequencies(measure, self.categories)[self.active]
        p0 = self.p0[self.active]
        z = (p_hat - p0) / np.sqrt(p0 * (1 - p0) / measure.n_samples)
        return float(np.abs(z).max())

    def step(self, measure: EmpiricalMeasure, t: int) -> ChartUpdate:
        value = self.statistic(measure)
        return ChartUpdate(t, value, value > self.threshold, threshold_ratio(value, self.threshold))

    def scaled(self, factor: float) -> 'MultinomialModel':
        return replace(self, threshold=factor * self.threshold)


class MultinomialMaxDeviation(ChartDetector):
    """Largest standardized category deviation from the pre-change law"""
    name = 'multinomial'

    def __init__(self, p0: Optional[Sequence[float]] = None, categories: Optional[Sequence[float]] = None,
                 alpha: Optional[float] = None):
        self.p0 = None if p0 is None else np.asarray(p0, dtype=float)
        self.categories = None if categories is None else np.asarray(categories, dtype=float)
        self.alpha = alpha if alpha is not None else _default_alpha()

    def calibrate(self, measures: Sequence[EmpiricalMeasure],
                  reference: Optional[Sequence[EmpiricalMeasure]] = None) -> MultinomialModel:
        measures, reference = _reference(measures, reference)
        if not measures:
            raise InsufficientSamplesError("Multinomial chart needs calibration batches")
        categories = self.categories
        if categories is None:
            if self.p0 is not None:
                categories = np.arange(1, self.p0.size + 1, dtype=float)
            else:
                categories = np.unique(np.concatenate([measure.support[:, 0] for measure in measures]))
        if self.p0 is not None:
            if self.p0.size != categories.size:
                raise ConfigError("p0 needs one probability per category")
            p0 = self.p0
        else:
            counts = np.array([measure.n_samples for measure in measures], dtype=float)
            frequencies = np.array([category_frequencies(measure, categories) for measure in measures])
            p0 = counts @ frequencies / counts.sum()

        active = (p0 > 0) & (p0 < 1)
        if not np.all(active):
            logger.warning(f"Excluding degenerate categories {categories[~active].tolist()} from the chart")
        if not np.any(active):
            raise ConfigError("Every category has probability 0 or 1")

        model = MultinomialModel(categories, p0, active, np.inf, self.alpha, len(measures))
        values = [model.statistic(measure) for measure in reference]
        threshold = order_statistic_threshold(values, self.alpha)
        logger.info(f"Calibrated multinomial chart on {len(measures)} batches, h={threshold:.6g}")
        return replace(model, threshold=threshold)


def hotelling_mean_chart_calibrate(
    batches: Sequence[EmpiricalMeasure], alpha: Optional[float] = None,
) -> HotellingMeanModel:
    return HotellingMeanChart(alpha).calibrate(batches)


def poisson_c_chart(model: CChartModel, batches: Sequence[EmpiricalMeasure]) -> np.ndarray:
    """Alarm flags of a fitted c-chart over a sequence of batches"""
    return np.array([model.step(batch, t).alarm for t, batch in enumerate(batches, start=1)], dtype=bool)


def multinomial_max_dev(model: MultinomialModel, batches: Sequence[EmpiricalMeasure]) -> np.ndarray:
    return np.array([model.step(batch, t).alarm for t, batch in enumerate(batches, start=1)], dtype=bool)


BASELINES = {
    HotellingMeanChart.name: HotellingMeanChart,
    PoissonCChart.name: PoissonCChart,
    MultinomialMaxDeviation.name: MultinomialMaxDeviation,
}
