"""
Benchmark services for IDD Monitor
Monte-Carlo run-length engine: matched-ARL0 thresholds, ARL1, detection rates and trade-off curves
"""
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from django.conf import settings

from barycenter.services import BarycenterConfig
from baselines.services import HotellingMeanChart, MultinomialMaxDeviation, PoissonCChart
from detection.persistence import load_model, save_model
from detection.services import ChartDetector, DetectorConfig, FittedChart, IDDDetector, MonitorModel, MonitorSession
from detection.streams import AlarmWriter, read_stream
from idd_monitor.exceptions import BenchmarkPointError, ConfigError, IDDError
from synthgen.services import StreamSpec, SyntheticStream
from transport.services import OptimalTransportService

logger = logging.getLogger(__name__)

# spawn-key purposes of a replication seed
STREAM_PURPOSE = 0

CELL_COLUMNS = [
    'schema_version', 'stream', 'detector', 'target_arl0', 'matched', 'threshold_scale',
    'arl0', 'arl0_se', 'arl0_censored', 'n_null', 'arl1', 'arl1_se', 'detection_rate',
    'censored_miss_rate', 'false_alarm_rate', 'n_replications', 'n_detected', 'n_false_alarms',
    'n_censored', 'bisection_steps', 'wall_clock_seconds', 'error',
]
TRADEOFF_COLUMNS = [
    'schema_version', 'stream', 'detector', 'target_arl0', 'threshold_scale',
    'arl0', 'arl1', 'detection_rate', 'false_alarm_rate',
]


def replication_seed(master_seed: int, replication: int, purpose: int = STREAM_PURPOSE,
                     stream_index: int = 0) -> int:
    """Counter-based seed: the same (master, stream, replication, purpose) always gives the same stream"""
    sequence = np.random.SeedSequence(master_seed, spawn_key=(stream_index, replication, purpose))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def stream_label(spec: StreamSpec, index: int) -> str:
    return f"{index}:{spec.scenario}"


def standard_error(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.size))


class RatioPath:
    """
    Exceedance ratios of one fitted chart along one stream, computed lazily.

    A chart scaled by s alarms at t exactly when ratio_t > s, so one path
    answers the run length at every threshold scale.
    """

    def __init__(self, chart: FittedChart, stream: SyntheticStream, phase: str, limit: int):
        self.chart = chart
        self.stream = stream
        self.phase = phase
        self.limit = limit
        self._running_max: List[float] = []

    def __len__(self):
        return len(self._running_max)

    def _extend(self):
        t = len(self._running_max) + 1
        ratio = self.chart.exceedance_ratio(self.stream.batch(t, self.phase), t)
        previous = self._running_max[-1] if self._running_max else -np.inf
        self._running_max.append(max(previous, float(ratio)))

    def first_exceedance(self, scale: float, horizon: Optional[int] = None) -> Optional[int]:
        """First t <= horizon with ratio_t > scale, or None when censored"""
        horizon = min(horizon or self.limit, self.limit)
        index = int(np.searchsorted(self._running_max, scale, side='right'))
        if index < len(self._running_max):
            return index + 1 if index < horizon else None
        while len(self._running_max) < horizon:
            self._extend()
            if self._running_max[-1] > scale:
                return len(self._running_max)
        return None


@dataclass
class Replication:
    index: int
    seed: int
    null_path: Optional[RatioPath]
    changed_path: Optional[RatioPath]


@dataclass
class TradeoffPoint:
    threshold_scale: float
    arl0: float
    arl1: Optional[float]
    detection_rate: Optional[float]
    false_alarm_rate: Optional[float]


@dataclass
class CellResult:
    """One (stream, detector, target ARL0) point of a benchmark"""
    stream: str
    detector: str
    target_arl0: float
    matched: bool = False
    threshold_scale: Optional[float] = None
    arl0: Optional[float] = None
    arl0_se: Optional[float] = None
    arl0_censored: int = 0
    n_null: int = 0
    arl1: Optional[float] = None
    arl1_se: Optional[float] = None
    detection_rate: Optional[float] = None
    censored_miss_rate: Optional[float] = None
    false_alarm_rate: Optional[float] = None
    n_replications: int = 0
    n_detected: int = 0
    n_false_alarms: int = 0
    n_censored: int = 0
    bisection_steps: int = 0
    wall_clock_seconds: float = 0.0
    error: Optional[str] = None
    tradeoff: List[TradeoffPoint] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class BenchmarkReport:
    name: str
    master_seed: int
    config: dict
    cells: List[CellResult]
    schema_version: int = 1
    wall_clock_seconds: float = 0.0

    @property
    def failed_points(self) -> List[CellResult]:
        return [cell for cell in self.cells if cell.failed]

    def to_dict(self) -> dict:
        return {
            'schema_version': self.schema_version,
            'name': self.name,
            'master_seed': self.master_seed,
            'config': self.config,
            'wall_clock_seconds': self.wall_clock_seconds,
            'failed_points': len(self.failed_points),
            'cells': [asdict(cell) for cell in self.cells],
        }

    def cells_frame(self) -> pd.DataFrame:
        rows = [{**asdict(cell), 'schema_version': self.schema_version} for cell in self.cells]
        return pd.DataFrame(rows, columns=CELL_COLUMNS)

    def tradeoff_frame(self) -> pd.DataFrame:
        rows = [
            {
                'schema_version': self.schema_version, 'stream': cell.stream, 'detector': cell.detector,
                'target_arl0': cell.target_arl0, **asdict(point),
            }
            for cell in self.cells for point in cell.tradeoff
        ]
        return pd.DataFrame(rows, columns=TRADEOFF_COLUMNS)

    def write(self, report_path=None, csv_path=None, tradeoff_path=None):
        if report_path:
            Path(report_path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + '\n', encoding='utf-8')
        if csv_path:
            self.cells_frame().to_csv(csv_path, index=False)
        if tradeoff_path:
            self.tradeoff_frame().to_csv(tradeoff_path, index=False)


def build_detector(entry: dict, spec: StreamSpec, workers: int = 1) -> ChartDetector:
    """Detector instance for one config entry; discrete baselines read category info from the spec"""
    name, params = entry['name'], entry.get('params', {})
    if name == 'idd':
        transport = OptimalTransportService(
            solver=params.get('solver'), eps_factor=params.get('eps_factor'),
            marginal_tol=params.get('marginal_tol'), max_iter=params.get('max_iter'),
        )
        config = DetectorConfig.from_settings(
            alpha_t2=params.get('alpha_t2'),
            alpha_spe=params.get('alpha_spe'),
            n_components=params.get('n_components'),
            variance_fraction=params.get('variance_fraction'),
            threshold_method=params.get('threshold_method'),
            barycenter=BarycenterConfig.from_settings(
                m_atoms=params.get('m_atoms'), tol=params.get('barycenter_tol'),
                max_iter=params.get('barycenter_max_iter'),
            ),
            solver=transport.snapshot(),
            workers=workers,
        )
        return IDDDetector(config)
    if name == 'hotelling':
        return HotellingMeanChart(alpha=params.get('alpha'))
    if name == 'c_chart':
        return PoissonCChart(width=params.get('width', 3.0))
    if name == 'multinomial':
        p0 = params.get('p0')
        categories = None
        if p0 is None and spec.scenario == 'ordinal_drift':
            categories = np.arange(1, spec.n_categories + 1, dtype=float)
        return MultinomialMaxDeviation(p0=p0, categories=categories, alpha=params.get('alpha'))
    raise ConfigError(f"Unknown detector '{name}'")


class BenchmarkService:
    """
    Runs every (stream, detector, target ARL0) cell of a validated benchmark config.

    Each replication calibrates its own chart on fresh pre-change batches,
    then scores an independent null stream (for ARL0) and the monitored
    stream with its change after ``change_point`` (for ARL1).
    """

    def __init__(self, config: dict):
        self.config = config
        self.master_seed = config.get('seed', 0)
        self.threads = config.get('threads', 1)
        tolerance = config.get('arl_tolerance')
        self.tolerance = tolerance if tolerance is not None else getattr(settings, 'IDD_ARL_MATCH_TOL', 0.05)
        self.max_steps = getattr(settings, 'IDD_BISECTION_STEPS', 40)
        self.schema_version = getattr(settings, 'IDD_REPORT_SCHEMA_VERSION', 1)

    def horizon(self, target: float) -> int:
        if self.config.get('horizon'):
            return int(self.config['horizon'])
        return int(math.ceil(self.config.get('horizon_factor', 10.0) * target))

    def run(self) -> BenchmarkReport:
        started = time.perf_counter()
        cells = []
        for index, payload in enumerate(self.config['streams']):
            spec = payload['spec'] if isinstance(payload, dict) and 'spec' in payload else payload
            for entry in self.config['detectors']:
                for target in sorted(self.config['target_arl0']):
                    cells.append(self.run_cell(index, spec, entry, target))
        report = BenchmarkReport(
            name=self.config.get('name', 'benchmark'),
            master_seed=self.master_seed,
            config=serializable_config(self.config),
            cells=cells,
            schema_version=self.schema_version,
            wall_clock_seconds=time.perf_counter() - started,
        )
        if report.failed_points:
            logger.error(f"Benchmark '{report.name}' finished with {len(report.failed_points)} failed points")
        else:
            logger.info(f"Benchmark '{report.name}' finished: {len(cells)} points in {report.wall_clock_seconds:.1f}s")
        return report

    def _replication(self, index: int, spec: StreamSpec, entry: dict, stream_index: int, horizon: int,
                     n_changed: int, n_null: int) -> Replication:
        seed = replication_seed(self.master_seed, index, STREAM_PURPOSE, stream_index)
        stream = SyntheticStream(spec, seed)
        detector = build_detector(entry, spec)
        n0 = self.config.get('calibration_batches', 100)
        holdout = self.config.get('holdout_batches', 0)
        reference = stream.null_batches(holdout, 'holdout') if holdout else None
        chart = detector.calibrate(stream.null_batches(n0, 'calibration'), reference=reference)

        null_path = RatioPath(chart, stream, 'null', horizon) if index < n_null else None
        changed_path = RatioPath(chart, stream, 'monitor', spec.length) if index < n_changed else None
        if null_path is not None:
            null_path.first_exceedance(1.0)
        if changed_path is not None:
            changed_path.first_exceedance(1.0)
        return Replication(index, seed, null_path, changed_path)

    def run_cell(self, stream_index: int, spec: StreamSpec, entry: dict, target: float) -> CellResult:
        started = time.perf_counter()
        label = entry.get('label', entry['name'])
        cell = CellResult(stream=stream_label(spec, stream_index), detector=label, target_arl0=float(target))
        n_changed = self.config.get('replications', 10)
        n_null = self.config.get('null_replications') or n_changed
        horizon = self.horizon(target)

        try:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                replications = list(pool.map(
                    lambda i: self._replication(i, spec, entry, stream_index, horizon, n_changed, n_null),
                    range(max(n_changed, n_null)),
                ))
                replications.sort(key=lambda replication: replication.index)
                null_paths = [r.null_path for r in replications if r.null_path is not None]
                changed_paths = [r.changed_path for r in replications if r.changed_path is not None]

                def arl0(scale):
                    taus = list(pool.map(lambda path: path.first_exceedance(scale, horizon), null_paths))
                    return np.array([horizon if tau is None else tau for tau in taus], dtype=float), taus

                if self.config.get('match_arl0', True):
                    scale, steps = self.match_threshold(arl0, target)
                    cell.bisection_steps = steps
                else:
                    scale = 1.0
                cell.threshold_scale = scale

                lengths, taus = arl0(scale)
                cell.n_null = len(null_paths)
                cell.arl0 = float(lengths.mean())
                cell.arl0_se = standard_error(lengths)
                cell.arl0_censored = sum(tau is None for tau in taus)
                cell.matched = abs(cell.arl0 - target) <= self.tolerance * target
                self._delay_summary(cell, changed_paths, spec.change_point, scale, pool)

                grid = self.config.get('scale_grid') or list(scale * np.geomspace(0.5, 2.0, 9))
                for grid_scale in sorted(grid):
                    cell.tradeoff.append(self._tradeoff_point(arl0, changed_paths, spec.change_point, grid_scale, pool))

            if not cell.matched:
                raise BenchmarkPointError(
                    f"ARL0 {cell.arl0:.2f} not within {self.tolerance:.0%} of target {target:g} "
                    f"after {cell.bisection_steps} bisection steps"
                )
        except IDDError as exc:
            cell.error = str(exc)
            logger.error(f"Benchmark point {cell.stream}/{label}/ARL0={target:g} failed: {exc}")
        cell.wall_clock_seconds = time.perf_counter() - started
        if not cell.failed:
            logger.info(
                f"Benchmark point {cell.stream}/{label}/ARL0={target:g}: "
                f"ARL0={cell.arl0:.2f}, ARL1={cell.arl1}, detection={cell.detection_rate}"
            )
        return cell

    def match_threshold(self, arl0, target: float):
        """
        Bisection on log(scale) until the Monte-Carlo ARL0 is within tolerance
        of ``target``. Returns the closest scale seen and the steps used.
        """
        def error(scale):
            return float(arl0(scale)[0].mean()) - target

        best_scale, best_error = 1.0, error(1.0)
        steps = 0
        if abs(best_error) <= self.tolerance * target:
            return best_scale, steps

        low = high = 1.0
        if best_error < 0:
            while steps < self.max_steps:
                high *= 2.0
                steps += 1
                value = error(high)
                if abs(value) < abs(best_error):
                    best_scale, best_error = high, value
                if value >= 0:
                    break
                low = high
        else:
            while steps < self.max_steps:
                low /= 2.0
                steps += 1
                value = error(low)
                if abs(value) < abs(best_error):
                    best_scale, best_error = low, value
                if value < 0:
                    break
                high = low

        while steps < self.max_steps and abs(best_error) > self.tolerance * target:
            middle = math.sqrt(low * high)
            steps += 1
            value = error(middle)
            if abs(value) < abs(best_error):
                best_scale, best_error = middle, value
            if value < 0:
                low = middle
            else:
                high = middle
        return best_scale, steps

    @staticmethod
    def _changed_run_lengths(paths: Sequence[RatioPath], scale: float, pool):
        return list(pool.map(lambda path: path.first_exceedance(scale), paths))

    def _delay_summary(self, cell: CellResult, paths, change_point: int, scale: float, pool):
        taus = self._changed_run_lengths(paths, scale, pool)
        delays = [tau - change_point for tau in taus if tau is not None and tau > change_point]
        false_alarms = sum(tau is not None and tau <= change_point for tau in taus)
        censored = sum(tau is None for tau in taus)
        eligible = len(delays) + censored

        cell.n_replications = len(taus)
        cell.n_detected = len(delays)
        cell.n_false_alarms = false_alarms
        cell.n_censored = censored
        cell.false_alarm_rate = false_alarms / len(taus) if taus else None
        if eligible:
            cell.detection_rate = len(delays) / eligible
            cell.censored_miss_rate = censored / eligible
        if delays:
            cell.arl1 = float(np.mean(delays))
            cell.arl1_se = standard_error(delays)

    def _tradeoff_point(self, arl0, paths, change_point: int, scale: float, pool) -> TradeoffPoint:
        taus = self._changed_run_lengths(paths, scale, pool)
        delays = [tau - change_point for tau in taus if tau is not None and tau > change_point]
        eligible = len(delays) + sum(tau is None for tau in taus)
        return TradeoffPoint(
            threshold_scale=float(scale),
            arl0=float(arl0(scale)[0].mean()),
            arl1=float(np.mean(delays)) if delays else None,
            detection_rate=len(delays) / eligible if eligible else None,
            false_alarm_rate=sum(tau is not None and tau <= change_point for tau in taus) / len(taus) if taus else None,
        )


def serializable_config(config: dict) -> dict:
    """Validated config without the StreamSpec objects the serializer attaches"""
    def clean(value):
        if isinstance(value, dict):
            return {key: clean(item) for key, item in value.items() if key != 'spec'}
        if isinstance(value, (list, tuple)):
            return [clean(item) for item in value]
        return value
    return clean(dict(config))


def apply_overrides(config: dict, seed: Optional[int] = None, threads: Optional[int] = None,
                    target_arl0: Optional[Sequence[float]] = None,
                    detectors: Optional[Sequence[str]] = None) -> dict:
    """Command-line overrides on a validated config"""
    config = dict(config)
    if seed is not None:
        config['seed'] = seed
    if threads is not None:
        config['threads'] = threads
    if target_arl0:
        config['target_arl0'] = list(target_arl0)
    if detectors:
        selected = [entry for entry in config['detectors'] if entry['label'] in detectors or entry['name'] in detectors]
        if not selected:
            raise ConfigError(f"No configured detector matches {list(detectors)}")
        config['detectors'] = selected
    return config


def cmd_calibrate(config: dict, out, seed: Optional[int] = None, workers: int = 1) -> MonitorModel:
    """
    Calibrate an IDD model from a validated calibration config and write the
    model file. A stream file supplies every batch it holds, with the last
    ``holdout_batches`` as the threshold reference; a synthetic spec draws
    ``calibration_batches`` pre-change batches (and a separate holdout).
    """
    holdout = config.get('holdout_batches', 0)
    if 'stream_file' in config:
        batches = [measure for _, measure in read_stream(config['stream_file'])]
        measures, reference = batches, None
        if holdout:
            if holdout >= len(batches):
                raise ConfigError(f"Stream has {len(batches)} batches; cannot hold out {holdout}")
            measures, reference = batches[:-holdout], batches[-holdout:]
    else:
        seed = seed if seed is not None else config.get('seed')
        stream = SyntheticStream(config['stream']['spec'], seed)
        measures = stream.null_batches(config.get('calibration_batches', 100), 'calibration')
        reference = stream.null_batches(holdout, 'holdout') if holdout else None

    detector = build_detector({'name': 'idd', 'params': dict(config.get('detector') or {})}, None, workers=workers)
    model = detector.calibrate(measures, reference=reference)
    save_model(model, out)
    return model


@dataclass
class MonitorSummary:
    batches: int
    alarm_count: int
    first_alarm: Optional[int]

    @property
    def alarm_fraction(self) -> float:
        return self.alarm_count / self.batches if self.batches else 0.0


def cmd_monitor(model_path, stream_path, out, mode: str = 'monitoring') -> MonitorSummary:
    """Score a stream file batch by batch and write the alarm file"""
    session = MonitorSession(load_model(model_path), mode=mode)
    batches = 0
    with AlarmWriter(out) as writer:
        for t, measure in read_stream(stream_path):
            update = session.update(measure, t)
            if update is None:
                break
            writer.write(update)
            batches += 1
    logger.info(f"Monitored {batches} batches of {stream_path}: {session.alarm_count} alarms")
    return MonitorSummary(batches, session.alarm_count, session.first_alarm)


def run_benchmark(config: dict) -> BenchmarkReport:
    return BenchmarkService(config).run()


def cmd_benchmark(config: dict, out_dir=None) -> BenchmarkReport:
    """Run a validated config and write the report, per-point CSV and trade-off CSV"""
    report = run_benchmark(config)
    outputs = dict(config.get('output') or {})
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs.setdefault('report', out_dir / 'report.json')
        outputs.setdefault('csv', out_dir / 'points.csv')
        outputs.setdefault('tradeoff_csv', out_dir / 'tradeoff.csv')
    report.write(outputs.get('report'), outputs.get('csv'), outputs.get('tradeoff_csv'))
    return report


def summary_rows(report: BenchmarkReport) -> List[Dict]:
    return [
        {
            'stream': cell.stream, 'detector': cell.detector, 'target': cell.target_arl0,
            'arl0': cell.arl0, 'arl1': cell.arl1, 'detection_rate': cell.detection_rate,
            'status': 'failed' if cell.failed else 'ok',
        }
        for cell in report.cells
    ]


def record_run(report: BenchmarkReport, status: str = None):
    """Store a finished report as a BenchmarkRun"""
    from django.utils import timezone
    from .models import BenchmarkRun

    if status is None:
        status = 'partial' if report.failed_points else 'completed'
    return BenchmarkRun.objects.create(
        name=report.name,
        status=status,
        master_seed=report.master_seed,
        config=report.config,
        report=report.to_dict(),
        failed_points=len(report.failed_points),
        completed_at=timezone.now(),
    )
