"""
Stream and alarm files
Batches are rows sharing a value of ``t``; files are read chunk by chunk so
memory stays at one batch plus one chunk
"""
import logging
from pathlib import Path
from typing import Iterable, Iterator, Optional, Tuple

import numpy as np
import pandas as pd
from django.conf import settings

from idd_monitor.exceptions import ConfigError
from transport.measures import EmpiricalMeasure

logger = logging.getLogger(__name__)

ALARM_COLUMNS = ['t', 't2', 'spe', 'alarm', 'triggered_by']


def stream_columns(dim: int):
    return ['t'] + [f'x{i}' for i in range(1, dim + 1)]


def _check_header(columns) -> int:
    columns = [str(column).strip() for column in columns]
    dim = len(columns) - 1
    if dim < 1 or columns != stream_columns(dim):
        raise ConfigError(f"Stream header must be 't,x1..xd', got {','.join(columns)}")
    return dim


def read_stream(path, chunk_rows: Optional[int] = None) -> Iterator[Tuple[int, EmpiricalMeasure]]:
    """Yield (t, batch) pairs in file order; t must increase between batches"""
    chunk_rows = chunk_rows or getattr(settings, 'IDD_STREAM_CHUNK_ROWS', 50000)
    try:
        reader = pd.read_csv(path, chunksize=chunk_rows, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        logger.info(f"Stream file {path} is empty")
        return

    pending_t, pending = None, []
    with reader:
        for chunk in reader:
            _check_header(chunk.columns)
            if chunk.empty:
                continue
            t_values = chunk['t'].to_numpy()
            points = chunk.iloc[:, 1:].to_numpy(dtype=float)
            if not np.all(np.isfinite(t_values.astype(float))):
                raise ConfigError("Stream file contains missing time indices")
            starts = np.concatenate(([0], np.flatnonzero(np.diff(t_values)) + 1))
            ends = np.append(starts[1:], len(t_values))
            for start, end in zip(starts, ends):
                t = int(t_values[start])
                if pending_t is not None and t == pending_t:
                    pending.append(points[start:end])
                    continue
                if pending_t is not None:
                    if t < pending_t:
                        raise ConfigError(f"Stream batches out of order: t={t} after t={pending_t}")
                    yield pending_t, EmpiricalMeasure.from_points(np.vstack(pending))
                pending_t, pending = t, [points[start:end]]

    if pending_t is not None:
        yield pending_t, EmpiricalMeasure.from_points(np.vstack(pending))


def write_stream(path, batches: Iterable[Tuple[int, np.ndarray]]) -> int:
    """Write (t, points) batches; returns the number of batches written"""
    path = Path(path)
    count = 0
    header_written = False
    for t, points in batches:
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        frame = pd.DataFrame(points, columns=stream_columns(points.shape[1])[1:])
        frame.insert(0, 't', int(t))
        frame.to_csv(path, mode='a' if header_written else 'w', header=not header_written, index=False)
        header_written = True
        count += 1
    if not header_written:
        path.write_text('t,x1\n', encoding='utf-8')
    return count


class AlarmWriter:
    """Buffered writer for the alarm file; the header is written on open"""

    def __init__(self, path, buffer_rows: int = 1000):
        self.path = Path(path)
        self.buffer_rows = buffer_rows
        self.rows = []

    def __enter__(self):
        pd.DataFrame(columns=ALARM_COLUMNS).to_csv(self.path, index=False)
        return self

    def write(self, update):
        self.rows.append({
            't': update.t,
            't2': update.t2,
            'spe': update.spe,
            'alarm': int(update.alarm),
            'triggered_by': update.triggered_by.value,
        })
        if len(self.rows) >= self.buffer_rows:
            self.flush()

    def flush(self):
        if self.rows:
            pd.DataFrame(self.rows, columns=ALARM_COLUMNS).to_csv(self.path, mode='a', header=False, index=False)
            self.rows = []

    def __exit__(self, exc_type, exc, tb):
        self.flush()
        return False


def read_alarms(path) -> pd.DataFrame:
    return pd.read_csv(path)
