"""
Datasets of two modalities on a shared time grid.

Covers CSV ingestion, snapping irregular events to the grid, missingness
injection, the baseline imputers, the seeded synthetic benchmark and the
per-column min-max scaling that precedes all modelling.

File formats (UTF-8, comma separated, ``.`` decimal point, empty cell = missing):

    series.csv   timestamp,<name>...
    events.csv   timestamp,f0,...,f{d-1}
    truth.csv    timestamp,<x columns>,<y columns>,target[,label]   (synthetic only)
"""

import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from scipy.optimize import bisect
from scipy.special import expit
from sklearn.preprocessing import MinMaxScaler

from .errors import ConfigError, DataError, ParseError, shape_mismatch
from .numerics import Rng, derive_seeds

logger = logging.getLogger(__name__)

MECHANISMS = ('MCAR', 'MAR', 'MNAR')
BASELINE_METHODS = ('zero', 'locf', 'nocb', 'mean', 'interp', 'rolling')


@dataclass
class RawSeries:
    timestamps: np.ndarray
    values: np.ndarray
    columns: list


@dataclass
class EventSeries:
    timestamps: np.ndarray
    values: np.ndarray
    columns: list


@dataclass
class AlignedDataset:
    """
    Modality x (regular sequence) and modality y (event features) on one grid.
    Masks are True where observed; unobserved values hold 0.
    """
    timestamps: np.ndarray
    x: np.ndarray
    mask_x: np.ndarray
    y: np.ndarray
    mask_y: np.ndarray
    columns_x: list = field(default_factory=list)
    columns_y: list = field(default_factory=list)
    truth_x: Optional[np.ndarray] = None
    truth_y: Optional[np.ndarray] = None
    target: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    target_column: int = 0
    name: str = 'instrument_00'
    seed: Optional[int] = None

    def __post_init__(self):
        T = len(self.timestamps)
        for values, mask, tag in ((self.x, self.mask_x, 'x'), (self.y, self.mask_y, 'y')):
            if values.shape[0] != T or mask.shape != values.shape:
                raise shape_mismatch(f'modality {tag}', values.shape, mask.shape)
        if not self.columns_x:
            self.columns_x = [f'x{i}' for i in range(self.x.shape[1])]
        if not self.columns_y:
            self.columns_y = [f'f{i}' for i in range(self.y.shape[1])]

    @property
    def T(self):
        return len(self.timestamps)

    @property
    def d_x(self):
        return self.x.shape[1]

    @property
    def d_y(self):
        return self.y.shape[1]

    def modality(self, name):
        """(values, mask, truth) of modality ``name``"""
        if name == 'x':
            return self.x, self.mask_x, self.truth_x
        if name == 'y':
            return self.y, self.mask_y, self.truth_y
        raise ConfigError(f'unknown modality {name!r}')

    def with_modality(self, name, values, mask):
        values = np.where(mask, values, 0.0)
        if name == 'x':
            return replace(self, x=values, mask_x=mask)
        return replace(self, y=values, mask_y=mask)


@dataclass
class MissingnessSpec:
    mechanism: str = 'MCAR'
    rate: float = 0.5
    seed: int = 0
    modalities: tuple = ('y',)

    def __post_init__(self):
        self.modalities = tuple(self.modalities)
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f'missingness mechanism must be one of {MECHANISMS}, got {self.mechanism!r}')
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError(f'missingness rate must lie in [0, 1], got {self.rate}')
        for m in self.modalities:
            if m not in ('x', 'y'):
                raise ConfigError(f'missingness modalities must be x and/or y, got {m!r}')


@dataclass
class SyntheticSpec:
    T: int = 400
    d_x: int = 4
    d_y: int = 6
    instruments: int = 10
    phi: float = 0.8
    noise: float = 0.7
    y_noise_ratio: float = 0.15
    n_classes: int = 5
    latent_dim: int = 3
    level: float = 10.0
    target_column: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.T < 8:
            raise ConfigError(f'synthetic series need T >= 8, got {self.T}')
        if not -1.0 < self.phi < 1.0:
            raise ConfigError(f'latent AR coefficient must lie in (-1, 1), got {self.phi}')
        for name in ('d_x', 'd_y', 'instruments', 'latent_dim'):
            if getattr(self, name) < 1:
                raise ConfigError(f'{name} must be positive, got {getattr(self, name)}')
        if self.n_classes < 2:
            raise ConfigError(f'n_classes must be at least 2, got {self.n_classes}')
        if self.noise < 0:
            raise ConfigError(f'noise must be non-negative, got {self.noise}')
        if self.y_noise_ratio < 0:
            raise ConfigError(f'y_noise_ratio must be non-negative, got {self.y_noise_ratio}')
        if not 0 <= self.target_column < self.d_x:
            raise ConfigError(f'target_column {self.target_column} outside 0..{self.d_x - 1}')


# CSV ingestion

def _parse_timestamps(cells, path):
    try:
        return np.array([int(c) for c in cells], dtype=np.int64)
    except ValueError:
        pass
    try:
        return pd.to_datetime(pd.Series(cells), errors='raise').to_numpy()
    except (ValueError, TypeError) as e:
        raise ParseError(f'{path}: timestamps are neither integers nor ISO-8601 dates ({e})')


def _check_increasing(timestamps, path):
    for i in range(1, len(timestamps)):
        if timestamps[i] == timestamps[i - 1]:
            raise DataError(f'{path}: duplicate timestamp {timestamps[i]} at line {i + 2}')
        if timestamps[i] < timestamps[i - 1]:
            raise DataError(f'{path}: timestamp {timestamps[i]} at line {i + 2} is out of order')


def _read_table(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f'{path}: file does not exist')
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise DataError(f'{path}: file is empty')
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataError(f'{path}: malformed CSV: {e}')
    if df.columns.size < 1 or df.columns[0] != 'timestamp':
        raise DataError(f'{path}: header must start with "timestamp"')
    timestamps = _parse_timestamps(df['timestamp'].str.strip().tolist(), path)
    _check_increasing(timestamps, path)

    columns = list(df.columns[1:])
    cells = df[columns].apply(lambda col: col.str.strip())
    values = cells.apply(pd.to_numeric, errors='coerce').to_numpy(dtype=np.float64)
    bad = (cells.to_numpy() != '') & ~np.isfinite(values)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise ParseError(f'{path}: line {row + 2}, column {columns[col]}: '
                         f'{cells.iat[row, col]!r} is not a number')
    logger.debug(f'read {path}: {len(timestamps)} rows, {len(columns)} columns')
    return timestamps, values, columns


def load_series_csv(path):
    return RawSeries(*_read_table(path))


def load_events_csv(path):
    return EventSeries(*_read_table(path))


def align_events(grid, events):
    """
    Snap each event to the last grid timestamp at or before it and average
    events that share a grid point, per feature. Grid points without events
    become missing rows of modality y.
    """
    ts = grid.timestamps
    T = len(ts)
    d_y = events.values.shape[1]
    y = np.full((T, d_y), np.nan)

    if len(events.timestamps):
        try:
            lo, hi = events.timestamps[0] > ts[-1], events.timestamps[-1] < ts[0]
        except TypeError:
            raise DataError('series and events use different timestamp kinds')
        if lo or hi:
            raise DataError(f'events span {events.timestamps[0]}..{events.timestamps[-1]}, '
                            f'which does not overlap the grid {ts[0]}..{ts[-1]}')
        rows = np.searchsorted(ts, events.timestamps, side='right') - 1
        early = rows < 0
        if early.any():
            logger.warning(f'dropping {int(early.sum())} events before the first grid timestamp')
        frame = pd.DataFrame(events.values[~early], columns=range(d_y))
        frame['row'] = rows[~early]
        means = frame.groupby('row').mean()
        y[means.index.to_numpy()] = means.to_numpy()

    mask_x = np.isfinite(grid.values)
    mask_y = np.isfinite(y)
    return AlignedDataset(
        timestamps=ts,
        x=np.where(mask_x, grid.values, 0.0), mask_x=mask_x,
        y=np.where(mask_y, y, 0.0), mask_y=mask_y,
        columns_x=list(grid.columns), columns_y=list(events.columns),
    )


# Missingness

def _zscores(values, mask):
    """Column z-scores over observed entries; 0 where unobserved"""
    z = np.zeros(values.shape)
    for j in range(values.shape[1]):
        obs = values[mask[:, j], j]
        if obs.size < 2:
            continue
        std = obs.std()
        if std > 0:
            z[:, j] = np.where(mask[:, j], (values[:, j] - obs.mean()) / std, 0.0)
    return z


def _calibrated_probability(magnitude, rate):
    """sigmoid(a + magnitude) with a chosen so the mean probability equals ``rate``"""
    if rate <= 0.0:
        return np.zeros(magnitude.shape)
    if rate >= 1.0 or magnitude.size == 0:
        return np.full(magnitude.shape, min(rate, 1.0))
    a = bisect(lambda a: expit(a + magnitude).mean() - rate, -60.0, 60.0, xtol=1e-12)
    return expit(a + magnitude)


def apply_missingness(data, spec, rng):
    """
    Drop observed entries of the modalities named in ``spec``.

    MCAR consumes one uniform per entry (row-major). MAR consumes one uniform
    per row; the drop probability of a y row follows the z-score magnitude of
    the observed target column of x (a row of x follows the mean z-score of y).
    MNAR consumes one uniform per entry and follows the entry's own z-score.
    Dropped entries are masked and zeroed; missing entries stay missing.
    """
    if spec.rate == 0.0:
        return data
    out = data
    for name in ('x', 'y'):
        if name not in spec.modalities:
            continue
        values, mask, _ = out.modality(name)
        if spec.mechanism == 'MCAR':
            drop = rng.uniform(values.shape) < spec.rate
        elif spec.mechanism == 'MAR':
            if name == 'y':
                driver = _zscores(out.x, out.mask_x)[:, out.target_column]
            else:
                z = _zscores(out.y, out.mask_y)
                counts = out.mask_y.sum(axis=1)
                driver = np.where(counts > 0, z.sum(axis=1) / np.maximum(counts, 1), 0.0)
            p = _calibrated_probability(np.abs(driver), spec.rate)
            drop = (rng.uniform(values.shape[0]) < p)[:, None].repeat(values.shape[1], axis=1)
        else:
            z = np.abs(_zscores(values, mask))
            p = np.zeros(values.shape)
            p[mask] = _calibrated_probability(z[mask], spec.rate)
            drop = rng.uniform(values.shape) < p
        new_mask = mask & ~drop
        logger.debug(f'{spec.mechanism} dropped {int((mask & drop).sum())} of {int(mask.sum())} '
                     f'observed entries of modality {name}')
        out = out.with_modality(name, values, new_mask)
    return out


def missingness_rng(spec, instrument, instruments):
    """Stream for instrument ``instrument``; disjoint from the synthetic data seeds when both masters agree"""
    return Rng(derive_seeds(spec.seed, 2 * instruments)[instruments + instrument])


# Baseline imputers

def parse_method(method):
    """'rolling(3)' -> ('rolling', 3); other names -> (name, None)"""
    if isinstance(method, (tuple, list)):
        name, window = method
    else:
        m = re.fullmatch(r'\s*(\w+)\s*(?:\(\s*(-?\d+)\s*\))?\s*', str(method))
        if not m:
            raise ConfigError(f'cannot parse imputation method {method!r}')
        name, window = m.group(1), m.group(2)
    if name not in BASELINE_METHODS:
        raise ConfigError(f'unknown imputation method {name!r}; choose from {BASELINE_METHODS}')
    if name == 'rolling':
        window = 5 if window is None else int(window)
        if window < 1:
            raise ConfigError(f'rolling window must be at least 1, got {window}')
    return name, window


def _fill_column(values, mask, method, window):
    observed = values[mask]
    column_mean = math.fsum(observed) / observed.size
    if method == 'zero':
        return np.where(mask, values, 0.0)
    if method == 'mean':
        return np.where(mask, values, column_mean)
    if method in ('locf', 'nocb'):
        s = pd.Series(np.where(mask, values, np.nan))
        s = s.ffill() if method == 'locf' else s.bfill()
        return s.fillna(column_mean).to_numpy()
    if method == 'interp':
        idx = np.flatnonzero(mask)
        return np.where(mask, values, np.interp(np.arange(values.size), idx, observed))
    out = values.copy()
    seen = []
    for t in range(values.size):
        if mask[t]:
            seen.append(values[t])
        elif seen:
            recent = seen[-window:]
            out[t] = math.fsum(recent) / len(recent)
        else:
            out[t] = column_mean
    return out


def impute_baseline(data, method):
    """Fill both modalities column by column; every mask is True afterwards"""
    name, window = parse_method(method)
    out = data
    for modality in ('x', 'y'):
        values, mask, _ = out.modality(modality)
        columns = out.columns_x if modality == 'x' else out.columns_y
        filled = np.zeros(values.shape)
        for j in range(values.shape[1]):
            if not mask[:, j].any():
                logger.warning(f'modality {modality} column {columns[j]} has no observed entries; filled with 0')
                continue
            filled[:, j] = _fill_column(values[:, j], mask[:, j], name, window)
        out = out.with_modality(modality, filled, np.ones(values.shape, dtype=bool))
    return out


# Synthetic benchmark

def synth_generate(spec, seed=None, name='instrument_00'):
    """
    Latent AR(1) process driving both modalities.

    Draw order from Rng(seed): A (d_x x latent), B (d_y x latent), latent
    innovations (T x latent), x noise (T x d_x), y noise (T x d_y). Loadings are
    scaled so columns of z @ A.T and z @ B.T have unit stationary variance on average;
    y noise is noise * y_noise_ratio.

    :return: (dataset with ground truth, target series)
    """
    seed = spec.seed if seed is None else seed
    rng = Rng(seed)
    scale = math.sqrt((1.0 - spec.phi ** 2) / spec.latent_dim)
    A = scale * rng.normal((spec.d_x, spec.latent_dim))
    B = scale * rng.normal((spec.d_y, spec.latent_dim))
    eps = rng.normal((spec.T, spec.latent_dim))
    x_noise = rng.normal((spec.T, spec.d_x))
    y_noise = rng.normal((spec.T, spec.d_y))

    z = np.zeros((spec.T, spec.latent_dim))
    z[0] = eps[0]
    for t in range(1, spec.T):
        z[t] = spec.phi * z[t - 1] + eps[t]

    x = spec.level + z @ A.T + spec.noise * x_noise
    y = np.tanh(z @ B.T + spec.noise * spec.y_noise_ratio * y_noise)
    target = x[:, spec.target_column].copy()
    edges = np.quantile(z[:, 0], np.arange(1, spec.n_classes) / spec.n_classes)
    labels = np.searchsorted(edges, z[:, 0], side='right').astype(np.int64)

    dataset = AlignedDataset(
        timestamps=np.arange(spec.T, dtype=np.int64),
        x=x, mask_x=np.ones(x.shape, dtype=bool),
        y=y, mask_y=np.ones(y.shape, dtype=bool),
        truth_x=x.copy(), truth_y=y.copy(),
        target=target, labels=labels,
        target_column=spec.target_column, name=name, seed=seed,
    )
    return dataset, target


def synth_instrument(spec, instrument):
    seeds = derive_seeds(spec.seed, spec.instruments)
    dataset, _ = synth_generate(spec, seeds[instrument], f'instrument_{instrument:02d}')
    return dataset


def synth_benchmark(spec):
    return [synth_instrument(spec, i) for i in range(spec.instruments)]


# Scaling

def split_index(T, fraction):
    """Chronological split: rows before the index train, the rest test"""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f'train fraction must lie in (0, 1), got {fraction}')
    n = int(math.floor(T * fraction))
    if n < 2 or n > T - 2:
        raise DataError(f'a {fraction} split of {T} rows leaves too few rows on one side')
    return n


def _scaler_from_bounds(lo, hi):
    return MinMaxScaler().fit(np.vstack([lo, hi]))


@dataclass
class ModalityScalers:
    """Min-max scalers of both modalities, fitted on observed training entries"""
    x: MinMaxScaler
    y: MinMaxScaler

    @classmethod
    def fit(cls, data, n_train):
        scalers = {}
        for name in ('x', 'y'):
            values, mask, _ = data.modality(name)
            train = np.where(mask[:n_train], values[:n_train], np.nan)
            lo = np.full(values.shape[1], 0.0)
            hi = np.full(values.shape[1], 1.0)
            seen = mask[:n_train].any(axis=0)
            if seen.any():
                fitted = MinMaxScaler().fit(train[:, seen])
                lo[seen], hi[seen] = fitted.data_min_, fitted.data_max_
            scalers[name] = _scaler_from_bounds(lo, hi)
        return cls(**scalers)

    def scaler(self, name):
        return self.x if name == 'x' else self.y

    def transform(self, name, values, mask):
        """Scaled to [0, 1] and clipped; 0 at unobserved entries"""
        scaled = np.clip(self.scaler(name).transform(values), 0.0, 1.0)
        return np.where(mask, scaled, 0.0)

    def inverse(self, name, values):
        return self.scaler(name).inverse_transform(values)

    def transform_column(self, name, column, series):
        s = self.scaler(name)
        return np.asarray(series) * s.scale_[column] + s.min_[column]

    def inverse_column(self, name, column, series):
        s = self.scaler(name)
        return (np.asarray(series) - s.min_[column]) / s.scale_[column]

    def to_arrays(self):
        return {f'scaler.{name}_{bound}': getattr(self.scaler(name), f'data_{bound}_')[None, :].copy()
                for name in ('x', 'y') for bound in ('min', 'max')}

    @classmethod
    def from_arrays(cls, arrays):
        return cls(**{name: _scaler_from_bounds(arrays[f'scaler.{name}_min'][0], arrays[f'scaler.{name}_max'][0])
                      for name in ('x', 'y')})


# Dataset directories

def write_dataset(data, directory):
    """series.csv, events.csv (observed y rows only) and truth.csv when ground truth exists"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    series = pd.DataFrame(np.where(data.mask_x, data.x, np.nan), columns=data.columns_x)
    series.insert(0, 'timestamp', data.timestamps)
    series.to_csv(directory / 'series.csv', index=False, float_format='%.17g')

    rows = data.mask_y.any(axis=1)
    events = pd.DataFrame(np.where(data.mask_y, data.y, np.nan)[rows], columns=data.columns_y)
    events.insert(0, 'timestamp', data.timestamps[rows])
    events.to_csv(directory / 'events.csv', index=False, float_format='%.17g')

    if data.truth_x is not None:
        truth = pd.DataFrame(np.hstack([data.truth_x, data.truth_y]), columns=data.columns_x + data.columns_y)
        truth.insert(0, 'timestamp', data.timestamps)
        truth['target'] = data.target
        if data.labels is not None:
            truth['label'] = data.labels
        truth.to_csv(directory / 'truth.csv', index=False, float_format='%.17g')
    logger.info(f'wrote {data.name} ({data.T} rows) to {directory}')


def read_dataset(directory, target_column=0):
    """Inverse of ``write_dataset``; ground truth is attached when truth.csv is present"""
    directory = Path(directory)
    data = align_events(load_series_csv(directory / 'series.csv'), load_events_csv(directory / 'events.csv'))
    data = replace(data, name=directory.name, target_column=target_column)
    truth_path = directory / 'truth.csv'
    if truth_path.exists():
        _, values, columns = _read_table(truth_path)
        d_x, d_y = data.d_x, data.d_y
        labels = values[:, columns.index('label')].astype(np.int64) if 'label' in columns else None
        data = replace(data, truth_x=values[:, :d_x], truth_y=values[:, d_x:d_x + d_y],
                       target=values[:, columns.index('target')], labels=labels)
    elif data.mask_x[:, target_column].all():
        data = replace(data, target=data.x[:, target_column].copy())
    return data
