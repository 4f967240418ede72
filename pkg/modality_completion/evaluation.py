"""
Metrics, movement labels and the multi-instrument benchmark behind the
method comparison and ablation tables.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, f1_score

from .data import apply_missingness, impute_baseline, missingness_rng, split_index, synth_instrument
from .errors import ConfigError, DegenerateInputError, DomainError, shape_mismatch
from .numerics import Rng, derive_seeds
from .training import LossSwitches, complete_dataset, predict_downstream, train_downstream, train_mcdbn

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

DEFAULT_METHODS = ('single', 'zero', 'locf', 'mean', 'interp', 'mcdbn')

METHOD_LABELS = {
    'single': 'Single modal data',
    'zero': 'Multimodal data w/ Zero Filling',
    'locf': 'Multimodal data w/ Forward Fill',
    'nocb': 'Multimodal data w/ Backward Fill',
    'mean': 'Multimodal data w/ Mean Imputation',
    'interp': 'Multimodal data w/ Interpolation',
    'mcdbn': 'MC-DBN',
}

LOSS_VARIANTS = {
    'L_task': LossSwitches(False, False),
    'L_modal_x': LossSwitches(True, False),
    'L_modal_y': LossSwitches(False, True),
    'L_modal_x + L_modal_y': LossSwitches(True, True),
}

DECODER_VARIANTS = {
    'Both Linear': ('linear', 'linear'),
    'Only Transformer': ('transformer', 'transformer'),
    'Only LSTM': ('lstm', 'lstm'),
    'LSTM + Transformer': ('transformer', 'lstm'),
}


@dataclass
class Metrics:
    rmse: float
    mape: float
    f1: float
    accuracy: float
    n_samples: int
    seed: int
    config_hash: str = ''
    method: str = ''
    instrument: str = ''
    mape_excluded: int = 0
    completion_rmse: Optional[float] = None


def _vectors(pred, actual):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    actual = np.asarray(actual, dtype=np.float64).ravel()
    if pred.shape != actual.shape:
        raise shape_mismatch('metric inputs', pred.shape, actual.shape)
    if pred.size == 0:
        raise DegenerateInputError('metrics need at least one sample')
    return pred, actual


def rmse(pred, actual):
    pred, actual = _vectors(pred, actual)
    return float(np.sqrt(np.mean((actual - pred) ** 2)))


def mape(pred, actual, eps=1e-8):
    """
    Mean of |a - p| / |a| over entries with |a| > eps.

    :return: (mape, number of excluded entries)
    """
    pred, actual = _vectors(pred, actual)
    keep = np.abs(actual) > eps
    if not keep.any():
        raise DegenerateInputError(f'every actual value is within {eps} of zero')
    value = float(np.mean(np.abs(actual[keep] - pred[keep]) / np.abs(actual[keep])))
    return value, int((~keep).sum())


def f1_accuracy(pred_labels, true_labels, classes):
    """Positive-class F1 for two classes, macro F1 otherwise; plus accuracy"""
    pred = np.asarray(pred_labels, dtype=np.int64).ravel()
    true = np.asarray(true_labels, dtype=np.int64).ravel()
    if pred.shape != true.shape:
        raise shape_mismatch('label vectors', pred.shape, true.shape)
    if pred.size == 0:
        raise DegenerateInputError('f1/accuracy need at least one label')
    for labels in (pred, true):
        if labels.min() < 0 or labels.max() >= classes:
            raise DomainError(f'labels must lie in [0, {classes})')
    if classes == 2:
        f1 = f1_score(true, pred, average='binary', pos_label=1, zero_division=0)
    else:
        f1 = f1_score(true, pred, average='macro', zero_division=0)
    return float(f1), float(accuracy_score(true, pred))


def movement_labels(series):
    """1 where the next value is at least the current one"""
    series = np.asarray(series, dtype=np.float64).ravel()
    if series.size < 2:
        raise DegenerateInputError('movement labels need at least two values')
    return (np.diff(series) >= 0).astype(np.int64)


def regression_metrics(outputs, data, scalers, n_train, seed):
    """``outputs`` row k is the prediction made at row n_train + k for the next step"""
    target = np.asarray(data.target, dtype=np.float64)
    predicted = scalers.inverse_column('x', data.target_column, outputs[:-1, 0])
    actual = target[n_train + 1:]
    value, excluded = mape(predicted, actual)
    true_moves = movement_labels(target[n_train:])
    pred_moves = (predicted - target[n_train:-1] >= 0).astype(np.int64)
    f1, accuracy = f1_accuracy(pred_moves, true_moves, 2)
    return Metrics(rmse(predicted, actual), value, f1, accuracy, int(actual.size), seed, mape_excluded=excluded)


def classification_metrics(probs, labels, seed):
    """rmse is the root Brier score and mape the mean shortfall of the true-class probability"""
    labels = np.asarray(labels, dtype=np.int64)
    n, classes = probs.shape
    truth = np.zeros((n, classes))
    truth[np.arange(n), labels] = 1.0
    brier = float(np.sqrt(np.mean(((probs - truth) ** 2).sum(axis=1))))
    shortfall = float(np.mean(1.0 - probs[np.arange(n), labels]))
    f1, accuracy = f1_accuracy(probs.argmax(axis=1), labels, classes)
    return Metrics(brier, shortfall, f1, accuracy, n, seed)


def completion_rmse(completed, corrupted, truth):
    """RMSE at the entries the corruption removed, pooled over both modalities"""
    pred, actual = [], []
    for name in ('x', 'y'):
        expected = getattr(truth, f'truth_{name}')
        holes = ~getattr(corrupted, f'mask_{name}')
        if expected is not None and holes.any():
            pred.append(getattr(completed, name)[holes])
            actual.append(expected[holes])
    if not pred:
        return None
    return rmse(np.concatenate(pred), np.concatenate(actual))


def complete_with(method, corrupted, cfg, seed, model=None):
    """Completed copy of ``corrupted`` for one benchmark method"""
    if method == 'single':
        return impute_baseline(corrupted, 'zero')
    if method == 'mcdbn':
        if model is None:
            trained, scalers, _ = train_mcdbn(corrupted, cfg)
        else:
            trained, scalers = model
        return complete_dataset(trained, corrupted, scalers, cfg, Rng(seed))
    return impute_baseline(corrupted, method)


def evaluate_method(method, completed, corrupted, truth, cfg, config_hash=''):
    use_y = method != 'single'
    n_train = split_index(completed.T, cfg.train_fraction)
    predictor, scalers = train_downstream(completed, cfg, use_y)
    outputs = predict_downstream(predictor, completed, scalers, cfg, use_y, lo=n_train)
    if cfg.task == 'classification':
        metrics = classification_metrics(outputs, completed.labels[n_train:], cfg.seed)
    else:
        metrics = regression_metrics(outputs, completed, scalers, n_train, cfg.seed)
    return replace(metrics, config_hash=config_hash, method=method, instrument=truth.name,
                   completion_rmse=None if method == 'single' else completion_rmse(completed, corrupted, truth))


def run_instrument(instrument, methods, spec, cfg, missingness, model=None, config_hash=''):
    truth = synth_instrument(spec, instrument)
    corrupted = apply_missingness(truth, missingness, missingness_rng(missingness, instrument, spec.instruments))
    seed = derive_seeds(cfg.seed, spec.instruments)[instrument]
    completed = {}
    rows = []
    for method in methods:
        if method not in completed:
            completed[method] = complete_with(method, corrupted, cfg, seed, model)
        rows.append(evaluate_method(method, completed[method], corrupted, truth, cfg, config_hash))
        logger.info(f'{truth.name} {method}: rmse {rows[-1].rmse:.6f} f1 {rows[-1].f1:.4f}')
    return rows


@dataclass
class BenchmarkResult:
    rows: list
    detail: pd.DataFrame
    summary: pd.DataFrame
    seed: int
    config_hash: str

    def to_json(self):
        document = {
            'config_hash': self.config_hash,
            'seed': self.seed,
            'methods': json.loads(self.summary.to_json(orient='records', double_precision=15)),
            'instruments': json.loads(self.detail.to_json(orient='records', double_precision=15)),
        }
        return json.dumps(document, sort_keys=True, indent=2) + '\n'

    def to_csv(self, path_or_buf=None):
        return self.summary.to_csv(path_or_buf, index=False, float_format='%.10g')

    def write(self, directory, stem='comparison'):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.to_csv(directory / f'{stem}.csv')
        self.detail.to_csv(directory / f'{stem}_instruments.csv', index=False, float_format='%.10g')
        (directory / f'{stem}.json').write_text(self.to_json(), encoding='utf-8')


def summarize(rows, seed, config_hash):
    detail = pd.DataFrame([asdict(r) for r in rows])
    columns = ['rmse', 'mape', 'f1', 'accuracy', 'completion_rmse']
    detail['completion_rmse'] = detail['completion_rmse'].astype(float)
    summary = detail.groupby('method', sort=False)[columns].mean().reset_index()
    summary.insert(1, 'label', [METHOD_LABELS.get(m, m) for m in summary['method']])
    summary.insert(2, 'instruments', detail.groupby('method', sort=False).size().to_numpy())
    return BenchmarkResult(rows, detail, summary, seed, config_hash)


def benchmark_run(methods, spec, cfg, missingness, threads=1, model=None, config_hash=''):
    """
    Every method on every synthetic instrument. Instruments may run on
    ``threads`` workers; results are collected in instrument order so the
    output does not depend on the thread count.
    """
    methods = list(methods)
    if not methods:
        raise DegenerateInputError('benchmark needs at least one method')
    if cfg.task == 'classification':
        cfg = replace(cfg, n_classes=spec.n_classes)
    logger.info(f'benchmark: {len(methods)} methods x {spec.instruments} instruments on {threads} thread(s)')
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        per_instrument = list(pool.map(
            lambda i: run_instrument(i, methods, spec, cfg, missingness, model, config_hash),
            range(spec.instruments)))
    rows = [row for instrument_rows in per_instrument for row in instrument_rows]
    return summarize(rows, cfg.seed, config_hash)


def ablation_run(which, spec, cfg, missingness, threads=1, config_hash=''):
    """MC-DBN under each loss switch setting ('loss') or decoder pairing ('decoder')"""
    if which == 'loss':
        variants = {name: replace(cfg, loss_switches=switches) for name, switches in LOSS_VARIANTS.items()}
        if set(missingness.modalities) != {'x', 'y'}:
            logger.info('loss ablation: masking both modalities')
            missingness = replace(missingness, modalities=('x', 'y'))
    elif which == 'decoder':
        variants = {name: replace(cfg, decoder_x=dx, decoder_y=dy) for name, (dx, dy) in DECODER_VARIANTS.items()}
    else:
        raise ConfigError(f'unknown ablation {which!r}; choose loss or decoder')
    rows = []
    for name, variant in variants.items():
        logger.info(f'ablation {which}: {name}')
        result = benchmark_run(['mcdbn'], spec, variant, missingness, threads, config_hash=config_hash)
        rows.extend(replace(row, method=name) for row in result.rows)
    result = summarize(rows, cfg.seed, config_hash)
    result.summary['label'] = result.summary['method']
    return result
