#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests for `modality_completion.data`."""

import tempfile
import unittest
from fractions import Fraction
from pathlib import Path

import numpy as np

from modality_completion import data
from modality_completion.data import AlignedDataset, EventSeries, MissingnessSpec, RawSeries, SyntheticSpec
from modality_completion.errors import ConfigError, DataError, ParseError
from modality_completion.numerics import Rng


def column_dataset(values, mask):
    """Single-column modality x; modality y fully observed"""
    values = np.asarray(values, dtype=float).reshape(-1, 1) if np.ndim(values) == 1 else np.asarray(values, float)
    mask = np.asarray(mask, dtype=bool).reshape(values.shape)
    T = values.shape[0]
    return AlignedDataset(np.arange(T), np.where(mask, values, 0.0), mask, np.ones((T, 1)), np.ones((T, 1), bool))


def reference_fill(values, mask, method, window=5):
    """Straight-line loops; sums taken exactly with fractions"""
    n = len(values)
    observed = [values[t] for t in range(n) if mask[t]]
    mean = float(sum(Fraction(v) for v in observed)) / len(observed)
    out = []
    for t in range(n):
        if mask[t]:
            out.append(values[t])
            continue
        if method == 'zero':
            out.append(0.0)
        elif method == 'mean':
            out.append(mean)
        elif method == 'locf':
            before = [values[s] for s in range(t) if mask[s]]
            out.append(before[-1] if before else mean)
        elif method == 'nocb':
            after = [values[s] for s in range(t + 1, n) if mask[s]]
            out.append(after[0] if after else mean)
        elif method == 'interp':
            left = [s for s in range(t) if mask[s]]
            right = [s for s in range(t + 1, n) if mask[s]]
            if not left:
                out.append(values[right[0]])
            elif not right:
                out.append(values[left[-1]])
            else:
                l, r = left[-1], right[0]
                slope = (values[r] - values[l]) / (r - l)
                out.append(slope * (t - l) + values[l])
        else:
            recent = [values[s] for s in range(t) if mask[s]][-window:]
            out.append(float(sum(Fraction(v) for v in recent)) / len(recent) if recent else mean)
    return out


def write(directory, name, text):
    path = Path(directory) / name
    path.write_text(text, encoding='utf-8')
    return path


class test_csv(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_001_well_formed(self):
        path = write(self.tmp.name, 'series.csv', 'timestamp,open,close\n0,1.5,2\n1,,3\n2,4,5.25\n')
        series = data.load_series_csv(path)
        self.assertIsInstance(series, RawSeries)
        self.assertEqual(len(series.timestamps), 3)
        self.assertEqual(series.columns, ['open', 'close'])
        self.assertTrue(np.isnan(series.values[1, 0]))
        self.assertEqual(series.values[2, 1], 5.25)

    def test_002_iso_dates(self):
        path = write(self.tmp.name, 'events.csv', 'timestamp,f0\n2020-01-02,1\n2020-01-05,0.5\n')
        events = data.load_events_csv(path)
        self.assertIsInstance(events, EventSeries)
        self.assertLess(events.timestamps[0], events.timestamps[1])

    def test_003_errors(self):
        with self.assertRaisesRegex(DataError, 'line 3'):
            data.load_series_csv(write(self.tmp.name, 'dup.csv', 'timestamp,a\n0,1\n0,2\n'))
        with self.assertRaisesRegex(DataError, 'out of order'):
            data.load_series_csv(write(self.tmp.name, 'order.csv', 'timestamp,a\n1,1\n0,2\n'))
        with self.assertRaisesRegex(ParseError, 'line 2'):
            data.load_series_csv(write(self.tmp.name, 'bad.csv', 'timestamp,a\n0,abc\n'))
        with self.assertRaises(DataError):
            data.load_series_csv(write(self.tmp.name, 'header.csv', 'time,a\n0,1\n'))
        with self.assertRaises(DataError):
            data.load_series_csv(Path(self.tmp.name) / 'absent.csv')
        with self.assertRaisesRegex(DataError, 'empty'):
            data.load_series_csv(write(self.tmp.name, 'empty.csv', ''))
        with self.assertRaisesRegex(DataError, 'malformed'):
            data.load_series_csv(write(self.tmp.name, 'ragged.csv', 'timestamp,a\n0,1\n1,2,3,4\n'))


class test_align_events(unittest.TestCase):

    def setUp(self):
        self.grid = RawSeries(np.arange(0, 20, 2), np.ones((10, 1)), ['price'])

    def test_001_exact_hit(self):
        aligned = data.align_events(self.grid, EventSeries(np.array([10]), np.array([[7.0, 8.0]]), ['f0', 'f1']))
        self.assertEqual(aligned.T, 10)
        np.testing.assert_array_equal(np.flatnonzero(aligned.mask_y.any(axis=1)), [5])
        np.testing.assert_array_equal(aligned.y[5], [7.0, 8.0])

    def test_002_no_events(self):
        aligned = data.align_events(self.grid, EventSeries(np.array([], dtype=np.int64), np.zeros((0, 2)), ['a', 'b']))
        self.assertFalse(aligned.mask_y.any())
        self.assertEqual(aligned.y.shape, (10, 2))

    def test_003_mean_of_events_in_interval(self):
        events = EventSeries(np.array([4, 5]), np.array([[1.0, 3.0], [3.0, 5.0]]), ['a', 'b'])
        aligned = data.align_events(self.grid, events)
        np.testing.assert_array_equal(aligned.y[2], [2.0, 4.0])
        self.assertEqual(int(aligned.mask_y.sum()), 2)

    def test_004_no_overlap(self):
        with self.assertRaises(DataError):
            data.align_events(self.grid, EventSeries(np.array([50, 60]), np.ones((2, 1)), ['a']))

    def test_005_early_events_dropped(self):
        events = EventSeries(np.array([-3, 1]), np.array([[9.0], [1.0]]), ['a'])
        with self.assertLogs('modality_completion.data', level='WARNING'):
            aligned = data.align_events(self.grid, events)
        np.testing.assert_array_equal(aligned.mask_y[:, 0], [True] + [False] * 9)
        self.assertEqual(aligned.y[0, 0], 1.0)

    def test_006_missing_grid_values(self):
        grid = RawSeries(np.arange(3), np.array([[1.0], [np.nan], [3.0]]), ['p'])
        aligned = data.align_events(grid, EventSeries(np.array([0]), np.ones((1, 1)), ['a']))
        np.testing.assert_array_equal(aligned.mask_x[:, 0], [True, False, True])
        self.assertEqual(aligned.x[1, 0], 0.0)


class test_missingness(unittest.TestCase):

    def setUp(self):
        spec = SyntheticSpec(T=100, d_x=4, d_y=100, seed=3)
        self.data, _ = data.synth_generate(spec)

    def test_001_spec_validation(self):
        with self.assertRaises(ConfigError):
            MissingnessSpec('MCAR', 1.5)
        with self.assertRaises(ConfigError):
            MissingnessSpec('random', 0.5)
        with self.assertRaises(ConfigError):
            MissingnessSpec('MCAR', 0.5, modalities=('z',))

    def test_002_rate_zero_and_one(self):
        self.assertIs(data.apply_missingness(self.data, MissingnessSpec('MCAR', 0.0), Rng(0)), self.data)
        gone = data.apply_missingness(self.data, MissingnessSpec('MCAR', 1.0), Rng(0))
        self.assertFalse(gone.mask_y.any())
        self.assertTrue((gone.y == 0).all())
        self.assertTrue(gone.mask_x.all())

    def test_003_mcar_rate(self):
        out = data.apply_missingness(self.data, MissingnessSpec('MCAR', 0.3), Rng(5))
        self.assertLess(abs((~out.mask_y).mean() - 0.3), 0.02)

    def test_004_never_unmasks(self):
        first = data.apply_missingness(self.data, MissingnessSpec('MCAR', 0.4), Rng(1))
        for mechanism in ('MCAR', 'MAR', 'MNAR'):
            second = data.apply_missingness(first, MissingnessSpec(mechanism, 0.3, modalities=('x', 'y')), Rng(2))
            self.assertFalse((second.mask_y & ~first.mask_y).any())
            self.assertFalse((second.mask_x & ~first.mask_x).any())

    def test_005_calibration(self):
        magnitude = np.abs(Rng(0).normal(500))
        for rate in (0.1, 0.3, 0.7):
            p = data._calibrated_probability(magnitude, rate)
            self.assertLess(abs(p.mean() - rate), 1e-6)
            self.assertTrue((np.diff(p[np.argsort(magnitude)]) >= 0).all())

    def test_006_mnar_prefers_extreme_values(self):
        out = data.apply_missingness(self.data, MissingnessSpec('MNAR', 0.3), Rng(7))
        z = np.abs(data._zscores(self.data.y, self.data.mask_y))
        dropped = ~out.mask_y
        self.assertGreater(z[dropped].mean(), z[~dropped].mean())
        self.assertLess(abs(dropped.mean() - 0.3), 0.03)

    def test_007_mar_drops_whole_rows(self):
        out = data.apply_missingness(self.data, MissingnessSpec('MAR', 0.3), Rng(7))
        rows = out.mask_y.all(axis=1) | (~out.mask_y).all(axis=1)
        self.assertTrue(rows.all())
        self.assertLess(abs((~out.mask_y).mean() - 0.3), 0.15)

    def test_008_missingness_stream(self):
        spec = MissingnessSpec('MCAR', 0.5, seed=9)
        a = data.missingness_rng(spec, 1, 4).uniform(3)
        b = data.missingness_rng(spec, 1, 4).uniform(3)
        c = data.missingness_rng(spec, 2, 4).uniform(3)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))


class test_imputation(unittest.TestCase):

    def fill(self, values, mask, method):
        return data.impute_baseline(column_dataset(values, mask), method).x[:, 0].tolist()

    def test_001_examples(self):
        self.assertEqual(self.fill([1, 0, 0, 4], [1, 0, 0, 1], 'locf'), [1, 1, 1, 4])
        self.assertEqual(self.fill([1, 0, 3], [1, 0, 1], 'mean'), [1, 2, 3])
        self.assertEqual(self.fill([0, 0, 0, 3], [1, 0, 0, 1], 'interp'), [0, 1, 2, 3])
        self.assertEqual(self.fill([1, 0, 0, 4], [1, 0, 0, 1], 'nocb'), [1, 4, 4, 4])
        self.assertEqual(self.fill([1, 0, 0, 4], [1, 0, 0, 1], 'zero'), [1, 0, 0, 4])

    def test_002_edges(self):
        self.assertEqual(self.fill([0, 2, 0, 4], [0, 1, 0, 1], 'locf'), [3, 2, 2, 4])
        self.assertEqual(self.fill([1, 0, 3, 0], [1, 0, 1, 0], 'nocb'), [1, 3, 3, 2])
        self.assertEqual(self.fill([0, 5, 0, 7, 0], [0, 1, 0, 1, 0], 'interp'), [5, 5, 6, 7, 7])
        self.assertEqual(self.fill([2, 4, 0, 0], [1, 1, 0, 0], 'rolling(2)'), [2, 4, 3, 3])
        self.assertEqual(self.fill([0, 4, 0], [0, 1, 0], 'rolling(3)'), [4, 4, 4])

    def test_003_masks_set(self):
        out = data.impute_baseline(column_dataset([1, 0, 3], [1, 0, 1]), 'interp')
        self.assertTrue(out.mask_x.all() and out.mask_y.all())

    def test_004_all_missing_column(self):
        with self.assertLogs('modality_completion.data', level='WARNING') as logs:
            out = data.impute_baseline(column_dataset([5, 6], [0, 0]), 'mean')
        self.assertEqual(out.x[:, 0].tolist(), [0.0, 0.0])
        self.assertIn('no observed entries', logs.output[0])

    def test_005_parse_method(self):
        self.assertEqual(data.parse_method('rolling(3)'), ('rolling', 3))
        self.assertEqual(data.parse_method('rolling'), ('rolling', 5))
        self.assertEqual(data.parse_method('locf'), ('locf', None))
        for bad in ('rolling(0)', 'median', 'locf(', ''):
            with self.assertRaises(ConfigError, msg=bad):
                data.parse_method(bad)

    def test_006_reference_equivalence(self):
        rng = Rng(2024)
        T, n = 30, 100
        values = rng.normal((T, n)) * 10.0
        mask = rng.uniform((T, n)) < 0.6
        mask[rng.integers(T), :] = True
        dataset = column_dataset(values, mask)
        for method, window in (('zero', None), ('locf', None), ('nocb', None), ('mean', None), ('interp', None),
                               ('rolling', 1), ('rolling', 4), ('rolling', 5)):
            label = method if window is None else f'{method}({window})'
            filled = data.impute_baseline(dataset, label).x
            for j in range(n):
                expected = reference_fill(values[:, j].tolist(), mask[:, j].tolist(), method, window or 5)
                self.assertEqual(filled[:, j].tolist(), expected, msg=f'{label} column {j}')


class test_synthetic(unittest.TestCase):

    def test_001_deterministic(self):
        spec = SyntheticSpec(T=50, seed=11)
        a, target_a = data.synth_generate(spec)
        b, target_b = data.synth_generate(spec)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(target_a, target_b)
        np.testing.assert_array_equal(target_a, a.x[:, spec.target_column])

    def test_002_instruments(self):
        sets = data.synth_benchmark(SyntheticSpec(T=20, instruments=10, seed=1))
        self.assertEqual(len(sets), 10)
        self.assertEqual(len({d.seed for d in sets}), 10)
        self.assertEqual([d.name for d in sets[:2]], ['instrument_00', 'instrument_01'])
        self.assertFalse(np.array_equal(sets[0].x, sets[1].x))

    def test_003_noise_free_generator_is_low_rank(self):
        spec = SyntheticSpec(T=40, d_x=5, d_y=6, latent_dim=2, phi=0.0, noise=0.0, seed=2)
        dataset, _ = data.synth_generate(spec)
        self.assertEqual(np.linalg.matrix_rank(dataset.x - spec.level, tol=1e-6), 2)
        self.assertEqual(np.linalg.matrix_rank(np.arctanh(dataset.y), tol=1e-6), 2)

    def test_004_labels(self):
        dataset, _ = data.synth_generate(SyntheticSpec(T=200, n_classes=4, seed=5))
        counts = np.bincount(dataset.labels, minlength=4)
        self.assertEqual(counts.sum(), 200)
        self.assertEqual(len(counts), 4)
        self.assertTrue((counts >= 45).all())
        self.assertTrue(dataset.mask_x.all() and dataset.mask_y.all())
        np.testing.assert_array_equal(dataset.truth_y, dataset.y)

    def test_005_invalid(self):
        for changes in (dict(T=4), dict(phi=1.0), dict(n_classes=1), dict(target_column=9), dict(noise=-1.0),
                        dict(y_noise_ratio=-1.0)):
            with self.assertRaises(ConfigError, msg=str(changes)):
                SyntheticSpec(**changes)


class test_scaling(unittest.TestCase):

    def setUp(self):
        dataset, _ = data.synth_generate(SyntheticSpec(T=30, seed=6))
        self.data = data.apply_missingness(dataset, MissingnessSpec('MCAR', 0.3), Rng(3))

    def test_001_split_index(self):
        self.assertEqual(data.split_index(10, 0.7), 7)
        self.assertEqual(data.split_index(400, 0.7), 280)
        with self.assertRaises(ConfigError):
            data.split_index(10, 1.0)
        with self.assertRaises(DataError):
            data.split_index(3, 0.5)

    def test_002_train_rows_in_unit_interval(self):
        scalers = data.ModalityScalers.fit(self.data, 21)
        scaled = scalers.transform('y', self.data.y, self.data.mask_y)
        observed = scaled[:21][self.data.mask_y[:21]]
        self.assertAlmostEqual(observed.min(), 0.0, places=12)
        self.assertAlmostEqual(observed.max(), 1.0, places=12)
        self.assertTrue((scaled[~self.data.mask_y] == 0).all())

    def test_003_inverse(self):
        scalers = data.ModalityScalers.fit(self.data, 21)
        scaled = scalers.scaler('x').transform(self.data.x)
        np.testing.assert_allclose(scalers.inverse('x', scaled), self.data.x, rtol=1e-12)
        column = scalers.transform_column('x', 0, self.data.target)
        np.testing.assert_allclose(column, scaled[:, 0], rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(scalers.inverse_column('x', 0, column), self.data.target, rtol=1e-12)

    def test_004_arrays(self):
        scalers = data.ModalityScalers.fit(self.data, 21)
        arrays = scalers.to_arrays()
        self.assertEqual(sorted(arrays), ['scaler.x_max', 'scaler.x_min', 'scaler.y_max', 'scaler.y_min'])
        rebuilt = data.ModalityScalers.from_arrays(arrays)
        np.testing.assert_array_equal(rebuilt.y.data_min_, scalers.y.data_min_)
        np.testing.assert_array_equal(rebuilt.y.scale_, scalers.y.scale_)


class test_dataset_files(unittest.TestCase):

    def test_001_round_trip(self):
        dataset, _ = data.synth_generate(SyntheticSpec(T=20, seed=8, n_classes=3))
        dataset = data.apply_missingness(dataset, MissingnessSpec('MCAR', 0.4), Rng(1))
        with tempfile.TemporaryDirectory() as tmp:
            data.write_dataset(dataset, Path(tmp) / 'instrument_00')
            back = data.read_dataset(Path(tmp) / 'instrument_00')
        self.assertEqual(back.name, 'instrument_00')
        np.testing.assert_array_equal(back.x, dataset.x)
        np.testing.assert_array_equal(back.mask_y, dataset.mask_y)
        np.testing.assert_array_equal(back.y, dataset.y)
        np.testing.assert_array_equal(back.truth_y, dataset.truth_y)
        np.testing.assert_array_equal(back.labels, dataset.labels)
        np.testing.assert_array_equal(back.target, dataset.target)
        self.assertEqual(back.columns_y, dataset.columns_y)


if __name__ == '__main__':
    unittest.main()
