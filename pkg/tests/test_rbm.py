#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests for `modality_completion.rbm`."""

import math
import unittest

import numpy as np

from modality_completion import rbm
from modality_completion.errors import ConfigError, ShapeError, UnsupportedError
from modality_completion.numerics import Rng
from modality_completion.rbm import RbmParams


def bars_and_stripes(n=3):
    """The 2 * 2**n - 2 distinct n x n bars-and-stripes patterns, flattened"""
    patterns = set()
    for bits in range(2 ** n):
        row = [(bits >> i) & 1 for i in range(n)]
        stripes = np.array([row] * n, dtype=float)
        patterns.add(tuple(stripes.ravel()))
        patterns.add(tuple(stripes.T.ravel()))
    return np.array(sorted(patterns))


def zero_params(n_visible, n_hidden, kind='bernoulli-prob'):
    return RbmParams(np.zeros((n_visible, n_hidden)), np.zeros((1, n_visible)), np.zeros((1, n_hidden)), kind)


class test_conditionals(unittest.TestCase):

    def test_001_prop_up(self):
        np.testing.assert_array_equal(rbm.prop_up(zero_params(3, 2), np.ones((4, 3))), np.full((4, 2), 0.5))
        p = zero_params(2, 3)
        p.b_h[:] = 50.0
        self.assertLess(np.abs(rbm.prop_up(p, np.zeros((1, 2))) - 1.0).max(), 1e-12)
        one = RbmParams(np.array([[2.0]]), np.zeros((1, 1)), np.zeros((1, 1)))
        self.assertAlmostEqual(rbm.prop_up(one, [[1.0]])[0, 0], 1 / (1 + math.exp(-2)), places=15)

    def test_002_prop_down(self):
        np.testing.assert_array_equal(rbm.prop_down(zero_params(3, 2), np.ones((4, 2))), np.full((4, 3), 0.5))
        g = zero_params(3, 2, 'gaussian-standardized')
        g.b_v[:] = [[1.5, -2.0, 0.25]]
        np.testing.assert_array_equal(rbm.prop_down(g, Rng(0).uniform((5, 2))), np.tile(g.b_v, (5, 1)))
        one = RbmParams(np.array([[-1.0]]), np.array([[1.0]]), np.zeros((1, 1)))
        self.assertEqual(rbm.prop_down(one, [[1.0]])[0, 0], 0.5)

    def test_003_shapes(self):
        with self.assertRaises(ShapeError):
            rbm.prop_up(zero_params(3, 2), np.ones((1, 4)))
        with self.assertRaises(ShapeError):
            rbm.prop_down(zero_params(3, 2), np.ones((1, 3)))
        with self.assertRaises(ShapeError):
            RbmParams(np.zeros((3, 2)), np.zeros((1, 2)), np.zeros((1, 2)))
        with self.assertRaises(ConfigError):
            zero_params(2, 2, 'poisson')

    def test_004_init(self):
        p = RbmParams.init(9, 8, Rng(1))
        self.assertEqual(p.W.shape, (9, 8))
        self.assertLess(np.abs(p.W).max(), 0.06)
        np.testing.assert_array_equal(p.b_v, np.zeros((1, 9)))
        np.testing.assert_array_equal(p.b_h, np.zeros((1, 8)))


class test_contrastive_divergence(unittest.TestCase):

    def test_001_zero_learning_rate_is_identity(self):
        p = RbmParams.init(4, 3, Rng(2))
        q, _ = rbm.cd_k_update(p, Rng(3).uniform((5, 4)), 2, 0.0, Rng(4))
        for name in ('W', 'b_v', 'b_h'):
            np.testing.assert_array_equal(getattr(q, name), getattr(p, name))

    def test_002_hand_computed_cd1(self):
        # W = 0 makes every probability 0.5 whatever the sampled hidden state is
        p = zero_params(2, 1)
        q, err = rbm.cd_k_update(p, np.array([[1.0, 0.0], [1.0, 0.0]]), 1, 1.0, Rng(0))
        np.testing.assert_array_equal(q.W, [[0.25], [-0.25]])
        np.testing.assert_array_equal(q.b_v, [[0.5, -0.5]])
        np.testing.assert_array_equal(q.b_h, [[0.0]])
        self.assertEqual(err, 0.25)

    def test_003_invalid_hyperparameters(self):
        p = zero_params(2, 1)
        with self.assertRaises(ConfigError):
            rbm.cd_k_update(p, np.ones((1, 2)), 0, 0.1, Rng(0))
        with self.assertRaises(ConfigError):
            rbm.cd_k_update(p, np.ones((1, 2)), 1, -0.1, Rng(0))

    def test_004_deterministic(self):
        batch = bars_and_stripes()
        runs = []
        for _ in range(2):
            p, rng = RbmParams.init(9, 8, Rng(5)), Rng(6)
            for _ in range(20):
                p, _ = rbm.cd_k_update(p, batch, 1, 0.1, rng)
            runs.append(p)
        np.testing.assert_array_equal(runs[0].W, runs[1].W)

    def test_005_bars_and_stripes_learning(self):
        batch = bars_and_stripes()
        self.assertEqual(batch.shape, (14, 9))
        p, rng = RbmParams.init(9, 8, Rng(1)), Rng(1)
        initial = rbm.reconstruction_error(p, batch)
        noise = (Rng(99).uniform((14, 9)) < 0.5).astype(float)
        gap_before = rbm.free_energy_gap(p, batch, noise)
        for _ in range(2000):
            p, _ = rbm.cd_k_update(p, batch, 1, 0.1, rng)
        self.assertLessEqual(rbm.reconstruction_error(p, batch), 0.5 * initial)
        self.assertLess(rbm.free_energy_gap(p, batch, noise), gap_before)

    def test_006_memorized_pattern(self):
        pattern = np.array([[1.0, 0.0, 1.0, 1.0, 0.0]])
        p, rng = RbmParams.init(5, 4, Rng(3)), Rng(4)
        initial = rbm.reconstruction_error(p, pattern)
        for _ in range(300):
            p, _ = rbm.cd_k_update(p, pattern, 1, 0.1, rng)
        self.assertLess(rbm.reconstruction_error(p, pattern), initial)


class test_monitoring(unittest.TestCase):

    def test_001_reconstruction_error(self):
        self.assertEqual(rbm.reconstruction_error(zero_params(3, 2), np.full((4, 3), 0.5)), 0.0)
        self.assertEqual(rbm.reconstruction_error(zero_params(3, 2), np.ones((4, 3))), 0.25)
        p = RbmParams.init(4, 3, Rng(8))
        batch = Rng(9).uniform((6, 4))
        self.assertAlmostEqual(rbm.reconstruction_error(p, batch), rbm.reconstruction_error(p, batch[::-1]),
                               places=15)

    def test_002_free_energy(self):
        F = rbm.free_energy(zero_params(3, 4), Rng(0).uniform((5, 3)))
        self.assertEqual(F.shape, (5, 1))
        np.testing.assert_allclose(F, -4 * math.log(2), rtol=0, atol=1e-12)
        one = RbmParams(np.array([[1.0]]), np.zeros((1, 1)), np.zeros((1, 1)))
        self.assertAlmostEqual(rbm.free_energy(one, [[1.0]])[0, 0], -math.log(1 + math.e), places=12)

    def test_003_free_energy_linear_in_visible_bias(self):
        p = RbmParams.init(3, 2, Rng(1))
        v = Rng(2).uniform((4, 3))
        c = np.array([[0.5, -1.0, 2.0]])
        shifted = RbmParams(p.W, p.b_v + c, p.b_h)
        np.testing.assert_allclose(rbm.free_energy(shifted, v) - rbm.free_energy(p, v), -(v @ c.T), atol=1e-12)

    def test_004_free_energy_gaussian_unsupported(self):
        with self.assertRaises(UnsupportedError):
            rbm.free_energy(zero_params(2, 2, 'gaussian-standardized'), np.ones((1, 2)))


if __name__ == '__main__':
    unittest.main()
