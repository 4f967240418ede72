#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests for `modality_completion.decoders`."""

import math
import unittest

import numpy as np

from modality_completion import autograd as ag
from modality_completion import decoders
from modality_completion.decoders import LinearParams, LstmParams, TransformerBlockParams
from modality_completion.errors import ConfigError, ShapeError
from modality_completion.numerics import Rng
from modality_completion.training import gradient_check


class test_positional_encoding(unittest.TestCase):

    def test_001_first_row(self):
        pe = decoders.positional_encoding(3, 6)
        np.testing.assert_array_equal(pe[0], [0, 1, 0, 1, 0, 1])

    def test_002_values(self):
        pe = decoders.positional_encoding(4, 4)
        self.assertAlmostEqual(pe[2, 0], math.sin(2.0), places=15)
        self.assertAlmostEqual(pe[2, 3], math.cos(2.0 / 100.0), places=15)

    def test_003_odd_width(self):
        self.assertEqual(decoders.positional_encoding(5, 5).shape, (5, 5))


class test_lstm(unittest.TestCase):

    def test_001_hand_computed(self):
        params = LstmParams(np.zeros((1, 4)), np.zeros((1, 4)), np.array([[0.0, 0.0, 0.0, 1.0]]))
        out = decoders.lstm_forward(params, np.zeros((2, 1)))
        c1 = 0.5 * math.tanh(1.0)
        c2 = 0.5 * c1 + 0.5 * math.tanh(1.0)
        np.testing.assert_allclose(out[:, 0], [0.5 * math.tanh(c1), 0.5 * math.tanh(c2)], rtol=1e-14)

    def test_002_causal(self):
        params = LstmParams.init(3, 5, Rng(0))
        seq = Rng(1).normal((9, 3))
        full = decoders.lstm_forward(params, seq)
        self.assertEqual(full.shape, (9, 5))
        np.testing.assert_array_equal(decoders.lstm_forward(params, seq[:4]), full[:4])
        self.assertTrue((np.abs(full) < 1).all())

    def test_003_empty_sequence(self):
        params = LstmParams.init(3, 5, Rng(0))
        self.assertEqual(decoders.lstm_forward(params, np.zeros((0, 3))).shape, (0, 5))

    def test_004_forget_bias(self):
        params = LstmParams.init(2, 3, Rng(0))
        np.testing.assert_array_equal(params.b, [[0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0]])

    def test_005_shape_error(self):
        with self.assertRaises(ShapeError):
            decoders.lstm_forward(LstmParams.init(3, 5, Rng(0)), np.zeros((4, 2)))


class test_transformer(unittest.TestCase):

    def test_001_shapes(self):
        params = TransformerBlockParams.init(3, 8, Rng(0), heads=2)
        self.assertIsNotNone(params.in_proj)
        self.assertEqual(params.d_in, 3)
        self.assertEqual(decoders.transformer_forward(params, Rng(1).normal((7, 3))).shape, (7, 8))
        same = TransformerBlockParams.init(8, 8, Rng(0), heads=2)
        self.assertIsNone(same.in_proj)

    def test_002_permutation_equivariant_without_positions(self):
        params = TransformerBlockParams.init(4, 8, Rng(2), heads=4, positional=False)
        seq = Rng(3).normal((6, 4))
        order = Rng(4).permutation(6)
        out = decoders.transformer_forward(params, seq)
        np.testing.assert_allclose(decoders.transformer_forward(params, seq[order]), out[order], atol=1e-12)

    def test_003_positions_break_symmetry(self):
        params = TransformerBlockParams.init(4, 8, Rng(2), heads=4)
        seq = np.ones((3, 4))
        out = decoders.transformer_forward(params, seq)
        self.assertGreater(np.abs(out[0] - out[1]).max(), 1e-6)

    def test_004_heads_must_divide(self):
        with self.assertRaises(ConfigError):
            TransformerBlockParams.init(4, 6, Rng(0), heads=4)

    def test_005_gradients(self):
        params = TransformerBlockParams.init(3, 4, Rng(5), heads=2)
        seq = Rng(6).normal((4, 3))
        R = Rng(7).normal((4, 4))
        error = gradient_check(lambda p: (decoders.transformer_t(p, ag.Tensor(seq)) * R).sum(), params)
        self.assertLess(error, 1e-6)


class test_dispatch(unittest.TestCase):

    def test_001_linear(self):
        params = LinearParams.init(3, 2, Rng(0))
        seq = Rng(1).uniform((5, 3))
        np.testing.assert_allclose(decoders.linear_forward(params, seq), seq @ params.W + params.b, rtol=1e-15)

    def test_002_init_and_kind(self):
        rng = Rng(0)
        for kind in decoders.DECODERS:
            params = decoders.init_decoder(kind, 3, 8, rng, heads=2)
            self.assertEqual(decoders.decoder_kind(params), kind)
            self.assertEqual(decoders.decode(params, np.ones((4, 3))).shape, (4, 8))
        with self.assertRaises(ConfigError):
            decoders.init_decoder('gru', 3, 8, rng)

    def test_003_decode_t_matches_numpy(self):
        params = decoders.init_decoder('lstm', 3, 4, Rng(0))
        seq = Rng(1).normal((5, 3))
        np.testing.assert_array_equal(decoders.decode_t(ag.constants(params), ag.Tensor(seq)).value,
                                      decoders.decode(params, seq))


if __name__ == '__main__':
    unittest.main()
