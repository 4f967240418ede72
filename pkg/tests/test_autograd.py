#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests for `modality_completion.autograd`."""

import unittest
from dataclasses import dataclass

import numpy as np

from modality_completion import autograd as ag
from modality_completion.numerics import Rng
from modality_completion.training import gradient_check


@dataclass
class Pair:
    W: np.ndarray
    b: np.ndarray
    name: str = 'pair'


class test_tensor(unittest.TestCase):

    def test_001_basic_expression(self):
        x, y = ag.Tensor([[2.0]], True), ag.Tensor([[3.0]], True)
        z = (x * y + x).sum()
        z.backward()
        self.assertEqual(float(z.value), 8.0)
        self.assertEqual(x.grad[0, 0], 4.0)
        self.assertEqual(y.grad[0, 0], 2.0)

    def test_002_shared_subgraph(self):
        x, y = ag.Tensor([[2.0]], True), ag.Tensor([[-4.0]], True)
        q = ((x + y) * (x + 1.0)).sum()
        q.backward()
        self.assertEqual(float(q.value), -6.0)
        self.assertEqual(x.grad[0, 0], 1.0)
        self.assertEqual(y.grad[0, 0], 3.0)

    def test_003_broadcast_bias(self):
        x = ag.Tensor(np.ones((4, 3)))
        b = ag.Tensor(np.zeros((1, 3)), True)
        (x + b).sum().backward()
        np.testing.assert_array_equal(b.grad, np.full((1, 3), 4.0))

    def test_004_constants_get_no_gradient(self):
        x = ag.Tensor(np.ones((2, 2)))
        w = ag.Tensor(np.ones((2, 2)), True)
        (x @ w).sum().backward()
        self.assertIsNone(x.grad)
        np.testing.assert_array_equal(w.grad, np.full((2, 2), 2.0))

    def test_005_long_chain_does_not_recurse(self):
        x = ag.Tensor([[1.0]], True)
        y = x
        for _ in range(5000):
            y = y * 1.0
        y.sum().backward()
        self.assertEqual(x.grad[0, 0], 1.0)

    def test_006_slice_and_concat(self):
        a = ag.Tensor(np.arange(6.0).reshape(2, 3), True)
        b = ag.Tensor(np.ones((2, 1)), True)
        out = ag.concat_cols([a, b])[:, 1:3]
        out.sum().backward()
        np.testing.assert_array_equal(a.grad, [[0, 1, 1], [0, 1, 1]])
        np.testing.assert_array_equal(b.grad, [[0], [0]])


class test_operator_gradients(unittest.TestCase):

    def setUp(self):
        self.rng = Rng(17)

    def test_001_softmax_layer_norm_log(self):
        R = self.rng.normal((4, 5))
        x = self.rng.normal((4, 5))
        loss = lambda p: (ag.log(ag.softmax_rows(ag.layer_norm_rows(p, 1e-5))) * R).sum()
        self.assertLess(gradient_check(loss, x), 1e-6)

    def test_002_elementwise(self):
        R = self.rng.normal((3, 4))
        x = self.rng.normal((3, 4)) + 0.05
        loss = lambda p: ((p.sigmoid() + p.tanh() * p.relu()) * R).sum()
        self.assertLess(gradient_check(loss, x), 1e-6)

    def test_003_lstm_op(self):
        x, W, U = self.rng.normal((5, 3)), self.rng.normal((3, 8)), self.rng.normal((2, 8))
        b = self.rng.normal((1, 8))
        R = self.rng.normal((5, 2))
        loss = lambda p: (ag.lstm(p[0], p[1], p[2], p[3]) * R).sum()
        self.assertLess(gradient_check(loss, [x, W, U, b]), 1e-6)


class test_parameter_trees(unittest.TestCase):

    def test_001_named_arrays(self):
        tree = [Pair(np.zeros((2, 2)), np.ones((1, 2))), Pair(np.eye(3), np.zeros((1, 3)))]
        names = [name for name, _ in ag.named_arrays(tree)]
        self.assertEqual(names, ['0.W', '0.b', '1.W', '1.b'])

    def test_002_map_arrays_keeps_structure(self):
        pair = Pair(np.ones((2, 2)), np.ones((1, 2)), name='kept')
        doubled = ag.map_arrays(pair, lambda _, a: 2.0 * a)
        self.assertEqual(doubled.name, 'kept')
        np.testing.assert_array_equal(doubled.W, np.full((2, 2), 2.0))
        np.testing.assert_array_equal(pair.W, np.ones((2, 2)))

    def test_003_tensors_round_trip(self):
        pair = Pair(np.ones((2, 2)), np.zeros((1, 2)))
        back = ag.values_of(ag.as_tensors(pair))
        np.testing.assert_array_equal(back.W, pair.W)
        np.testing.assert_array_equal(back.b, pair.b)


if __name__ == '__main__':
    unittest.main()
