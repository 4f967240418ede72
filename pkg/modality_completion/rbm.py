"""
Restricted Boltzmann Machine with contrastive divergence training.

Visible units are either probabilities in [0, 1] (``bernoulli-prob``, the
default for min-max scaled inputs) or standardized reals with a linear mean
(``gaussian-standardized``).
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .errors import ConfigError, UnsupportedError, shape_mismatch
from .numerics import as_matrix, bernoulli_sample

logger = logging.getLogger(__name__)

VISIBLE_KINDS = ('bernoulli-prob', 'gaussian-standardized')


@dataclass
class RbmParams:
    W: np.ndarray
    b_v: np.ndarray
    b_h: np.ndarray
    visible_kind: str = 'bernoulli-prob'

    def __post_init__(self):
        if self.visible_kind not in VISIBLE_KINDS:
            raise ConfigError(f'visible_kind must be one of {VISIBLE_KINDS}, got {self.visible_kind!r}')
        n_v, n_h = self.W.shape
        if tuple(self.b_v.shape) != (1, n_v):
            raise shape_mismatch('visible bias', self.b_v.shape, (1, n_v))
        if tuple(self.b_h.shape) != (1, n_h):
            raise shape_mismatch('hidden bias', self.b_h.shape, (1, n_h))

    @property
    def n_visible(self):
        return self.W.shape[0]

    @property
    def n_hidden(self):
        return self.W.shape[1]

    @classmethod
    def init(cls, n_visible, n_hidden, rng, visible_kind='bernoulli-prob', std=0.01):
        """Weights from N(0, std**2), drawn row-major; zero biases"""
        W = rng.normal((n_visible, n_hidden), std=std)
        return cls(W, np.zeros((1, n_visible)), np.zeros((1, n_hidden)), visible_kind)


def _check_visible(params, v):
    v = as_matrix(v, 'visible')
    if v.shape[1] != params.n_visible:
        raise shape_mismatch('visible layer', v.shape, params.W.shape)
    return v


def prop_up(params, v):
    """p(h=1|v) = sigmoid(vW + b_h)"""
    v = _check_visible(params, v)
    return expit(v @ params.W + params.b_h)


def prop_down(params, h):
    """Visible probabilities, or linear means for the gaussian kind"""
    h = as_matrix(h, 'hidden')
    if h.shape[1] != params.n_hidden:
        raise shape_mismatch('hidden layer', h.shape, params.W.shape)
    a = h @ params.W.T + params.b_v
    if params.visible_kind == 'gaussian-standardized':
        return a
    return expit(a)


def cd_k_update(params, batch, k, lr, rng):
    """
    One CD-k step on ``batch``.

    Hidden states are sampled inside the Gibbs chain (one uniform per hidden
    unit per step, row-major); the positive and negative statistics use
    probabilities. Returns the updated parameters and the mean squared error
    of the one-step reconstruction.
    """
    if k < 1:
        raise ConfigError(f'CD-k needs k >= 1, got {k}')
    if lr < 0:
        raise ConfigError(f'learning rate must be non-negative, got {lr}')
    v0 = _check_visible(params, batch)
    n = v0.shape[0]

    ph0 = prop_up(params, v0)
    h = bernoulli_sample(ph0, rng)
    recon = None
    for step in range(k):
        pv = prop_down(params, h)
        ph = prop_up(params, pv)
        if recon is None:
            recon = pv
        if step < k - 1:
            h = bernoulli_sample(ph, rng)

    recon_error = float(np.mean((v0 - recon) ** 2))
    if lr == 0:
        return params, recon_error

    dW = (v0.T @ ph0 - pv.T @ ph) / n
    db_v = (v0 - pv).mean(axis=0, keepdims=True)
    db_h = (ph0 - ph).mean(axis=0, keepdims=True)
    updated = replace(params,
                      W=params.W + lr * dW,
                      b_v=params.b_v + lr * db_v,
                      b_h=params.b_h + lr * db_h)
    return updated, recon_error


def reconstruction_error(params, batch):
    v = _check_visible(params, batch)
    return float(np.mean((v - prop_down(params, prop_up(params, v))) ** 2))


def free_energy(params, v):
    """F(v) = -v.b_v - sum_j softplus((vW + b_h)_j), one row per sample"""
    if params.visible_kind != 'bernoulli-prob':
        raise UnsupportedError(f'free energy is only defined for bernoulli-prob visibles, not {params.visible_kind}')
    v = _check_visible(params, v)
    pre = v @ params.W + params.b_h
    return -(v @ params.b_v.T) - np.logaddexp(0.0, pre).sum(axis=1, keepdims=True)


def free_energy_gap(params, train, reference):
    """Mean free energy of ``train`` minus that of ``reference``; negative once training patterns are favoured"""
    return float(free_energy(params, train).mean() - free_energy(params, reference).mean())
