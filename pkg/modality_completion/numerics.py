"""
Dense primitives shared by the whole pipeline.

A Matrix is a 2-D ``numpy.ndarray`` of dtype float64. Randomness comes from
``Rng`` (xoshiro256**, seeded through splitmix64) so that sampled bit patterns
are portable: uniforms are ``(next >> 11) * 2**-53`` and every sampling routine
consumes them in row-major order.
"""

import logging
import math

import numpy as np
from scipy.special import expit, softmax

from .errors import ConfigError, DomainError, ShapeError, shape_mismatch

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
TWO_POW_53 = 1.0 / (1 << 53)


def splitmix64(state):
    """One splitmix64 step: returns (new_state, output)"""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def derive_seeds(master, n):
    """First ``n`` splitmix64 outputs of ``master``; used for per-instrument seeds"""
    state = int(master) & MASK64
    seeds = []
    for _ in range(n):
        state, out = splitmix64(state)
        seeds.append(out)
    return seeds


class Rng:
    """xoshiro256** generator. Single owner, never shared between threads."""

    def __init__(self, seed=0):
        self.seed = int(seed) & MASK64
        state = self.seed
        s = []
        for _ in range(4):
            state, out = splitmix64(state)
            s.append(out)
        self._s = s

    @classmethod
    def from_state(cls, s0, s1, s2, s3):
        rng = cls.__new__(cls)
        rng.seed = None
        rng._s = [s0 & MASK64, s1 & MASK64, s2 & MASK64, s3 & MASK64]
        if not any(rng._s):
            raise DomainError('xoshiro256** state must not be all zero')
        return rng

    @property
    def state(self):
        return tuple(self._s)

    def next_uint64(self):
        return self._draw(1)[0]

    def _draw(self, n):
        s0, s1, s2, s3 = self._s
        out = [0] * n
        for i in range(n):
            r = ((s1 * 5) & MASK64)
            r = ((((r << 7) | (r >> 57)) & MASK64) * 9) & MASK64
            out[i] = r
            t = (s1 << 17) & MASK64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
        self._s = [s0, s1, s2, s3]
        return out

    def uniform(self, shape):
        """Uniforms in [0, 1), filled row-major"""
        shape = tuple(shape) if np.ndim(shape) else (int(shape),)
        n = int(np.prod(shape)) if shape else 1
        draws = self._draw(n)
        return np.array([(u >> 11) * TWO_POW_53 for u in draws], dtype=np.float64).reshape(shape)

    def normal(self, shape, std=1.0):
        """Box-Muller on consecutive uniform pairs; cos branch first, then sin"""
        shape = tuple(shape) if np.ndim(shape) else (int(shape),)
        n = int(np.prod(shape)) if shape else 1
        u = self.uniform(((n + 1) // 2) * 2).reshape(-1, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = 2.0 * math.pi * u[:, 1]
        z = np.column_stack([r * np.cos(theta), r * np.sin(theta)]).ravel()[:n]
        return std * z.reshape(shape)

    def integers(self, n):
        """Uniform integer in [0, n)"""
        return (self.next_uint64() * n) >> 64

    def permutation(self, n):
        """Fisher-Yates, drawing from the top index downwards"""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.integers(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def as_matrix(a, name='matrix'):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f'{name} must be 2-D, got shape {a.shape}')
    return a


def check_finite(a, what):
    if not np.all(np.isfinite(a)):
        raise DomainError(f'{what}: non-finite entries')
    return a


def matmul(a, b):
    a = as_matrix(a, 'a')
    b = as_matrix(b, 'b')
    if a.shape[1] != b.shape[0]:
        raise shape_mismatch('matmul', a.shape, b.shape)
    return check_finite(a @ b, 'matmul')


ACTIVATIONS = {
    'sigmoid': expit,
    'tanh': np.tanh,
    'relu': lambda a: np.maximum(a, 0.0),
}


def elementwise(a, fn):
    try:
        f = ACTIVATIONS[fn]
    except KeyError:
        raise ConfigError(f'unknown activation {fn!r}; choose from {sorted(ACTIVATIONS)}')
    return f(as_matrix(a))


def softmax_rows(a):
    """Row-wise softmax with per-row max subtraction"""
    return softmax(as_matrix(a), axis=1)


def layer_norm_rows(a, eps):
    """(x - mean) / sqrt(var + eps) per row, population variance"""
    if not eps > 0:
        raise ConfigError(f'layer norm eps must be positive, got {eps}')
    a = as_matrix(a)
    mu = a.mean(axis=1, keepdims=True)
    xc = a - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    return xc / np.sqrt(var + eps)


def bernoulli_sample(p, rng):
    """1 where the next uniform is below p, consuming one uniform per entry row-major"""
    p = as_matrix(p, 'p')
    if p.size and (np.any(~(p >= 0.0)) or np.any(~(p <= 1.0))):
        raise DomainError('bernoulli_sample: probabilities must lie in [0, 1]')
    u = rng.uniform(p.shape)
    return (u < p).astype(np.float64)
