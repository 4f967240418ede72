"""
Sequence decoders applied to completed modalities: a single-layer LSTM, a
pre-norm Transformer block and a per-step affine map.

Every decoder maps a T x d_in sequence to T x d_model. The numpy entry points
wrap the ``Tensor`` forward used during fine-tuning.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autograd as ag
from .errors import ConfigError, shape_mismatch
from .numerics import as_matrix

logger = logging.getLogger(__name__)

DECODERS = ('transformer', 'lstm', 'linear')


@dataclass
class LinearParams:
    W: np.ndarray
    b: np.ndarray

    @classmethod
    def init(cls, d_in, d_out, rng):
        return cls(rng.normal((d_in, d_out), std=1.0 / np.sqrt(d_in)), np.zeros((1, d_out)))

    @property
    def d_in(self):
        return self.W.shape[0]


@dataclass
class LstmParams:
    """Gate blocks of W, U and b in the order input, forget, output, candidate"""
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    @classmethod
    def init(cls, d_in, d_h, rng):
        W = rng.normal((d_in, 4 * d_h), std=1.0 / np.sqrt(d_in))
        U = rng.normal((d_h, 4 * d_h), std=1.0 / np.sqrt(d_h))
        b = np.zeros((1, 4 * d_h))
        b[0, d_h:2 * d_h] = 1.0
        return cls(W, U, b)

    @property
    def d_in(self):
        return self.W.shape[0]

    @property
    def d_h(self):
        return self.U.shape[0]


@dataclass
class TransformerBlockParams:
    Wq: np.ndarray
    Wk: np.ndarray
    Wv: np.ndarray
    Wo: np.ndarray
    bo: np.ndarray
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    in_proj: Optional[LinearParams] = None
    heads: int = 4
    eps: float = 1e-5
    positional: bool = True

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ConfigError(f'model dim {self.d_model} is not divisible by {self.heads} heads')

    @property
    def d_model(self):
        return self.Wq.shape[0]

    @property
    def d_in(self):
        return self.in_proj.d_in if self.in_proj is not None else self.d_model

    @classmethod
    def init(cls, d_in, d_model, rng, heads=4, eps=1e-5, positional=True):
        if d_model % heads:
            raise ConfigError(f'model dim {d_model} is not divisible by {heads} heads')
        std = 1.0 / np.sqrt(d_model)
        in_proj = LinearParams.init(d_in, d_model, rng) if d_in != d_model else None
        return cls(
            Wq=rng.normal((d_model, d_model), std=std),
            Wk=rng.normal((d_model, d_model), std=std),
            Wv=rng.normal((d_model, d_model), std=std),
            Wo=rng.normal((d_model, d_model), std=std),
            bo=np.zeros((1, d_model)),
            ln1_gain=np.ones((1, d_model)), ln1_bias=np.zeros((1, d_model)),
            ln2_gain=np.ones((1, d_model)), ln2_bias=np.zeros((1, d_model)),
            W1=rng.normal((d_model, 4 * d_model), std=std),
            b1=np.zeros((1, 4 * d_model)),
            W2=rng.normal((4 * d_model, d_model), std=1.0 / np.sqrt(4 * d_model)),
            b2=np.zeros((1, d_model)),
            in_proj=in_proj, heads=heads, eps=eps, positional=positional,
        )


def positional_encoding(T, d):
    """Sinusoidal encoding: sin on even columns, cos on odd columns"""
    pos = np.arange(T, dtype=np.float64)[:, None]
    i = np.arange(0, d, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, i / d)
    pe = np.zeros((T, d))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, :d // 2])
    return pe


def _check_seq(seq, d_in, name):
    if seq.shape[1] != d_in:
        raise shape_mismatch(f'{name} input', seq.shape, (seq.shape[0], d_in))


def linear_t(params, seq):
    return seq @ params.W + params.b


def lstm_t(params, seq):
    return ag.lstm(seq, params.W, params.U, params.b)


def multi_head_self_attention_t(x, params):
    d = params.d_model
    dh = d // params.heads
    q, k, v = x @ params.Wq, x @ params.Wk, x @ params.Wv
    heads = []
    for h in range(params.heads):
        cols = slice(h * dh, (h + 1) * dh)
        scores = (q[:, cols] @ k[:, cols].T) * (1.0 / np.sqrt(dh))
        heads.append(ag.softmax_rows(scores) @ v[:, cols])
    return ag.concat_cols(heads) @ params.Wo + params.bo


def transformer_t(params, seq):
    x = linear_t(params.in_proj, seq) if params.in_proj is not None else seq
    if params.positional:
        x = x + positional_encoding(x.shape[0], params.d_model)
    a = ag.layer_norm_rows(x, params.eps) * params.ln1_gain + params.ln1_bias
    x = x + multi_head_self_attention_t(a, params)
    f = ag.layer_norm_rows(x, params.eps) * params.ln2_gain + params.ln2_bias
    f = (f @ params.W1 + params.b1).relu() @ params.W2 + params.b2
    return x + f


def decode_t(params, seq):
    """Dispatch on the parameter type"""
    if isinstance(params, TransformerBlockParams):
        return transformer_t(params, seq)
    if isinstance(params, LstmParams):
        return lstm_t(params, seq)
    return linear_t(params, seq)


def init_decoder(kind, d_in, d_model, rng, heads=4, eps=1e-5):
    if kind == 'transformer':
        return TransformerBlockParams.init(d_in, d_model, rng, heads, eps)
    if kind == 'lstm':
        return LstmParams.init(d_in, d_model, rng)
    if kind == 'linear':
        return LinearParams.init(d_in, d_model, rng)
    raise ConfigError(f'unknown decoder {kind!r}; choose from {DECODERS}')


def decoder_kind(params):
    if isinstance(params, TransformerBlockParams):
        return 'transformer'
    return 'lstm' if isinstance(params, LstmParams) else 'linear'


def lstm_forward(params, seq):
    """Hidden states of every step, T x d_h, zero initial state"""
    seq = as_matrix(seq, 'sequence')
    _check_seq(seq, params.d_in, 'lstm')
    if seq.shape[0] == 0:
        return np.zeros((0, params.d_h))
    return lstm_t(ag.constants(params), ag.Tensor(seq)).value


def transformer_forward(params, seq):
    seq = as_matrix(seq, 'sequence')
    _check_seq(seq, params.d_in, 'transformer')
    return transformer_t(ag.constants(params), ag.Tensor(seq)).value


def linear_forward(params, seq):
    seq = as_matrix(seq, 'sequence')
    _check_seq(seq, params.d_in, 'linear')
    return linear_t(ag.constants(params), ag.Tensor(seq)).value


def decode(params, seq):
    return {'transformer': transformer_forward,
            'lstm': lstm_forward,
            'linear': linear_forward}[decoder_kind(params)](params, seq)
