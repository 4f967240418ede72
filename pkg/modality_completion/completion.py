"""
Cross-modal completion: attention-gated Bernoulli encoding of each modality
and generation of each modality from the other modality's hidden code.

Each step exists twice: a numpy function used for inference (with Bernoulli
sampling of the hidden code) and a ``Tensor`` function used by fine-tuning,
where the hidden code is replaced by its probabilities.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .dbn import DbnStack, generate_down, pretrain_greedy, transform_up
from .errors import ConfigError, DegenerateInputError, ShapeError, shape_mismatch
from .numerics import as_matrix, bernoulli_sample

logger = logging.getLogger(__name__)

MODALITIES = ('x', 'y')


@dataclass
class ModalityBatch:
    """Values of one modality on the shared time grid; ``mask`` is True where observed"""
    values: np.ndarray
    mask: np.ndarray
    modality_id: str = 'x'

    def __post_init__(self):
        if self.modality_id not in MODALITIES:
            raise ConfigError(f'modality_id must be one of {MODALITIES}, got {self.modality_id!r}')
        values = as_matrix(self.values, f'modality {self.modality_id}')
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != values.shape:
            raise shape_mismatch(f'modality {self.modality_id} mask', mask.shape, values.shape)
        self.values = np.where(mask, np.nan_to_num(values), 0.0)
        self.mask = mask

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_missing(self):
        return int((~self.mask).sum())


@dataclass
class AttentionProjection:
    P_q: np.ndarray
    P_k: np.ndarray
    P_v: np.ndarray

    @classmethod
    def init(cls, d, rng):
        std = 1.0 / np.sqrt(d)
        return cls(rng.normal((d, d), std=std), rng.normal((d, d), std=std), np.eye(d))


@dataclass
class CompletionModel:
    attn_x: AttentionProjection
    attn_y: AttentionProjection
    encoder_x: DbnStack
    encoder_y: DbnStack
    gen_x: DbnStack
    gen_y: DbnStack

    def __post_init__(self):
        if self.encoder_x.top_size != self.encoder_y.top_size:
            raise ShapeError(f'encoders disagree on latent width: {self.encoder_x.top_size} '
                             f'vs {self.encoder_y.top_size}')
        for gen, enc, name in ((self.gen_x, self.encoder_x, 'x'), (self.gen_y, self.encoder_y, 'y')):
            if gen.input_size != enc.input_size:
                raise ShapeError(f'generator for {name} emits {gen.input_size} columns, '
                                 f'modality has {enc.input_size}')
            if gen.top_size != enc.top_size:
                raise ShapeError(f'generator for {name} reads a code of width {gen.top_size}, '
                                 f'encoders emit {enc.top_size}')

    @property
    def d_x(self):
        return self.encoder_x.input_size

    @property
    def d_y(self):
        return self.encoder_y.input_size

    @classmethod
    def init(cls, d_x, d_y, hidden_sizes, rng, visible_kind='bernoulli-prob', std=0.01):
        hidden_sizes = list(hidden_sizes)
        return cls(
            attn_x=AttentionProjection.init(d_x, rng),
            attn_y=AttentionProjection.init(d_y, rng),
            encoder_x=DbnStack.init([d_x] + hidden_sizes, rng, 'bernoulli-prob', std),
            encoder_y=DbnStack.init([d_y] + hidden_sizes, rng, 'bernoulli-prob', std),
            gen_x=DbnStack.init([d_x] + hidden_sizes, rng, visible_kind, std),
            gen_y=DbnStack.init([d_y] + hidden_sizes, rng, visible_kind, std),
        )

    def projection(self, modality_id):
        return self.attn_x if modality_id == 'x' else self.attn_y

    def encoder(self, modality_id):
        return self.encoder_x if modality_id == 'x' else self.encoder_y


# Tensor forms

def self_attention_t(values, proj):
    d = values.shape[1]
    q = values @ proj.P_q
    k = values @ proj.P_k
    v = values @ proj.P_v
    return ag.softmax_rows((q @ k.T) * (1.0 / np.sqrt(d))) @ v


def attended_t(values, W_attn):
    return ag.softmax_rows(values * W_attn)


def transform_up_t(stack, v):
    for layer in stack.layers:
        v = (v @ layer.W + layer.b_h).sigmoid()
    return v


def generate_mean_t(stack, h):
    for layer in reversed(stack.layers):
        h = h @ layer.W.T + layer.b_v
        if layer.visible_kind != 'gaussian-standardized':
            h = h.sigmoid()
    return h


def masked_mse_t(G, values, mask):
    """Mean squared error over observed entries; a tensor zero when nothing is observed"""
    n_obs = int(mask.sum())
    if n_obs == 0:
        return ag.Tensor(0.0)
    diff = (G - values) * mask.astype(np.float64)
    return diff.square().sum() * (1.0 / n_obs)


def relaxed_completion(model, I_x, I_y):
    """
    Differentiable completion with hidden probabilities in place of samples.

    ``model`` holds Tensors. Returns (G_x, G_y, loss_x, loss_y, completed_x, completed_y).
    """
    codes = {}
    for I in (I_x, I_y):
        values = ag.Tensor(I.values)
        W_attn = self_attention_t(values, model.projection(I.modality_id))
        codes[I.modality_id] = transform_up_t(model.encoder(I.modality_id), attended_t(values, W_attn))
    G_x = generate_mean_t(model.gen_x, codes['y'])
    G_y = generate_mean_t(model.gen_y, codes['x'])
    completed = []
    for G, I in ((G_x, I_x), (G_y, I_y)):
        observed = I.mask.astype(np.float64)
        completed.append(G * (1.0 - observed) + I.values * observed)
    return (G_x, G_y, masked_mse_t(G_x, I_x.values, I_x.mask), masked_mse_t(G_y, I_y.values, I_y.mask),
            completed[0], completed[1])


# numpy forms

def _check_model_input(I, model):
    d = model.projection(I.modality_id).P_q.shape[0]
    if I.values.shape[1] != d:
        raise shape_mismatch(f'modality {I.modality_id}', I.values.shape, (I.values.shape[0], d))


def self_attention_weights(I, model):
    """Scaled dot-product self-attention over time steps, T x d"""
    _check_model_input(I, model)
    proj = ag.constants(model.projection(I.modality_id))
    return self_attention_t(ag.Tensor(I.values), proj).value


def attended_input(I, W_attn):
    """Row-wise softmax over features of I * W_attn"""
    W_attn = as_matrix(W_attn, 'W_attn')
    if W_attn.shape != I.values.shape:
        raise shape_mismatch('attended_input', I.values.shape, W_attn.shape)
    return attended_t(ag.Tensor(I.values), ag.Tensor(W_attn)).value


def encode_hidden(Attn, encoder, rng):
    return bernoulli_sample(transform_up(encoder, Attn), rng)


def complete_modality(H_other, generator, rng, stochastic=False):
    return generate_down(generator, H_other, rng, stochastic)


def modal_loss(G, I):
    G = as_matrix(G, 'G')
    if G.shape != I.values.shape:
        raise shape_mismatch('modal_loss', G.shape, I.values.shape)
    n_obs = int(I.mask.sum())
    if n_obs == 0:
        raise DegenerateInputError(f'modality {I.modality_id} has no observed entries')
    diff = (G - I.values)[I.mask]
    return float(np.mean(diff * diff))


def substitute(I, G):
    """Observed values kept verbatim, G at the masked entries"""
    return np.where(I.mask, I.values, G)


def run_completion(I_x, I_y, model, rng, n_samples=1, stochastic=False):
    """
    Full completion pass.

    Both modalities are encoded (x first, then y, each consuming T x top_size
    uniforms), and each is generated from the other's code. With
    ``n_samples`` > 1 the binary codes of independent encodings are averaged
    and the generators run once on the averaged code, which approaches the
    hidden probabilities that fine-tuning trains on. A modality without
    observed entries reports a modal loss of 0.

    :return: (G_x, G_y, loss_x, loss_y)
    """
    if n_samples < 1:
        raise ConfigError(f'n_samples must be at least 1, got {n_samples}')
    if I_x.shape[0] != I_y.shape[0]:
        raise shape_mismatch('modalities on different time grids', I_x.shape, I_y.shape)
    _check_model_input(I_x, model)
    _check_model_input(I_y, model)

    attn = {}
    for I in (I_x, I_y):
        attn[I.modality_id] = attended_input(I, self_attention_weights(I, model))

    H_x = np.zeros((I_x.shape[0], model.encoder_x.top_size))
    H_y = np.zeros((I_y.shape[0], model.encoder_y.top_size))
    for _ in range(n_samples):
        H_x += encode_hidden(attn['x'], model.encoder_x, rng)
        H_y += encode_hidden(attn['y'], model.encoder_y, rng)
    G_x = complete_modality(H_y / n_samples, model.gen_x, rng, stochastic)
    G_y = complete_modality(H_x / n_samples, model.gen_y, rng, stochastic)

    loss_x = modal_loss(G_x, I_x) if I_x.mask.any() else 0.0
    loss_y = modal_loss(G_y, I_y) if I_y.mask.any() else 0.0
    return G_x, G_y, loss_x, loss_y


def _pretrain_rows(I):
    """Every row, with unobserved entries replaced by the observed column mean"""
    counts = I.mask.sum(axis=0)
    means = np.divide(I.values.sum(axis=0), counts, out=np.zeros(I.values.shape[1]), where=counts > 0)
    return np.where(I.mask, I.values, means)


def _reference_rows(like, visible_kind, rng):
    """Random visibles of the same shape, for the free-energy gap"""
    if visible_kind == 'gaussian-standardized':
        return rng.normal(like.shape)
    return rng.uniform(like.shape)


def pretrain_completion(model, I_x, I_y, epochs, lr, k, rng, batch_size=None):
    """
    Greedy pretraining of the four stacks: each encoder on its attended
    input, each generator on the rows of its own modality with missing
    entries at the observed column mean. Every stack also gets a random
    reference batch drawn from ``rng`` so the free-energy gap shows up in
    the debug log.
    """
    traces = {}
    stacks = {}
    for I in (I_x, I_y):
        name = I.modality_id
        Attn = attended_input(I, self_attention_weights(I, model))
        logger.info(f'pretraining encoder_{name} on {Attn.shape[0]} rows')
        stacks[f'encoder_{name}'], traces[f'encoder_{name}'] = pretrain_greedy(
            model.encoder(name), Attn, epochs, lr, k, rng, batch_size,
            reference=_reference_rows(Attn, 'bernoulli-prob', rng))
    for I, gen in ((I_x, model.gen_x), (I_y, model.gen_y)):
        name = I.modality_id
        rows = _pretrain_rows(I)
        logger.info(f'pretraining gen_{name} on {rows.shape[0]} rows')
        stacks[f'gen_{name}'], traces[f'gen_{name}'] = pretrain_greedy(
            gen, rows, epochs, lr, k, rng, batch_size,
            reference=_reference_rows(rows, gen.layers[0].visible_kind, rng))
    return CompletionModel(model.attn_x, model.attn_y, **stacks), traces
