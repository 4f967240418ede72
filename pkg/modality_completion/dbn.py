"""
Deep belief network: a stack of RBMs trained greedily from the bottom up.
"""

import logging
from dataclasses import dataclass, field

from .errors import ConfigError, ShapeError, shape_mismatch
from .numerics import as_matrix, bernoulli_sample
from .rbm import RbmParams, cd_k_update, free_energy_gap, prop_down, prop_up, reconstruction_error

logger = logging.getLogger(__name__)


@dataclass
class DbnStack:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ConfigError('a DBN stack needs at least one layer')
        for i, (lower, upper) in enumerate(zip(self.layers[:-1], self.layers[1:])):
            if lower.W.shape[1] != upper.W.shape[0]:
                raise ShapeError(f'layer {i} has {lower.W.shape[1]} hidden units but layer {i + 1} '
                                 f'expects {upper.W.shape[0]} visible units')

    @property
    def layer_sizes(self):
        return [self.layers[0].W.shape[0]] + [layer.W.shape[1] for layer in self.layers]

    @property
    def input_size(self):
        return self.layer_sizes[0]

    @property
    def top_size(self):
        return self.layer_sizes[-1]

    @classmethod
    def init(cls, sizes, rng, visible_kind='bernoulli-prob', std=0.01):
        """
        Fresh stack for ``sizes`` = [n_input, n_hidden_1, ...]. Only the bottom
        layer takes ``visible_kind``; every upper layer sees probabilities.
        """
        if len(sizes) < 2:
            raise ConfigError(f'a DBN needs at least two layer sizes, got {list(sizes)}')
        layers = []
        for i, (n_v, n_h) in enumerate(zip(sizes[:-1], sizes[1:])):
            kind = visible_kind if i == 0 else 'bernoulli-prob'
            layers.append(RbmParams.init(n_v, n_h, rng, kind, std))
        return cls(layers)


def pretrain_greedy(stack, batch, epochs, lr, k, rng, batch_size=None, reference=None):
    """
    Layer-wise CD-k pretraining.

    Layer 0 trains on ``batch``; layer i > 0 trains on the prop_up
    probabilities of the already trained layers below. With ``batch_size``
    the rows are visited in contiguous chunks, otherwise each epoch is a single
    full-batch update. ``reference`` (random or held-out visibles) enables a
    free-energy gap log line for every layer with bernoulli visibles;
    the reference follows the data up through each trained layer.

    :return: (trained stack, per-layer traces of [initial error, error after each epoch])
    """
    if epochs < 1:
        raise ConfigError(f'pretraining needs at least one epoch, got {epochs}')
    data = as_matrix(batch, 'batch')
    if data.shape[1] != stack.input_size:
        raise shape_mismatch('pretrain batch', data.shape, (data.shape[0], stack.input_size))
    if reference is not None:
        reference = as_matrix(reference, 'reference')
        if reference.shape[1] != stack.input_size:
            raise shape_mismatch('free energy reference', reference.shape, (reference.shape[0], stack.input_size))
    n = data.shape[0]
    chunk = n if not batch_size or batch_size >= n else int(batch_size)

    trained, traces = [], []
    for depth, layer in enumerate(stack.layers):
        trace = [reconstruction_error(layer, data)]
        for epoch in range(epochs):
            for start in range(0, n, chunk):
                layer, _ = cd_k_update(layer, data[start:start + chunk], k, lr, rng)
            trace.append(reconstruction_error(layer, data))
            logger.debug(f'layer {depth} epoch {epoch + 1}/{epochs}: reconstruction error {trace[-1]:.6f}')
        logger.info(f'layer {depth} ({layer.n_visible}->{layer.n_hidden}): '
                    f'reconstruction error {trace[0]:.6f} -> {trace[-1]:.6f}')
        if reference is not None:
            if layer.visible_kind == 'bernoulli-prob':
                logger.debug(f'layer {depth} free energy gap {free_energy_gap(layer, data, reference):.6f}')
            reference = prop_up(layer, reference)
        trained.append(layer)
        traces.append(trace)
        data = prop_up(layer, data)
    return DbnStack(trained), traces


def transform_up(stack, v):
    """Composed prop_up probabilities through every layer"""
    h = as_matrix(v, 'visible')
    for layer in stack.layers:
        h = prop_up(layer, h)
    return h


def generate_down(stack, h_top, rng, stochastic=False):
    """
    Top-down pass. In stochastic mode binary states are sampled between
    layers; the bottom layer always returns probabilities (or means).
    """
    v = as_matrix(h_top, 'top hidden')
    if v.shape[1] != stack.top_size:
        raise shape_mismatch('generate_down', v.shape, (v.shape[0], stack.top_size))
    for depth in range(len(stack.layers) - 1, -1, -1):
        v = prop_down(stack.layers[depth], v)
        if stochastic and depth > 0:
            v = bernoulli_sample(v, rng)
    return v
