"""
Attention fusion of the two decoded modalities.

Queries and keys come from the complete modality, values from the incomplete
one; every head normalizes its values per row before mixing. The fused output
adds an affine map of the normalized attention to an affine projection of both
decoder outputs.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .errors import ConfigError, shape_mismatch
from .numerics import as_matrix

logger = logging.getLogger(__name__)


@dataclass
class FusionParams:
    Wq: list
    Wk: list
    Wv: list
    W_o: np.ndarray
    b_o: np.ndarray
    W_map: np.ndarray
    b_map: np.ndarray
    W_p: np.ndarray
    b_p: np.ndarray
    eps: float = 1e-5
    heads: int = field(init=False)
    d_k: int = field(init=False)

    def __post_init__(self):
        self.heads = len(self.Wq)
        if not self.heads or len(self.Wk) != self.heads or len(self.Wv) != self.heads:
            raise ConfigError('fusion needs the same positive number of Q, K and V projections')
        self.d_k = self.Wq[0].shape[1]

    @property
    def d_fusion(self):
        return self.W_map.shape[1]

    @classmethod
    def init(cls, d_model, rng, heads=4, d_k=8, d_fusion=16, eps=1e-5):
        if heads * d_k != d_model:
            raise ConfigError(f'heads * d_k = {heads * d_k} must equal the model dim {d_model}')
        std = 1.0 / np.sqrt(d_model)
        return cls(
            Wq=[rng.normal((d_model, d_k), std=std) for _ in range(heads)],
            Wk=[rng.normal((d_model, d_k), std=std) for _ in range(heads)],
            Wv=[rng.normal((d_model, d_k), std=std) for _ in range(heads)],
            W_o=rng.normal((d_model, d_model), std=std),
            b_o=np.zeros((1, d_model)),
            W_map=rng.normal((d_model, d_fusion), std=std),
            b_map=np.zeros((1, d_fusion)),
            W_p=rng.normal((2 * d_model, d_fusion), std=1.0 / np.sqrt(2 * d_model)),
            b_p=np.zeros((1, d_fusion)),
            eps=eps,
        )


def attention_weights_t(Q, K):
    return ag.softmax_rows((Q @ K.T) * (1.0 / np.sqrt(Q.shape[1])))


def normalized_mix_t(weights, V, eps):
    return weights @ ag.layer_norm_rows(V, eps)


def attention_dbn_t(Q, K, V, eps):
    return normalized_mix_t(attention_weights_t(Q, K), V, eps)


def multi_head_t(complete_feats, missing_feats, params, return_weights=False):
    """
    Concatenated heads through the output projection. With
    ``return_weights`` the per-head attention matrices (T x T tensors)
    come back as well.
    """
    weights, heads = [], []
    for Wq, Wk, Wv in zip(params.Wq, params.Wk, params.Wv):
        weights.append(attention_weights_t(complete_feats @ Wq, complete_feats @ Wk))
        heads.append(normalized_mix_t(weights[-1], missing_feats @ Wv, params.eps))
    out = ag.concat_cols(heads) @ params.W_o + params.b_o
    return (out, weights) if return_weights else out


def fuse_t(multi_attn, MC_x, MC_y, params):
    mapped = ag.layer_norm_rows(multi_attn, params.eps) @ params.W_map + params.b_map
    return mapped + ag.concat_cols([MC_x, MC_y]) @ params.W_p + params.b_p


def attention_dbn(Q, K, V, eps=1e-5):
    """softmax(QK^T / sqrt(d_k)) times the row-normalized V"""
    Q, K, V = as_matrix(Q, 'Q'), as_matrix(K, 'K'), as_matrix(V, 'V')
    if Q.shape[1] != K.shape[1]:
        raise shape_mismatch('attention queries and keys', Q.shape, K.shape)
    if K.shape[0] != V.shape[0]:
        raise shape_mismatch('attention keys and values', K.shape, V.shape)
    return attention_dbn_t(ag.Tensor(Q), ag.Tensor(K), ag.Tensor(V), eps).value


def _check_multi_head(complete_feats, missing_feats, params):
    if complete_feats.shape[0] != missing_feats.shape[0]:
        raise shape_mismatch('fusion time grids', complete_feats.shape, missing_feats.shape)
    d_model = complete_feats.shape[1]
    if params.heads * params.d_k != d_model:
        raise ConfigError(f'heads * d_k = {params.heads * params.d_k} must equal the model dim {d_model}')
    if params.Wq[0].shape[0] != d_model or params.Wv[0].shape[0] != missing_feats.shape[1]:
        raise shape_mismatch('fusion projections', params.Wq[0].shape, complete_feats.shape)


def multi_head(complete_feats, missing_feats, params, return_weights=False):
    complete_feats = as_matrix(complete_feats, 'complete_feats')
    missing_feats = as_matrix(missing_feats, 'missing_feats')
    _check_multi_head(complete_feats, missing_feats, params)
    out = multi_head_t(ag.Tensor(complete_feats), ag.Tensor(missing_feats), ag.constants(params),
                       return_weights=return_weights)
    if return_weights:
        return out[0].value, [w.value for w in out[1]]
    return out.value


def fuse(multi_attn, MC_x, MC_y, params):
    multi_attn, MC_x, MC_y = as_matrix(multi_attn), as_matrix(MC_x), as_matrix(MC_y)
    if not multi_attn.shape[0] == MC_x.shape[0] == MC_y.shape[0]:
        raise shape_mismatch('fuse time grids', multi_attn.shape, MC_x.shape)
    if MC_x.shape[1] + MC_y.shape[1] != params.W_p.shape[0]:
        raise shape_mismatch('fuse projection', (MC_x.shape[1] + MC_y.shape[1],), params.W_p.shape)
    return fuse_t(ag.Tensor(multi_attn), ag.Tensor(MC_x), ag.Tensor(MC_y), ag.constants(params)).value


def choose_complete_modality(mask_x, mask_y):
    """'x' unless modality y has strictly fewer missing entries"""
    missing_x = int((~np.asarray(mask_x, dtype=bool)).sum())
    missing_y = int((~np.asarray(mask_y, dtype=bool)).sum())
    return 'y' if missing_y < missing_x else 'x'
