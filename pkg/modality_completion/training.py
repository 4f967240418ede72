"""
Losses, joint fine-tuning of the completion model, gradient verification and
the downstream LSTM predictor.

Fine-tuning runs plain SGD over contiguous windows of the training rows. The
window order of every epoch is a permutation drawn from ``Rng(cfg.seed)``,
so equal seeds give bit-identical traces.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from sklearn.linear_model import LinearRegression, LogisticRegression

from . import autograd as ag
from .completion import (CompletionModel, ModalityBatch, pretrain_completion, relaxed_completion, run_completion,
                         substitute)
from .data import ModalityScalers, split_index
from .decoders import DECODERS, LinearParams, LstmParams, decode_t, init_decoder, lstm_t
from .errors import ConfigError, DataError, DivergenceError, shape_mismatch
from .fusion import FusionParams, choose_complete_modality, fuse_t, multi_head_t
from .numerics import Rng, as_matrix
from .rbm import VISIBLE_KINDS

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

TASKS = ('regression', 'classification')
TRACE_COLUMNS = ['epoch', 'loss_total', 'loss_modal_x', 'loss_modal_y', 'loss_task']


@dataclass
class LossSwitches:
    use_modal_x: bool = True
    use_modal_y: bool = True


@dataclass
class TrainConfig:
    seed: int = 0
    lr: float = 0.01
    epochs: int = 20
    batch_size: int = 32
    cd_k: int = 1
    pretrain_epochs: int = 10
    pretrain_lr: float = 0.1
    pretrain_batch_size: int = 32
    decoder_x: str = 'transformer'
    decoder_y: str = 'lstm'
    loss_switches: LossSwitches = field(default_factory=LossSwitches)
    hidden_sizes: tuple = (64, 32)
    visible_kind: str = 'bernoulli-prob'
    d_model: int = 32
    transformer_heads: int = 4
    heads: int = 4
    d_k: int = 8
    d_fusion: int = 16
    ln_eps: float = 1e-5
    task: str = 'regression'
    n_classes: int = 5
    completion_samples: int = 32
    downstream_hidden: int = 16
    downstream_epochs: int = 30
    downstream_lr: float = 0.05
    train_fraction: float = 0.7
    init_std: float = 0.1
    max_grad_norm: float = 1.0
    crossmodal_iters: int = 300

    def __post_init__(self):
        if isinstance(self.loss_switches, dict):
            self.loss_switches = LossSwitches(**self.loss_switches)
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)

    def validate(self):
        """Range checks applied to every configuration loaded from disk"""
        for name in ('epochs', 'batch_size', 'cd_k', 'pretrain_epochs', 'd_model', 'transformer_heads',
                     'heads', 'd_k', 'd_fusion', 'completion_samples', 'downstream_hidden', 'downstream_epochs'):
            if getattr(self, name) < 1:
                raise ConfigError(f'train.{name} must be a positive count, got {getattr(self, name)}')
        for name in ('lr', 'pretrain_lr', 'downstream_lr', 'ln_eps', 'init_std'):
            if not getattr(self, name) > 0:
                raise ConfigError(f'train.{name} must be positive, got {getattr(self, name)}')
        if self.pretrain_batch_size < 0:
            raise ConfigError('train.pretrain_batch_size must be 0 (full batch) or positive')
        if self.max_grad_norm < 0:
            raise ConfigError(f'train.max_grad_norm must be non-negative, got {self.max_grad_norm}')
        if self.crossmodal_iters < 0:
            raise ConfigError(f'train.crossmodal_iters must be non-negative, got {self.crossmodal_iters}')
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ConfigError(f'train.hidden_sizes must be positive counts, got {list(self.hidden_sizes)}')
        for name, allowed in (('decoder_x', DECODERS), ('decoder_y', DECODERS), ('task', TASKS),
                              ('visible_kind', VISIBLE_KINDS)):
            if getattr(self, name) not in allowed:
                raise ConfigError(f'train.{name} must be one of {allowed}, got {getattr(self, name)!r}')
        if self.heads * self.d_k != self.d_model:
            raise ConfigError(f'train.heads * train.d_k must equal train.d_model ({self.d_model})')
        if self.d_model % self.transformer_heads:
            raise ConfigError('train.d_model must be divisible by train.transformer_heads')
        if self.task == 'classification' and self.n_classes < 2:
            raise ConfigError('classification needs train.n_classes >= 2')
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f'train.train_fraction must lie in (0, 1), got {self.train_fraction}')
        return self


@dataclass
class TaskHead:
    W: np.ndarray
    b: np.ndarray
    kind: str = 'regression'

    @property
    def n_outputs(self):
        return self.W.shape[1]

    @classmethod
    def init(cls, d_in, kind, n_classes, rng):
        if kind not in TASKS:
            raise ConfigError(f'task must be one of {TASKS}, got {kind!r}')
        n_out = n_classes if kind == 'classification' else 1
        return cls(rng.normal((d_in, n_out), std=0.1 / np.sqrt(d_in)), np.zeros((1, n_out)), kind)


def head_t(head, features):
    out = features @ head.W + head.b
    return ag.softmax_rows(out) if head.kind == 'classification' else out


# Losses

def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _check_one_hot(labels):
    labels = as_matrix(labels, 'labels')
    valid = np.isin(labels, (0.0, 1.0)).all(axis=1) & (labels.sum(axis=1) == 1.0)
    if not valid.all():
        raise DataError(f'label row {int(np.flatnonzero(~valid)[0])} is not one-hot')
    return labels


def classification_loss_t(probs, labels):
    return -(ag.log(probs) * labels).sum() * (1.0 / labels.shape[0])


def regression_loss_t(pred, actual):
    return (pred - actual).square().mean()


def task_loss_classification(probs, labels):
    """Mean cross-entropy with probabilities clamped at 1e-12"""
    probs = as_matrix(probs, 'probs')
    labels = _check_one_hot(labels)
    if probs.shape != labels.shape:
        raise shape_mismatch('classification loss', probs.shape, labels.shape)
    return float(classification_loss_t(ag.Tensor(probs), labels).value)


def task_loss_regression(pred, actual):
    pred, actual = as_matrix(pred, 'pred'), as_matrix(actual, 'actual')
    if pred.shape != actual.shape:
        raise shape_mismatch('regression loss', pred.shape, actual.shape)
    return float(np.mean((actual - pred) ** 2))


def total_loss(l_modal_x, l_modal_y, l_task, switches=None):
    """Unweighted sum of the enabled terms; works on floats and Tensors"""
    switches = switches or LossSwitches()
    terms = [l for l, on in ((l_modal_x, switches.use_modal_x), (l_modal_y, switches.use_modal_y)) if on]
    total = l_task
    if terms:
        total = terms[0]
        for term in terms[1:] + [l_task]:
            total = total + term
    return total


# The joint model

@dataclass
class MCDBNModel:
    completion: CompletionModel
    decoder_x: object
    decoder_y: object
    fusion: FusionParams
    head: TaskHead

    @classmethod
    def init(cls, d_x, d_y, cfg, rng):
        return cls(
            completion=CompletionModel.init(d_x, d_y, cfg.hidden_sizes, rng, cfg.visible_kind, cfg.init_std),
            decoder_x=init_decoder(cfg.decoder_x, d_x, cfg.d_model, rng, cfg.transformer_heads, cfg.ln_eps),
            decoder_y=init_decoder(cfg.decoder_y, d_y, cfg.d_model, rng, cfg.transformer_heads, cfg.ln_eps),
            fusion=FusionParams.init(cfg.d_model, rng, cfg.heads, cfg.d_k, cfg.d_fusion, cfg.ln_eps),
            head=TaskHead.init(cfg.d_fusion, cfg.task, cfg.n_classes, rng),
        )


@dataclass
class ForwardPass:
    G_x: ag.Tensor
    G_y: ag.Tensor
    loss_modal_x: ag.Tensor
    loss_modal_y: ag.Tensor
    output: ag.Tensor


def forward_t(model, I_x, I_y):
    """Completion, decoding, fusion and task head for one window"""
    G_x, G_y, loss_x, loss_y, completed_x, completed_y = relaxed_completion(model.completion, I_x, I_y)
    MC_x = decode_t(model.decoder_x, completed_x)
    MC_y = decode_t(model.decoder_y, completed_y)
    if choose_complete_modality(I_x.mask, I_y.mask) == 'x':
        complete, missing = MC_x, MC_y
    else:
        complete, missing = MC_y, MC_x
    fused = fuse_t(multi_head_t(complete, missing, model.fusion), MC_x, MC_y, model.fusion)
    return ForwardPass(G_x, G_y, loss_x, loss_y, head_t(model.head, fused))


@dataclass
class TaskTargets:
    """Scaled next-step targets (regression) or labels (classification) for every row"""
    kind: str
    values: np.ndarray

    def loss_t(self, output, lo, hi, limit):
        """Task loss of rows lo..hi of a window; regression pairs row t with t+1 < limit"""
        if self.kind == 'classification':
            return classification_loss_t(output, one_hot(self.values[lo:hi], output.shape[1]))
        n = min(hi, limit - 1) - lo
        if n < 1:
            return None
        actual = self.values[lo + 1:lo + 1 + n][:, None]
        return regression_loss_t(output[:n], actual)


def task_targets(data, scalers, kind):
    if kind == 'classification':
        if data.labels is None:
            raise DataError(f'{data.name} has no class labels')
        return TaskTargets(kind, np.asarray(data.labels, dtype=np.int64))
    if data.target is None:
        raise DataError(f'{data.name} has no regression target')
    return TaskTargets(kind, scalers.transform_column('x', data.target_column, data.target))


def scaled_batches(data, scalers, lo=0, hi=None):
    hi = data.T if hi is None else hi
    return (ModalityBatch(scalers.transform('x', data.x[lo:hi], data.mask_x[lo:hi]), data.mask_x[lo:hi], 'x'),
            ModalityBatch(scalers.transform('y', data.y[lo:hi], data.mask_y[lo:hi]), data.mask_y[lo:hi], 'y'))


def windows(lo, hi, size):
    return [(s, min(s + size, hi)) for s in range(lo, hi, size)]


def gradient_norm(grads):
    return math.sqrt(math.fsum(float(np.sum(g * g)) for g in grads.values()))


def sgd_step(params, params_t, lr, max_norm=0.0):
    """
    One descent step. With ``max_norm`` > 0 the gradient is rescaled so its
    global Euclidean norm over every leaf is at most ``max_norm``.
    """
    grads = dict(ag.named_arrays(ag.grads_of(params_t)))
    if max_norm > 0:
        norm = gradient_norm(grads)
        if norm > max_norm:
            lr = lr * max_norm / norm
    return ag.map_arrays(params, lambda name, a: a - lr * grads[name])


def _check_finite(value, what, epoch):
    if not math.isfinite(value):
        raise DivergenceError(f'{what} became {value} in epoch {epoch}')


def fit_completion(completion, batches, switches, iters):
    """
    Cross-modal fitting of a pretrained completion model.

    Minimizes the enabled modal losses, averaged over ``batches`` of
    (I_x, I_y) windows, with hidden probabilities in place of samples, by
    full-batch L-BFGS over every completion parameter. A generator whose
    loss is switched off receives no gradient and keeps its pretrained
    weights.

    :return: (fitted completion model, (loss before, loss after))
    """
    enabled = [name for name, on in (('x', switches.use_modal_x), ('y', switches.use_modal_y)) if on]
    if iters < 1 or not enabled or not batches:
        return completion, None
    leaves = ag.named_arrays(completion)
    bounds = np.cumsum([0] + [a.size for _, a in leaves])
    index = {name: (bounds[i], bounds[i + 1]) for i, (name, _) in enumerate(leaves)}

    def unpack(theta):
        return ag.map_arrays(completion, lambda name, a: theta[index[name][0]:index[name][1]].reshape(a.shape).copy())

    def objective(theta):
        params_t = ag.as_tensors(unpack(theta))
        loss = None
        for I_x, I_y in batches:
            _, _, loss_x, loss_y, _, _ = relaxed_completion(params_t, I_x, I_y)
            terms = {'x': loss_x, 'y': loss_y}
            for name in enabled:
                loss = terms[name] if loss is None else loss + terms[name]
        loss = loss * (1.0 / len(batches))
        value = float(loss.value)
        if not math.isfinite(value):
            raise DivergenceError(f'modal loss became {value} during cross-modal fitting')
        if not loss.requires_grad:
            return value, np.zeros(bounds[-1])
        loss.backward()
        return value, np.concatenate([g.ravel() for _, g in ag.named_arrays(ag.grads_of(params_t))])

    theta0 = np.concatenate([a.ravel() for _, a in leaves])
    before = objective(theta0)[0]
    result = minimize(objective, theta0, jac=True, method='L-BFGS-B',
                      options={'maxiter': iters, 'ftol': 1e-12, 'gtol': 1e-10})
    logger.info(f'cross-modal fit ({"+".join(enabled)}): modal loss {before:.6f} -> {result.fun:.6f} '
                f'after {result.nit} iterations')
    return unpack(result.x), (before, float(result.fun))


def pretrain_model(model, data, cfg, scalers=None, rng=None):
    """
    Greedy pretraining of the completion stacks on the training rows, then
    cross-modal fitting on the observed entries of every window.
    """
    n_train = split_index(data.T, cfg.train_fraction)
    scalers = scalers or ModalityScalers.fit(data, n_train)
    rng = rng or Rng(cfg.seed)
    I_x, I_y = scaled_batches(data, scalers, 0, n_train)
    completion, traces = pretrain_completion(model.completion, I_x, I_y, cfg.pretrain_epochs, cfg.pretrain_lr,
                                             cfg.cd_k, rng, cfg.pretrain_batch_size or None)
    batches = [scaled_batches(data, scalers, lo, hi) for lo, hi in windows(0, data.T, cfg.batch_size)]
    completion, _ = fit_completion(completion, batches, cfg.loss_switches, cfg.crossmodal_iters)
    return replace(model, completion=completion), traces


def fine_tune(model, data, cfg, scalers=None):
    """
    Mini-batch SGD on the total loss over the training rows.

    :return: (trained model, trace rows [epoch, total, modal_x, modal_y, task])
    """
    if cfg.lr < 0:
        raise ConfigError(f'learning rate must be non-negative, got {cfg.lr}')
    n_train = split_index(data.T, cfg.train_fraction)
    scalers = scalers or ModalityScalers.fit(data, n_train)
    targets = task_targets(data, scalers, cfg.task)
    spans = windows(0, n_train, cfg.batch_size)
    batches = [scaled_batches(data, scalers, lo, hi) for lo, hi in spans]
    rng = Rng(cfg.seed)

    trace = []
    for epoch in range(1, cfg.epochs + 1):
        sums = {name: [] for name in TRACE_COLUMNS[1:]}
        for w in rng.permutation(len(spans)):
            lo, hi = spans[w]
            I_x, I_y = batches[w]
            params_t = ag.as_tensors(model)
            fp = forward_t(params_t, I_x, I_y)
            l_task = targets.loss_t(fp.output, lo, hi, n_train)
            if l_task is None:
                continue
            loss = total_loss(fp.loss_modal_x, fp.loss_modal_y, l_task, cfg.loss_switches)
            value = float(loss.value)
            _check_finite(value, 'total loss', epoch)
            for name, part in zip(TRACE_COLUMNS[1:], (loss, fp.loss_modal_x, fp.loss_modal_y, l_task)):
                sums[name].append(float(part.value))
            if cfg.lr > 0 and loss.requires_grad:
                loss.backward()
                model = sgd_step(model, params_t, cfg.lr, cfg.max_grad_norm)
        row = [epoch] + [math.fsum(v) / max(len(v), 1) for v in sums.values()]
        trace.append(row)
        logger.info(f'epoch {epoch}/{cfg.epochs}: total {row[1]:.6f} modal_x {row[2]:.6f} '
                    f'modal_y {row[3]:.6f} task {row[4]:.6f}')
    for name, array in ag.named_arrays(model):
        if not np.all(np.isfinite(array)):
            raise DivergenceError(f'parameter {name} is no longer finite after fine-tuning')
    return model, trace


def trace_frame(trace):
    return pd.DataFrame(trace, columns=TRACE_COLUMNS)


def train_mcdbn(data, cfg, rng=None):
    """Initialize, pretrain and fine-tune a model on ``data``"""
    rng = rng or Rng(cfg.seed)
    n_train = split_index(data.T, cfg.train_fraction)
    scalers = ModalityScalers.fit(data, n_train)
    model = MCDBNModel.init(data.d_x, data.d_y, cfg, rng)
    model, _ = pretrain_model(model, data, cfg, scalers, rng)
    model, trace = fine_tune(model, data, cfg, scalers)
    return model, scalers, trace


def complete_dataset(model, data, scalers, cfg, rng):
    """
    Fill the masked entries of both modalities with the generator output,
    window by window, in original units. Observed values are kept verbatim.
    """
    filled = {'x': np.zeros(data.x.shape), 'y': np.zeros(data.y.shape)}
    for lo, hi in windows(0, data.T, cfg.batch_size):
        I_x, I_y = scaled_batches(data, scalers, lo, hi)
        G_x, G_y, _, _ = run_completion(I_x, I_y, model.completion, rng, cfg.completion_samples)
        filled['x'][lo:hi] = substitute(I_x, G_x)
        filled['y'][lo:hi] = substitute(I_y, G_y)
    out = data
    for name in ('x', 'y'):
        values, mask, _ = data.modality(name)
        restored = np.where(mask, values, scalers.inverse(name, filled[name]))
        out = out.with_modality(name, restored, np.ones(values.shape, dtype=bool))
    return out


# Downstream predictor

@dataclass
class DownstreamPredictor:
    lstm: LstmParams
    head: TaskHead


def downstream_features(data, scalers, use_y=True):
    x = scalers.transform('x', data.x, data.mask_x)
    if not use_y:
        return x
    return np.hstack([x, scalers.transform('y', data.y, data.mask_y)])


def predictor_forward_t(predictor, features):
    """Task head over the LSTM hidden states next to the raw features"""
    return head_t(predictor.head, ag.concat_cols([lstm_t(predictor.lstm, features), features]))


def readout_inputs(predictor, features, lo, hi, size):
    """Head inputs for rows lo..hi-1, with the LSTM restarted at every window"""
    lstm = ag.constants(predictor.lstm)
    blocks = [np.hstack([lstm_t(lstm, ag.Tensor(features[a:b])).value, features[a:b]])
              for a, b in windows(lo, hi, size)]
    return np.vstack(blocks)


def fit_readout(predictor, inputs, targets, n_train):
    """
    Refit the task head on fixed LSTM states: ordinary least squares for
    regression, multinomial logistic regression for classification.
    """
    head = predictor.head
    if targets.kind == 'regression':
        model = LinearRegression().fit(inputs[:n_train - 1], targets.values[1:n_train])
        W, b = model.coef_.reshape(-1, 1), np.array([[model.intercept_]])
    else:
        labels = targets.values[:n_train]
        # classes absent from the training rows keep a vanishing probability
        W, b = np.zeros(head.W.shape), np.full((1, head.n_outputs), -30.0)
        present = np.unique(labels)
        if len(present) == 1:
            b[0, present[0]] = 0.0
            return replace(predictor, head=replace(head, W=W, b=b))
        model = LogisticRegression(max_iter=1000).fit(inputs[:n_train], labels)
        coef = model.coef_
        if len(model.classes_) == 2:
            coef = np.vstack([np.zeros_like(coef), coef])
            intercept = np.concatenate([[0.0], model.intercept_])
        else:
            intercept = model.intercept_
        for k, label in enumerate(model.classes_):
            W[:, label], b[0, label] = coef[k], intercept[k]
    return replace(predictor, head=replace(head, W=W, b=b))


def train_downstream(data, cfg, use_y=True):
    """
    Single-layer LSTM and task head on a completed dataset. Architecture,
    initialization seed and window order are the same for every completion
    method; only the data differs. After the SGD epochs the head is refit
    in closed form on the final LSTM states of the training rows.

    :return: (predictor, scalers fitted on the completed training rows)
    """
    n_train = split_index(data.T, cfg.train_fraction)
    scalers = ModalityScalers.fit(data, n_train)
    features = downstream_features(data, scalers, use_y)
    targets = task_targets(data, scalers, cfg.task)
    rng = Rng(cfg.seed)
    d_in = features.shape[1]
    predictor = DownstreamPredictor(
        LstmParams.init(d_in, cfg.downstream_hidden, rng),
        TaskHead.init(cfg.downstream_hidden + d_in, cfg.task, cfg.n_classes, rng),
    )
    spans = windows(0, n_train, cfg.batch_size)
    for epoch in range(1, cfg.downstream_epochs + 1):
        losses = []
        for w in rng.permutation(len(spans)):
            lo, hi = spans[w]
            params_t = ag.as_tensors(predictor)
            loss = targets.loss_t(predictor_forward_t(params_t, ag.Tensor(features[lo:hi])), lo, hi, n_train)
            if loss is None:
                continue
            losses.append(float(loss.value))
            _check_finite(losses[-1], 'downstream loss', epoch)
            loss.backward()
            predictor = sgd_step(predictor, params_t, cfg.downstream_lr, cfg.max_grad_norm)
        logger.debug(f'downstream epoch {epoch}/{cfg.downstream_epochs}: '
                     f'task {math.fsum(losses) / max(len(losses), 1):.6f}')
    inputs = readout_inputs(predictor, features, 0, n_train, cfg.batch_size)
    return fit_readout(predictor, inputs, targets, n_train), scalers


def predict_downstream(predictor, data, scalers, cfg, use_y=True, lo=0):
    """Predictor output for rows lo..T-1, run window by window from lo"""
    features = downstream_features(data, scalers, use_y)
    outputs = [predictor_forward_t(ag.constants(predictor), ag.Tensor(features[a:b])).value
               for a, b in windows(lo, data.T, cfg.batch_size)]
    return np.vstack(outputs)


# Gradient verification

def gradient_check(loss_fn, params, h=1e-5):
    """
    Largest relative error between the analytic gradient and central finite
    differences over the array leaves of ``params``.

    The error is measured per leaf, not per element: for a leaf with analytic
    gradient ``g_an`` and finite-difference gradient ``g_fd`` it is
    ||g_an - g_fd|| / max(||g_an||, ||g_fd||, 1e-8) with Euclidean norms over
    the whole leaf. This departs from the elementwise form
    |a - n| / max(|a|, |n|, 1e-8): a small absolute error on an entry whose
    true gradient is zero counts relative to the whole leaf.
    """
    if not h > 0:
        raise ConfigError(f'finite-difference step must be positive, got {h}')
    params_t = ag.as_tensors(params)
    loss_fn(params_t).backward()
    analytic = dict(ag.named_arrays(ag.grads_of(params_t)))

    worst = 0.0
    for name, array in ag.named_arrays(params):
        numeric = np.zeros(array.shape)
        for idx in np.ndindex(array.shape):
            original = array[idx]
            array[idx] = original + h
            plus = float(loss_fn(ag.constants(params)).value)
            array[idx] = original - h
            minus = float(loss_fn(ag.constants(params)).value)
            array[idx] = original
            numeric[idx] = (plus - minus) / (2.0 * h)
        a, n = np.linalg.norm(analytic[name]), np.linalg.norm(numeric)
        error = np.linalg.norm(analytic[name] - numeric) / max(a, n, 1e-8)
        logger.debug(f'{name}: relative error {error:.3e}')
        worst = max(worst, float(error))
    return worst


def _suite_config():
    return TrainConfig(hidden_sizes=(4, 3), d_model=8, transformer_heads=2, heads=2, d_k=4, d_fusion=3,
                       init_std=0.5)


def gradient_suite(seed=0, h=1e-5):
    """Gradient checks of every differentiable path on small random instances"""
    rng = Rng(seed)
    T = 5
    results = {}

    seq = rng.normal((T, 3))
    R = rng.normal((T, 4))
    results['linear'] = gradient_check(lambda p: ((p[0] @ p[1].W + p[1].b) * R).sum(),
                                       (seq.copy(), LinearParams.init(3, 4, rng)), h)

    lstm_seq, lstm_target = rng.normal((4, 3)), rng.normal((4, 5))
    results['lstm'] = gradient_check(lambda p: regression_loss_t(lstm_t(p[1], p[0]), lstm_target),
                                     (lstm_seq, LstmParams.init(3, 5, rng)), h)

    tr_seq, tr_target = rng.normal((T, 6)), rng.normal((T, 8))
    results['transformer'] = gradient_check(lambda p: regression_loss_t(decode_t(p[1], p[0]), tr_target),
                                            (tr_seq, init_decoder('transformer', 6, 8, rng, heads=2)), h)

    C, M, F = rng.normal((T, 8)), rng.normal((T, 8)), rng.normal((T, 3))
    results['fusion'] = gradient_check(
        lambda p: regression_loss_t(fuse_t(multi_head_t(p[0], p[1], p[2]), p[0], p[1], p[2]), F),
        (C, M, FusionParams.init(8, rng, heads=2, d_k=4, d_fusion=3)), h)

    cfg = _suite_config()
    x = rng.uniform((T, 3))
    y = rng.uniform((T, 4))
    mask_x = rng.uniform((T, 3)) < 0.8
    mask_y = rng.uniform((T, 4)) < 0.5
    I_x, I_y = ModalityBatch(x, mask_x, 'x'), ModalityBatch(y, mask_y, 'y')
    completion = CompletionModel.init(3, 4, cfg.hidden_sizes, rng, std=0.5)

    def completion_loss(p):
        _, _, loss_x, loss_y, _, _ = relaxed_completion(p, I_x, I_y)
        return loss_x + loss_y

    results['completion'] = gradient_check(completion_loss, completion, h)

    labels = one_hot([0, 2, 1, 2, 0], 3)
    results['task_classification'] = gradient_check(
        lambda p: classification_loss_t(ag.softmax_rows(p), labels), rng.normal((T, 3)), h)
    actual = rng.normal((T, 1))
    results['task_regression'] = gradient_check(lambda p: regression_loss_t(p, actual), rng.normal((T, 1)), h)

    model = MCDBNModel.init(3, 4, cfg, rng)
    target = TaskTargets('regression', rng.uniform(T))

    def model_loss(p):
        fp = forward_t(p, I_x, I_y)
        return total_loss(fp.loss_modal_x, fp.loss_modal_y, target.loss_t(fp.output, 0, T, T))

    results['full_model'] = gradient_check(model_loss, model, h)
    for name, error in results.items():
        logger.info(f'gradient check {name}: max relative error {error:.3e}')
    return results
