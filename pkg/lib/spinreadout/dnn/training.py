"""
Mini-batch training of the CNN+LSTM classifier on cross-entropy.

Deterministic for a given seed: initialization and the per-epoch shuffles
come from ``Rng(seed)`` children, and batch gradients are summed in a
fixed order by the compiled kernel.

After every epoch the network is scored on a fixed monitor subset of the
training traces. The parameters with the lowest monitor loss are returned.
A network whose output is the same for every monitored trace (all ReLU
units of a conv layer dead) cannot recover, so that attempt is dropped and
training starts over from a fresh initialization draw, at most
``max_restarts`` times.
"""
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple
from typing import Optional
from typing import Tuple

import numpy as np

from spinreadout.core import Rng
from spinreadout.dnn import kernels
from spinreadout.dnn.model import DnnModel
from spinreadout.dnn.model import init_params
from spinreadout.dnn.model import predict_proba
from spinreadout.errors import ConfigError
from spinreadout.errors import DatasetError
from spinreadout.errors import TrainingDivergedError

log = logging.getLogger(__name__)

OPTIMIZERS = ('sgd', 'adam')
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
MONITOR_SIZE = 256
COLLAPSE_SPREAD = 1e-9


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = 'adam'
    learning_rate: float = 5e-3
    epochs: int = 60
    batch_size: int = 32
    seed: int = 0
    init: str = 'uniform'
    clip_norm: float = 1.0
    max_restarts: int = 4

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError('optimizer must be one of {}, got {!r}'.format(OPTIMIZERS, self.optimizer))
        if not self.learning_rate > 0:
            raise ConfigError('learning_rate must be positive, got {}'.format(self.learning_rate))
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError('epochs and batch_size must be at least 1')
        if not (math.isfinite(self.clip_norm) and self.clip_norm >= 0):
            raise ConfigError('clip_norm must be finite and non-negative, got {}'.format(self.clip_norm))
        if self.max_restarts < 0:
            raise ConfigError('max_restarts must be non-negative, got {}'.format(self.max_restarts))


@dataclass(frozen=True)
class TrainResult:
    model: DnnModel
    loss_history: Tuple[float, ...]
    train_accuracy: float
    best_epoch: int = 0
    restarts: int = 0


class Attempt(NamedTuple):
    params: np.ndarray
    history: Tuple[float, ...]
    best_epoch: int
    collapsed_at: Optional[int]


class Sgd:
    def __init__(self, learning_rate):
        self.learning_rate = learning_rate

    def step(self, params, grad):
        return params - self.learning_rate * grad


class Adam:
    def __init__(self, learning_rate, size):
        self.learning_rate = learning_rate
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = ADAM_BETA1 * self.m + (1.0 - ADAM_BETA1) * grad
        self.v = ADAM_BETA2 * self.v + (1.0 - ADAM_BETA2) * grad * grad
        m_hat = self.m / (1.0 - ADAM_BETA1 ** self.t)
        v_hat = self.v / (1.0 - ADAM_BETA2 ** self.t)
        return params - self.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def make_optimizer(train_cfg, size):
    if train_cfg.optimizer == 'adam':
        return Adam(train_cfg.learning_rate, size)
    return Sgd(train_cfg.learning_rate)


def clip_gradient(grad, max_norm):
    """Rescale ``grad`` to an L2 norm of at most ``max_norm``; 0 disables clipping."""
    if max_norm > 0:
        norm = float(np.linalg.norm(grad))
        if norm > max_norm:
            return grad * (max_norm / norm)
    return grad


def is_collapsed(p_event):
    """True when every trace gets the same event probability."""
    return float(np.ptp(p_event)) <= COLLAPSE_SPREAD


def cross_entropy(p_event, is_event):
    p_true = np.where(is_event, p_event, 1.0 - p_event)
    return float(-np.mean(np.log(np.maximum(p_true, 1e-300))))


def _fit(params, dnn_cfg, train_cfg, samples, is_event, monitor, shuffle_rng, stop_on_collapse):
    kernel_args = DnnModel(dnn_cfg, params).kernel_args
    monitor_samples = samples[monitor]
    monitor_labels = is_event[monitor]
    if stop_on_collapse and is_collapsed(predict_proba(DnnModel(dnn_cfg, params), monitor_samples)):
        return Attempt(params, (), 0, 0)

    n = samples.shape[0]
    optimizer = make_optimizer(train_cfg, params.size)
    grad = np.zeros(params.size)
    history = []
    best_params, best_loss, best_epoch = params, math.inf, 0
    for epoch in range(1, train_cfg.epochs + 1):
        order = shuffle_rng.permutation(n).astype(np.int64)
        total = 0.0
        for start in range(0, n, train_cfg.batch_size):
            batch = order[start:start + train_cfg.batch_size]
            batch_loss = kernels.batch_loss_grad(params, samples, is_event, batch, *kernel_args, grad)
            if not (math.isfinite(batch_loss) and np.all(np.isfinite(grad))):
                raise TrainingDivergedError(epoch)
            params = optimizer.step(params, clip_gradient(grad / batch.size, train_cfg.clip_norm))
            total += batch_loss
        if not np.all(np.isfinite(params)):
            raise TrainingDivergedError(epoch)
        history.append(total / n)

        p_event = predict_proba(DnnModel(dnn_cfg, params), monitor_samples)
        if stop_on_collapse and is_collapsed(p_event):
            return Attempt(best_params, tuple(history), best_epoch, epoch)
        monitor_loss = cross_entropy(p_event, monitor_labels)
        if monitor_loss < best_loss:
            best_params, best_loss, best_epoch = params, monitor_loss, epoch
        if epoch == 1 or epoch % 10 == 0 or epoch == train_cfg.epochs:
            log.debug('epoch {} - loss {:.6f}, monitor loss {:.6f}'.format(epoch, history[-1], monitor_loss))
    return Attempt(best_params, tuple(history), best_epoch, None)


def train(train_set, dnn_cfg, train_cfg):
    """
    Fit the classifier to standardized training traces.

    :param LabeledDataset train_set: standardized traces with both labels
    :param DnnConfig dnn_cfg: architecture
    :param TrainConfig train_cfg: optimizer settings and seed
    :return TrainResult: best model, mean loss per epoch of the kept attempt,
        training accuracy of the best model
    :raises TrainingDivergedError: when the loss stops being finite
    """
    counts = train_set.label_counts()
    if len(train_set) == 0 or not all(counts.values()):
        raise DatasetError('Training set needs both labels')
    if train_set.trace_len != dnn_cfg.input_len:
        raise DatasetError('Traces have {} samples, model expects {}'.format(train_set.trace_len, dnn_cfg.input_len))

    rng = Rng(train_cfg.seed)
    samples = np.ascontiguousarray(train_set.samples, dtype=np.float64)
    is_event = np.ascontiguousarray(train_set.is_event)
    n = len(train_set)
    monitor = np.sort(rng.child(2).permutation(n)[:MONITOR_SIZE]).astype(np.int64)

    log.info('Training {} traces for {} epochs ({}, lr={}, batch={}, clip={})'.format(
        n, train_cfg.epochs, train_cfg.optimizer, train_cfg.learning_rate, train_cfg.batch_size,
        train_cfg.clip_norm))
    for attempt in range(train_cfg.max_restarts + 1):
        params = init_params(dnn_cfg, rng.child(0, attempt), train_cfg.init)
        last = attempt == train_cfg.max_restarts
        outcome = _fit(params, dnn_cfg, train_cfg, samples, is_event, monitor, rng.child(1, attempt),
                       stop_on_collapse=not last)
        if outcome.collapsed_at is None:
            break
        log.warning('Network output collapsed to a constant at epoch {}, restarting from a new '
                    'initialization ({}/{})'.format(outcome.collapsed_at, attempt + 1, train_cfg.max_restarts))
    if train_cfg.max_restarts and attempt == train_cfg.max_restarts:
        log.warning('Kept the last of {} initializations without checking for collapse'.format(attempt + 1))

    model = DnnModel(dnn_cfg, outcome.params)
    accuracy = float(np.mean((predict_proba(model, samples) >= 0.5) == is_event))
    log.info('Training finished: loss {:.6f}, best epoch {}, training accuracy {:.4f}'.format(
        outcome.history[-1], outcome.best_epoch, accuracy))
    return TrainResult(model=model, loss_history=outcome.history, train_accuracy=accuracy,
                       best_epoch=outcome.best_epoch, restarts=attempt)
