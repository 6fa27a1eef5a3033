"""
CNN+LSTM classifier
===================

Architecture (default configuration):

* input: 480 standardized samples
* three valid 1-D convolutions, kernel 25, stride 1, one channel, ReLU
  after each: 480 -> 456 -> 432 -> 408 features
* one LSTM cell, input size 1, hidden size 2, run over the 408 features
* softmax directly on the final hidden state, unit 0 = event

Parameters: 3 x (25 + 1) = 78 convolution + 4 x 2 x (1 + 2 + 1) = 32 LSTM,
110 in total, independent of the input length.
"""
import math
from dataclasses import asdict
from dataclasses import dataclass
from typing import NamedTuple
from typing import Tuple

import numpy as np

from spinreadout.core import Label
from spinreadout.core import Trace
from spinreadout.dnn import kernels
from spinreadout.errors import ConfigError
from spinreadout.errors import FormatError
from spinreadout.errors import ShapeError
from spinreadout.fileformat import MODEL_FORMAT
from spinreadout.fileformat import atomic_write
from spinreadout.fileformat import encode_document
from spinreadout.fileformat import read_document

ACTIVATIONS = {'relu': kernels.RELU, 'tanh': kernels.TANH}
GATES = ('i', 'f', 'g', 'o')
FORGET_BIAS_INIT = 1.0


@dataclass(frozen=True)
class DnnConfig:
    input_len: int = 480
    conv_layers: int = 3
    kernel: int = 25
    stride: int = 1
    conv_channels: int = 1
    conv_activation: str = 'relu'
    lstm_hidden: int = 2
    lstm_input: int = 1

    def __post_init__(self):
        for name in ('input_len', 'conv_layers', 'kernel', 'stride', 'conv_channels', 'lstm_hidden', 'lstm_input'):
            if getattr(self, name) < 1:
                raise ConfigError('{} must be at least 1, got {}'.format(name, getattr(self, name)))
        if self.conv_channels != 1:
            raise ConfigError('Only single-channel convolutions are supported')
        if self.conv_activation not in ACTIVATIONS:
            raise ConfigError('conv_activation must be one of {}, got {!r}'.format(
                sorted(ACTIVATIONS), self.conv_activation))
        if self.feature_len < 1:
            raise ConfigError('Input of {} samples is too short for {} conv layers of kernel {}'.format(
                self.input_len, self.conv_layers, self.kernel))

    def conv_lengths(self):
        """Sequence length at the input and after every conv layer."""
        lengths = [self.input_len]
        for _ in range(self.conv_layers):
            lengths.append((lengths[-1] - self.kernel) // self.stride + 1)
        return lengths

    @property
    def feature_len(self):
        return self.conv_lengths()[-1]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError('Unknown DNN config keys: {}'.format(sorted(unknown)))
        return cls(**data)


class ParamCount(NamedTuple):
    lstm: int
    total: int


def param_count(config):
    """
    Trainable parameters of a configuration.

    :return ParamCount: (lstm, total) with
        ``total = conv_layers * (kernel + 1) + 4 * hidden * (input + hidden + 1)``
    """
    lstm = 4 * config.lstm_hidden * (config.lstm_input + config.lstm_hidden + 1)
    return ParamCount(lstm=lstm, total=config.conv_layers * (config.kernel * 1 + 1) + lstm)


def param_layout(config):
    """Name -> slice of the flat parameter vector."""
    layout = {}
    width = config.kernel + 1
    for layer in range(config.conv_layers):
        off = layer * width
        layout['conv{}.w'.format(layer + 1)] = slice(off, off + config.kernel)
        layout['conv{}.b'.format(layer + 1)] = slice(off + config.kernel, off + width)
    off = config.conv_layers * width
    block = config.lstm_hidden * (config.lstm_input + config.lstm_hidden)
    for gate in GATES:
        layout['lstm.W_{}'.format(gate)] = slice(off, off + block)
        off += block
    for gate in GATES:
        layout['lstm.b_{}'.format(gate)] = slice(off, off + config.lstm_hidden)
        off += config.lstm_hidden
    return layout


@dataclass(frozen=True)
class Prediction:
    probs: Tuple[float, float]
    label: Label

    @classmethod
    def from_probs(cls, p_event, p_noevent):
        # Exact ties resolve to Event.
        return cls((float(p_event), float(p_noevent)), Label.from_bool(p_event >= p_noevent))

    @property
    def p_event(self):
        return self.probs[0]


@dataclass(frozen=True, eq=False)
class DnnModel:
    config: DnnConfig
    params: np.ndarray

    def __post_init__(self):
        params = np.array(self.params, dtype=np.float64).ravel()
        expected = param_count(self.config).total
        if params.size != expected:
            raise ShapeError('Expected {} parameters, got {}'.format(expected, params.size))
        if not np.all(np.isfinite(params)):
            raise ShapeError('Parameters must be finite')
        if self.config.lstm_hidden != 2 or self.config.lstm_input != 1:
            raise ConfigError('The softmax head needs lstm_hidden=2 and lstm_input=1')
        params.setflags(write=False)
        object.__setattr__(self, 'params', params)

    @property
    def kernel_args(self):
        cfg = self.config
        return (cfg.conv_layers, cfg.kernel, cfg.stride, cfg.lstm_hidden, ACTIVATIONS[cfg.conv_activation])

    def check_length(self, n_samples):
        if n_samples != self.config.input_len:
            raise ShapeError('Model expects {} samples, trace has {}'.format(self.config.input_len, n_samples))

    def with_params(self, params):
        return DnnModel(self.config, params)


def init_params(config, rng, scheme='uniform'):
    """
    Initial parameter vector.

    Weights are drawn uniform in ``+-1/sqrt(fan_in)`` (``uniform``) or normal
    with that standard deviation (``normal``); fan-in is the kernel size for
    convolutions and ``input + hidden`` for LSTM gates. LSTM biases use the
    same draw except the forget gate, which starts at ``FORGET_BIAS_INIT``
    so the cell keeps its state across the feature sequence. Conv biases
    start at ``+1/sqrt(kernel)`` so ReLU units are active on a flat baseline.
    """
    if scheme not in ('uniform', 'normal'):
        raise ConfigError('Unknown init scheme {!r}'.format(scheme))
    total = param_count(config).total
    params = np.empty(total)
    layout = param_layout(config)

    def draw(size, fan_in):
        limit = 1.0 / math.sqrt(fan_in)
        if scheme == 'uniform':
            return rng.uniform(-limit, limit, size)
        return rng.normal(limit, size)

    for name, where in layout.items():
        size = where.stop - where.start
        if name.startswith('conv'):
            if name.endswith('.b'):
                params[where] = 1.0 / math.sqrt(config.kernel)
            else:
                params[where] = draw(size, config.kernel)
        elif name == 'lstm.b_f':
            params[where] = FORGET_BIAS_INIT
        else:
            params[where] = draw(size, config.lstm_input + config.lstm_hidden)
    return params


def _samples(model, trace):
    samples = trace.samples if isinstance(trace, Trace) else np.asarray(trace, dtype=np.float64).ravel()
    model.check_length(samples.size)
    return np.ascontiguousarray(samples, dtype=np.float64)


def forward(model, trace):
    """
    Class probabilities of a standardized trace.

    :param DnnModel model: classifier
    :param Trace trace: trace of ``config.input_len`` samples
    :return Prediction: (p_event, p_noevent) and the argmax label
    """
    x = _samples(model, trace)
    p_event, p_noevent, _ = kernels.run_trace(model.params, x, True, *model.kernel_args, np.zeros(1), False)
    return Prediction.from_probs(p_event, p_noevent)


def loss(model, trace, label):
    """Cross-entropy of one trace."""
    x = _samples(model, trace)
    return kernels.run_trace(model.params, x, label.is_event, *model.kernel_args, np.zeros(1), False)[2]


def backward(model, trace, label):
    """
    Gradient of the cross-entropy loss with respect to every parameter,
    backpropagated through time and through the convolution stack.
    """
    x = _samples(model, trace)
    grad = np.zeros(model.params.size)
    kernels.run_trace(model.params, x, label.is_event, *model.kernel_args, grad, True)
    return grad


def predict_proba(model, samples):
    """Event probability of every row of an N x L sample matrix."""
    samples = np.ascontiguousarray(np.atleast_2d(samples), dtype=np.float64)
    model.check_length(samples.shape[1])
    return kernels.batch_predict(model.params, samples, *model.kernel_args)


class DnnClassifier:
    """Adapter giving a trained model the same interface as the baseline classifiers."""

    name = 'dnn'

    def __init__(self, model):
        self.model = model

    def predict(self, samples):
        # p_event >= 0.5 keeps exact ties on Event.
        return predict_proba(self.model, samples) >= 0.5

    def classify(self, trace):
        return forward(self.model, trace).label

    def to_dict(self):
        return {'params': param_count(self.model.config).total, 'config': self.model.config.to_dict()}


def save_model(model, path):
    """Write config and parameters in the versioned text model format."""
    header = {
        'format': MODEL_FORMAT,
        'config': model.config.to_dict(),
        'param_count': int(model.params.size),
    }
    atomic_write(path, encode_document(header, model.params))


def load_model(path):
    header, values = read_document(path, MODEL_FORMAT)
    try:
        config = DnnConfig.from_dict(dict(header['config']))
    except (KeyError, TypeError, ConfigError) as e:
        raise FormatError('{}: invalid model config ({})'.format(path, e))
    expected = param_count(config).total
    if values.size != expected or int(header.get('param_count', -1)) != expected:
        raise FormatError('{}: expected {} parameters, found {}'.format(path, expected, values.size))
    return DnnModel(config, values)
