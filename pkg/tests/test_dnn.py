import math

import numpy as np
import pytest

from spinreadout.core import Label
from spinreadout.core import Rng
from spinreadout.core import Trace
from spinreadout.core import standardize
from spinreadout.dnn import DnnClassifier
from spinreadout.dnn import DnnConfig
from spinreadout.dnn import DnnModel
from spinreadout.dnn import Prediction
from spinreadout.dnn import backward
from spinreadout.dnn import forward
from spinreadout.dnn import init_params
from spinreadout.dnn import load_model
from spinreadout.dnn import loss
from spinreadout.dnn import param_count
from spinreadout.dnn import param_layout
from spinreadout.dnn import predict_proba
from spinreadout.dnn import save_model
from spinreadout.errors import ConfigError
from spinreadout.errors import FormatError
from spinreadout.errors import ShapeError

EPS = 1e-6


def numeric_gradient(model, trace, label):
    grad = np.zeros(model.params.size)
    base = np.array(model.params)
    for i in range(base.size):
        up, down = base.copy(), base.copy()
        up[i] += EPS
        down[i] -= EPS
        grad[i] = (loss(model.with_params(up), trace, label) - loss(model.with_params(down), trace, label))
        grad[i] /= 2 * EPS
    return grad


def test_default_architecture():
    cfg = DnnConfig()
    assert param_count(cfg) == (32, 110)
    assert cfg.conv_lengths() == [480, 456, 432, 408]
    assert cfg.feature_len == 408


def test_param_layout_tiles_the_vector(small_dnn):
    layout = param_layout(small_dnn)
    covered = sorted((s.start, s.stop) for s in layout.values())
    assert covered[0][0] == 0
    assert covered[-1][1] == param_count(small_dnn).total
    assert all(a[1] == b[0] for a, b in zip(covered, covered[1:]))
    assert layout['lstm.W_i'].stop - layout['lstm.W_i'].start == 2 * 3


def test_invalid_configs():
    with pytest.raises(ConfigError):
        DnnConfig(conv_channels=2)
    with pytest.raises(ConfigError):
        DnnConfig(input_len=60, kernel=25)
    with pytest.raises(ConfigError):
        DnnConfig(conv_activation='sigmoid')
    with pytest.raises(ConfigError):
        DnnConfig.from_dict({'kernel': 5, 'dropout': 0.1})


def test_init_params(small_dnn):
    a = init_params(small_dnn, Rng(0))
    b = init_params(small_dnn, Rng(0))
    np.testing.assert_array_equal(a, b)
    layout = param_layout(small_dnn)
    np.testing.assert_allclose(a[layout['conv1.b']], 1.0 / math.sqrt(5))
    np.testing.assert_array_equal(a[layout['lstm.b_f']], [1.0, 1.0])
    assert np.all(np.abs(a[layout['lstm.b_i']]) <= 1.0 / math.sqrt(3))
    assert np.all(np.abs(a[layout['lstm.W_f']]) <= 1.0 / math.sqrt(3))
    with pytest.raises(ConfigError):
        init_params(small_dnn, Rng(0), 'xavier')


def test_model_validates_params(small_dnn):
    with pytest.raises(ShapeError):
        DnnModel(small_dnn, np.zeros(3))
    params = init_params(small_dnn, Rng(0))
    params[0] = np.inf
    with pytest.raises(ShapeError):
        DnnModel(small_dnn, params)


def test_forward_outputs_probabilities(small_dnn):
    model = DnnModel(small_dnn, init_params(small_dnn, Rng(1)))
    pred = forward(model, Trace(Rng(2).normal(1.0, 40)))
    assert sum(pred.probs) == pytest.approx(1.0)
    assert pred.label is Label.from_bool(pred.p_event >= 0.5)
    with pytest.raises(ShapeError):
        forward(model, Trace(np.zeros(41)))


def test_prediction_ties_go_to_event():
    assert Prediction.from_probs(0.5, 0.5).label is Label.EVENT


def test_predict_proba_matches_forward(small_dnn):
    model = DnnModel(small_dnn, init_params(small_dnn, Rng(3)))
    samples = Rng(4).normal(1.0, (5, 40))
    batch = predict_proba(model, samples)
    single = [forward(model, row).p_event for row in samples]
    np.testing.assert_allclose(batch, single, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(DnnClassifier(model).predict(samples), batch >= 0.5)


@pytest.mark.parametrize('seed', range(5))
def test_gradient_matches_finite_differences(seed):
    cfg = DnnConfig(input_len=40, conv_layers=2, kernel=5, conv_activation='tanh')
    rng = Rng(seed)
    model = DnnModel(cfg, init_params(cfg, rng.child(0)) * 2.0)
    trace = Trace(rng.child(1).normal(1.0, 40))
    label = Label.from_bool(seed % 2 == 0)
    np.testing.assert_allclose(backward(model, trace, label), numeric_gradient(model, trace, label),
                               rtol=1e-5, atol=1e-8)


def test_gradient_relu_default_architecture():
    cfg = DnnConfig()
    rng = Rng(11)
    params = init_params(cfg, rng.child(0))
    # Non-negative inputs and conv weights keep every ReLU away from its kink.
    for layer in range(cfg.conv_layers):
        where = param_layout(cfg)['conv{}.w'.format(layer + 1)]
        params[where] = np.abs(params[where]) * 0.1
    model = DnnModel(cfg, params)
    trace = Trace(np.abs(rng.child(1).normal(1.0, 480)))
    for label in Label:
        np.testing.assert_allclose(backward(model, trace, label), numeric_gradient(model, trace, label),
                                   rtol=1e-5, atol=1e-7)


def test_dead_relu_layer_has_zero_conv_gradient(small_dnn):
    params = init_params(small_dnn, Rng(5))
    layout = param_layout(small_dnn)
    params[layout['conv1.b']] = -100.0
    model = DnnModel(small_dnn, params)
    grad = backward(model, Trace(Rng(6).normal(1.0, 40)), Label.EVENT)
    assert np.all(np.isfinite(grad))
    assert not np.any(grad[layout['conv1.w']])
    assert not np.any(grad[layout['conv2.w']])


def test_save_and_load_model(tmp_path, small_dnn):
    model = DnnModel(small_dnn, init_params(small_dnn, Rng(7)))
    path = tmp_path / 'model.txt'
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.config == small_dnn
    np.testing.assert_array_equal(loaded.params, model.params)


def test_load_model_with_missing_parameter(tmp_path, small_dnn):
    model = DnnModel(small_dnn, init_params(small_dnn, Rng(7)))
    path = tmp_path / 'model.txt'
    save_model(model, path)
    lines = path.read_text().splitlines()
    path.write_text('\n'.join(lines[:-1]) + '\n')
    with pytest.raises(FormatError):
        load_model(path)


def test_constant_offset_is_removed_by_standardization(small_dnn):
    model = DnnModel(small_dnn, init_params(small_dnn, Rng(8)))
    raw = Rng(9).normal(0.5, (6, 40)) + 0.2
    baseline = 0.2
    reference = np.stack([standardize(Trace(row), baseline).samples for row in raw])
    for offset in (-3.0, 0.75, 40.0):
        shifted = np.stack([standardize(Trace(row + offset), baseline + offset).samples for row in raw])
        np.testing.assert_allclose(predict_proba(model, shifted), predict_proba(model, reference), atol=1e-9)
        np.testing.assert_array_equal(DnnClassifier(model).predict(shifted), DnnClassifier(model).predict(reference))
