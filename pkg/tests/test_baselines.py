import numpy as np
import pytest

from spinreadout import baselines
from spinreadout.core import Label
from spinreadout.core import LabeledDataset
from spinreadout.core import Rng
from spinreadout.core import Trace
from spinreadout.errors import ConfigError
from spinreadout.errors import DatasetError
from spinreadout.errors import ShapeError
from spinreadout.experiments import build_training_dataset
from spinreadout.noise import NoiseSpec


def test_classify_threshold_on_step():
    c = baselines.ThresholdClassifier(0.5)
    step = Trace(np.r_[np.zeros(20), np.ones(20)])
    assert baselines.classify_threshold(c, step) is Label.EVENT
    assert baselines.classify_threshold(c, Trace(np.zeros(40))) is Label.NO_EVENT
    below = baselines.ThresholdClassifier(-0.5, polarity='below')
    assert below.classify(Trace(-step.samples)) is Label.EVENT


def test_invalid_threshold_classifier():
    with pytest.raises(ConfigError):
        baselines.ThresholdClassifier(np.nan)
    with pytest.raises(ConfigError):
        baselines.ThresholdClassifier(0.5, polarity='sideways')


def test_boxcar_smooths_single_sample_spike():
    spike = np.zeros(40)
    spike[10] = 1.0
    assert baselines.boxcar(spike, 5).max() == pytest.approx(0.2)
    with pytest.raises(ShapeError):
        baselines.boxcar(spike, 41)


def test_optimize_threshold_matches_exhaustive_search(charging_set):
    found = baselines.optimize_threshold(charging_set)
    candidates = baselines.threshold_grid(charging_set)
    assert candidates.size == baselines.THRESHOLD_GRID

    best, best_acc = None, -1.0
    for c in candidates:
        predicted = [t.samples.max() > c for t in charging_set.traces]
        acc = np.mean(np.array(predicted) == charging_set.is_event)
        if acc >= best_acc:
            best, best_acc = c, acc
    assert found.threshold == best


def test_optimize_threshold_separates_clean_steps(step_set):
    c = baselines.optimize_threshold(step_set)
    assert 0.0 <= c.threshold < 1.0
    assert np.all(c.predict(step_set.samples) == step_set.is_event)


def test_visibility_objective():
    predicted = np.array([True, True, False, False])
    is_event = np.array([True, False, False, False])
    assert baselines.score(predicted, is_event, 'accuracy') == pytest.approx(0.75)
    assert baselines.score(predicted, is_event, 'visibility') == pytest.approx(1.0 + 2.0 / 3.0 - 1.0)
    with pytest.raises(ConfigError):
        baselines.score(predicted, is_event, 'f1')


def test_single_label_training_set_is_rejected(step_set):
    only_events = step_set.subset(np.flatnonzero(step_set.is_event))
    with pytest.raises(DatasetError):
        baselines.optimize_threshold(only_events)
    with pytest.raises(DatasetError):
        baselines.optimize_wavelet(only_events)


def test_haar_detail_of_step():
    step = Trace(np.r_[np.zeros(20), np.ones(20)])
    d = baselines.haar_detail(step, 4)
    assert d.size == 40 - 2 * 4 + 1
    assert np.abs(d).max() == pytest.approx(1.0)
    assert d[16] == pytest.approx(-1.0)
    with pytest.raises(ShapeError):
        baselines.haar_detail(step, 21)


def test_haar_detail_noise_variance():
    sigma, scale = 0.8, 8
    noise = Rng(3).normal(sigma, 400000)
    d = baselines.haar_detail(noise, scale)
    assert d.var() == pytest.approx(sigma ** 2 * 2.0 / scale, rel=0.05)


def test_wavelet_scales():
    scales = baselines.wavelet_scales(480)
    assert len(scales) == baselines.WAVELET_SCALES == 32
    assert scales[0] == 1 and scales[-1] == 240
    assert all(b > a for a, b in zip(scales, scales[1:]))
    narrow = baselines.wavelet_scales(480, max_scale=64)
    assert len(set(narrow)) == 32 and narrow[-1] == 64
    assert baselines.wavelet_scales(40) == list(range(1, 21))
    with pytest.raises(ShapeError):
        baselines.wavelet_scales(1)


def test_admissible_scales():
    scales = [1, 2, 8, 32, 128]
    assert baselines.admissible_scales(scales, 0.1, 0.19) == scales
    assert baselines.admissible_scales(scales, 1.0, 0.19) == [128]
    assert baselines.admissible_scales(scales, 5.0, 0.19) == [128]
    assert baselines.admissible_scales(scales, 5.0, 0.0) == scales
    with pytest.raises(ConfigError):
        baselines.admissible_scales([], 1.0)


def test_drift_pushes_the_wavelet_to_long_scales(tunnel):
    noise = NoiseSpec(gaussian_level=0.1, drift_level=2.0)
    drifting = build_training_dataset(tunnel, noise, 40, Rng(8))
    assert baselines.optimize_wavelet(drifting).scale > 64
    assert baselines.optimize_wavelet(drifting, noise_floor=0.0).scale <= 64


def test_haar_detail_ignores_constant_offsets():
    assert np.all(baselines.haar_detail(Trace(np.full(200, 0.3)), 7) == 0.0)
    x = Rng(4).normal(1.0, 200)
    np.testing.assert_allclose(baselines.haar_detail(x + 2.5, 7), baselines.haar_detail(x, 7), atol=1e-12)


def test_raising_the_threshold_never_adds_events(charging_set):
    previous = None
    for threshold in np.linspace(-0.5, 1.5, 41):
        predicted = baselines.ThresholdClassifier(float(threshold)).predict(charging_set.samples)
        if previous is not None:
            assert not np.any(predicted & ~previous)
        previous = predicted


def test_optimize_wavelet_on_clean_steps(step_set):
    c = baselines.optimize_wavelet(step_set)
    assert c.coeff_threshold > 0
    assert np.all(c.predict(step_set.samples) == step_set.is_event)
    assert baselines.classify_wavelet(c, step_set.traces[0]) is Label.EVENT


def test_optimize_wavelet_on_constant_data_fails():
    flat = LabeledDataset.from_arrays(np.zeros((4, 20)), [True, False, True, False])
    with pytest.raises(DatasetError):
        baselines.optimize_wavelet(flat)
