import math
from pathlib import Path

import numpy as np
import pytest

from spinreadout import options
from spinreadout.baselines import ThresholdClassifier
from spinreadout.core import Label
from spinreadout.core import LabeledDataset
from spinreadout.core import Rng
from spinreadout.dnn.model import DnnConfig
from spinreadout.errors import ConfigError
from spinreadout.errors import DatasetError
from spinreadout.experiments import ExperimentSettings
from spinreadout.experiments import SpikeScenario
from spinreadout.experiments import SweepSpec
from spinreadout.experiments import T1ExperimentSpec
from spinreadout.experiments import build_training_dataset
from spinreadout.experiments import evaluate
from spinreadout.experiments import run_spike_scenario
from spinreadout.experiments import run_sweep
from spinreadout.experiments import run_t1_experiment
from spinreadout.noise import NoiseSpec
from spinreadout.simulator import SpinReadoutConfig
from spinreadout.workers import WorkerPool

BUNDLES = Path(__file__).parent / 'bundles'


@pytest.fixture
def short_settings(short_tunnel):
    return ExperimentSettings(tunnel=short_tunnel, dnn=DnnConfig(input_len=60, kernel=5))


def test_training_dataset_protocol(short_tunnel):
    ds = build_training_dataset(short_tunnel, NoiseSpec(gaussian_level=0.2), 25, Rng(5))
    assert len(ds) == 50
    assert ds.label_counts() == {Label.EVENT: 25, Label.NO_EVENT: 25}
    assert ds.baseline_mean is not None
    # standardized against the no-event mean
    assert abs(ds.samples[~ds.is_event].mean()) < 1e-12
    # shuffled: labels are not stored as one block
    assert 0 < np.count_nonzero(ds.is_event[:25]) < 25

    again = build_training_dataset(short_tunnel, NoiseSpec(gaussian_level=0.2), 25, Rng(5))
    np.testing.assert_array_equal(ds.samples, again.samples)
    assert ds.labels == again.labels


def test_one_trace_per_class_without_noise(short_tunnel):
    ds = build_training_dataset(short_tunnel, NoiseSpec(), 1, Rng(0))
    assert len(ds) == 2
    assert ds.baseline_mean == 0.0
    event = ds.samples[ds.is_event][0]
    assert event.max() == 1.0
    assert not np.any(ds.samples[~ds.is_event])


def test_evaluate_counts(step_set):
    row = evaluate(ThresholdClassifier(0.5), step_set, level=0.3)
    assert row.accuracy == 1.0
    assert row.confusion.total == row.eval_count == len(step_set)
    assert row.correct == 20
    assert row.level == 0.3

    inverted = evaluate(ThresholdClassifier(0.5, polarity='below'), step_set)
    assert inverted.confusion.true_event + inverted.confusion.missed_event == 10
    assert inverted.accuracy == inverted.correct / inverted.eval_count

    with pytest.raises(DatasetError):
        evaluate(ThresholdClassifier(0.5), LabeledDataset.from_arrays(np.zeros((0, 40)), []))


def test_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec(noise_kind='pink')
    with pytest.raises(ConfigError):
        SweepSpec(levels=())
    with pytest.raises(ConfigError):
        SweepSpec(classifiers=())
    with pytest.raises(ConfigError):
        SweepSpec(classifiers=('dnn', 'dnn'))
    with pytest.raises(ConfigError):
        T1ExperimentSpec(t_wait_list=(0.0, 10.0, 5.0))
    with pytest.raises(ConfigError):
        ExperimentSettings(dnn=DnnConfig(input_len=60, kernel=5))


def test_sweep_does_not_depend_on_thread_count(short_settings):
    spec = SweepSpec(levels=(0.2, 0.6, 1.0), n_per_class=30, classifiers=('threshold', 'wavelet'), seed=4)
    serial = run_sweep(spec, short_settings, WorkerPool(max_workers=1))
    threaded = run_sweep(spec, short_settings, WorkerPool(max_workers=3))
    assert serial == threaded
    assert serial.levels == (0.2, 0.6, 1.0)
    assert serial.classifiers == ('threshold', 'wavelet')
    assert all(r.eval_count == 18 for r in serial.rows)
    assert serial.row('threshold', 0.2).snr_db == pytest.approx(20 * math.log10(5.0))


def test_sweep_reaches_high_accuracy_at_low_noise(short_settings):
    spec = SweepSpec(levels=(0.1,), n_per_class=50, classifiers=('threshold',), seed=1)
    assert run_sweep(spec, short_settings).accuracy('threshold') >= 0.95


def test_drift_sweep_levels(short_settings):
    spec = SweepSpec(noise_kind='drift', levels=(0.0, 1.0), n_per_class=20, classifiers=('threshold',), seed=2)
    assert spec.noise_at(1.0) == NoiseSpec(gaussian_level=0.1, drift_level=1.0, drift_freq_khz=1.0)
    report = run_sweep(spec, short_settings)
    assert report.name == 'sweep-drift'
    assert len(report.rows) == 2


def test_spike_scenario_reports_rate_as_level(short_settings):
    scenario = SpikeScenario(spike_rate_per_trace=2.0, n_per_class=20, classifiers=('threshold',), seed=3)
    report = run_spike_scenario(scenario, short_settings)
    assert report.levels == (2.0,)
    assert report.name == 'spike'


def test_default_spikes_defeat_thresholding():
    scenario = SpikeScenario(n_per_class=300, classifiers=('threshold',), seed=4)
    assert scenario.spike_amp == options.get('spike', 'spike_amp')['default']
    report = run_spike_scenario(scenario)
    assert report.accuracy('threshold') <= 0.85


def test_t1_readout_without_relaxation(short_tunnel, short_settings):
    spin_cfg = SpinReadoutConfig(t1_us=math.inf, p_down_init=1.0, tunnel=short_tunnel, relax_during_readout=False)
    spec = T1ExperimentSpec(t_wait_list=(0.0, 10.0, 20.0, 30.0), shots_per_point=200, spin_cfg=spin_cfg,
                            noise=NoiseSpec(gaussian_level=0.1), classifiers=('threshold',), n_per_class=100,
                            seed=6)
    report = run_t1_experiment(spec, short_settings)
    result = report.results['threshold']
    assert result.t_wait_us == spec.t_wait_list
    assert min(result.p_down) >= 0.95
    assert min(result.readout_accuracy) >= 0.95
    assert (result.fit is None) != (result.fit_error is None)
    np.testing.assert_allclose(report.expected_fraction, 1.0 - math.exp(-59.0 / 8.0))


def test_t1_with_prepared_classifiers_is_reproducible(short_tunnel, short_settings):
    spin_cfg = SpinReadoutConfig(t1_us=30.0, tunnel=short_tunnel)
    spec = T1ExperimentSpec(t_wait_list=(0.0, 15.0, 30.0, 60.0, 90.0), shots_per_point=100, spin_cfg=spin_cfg,
                            classifiers=('threshold',), n_per_class=50, seed=8)
    a = run_t1_experiment(spec, short_settings, pool=WorkerPool(max_workers=1))
    b = run_t1_experiment(spec, short_settings, pool=WorkerPool(max_workers=4))
    assert a.results['threshold'].p_down == b.results['threshold'].p_down
    assert a.true_fraction == b.true_fraction
    assert a.expected_fraction[0] > a.expected_fraction[-1]


def bundle(name):
    config = options.load_config(BUNDLES / name)
    return config, options.experiment_settings(config)


@pytest.mark.slow
def test_low_noise_all_classifiers_agree():
    config, settings = bundle('fig2a_gaussian.yaml')
    spec = SweepSpec(levels=(0.1,), classifiers=('dnn', 'wavelet', 'threshold'), seed=config['run']['seed'])
    report = run_sweep(spec, settings)
    for name in report.classifiers:
        row = report.row(name, 0.1)
        assert row.eval_count == 1200
        assert row.accuracy >= 0.99


@pytest.mark.slow
def test_gaussian_noise_robustness():
    config, settings = bundle('fig2a_gaussian.yaml')
    report = run_sweep(options.sweep_spec(config), settings)
    for level in (1.0, 1.5, 2.0):
        assert report.gap('dnn', 'threshold', level) >= 0.05
        assert report.gap('dnn', 'wavelet', level) >= 0.05
    assert report.accuracy('dnn', 2.0) >= 0.9
    assert report.accuracy('threshold', 2.0) <= 0.9
    assert report.accuracy('wavelet', 2.0) <= 0.9


@pytest.mark.slow
def test_drift_robustness():
    config, settings = bundle('fig2b_drift.yaml')
    report = run_sweep(options.sweep_spec(config), settings)
    assert report.accuracy('dnn', 2.0) >= 0.99
    assert report.gap('dnn', 'threshold', 2.0) >= 0.05
    assert report.gap('dnn', 'wavelet', 2.0) >= 0.05
    assert report.accuracy('wavelet', 2.0) > report.accuracy('threshold', 2.0)
    assert report.accuracy('wavelet', 2.0) < report.accuracy('wavelet', 0.5)


@pytest.mark.slow
def test_spike_noise_hurts_thresholding():
    config, settings = bundle('spike.yaml')
    report = run_spike_scenario(options.spike_scenario(config), settings)
    assert report.accuracy('dnn') >= 0.95
    assert report.gap('dnn', 'threshold') >= 0.10


@pytest.mark.slow
def test_t1_round_trip():
    config, settings = bundle('t1_clean.yaml')
    report = run_t1_experiment(options.t1_spec(config), settings)
    dnn, threshold = report.results['dnn'].fit, report.results['threshold'].fit
    assert dnn is not None and threshold is not None
    for fit in (dnn, threshold):
        assert math.isfinite(fit.sigma_t1) and fit.sigma_t1 > 0
        assert abs(fit.t1_us - 68.0) <= 2 * fit.sigma_t1
    assert abs(dnn.t1_us - threshold.t1_us) <= 2 * math.hypot(dnn.sigma_t1, threshold.sigma_t1)


@pytest.mark.slow
def test_noisy_t1_degrades_thresholding():
    config, settings = bundle('t1_noisy.yaml')
    report = run_t1_experiment(options.t1_spec(config), settings)
    dnn, threshold = report.results['dnn'].fit, report.results['threshold'].fit
    assert dnn is not None and threshold is not None
    assert math.isfinite(dnn.sigma_t1)
    assert threshold.amplitude_a <= 0.5 * dnn.amplitude_a
    assert threshold.sigma_t1 > dnn.sigma_t1
