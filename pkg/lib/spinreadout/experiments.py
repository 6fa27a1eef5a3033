"""
Experiment harness
==================

End-to-end runs built from the simulator, noise sources and classifiers:

* training data protocol: event traces from the charging line plus flat
  no-event traces, noise injected, standardized against the no-event mean,
  shuffled, split 70/30 into training and evaluation sets
* accuracy sweeps over Gaussian or drift noise level
* spike-noise scenario comparing the network with thresholding
* spin relaxation (T1) experiment: down-spin probability against wait
  time read out by each classifier, then an exponential fit

Random streams are derived from one master seed per run so every cell
(noise level, wait time) is reproducible on its own and results do not
depend on thread scheduling.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass
from dataclasses import field
from typing import Dict
from typing import NamedTuple
from typing import Optional
from typing import Tuple

import numpy as np

from spinreadout import baselines
from spinreadout.core import LabeledDataset
from spinreadout.core import Rng
from spinreadout.core import baseline_from
from spinreadout.core import split_dataset
from spinreadout.core import standardize_dataset
from spinreadout.dnn.model import DnnClassifier
from spinreadout.dnn.model import DnnConfig
from spinreadout.dnn.training import TrainConfig
from spinreadout.dnn.training import TrainResult
from spinreadout.dnn.training import train
from spinreadout.errors import ConfigError
from spinreadout.errors import DatasetError
from spinreadout.errors import FitError
from spinreadout.fitting import FitResult
from spinreadout.fitting import binomial_sigma
from spinreadout.fitting import fit_exponential
from spinreadout.noise import NoiseSpec
from spinreadout.noise import apply_noise
from spinreadout.noise import total_noise_level
from spinreadout.simulator import SpinReadoutConfig
from spinreadout.simulator import TunnelConfig
from spinreadout.simulator import gen_charging_dataset
from spinreadout.simulator import gen_spin_trace
from spinreadout.simulator import spin_event_probability
from spinreadout.workers import WorkerPool

log = logging.getLogger(__name__)

CLASSIFIERS = ('dnn', 'wavelet', 'threshold')
NOISE_KINDS = ('gaussian', 'drift')
DEFAULT_T_WAIT_US = (0.0, 5.0, 10.0, 20.0, 30.0, 45.0, 65.0, 90.0, 120.0, 160.0, 220.0, 300.0)


def _check_classifiers(names):
    names = tuple(names)
    if not names:
        raise ConfigError('No classifiers requested')
    unknown = [n for n in names if n not in CLASSIFIERS]
    if unknown:
        raise ConfigError('Unknown classifiers {}, choose from {}'.format(unknown, CLASSIFIERS))
    if len(set(names)) != len(names):
        raise ConfigError('Duplicate classifiers in {}'.format(names))
    return names


@dataclass(frozen=True)
class BaselineSettings:
    threshold_grid: int = baselines.THRESHOLD_GRID
    polarity: str = 'above'
    boxcar_width: int = 1
    wavelet_scales: int = baselines.WAVELET_SCALES
    wavelet_thresholds: int = baselines.WAVELET_THRESHOLDS
    wavelet_max_scale: int = baselines.WAVELET_MAX_SCALE
    wavelet_noise_floor: float = baselines.WAVELET_NOISE_FLOOR
    objective: str = 'accuracy'

    def __post_init__(self):
        if self.objective not in baselines.OBJECTIVES:
            raise ConfigError('objective must be one of {}, got {!r}'.format(baselines.OBJECTIVES, self.objective))
        if self.polarity not in baselines.POLARITIES:
            raise ConfigError('polarity must be one of {}, got {!r}'.format(baselines.POLARITIES, self.polarity))
        if min(self.threshold_grid, self.wavelet_scales, self.wavelet_thresholds, self.wavelet_max_scale) < 1:
            raise ConfigError('Baseline grid sizes must be at least 1')
        if not (math.isfinite(self.wavelet_noise_floor) and self.wavelet_noise_floor >= 0):
            raise ConfigError('wavelet_noise_floor must be finite and non-negative, got {}'.format(
                self.wavelet_noise_floor))


@dataclass(frozen=True)
class ExperimentSettings:
    """Everything shared by the experiments except the noise and the seed."""

    tunnel: TunnelConfig = field(default_factory=TunnelConfig)
    dnn: DnnConfig = field(default_factory=DnnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    baselines: BaselineSettings = field(default_factory=BaselineSettings)
    train_fraction: float = 0.7

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError('train_fraction must lie in (0, 1), got {}'.format(self.train_fraction))
        if self.dnn.input_len != self.tunnel.n_samples:
            raise ConfigError('dnn.input_len is {} but traces have {} samples'.format(
                self.dnn.input_len, self.tunnel.n_samples))

    def split_sizes(self, total):
        n_train = int(round(total * self.train_fraction))
        return n_train, total - n_train


@dataclass(frozen=True)
class SweepSpec:
    noise_kind: str = 'gaussian'
    levels: Tuple[float, ...] = (0.1,)
    n_per_class: int = 2000
    classifiers: Tuple[str, ...] = CLASSIFIERS
    seed: int = 0
    base_gaussian_level: float = 0.1
    drift_freq_khz: float = 1.0

    def __post_init__(self):
        if self.noise_kind not in NOISE_KINDS:
            raise ConfigError('noise_kind must be one of {}, got {!r}'.format(NOISE_KINDS, self.noise_kind))
        levels = tuple(float(v) for v in self.levels)
        if not levels or any(not (math.isfinite(v) and v >= 0) for v in levels):
            raise ConfigError('Sweep levels must be a non-empty list of non-negative numbers')
        if self.n_per_class < 1:
            raise ConfigError('n_per_class must be at least 1')
        object.__setattr__(self, 'levels', levels)
        object.__setattr__(self, 'classifiers', _check_classifiers(self.classifiers))

    def noise_at(self, level):
        if self.noise_kind == 'gaussian':
            return NoiseSpec(gaussian_level=level)
        return NoiseSpec(gaussian_level=self.base_gaussian_level, drift_level=level,
                         drift_freq_khz=self.drift_freq_khz)


@dataclass(frozen=True)
class SpikeScenario:
    gaussian_level: float = 0.1
    spike_rate_per_trace: float = 1.0
    spike_amp: float = 1.2
    spike_width_samples: int = 3
    n_per_class: int = 2000
    classifiers: Tuple[str, ...] = ('dnn', 'threshold')
    seed: int = 0

    def __post_init__(self):
        if self.n_per_class < 1:
            raise ConfigError('n_per_class must be at least 1')
        object.__setattr__(self, 'classifiers', _check_classifiers(self.classifiers))

    @property
    def noise(self):
        return NoiseSpec(gaussian_level=self.gaussian_level, spike_rate_per_trace=self.spike_rate_per_trace,
                         spike_amp=self.spike_amp, spike_width_samples=self.spike_width_samples)


@dataclass(frozen=True)
class T1ExperimentSpec:
    t_wait_list: Tuple[float, ...] = DEFAULT_T_WAIT_US
    shots_per_point: int = 2000
    spin_cfg: SpinReadoutConfig = field(default_factory=lambda: SpinReadoutConfig(t1_us=68.0))
    noise: NoiseSpec = field(default_factory=lambda: NoiseSpec(gaussian_level=0.1))
    classifiers: Tuple[str, ...] = ('dnn', 'threshold')
    n_per_class: int = 2000
    seed: int = 0

    def __post_init__(self):
        t_wait = tuple(float(t) for t in self.t_wait_list)
        if not t_wait or any(t < 0 for t in t_wait) or any(b <= a for a, b in zip(t_wait, t_wait[1:])):
            raise ConfigError('t_wait_list must be non-negative and strictly increasing')
        if self.shots_per_point < 1:
            raise ConfigError('shots_per_point must be at least 1')
        object.__setattr__(self, 't_wait_list', t_wait)
        object.__setattr__(self, 'classifiers', _check_classifiers(self.classifiers))


class Confusion(NamedTuple):
    """Counts with Event as the positive class."""

    true_event: int
    missed_event: int
    true_noevent: int
    false_event: int

    @property
    def total(self):
        return sum(self)


@dataclass(frozen=True)
class AccuracyRow:
    classifier: str
    level: float
    accuracy: float
    eval_count: int
    confusion: Confusion
    snr_db: Optional[float] = None

    @property
    def correct(self):
        return self.confusion.true_event + self.confusion.true_noevent


@dataclass(frozen=True)
class AccuracyReport:
    name: str
    rows: Tuple[AccuracyRow, ...]
    seed: int = 0

    def row(self, classifier, level=None):
        for r in self.rows:
            if r.classifier == classifier and (level is None or math.isclose(r.level, level)):
                return r
        raise KeyError((classifier, level))

    def accuracy(self, classifier, level=None):
        return self.row(classifier, level).accuracy

    def gap(self, better='dnn', worse='threshold', level=None):
        """Accuracy difference between two classifiers, in fraction units."""
        return self.accuracy(better, level) - self.accuracy(worse, level)

    @property
    def classifiers(self):
        return tuple(dict.fromkeys(r.classifier for r in self.rows))

    @property
    def levels(self):
        return tuple(dict.fromkeys(r.level for r in self.rows))


@dataclass(frozen=True)
class PreparedClassifiers:
    classifiers: Dict[str, object]
    baseline_mean: float
    training: Optional[TrainResult] = None


@dataclass(frozen=True)
class T1Result:
    classifier: str
    t_wait_us: Tuple[float, ...]
    p_down: Tuple[float, ...]
    sigma_p: Tuple[float, ...]
    readout_accuracy: Tuple[float, ...]
    fit: Optional[FitResult] = None
    fit_error: Optional[str] = None


@dataclass(frozen=True)
class T1Report:
    spec: T1ExperimentSpec
    results: Dict[str, T1Result]
    true_fraction: Tuple[float, ...]
    expected_fraction: Tuple[float, ...]


def _snr(noise, n_samples):
    level = total_noise_level(noise, n_samples)
    return None if level == 0 else 20.0 * math.log10(1.0 / level)


def build_training_dataset(cfg, noise, n_per_class, rng):
    """
    Labeled, noise-injected, standardized and shuffled charging-line dataset.

    :param TunnelConfig cfg: tunnel parameters
    :param NoiseSpec noise: noise added to every trace
    :param int n_per_class: event traces and no-event traces each
    :param Rng rng: random stream; children 0, 1 and 2 drive the simulation,
        the noise and the shuffle
    :return LabeledDataset: ``2 * n_per_class`` traces with ``baseline_mean`` set
    """
    raw = gen_charging_dataset(cfg, n_per_class, rng.child(0), seed=rng.seed)
    noise_rng = rng.child(1)
    noisy = LabeledDataset(
        traces=tuple(apply_noise(t, noise, noise_rng, cfg.amp_event) for t in raw.traces),
        labels=raw.labels,
        seed=rng.seed,
    )
    standardized = standardize_dataset(noisy, baseline_from(noisy))
    return standardized.subset(rng.child(2).permutation(len(standardized)))


def prepare_classifiers(train_set, names, settings):
    """
    Train the network and optimize the baselines on one training set.

    :param LabeledDataset train_set: standardized training traces
    :param names: classifier names, any of ``dnn``, ``wavelet``, ``threshold``
    :param ExperimentSettings settings: architecture, optimizer and grids
    :return PreparedClassifiers: classifiers keyed by name, in request order
    """
    names = _check_classifiers(names)
    classifiers = {}
    training = None
    b = settings.baselines
    for name in names:
        if name == 'dnn':
            training = train(train_set, settings.dnn, settings.train)
            classifiers[name] = DnnClassifier(training.model)
        elif name == 'threshold':
            classifiers[name] = baselines.optimize_threshold(
                train_set, grid=b.threshold_grid, polarity=b.polarity, boxcar_width=b.boxcar_width,
                objective=b.objective)
        else:
            scales = baselines.wavelet_scales(train_set.trace_len, b.wavelet_scales, b.wavelet_max_scale)
            classifiers[name] = baselines.optimize_wavelet(
                train_set, scales=scales, n_thresholds=b.wavelet_thresholds, objective=b.objective,
                noise_floor=b.wavelet_noise_floor)
    return PreparedClassifiers(classifiers, float(train_set.baseline_mean or 0.0), training)


def evaluate(classifier, dataset, level=0.0, snr_db=None):
    """
    Accuracy and confusion counts of a classifier on labeled traces.

    :return AccuracyRow: ``accuracy = correct / eval_count``
    """
    if len(dataset) == 0:
        raise DatasetError('Cannot evaluate on an empty dataset')
    predicted = np.asarray(classifier.predict(dataset.samples), dtype=bool)
    truth = dataset.is_event
    confusion = Confusion(
        true_event=int(np.count_nonzero(predicted & truth)),
        missed_event=int(np.count_nonzero(~predicted & truth)),
        true_noevent=int(np.count_nonzero(~predicted & ~truth)),
        false_event=int(np.count_nonzero(predicted & ~truth)),
    )
    correct = confusion.true_event + confusion.true_noevent
    return AccuracyRow(
        classifier=classifier.name,
        level=float(level),
        accuracy=correct / len(dataset),
        eval_count=len(dataset),
        confusion=confusion,
        snr_db=snr_db,
    )


def run_cell(noise, n_per_class, names, settings, rng, level):
    """Build, split, prepare and evaluate at one noise setting."""
    dataset = build_training_dataset(settings.tunnel, noise, n_per_class, rng.child(0))
    n_train, n_eval = settings.split_sizes(len(dataset))
    train_set, eval_set = split_dataset(dataset, n_train, n_eval, rng.child(1))
    prepared = prepare_classifiers(train_set, names, settings)
    snr = _snr(noise, settings.tunnel.n_samples)
    rows = [evaluate(c, eval_set, level, snr) for c in prepared.classifiers.values()]
    log.info('level {} - {}'.format(level, ', '.join('{} {:.4f}'.format(r.classifier, r.accuracy) for r in rows)))
    return rows


def run_sweep(spec, settings=None, pool=None):
    """
    Accuracy of every requested classifier at every noise level.

    Level ``i`` uses the random stream ``Rng(spec.seed).child(i)``.

    :param SweepSpec spec: noise kind, levels and classifiers
    :param ExperimentSettings settings: shared settings (defaults if None)
    :param WorkerPool pool: pool for the levels (a default pool if None)
    :return AccuracyReport: rows ordered by level, then classifier
    """
    settings = settings or ExperimentSettings()
    pool = pool or WorkerPool()
    master = Rng(spec.seed)
    for i, level in enumerate(spec.levels):
        pool.add_task(run_cell, args=(spec.noise_at(level), spec.n_per_class, spec.classifiers, settings,
                                      master.child(i), level), name='sweep-{}'.format(spec.noise_kind))
    rows = [row for cell in pool.run_concurrent() for row in cell]
    return AccuracyReport(name='sweep-{}'.format(spec.noise_kind), rows=tuple(rows), seed=spec.seed)


def run_spike_scenario(scenario, settings=None, rng=None):
    """
    Network against thresholding with spike noise on both classes.

    The report's level is the spike rate per trace; :meth:`AccuracyReport.gap`
    gives the accuracy difference.
    """
    settings = settings or ExperimentSettings()
    rng = rng or Rng(scenario.seed)
    rows = run_cell(scenario.noise, scenario.n_per_class, scenario.classifiers, settings, rng,
                    scenario.spike_rate_per_trace)
    return AccuracyReport(name='spike', rows=tuple(rows), seed=rng.seed)


def readout_point(spin_cfg, noise, shots, classifiers, baseline_mean, rng):
    """
    Single-shot readout of one wait time.

    :return tuple: (true event fraction, {name: (event fraction, accuracy)})
    """
    sim_rng, noise_rng = rng.child(0), rng.child(1)
    amp = spin_cfg.tunnel.amp_event
    rows, truth = [], np.empty(shots, dtype=bool)
    for k in range(shots):
        trace, label = gen_spin_trace(spin_cfg, sim_rng)
        rows.append(apply_noise(trace, noise, noise_rng, amp).samples)
        truth[k] = label.is_event
    samples = np.vstack(rows) - baseline_mean
    out = {}
    for name, classifier in classifiers.items():
        predicted = np.asarray(classifier.predict(samples), dtype=bool)
        out[name] = (float(np.mean(predicted)), float(np.mean(predicted == truth)))
    return float(np.mean(truth)), out


def run_t1_experiment(spec, settings=None, prepared=None, pool=None):
    """
    Down-spin probability against wait time for each classifier, with fits.

    Classifiers are trained on a charging-line dataset at ``spec.noise``
    unless ``prepared`` is given. Wait time ``k`` uses the stream
    ``Rng(spec.seed).child(1, k)``, the training data ``child(0)``.

    :return T1Report: one :class:`T1Result` per classifier; fit failures are
        recorded in ``fit_error`` instead of raised
    """
    settings = settings or ExperimentSettings(tunnel=spec.spin_cfg.tunnel)
    pool = pool or WorkerPool()
    master = Rng(spec.seed)
    if prepared is None:
        dataset = build_training_dataset(spec.spin_cfg.tunnel, spec.noise, spec.n_per_class, master.child(0, 0))
        n_train, n_eval = settings.split_sizes(len(dataset))
        train_set, _ = split_dataset(dataset, n_train, n_eval, master.child(0, 1))
        prepared = prepare_classifiers(train_set, spec.classifiers, settings)

    for k, t_wait in enumerate(spec.t_wait_list):
        cfg = dataclasses.replace(spec.spin_cfg, t_wait_us=t_wait)
        pool.add_task(readout_point, args=(cfg, spec.noise, spec.shots_per_point, prepared.classifiers,
                                           prepared.baseline_mean, master.child(1, k)), name='t1')
    points = pool.run_concurrent()

    results = {}
    for name in prepared.classifiers:
        p = np.array([point[1][name][0] for point in points])
        sigma = binomial_sigma(p, spec.shots_per_point)
        fit, error = None, None
        try:
            fit = fit_exponential(spec.t_wait_list, p, sigma)
            log.info('{} - A={:.3f}+-{:.3f} T1={:.2f}+-{:.2f} us B={:.3f}+-{:.3f}'.format(
                name, fit.amplitude_a, fit.sigma_a, fit.t1_us, fit.sigma_t1, fit.offset_b, fit.sigma_b))
        except FitError as e:
            error = str(e)
            log.warning('{} - exponential fit failed: {}'.format(name, error))
        results[name] = T1Result(
            classifier=name,
            t_wait_us=spec.t_wait_list,
            p_down=tuple(float(v) for v in p),
            sigma_p=tuple(float(v) for v in sigma),
            readout_accuracy=tuple(point[1][name][1] for point in points),
            fit=fit,
            fit_error=error,
        )
    expected = tuple(spin_event_probability(dataclasses.replace(spec.spin_cfg, t_wait_us=t))
                     for t in spec.t_wait_list)
    return T1Report(spec=spec, results=results, true_fraction=tuple(point[0] for point in points),
                    expected_fraction=expected)
