"""
Baseline classifiers
====================

Conventional event detectors used as references for the neural network:

* thresholding: Event when any (optionally boxcar-filtered) sample of the
  standardized trace crosses a threshold
* wavelet method: Event when the largest sliding Haar detail coefficient at
  one scale reaches a threshold

Both are tuned on training data by exhaustive grid search: 512 thresholds
between the smallest and largest sample for thresholding, 32 scales x 64
coefficient thresholds for the wavelet method. Ties go to the larger
threshold (and to the smaller scale).

The wavelet search only considers scales whose coefficient noise on the
no-event training traces, ``rms * sqrt(2 / scale)``, stays below
``WAVELET_NOISE_FLOOR``. The RMS cannot tell slow drift from white noise,
so heavy drift pushes the detector to long scales where the drift slope
shows up in the coefficients.
"""
import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from spinreadout.core import Label
from spinreadout.core import Trace
from spinreadout.errors import ConfigError
from spinreadout.errors import DatasetError
from spinreadout.errors import ShapeError
from spinreadout.noise import rms

log = logging.getLogger(__name__)

THRESHOLD_GRID = 512
WAVELET_SCALES = 32
WAVELET_THRESHOLDS = 64
WAVELET_MAX_SCALE = 240
WAVELET_NOISE_FLOOR = 0.19

POLARITIES = ('above', 'below')
OBJECTIVES = ('accuracy', 'visibility')


def _as_matrix(samples):
    if isinstance(samples, Trace):
        samples = samples.samples
    return np.atleast_2d(np.asarray(samples, dtype=np.float64))


def boxcar(samples, width):
    """Moving average over ``width`` samples (valid part only); width 1 is a no-op."""
    samples = _as_matrix(samples)
    if width <= 1:
        return samples
    if width > samples.shape[-1]:
        raise ShapeError('Boxcar width {} exceeds trace length {}'.format(width, samples.shape[-1]))
    return sliding_window_view(samples, width, axis=-1).mean(axis=-1)


def score(predicted, is_event, objective='accuracy'):
    """
    Score event predictions against labels, vectorised over leading axes.

    ``accuracy`` is the fraction of matching labels, ``visibility`` the
    event hit rate plus the no-event hit rate minus one.
    """
    is_event = np.asarray(is_event, dtype=bool)
    if objective == 'accuracy':
        return np.mean(predicted == is_event, axis=-1)
    if objective == 'visibility':
        hit_event = np.mean(predicted[..., is_event], axis=-1)
        hit_noevent = np.mean(~predicted[..., ~is_event], axis=-1)
        return hit_event + hit_noevent - 1.0
    raise ConfigError('Unknown objective {!r}, choose from {}'.format(objective, OBJECTIVES))


def _best_index(scores):
    """Index of the best score; ties resolved toward the end of the grid."""
    scores = np.asarray(scores)
    return scores.size - 1 - int(np.argmax(scores[::-1]))


def _require_both_labels(train):
    if len(train) == 0:
        raise DatasetError('Training set is empty')
    counts = train.label_counts()
    if not all(counts.values()):
        raise DatasetError('Training set needs both labels, got {}'.format(
            {k.value: v for k, v in counts.items()}))


@dataclass(frozen=True)
class ThresholdClassifier:
    threshold: float
    polarity: str = 'above'
    boxcar_width: int = 1

    name = 'threshold'

    def __post_init__(self):
        if not np.isfinite(self.threshold):
            raise ConfigError('Threshold must be finite')
        if self.polarity not in POLARITIES:
            raise ConfigError('Polarity must be one of {}, got {!r}'.format(POLARITIES, self.polarity))
        if self.boxcar_width < 1:
            raise ConfigError('Boxcar width must be at least 1')

    def statistic(self, samples):
        filtered = boxcar(samples, self.boxcar_width)
        return filtered.max(axis=-1) if self.polarity == 'above' else filtered.min(axis=-1)

    def predict(self, samples):
        """Boolean event decisions for an N x L sample matrix."""
        stat = self.statistic(samples)
        return stat > self.threshold if self.polarity == 'above' else stat < self.threshold

    def classify(self, trace):
        return Label.from_bool(bool(self.predict(trace)[0]))

    def to_dict(self):
        return {'threshold': float(self.threshold), 'polarity': self.polarity, 'boxcar_width': self.boxcar_width}


def classify_threshold(c, trace):
    """Event iff any sample of the standardized trace crosses ``c.threshold``."""
    return c.classify(trace)


def threshold_grid(train, grid=THRESHOLD_GRID, boxcar_width=1):
    """Candidate thresholds: ``grid`` points from the smallest to the largest filtered sample."""
    filtered = boxcar(train.samples, boxcar_width)
    return np.linspace(filtered.min(), filtered.max(), int(grid))


def optimize_threshold(train, grid=THRESHOLD_GRID, polarity='above', boxcar_width=1, objective='accuracy'):
    """
    Threshold that maximizes the training objective over a dense grid.

    :param LabeledDataset train: standardized training traces with both labels
    :param int grid: number of candidate thresholds
    :param str objective: ``accuracy`` or ``visibility``
    :return ThresholdClassifier: optimized classifier
    """
    _require_both_labels(train)
    candidates = threshold_grid(train, grid, boxcar_width)
    scorer = ThresholdClassifier(0.0, polarity, boxcar_width)
    stat = scorer.statistic(train.samples)
    if polarity == 'above':
        predicted = stat[None, :] > candidates[:, None]
    else:
        predicted = stat[None, :] < candidates[:, None]
    scores = score(predicted, train.is_event, objective)
    best = _best_index(scores)
    log.debug('Threshold {:.4f} reaches training {} {:.4f}'.format(candidates[best], objective, scores[best]))
    return ThresholdClassifier(float(candidates[best]), polarity, boxcar_width)


def haar_detail_matrix(samples, scale):
    """Sliding Haar detail coefficients for every row of a sample matrix."""
    samples = _as_matrix(samples)
    scale = int(scale)
    if scale < 1:
        raise ConfigError('Haar scale must be at least 1, got {}'.format(scale))
    if 2 * scale > samples.shape[-1]:
        raise ShapeError('Haar scale {} needs at least {} samples, trace has {}'.format(
            scale, 2 * scale, samples.shape[-1]))
    means = sliding_window_view(samples, scale, axis=-1).mean(axis=-1)
    return means[..., :-scale] - means[..., scale:]


def haar_detail(trace, scale):
    """
    Sliding Haar detail coefficient of a trace.

    ``d[i] = mean(x[i:i+s]) - mean(x[i+s:i+2s])``, output length ``len - 2s + 1``.
    """
    return haar_detail_matrix(trace, scale)[0]


@dataclass(frozen=True)
class WaveletClassifier:
    scale: int
    coeff_threshold: float

    name = 'wavelet'

    def __post_init__(self):
        if self.scale < 1:
            raise ConfigError('Wavelet scale must be at least 1')
        if not self.coeff_threshold > 0:
            raise ConfigError('Coefficient threshold must be positive, got {}'.format(self.coeff_threshold))

    def statistic(self, samples):
        return np.abs(haar_detail_matrix(samples, self.scale)).max(axis=-1)

    def predict(self, samples):
        return self.statistic(samples) >= self.coeff_threshold

    def classify(self, trace):
        return Label.from_bool(bool(self.predict(trace)[0]))

    def to_dict(self):
        return {'scale': int(self.scale), 'coeff_threshold': float(self.coeff_threshold)}


def classify_wavelet(c, trace):
    """Event iff the largest |Haar detail| at ``c.scale`` reaches ``c.coeff_threshold``."""
    return c.classify(trace)


def wavelet_scales(trace_len, n_scales=WAVELET_SCALES, max_scale=WAVELET_MAX_SCALE):
    """
    Distinct, roughly log-spaced integer scales from 1 up to ``max_scale``.

    Returns ``min(n_scales, max_scale)`` scales; ``max_scale`` is capped at
    half the trace. Where rounding a geometric sequence would repeat a small
    scale the next unused integer is taken instead.
    """
    max_scale = min(int(max_scale), trace_len // 2)
    if max_scale < 1:
        raise ShapeError('Trace of {} samples is too short for a Haar scale'.format(trace_len))
    n = min(int(n_scales), max_scale)
    scales = []
    for k, target in enumerate(np.geomspace(1, max_scale, n)):
        low = scales[-1] + 1 if scales else 1
        scales.append(min(max(int(round(target)), low), max_scale - (n - 1 - k)))
    return scales


def admissible_scales(scales, baseline_rms, noise_floor=WAVELET_NOISE_FLOOR):
    """
    Scales whose Haar coefficient noise ``baseline_rms * sqrt(2 / scale)``
    is at most ``noise_floor``. When none qualifies only the largest scale is
    kept; a floor of 0 keeps every scale.
    """
    scales = sorted(int(s) for s in scales)
    if not scales:
        raise ConfigError('No Haar scales to search')
    if noise_floor <= 0:
        return scales
    kept = [s for s in scales if baseline_rms * np.sqrt(2.0 / s) <= noise_floor]
    return kept or scales[-1:]


def optimize_wavelet(train, scales=None, n_thresholds=WAVELET_THRESHOLDS, objective='accuracy',
                     noise_floor=WAVELET_NOISE_FLOOR):
    """
    Scale and coefficient threshold that maximize the training objective.

    For each admissible scale the thresholds are ``n_thresholds`` evenly
    spaced values in ``(min, max]`` of the per-trace statistic.

    :param LabeledDataset train: standardized training traces with both labels
    :param scales: candidate scales (default: :func:`wavelet_scales`)
    :param int n_thresholds: thresholds per scale
    :param str objective: ``accuracy`` or ``visibility``
    :param float noise_floor: see :func:`admissible_scales`
    :return WaveletClassifier: best classifier
    """
    _require_both_labels(train)
    if scales is None:
        scales = wavelet_scales(train.trace_len)
    baseline_rms = rms(train.samples[~train.is_event])
    scales = admissible_scales(scales, baseline_rms, noise_floor)
    log.debug('No-event RMS {:.4f} admits Haar scales {}..{}'.format(baseline_rms, scales[0], scales[-1]))
    best = (-np.inf, None)
    for scale in scales:
        stat = np.abs(haar_detail_matrix(train.samples, scale)).max(axis=-1)
        low, high = float(stat.min()), float(stat.max())
        if not high > low:
            continue
        candidates = low + (high - low) * np.arange(1, n_thresholds + 1) / n_thresholds
        scores = score(stat[None, :] >= candidates[:, None], train.is_event, objective)
        idx = _best_index(scores)
        if scores[idx] > best[0]:
            best = (scores[idx], WaveletClassifier(int(scale), float(candidates[idx])))
    if best[1] is None:
        raise DatasetError('Haar statistic is constant over the training set')
    log.debug('Wavelet scale {} threshold {:.4f} reaches training {} {:.4f}'.format(
        best[1].scale, best[1].coeff_threshold, objective, best[0]))
    return best[1]
