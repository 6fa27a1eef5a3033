"""
Core types
==========

Trace representation, labels, labeled datasets and the seeded random
stream shared by every other module.

Event amplitude is normalized to 1.0 everywhere; noise levels and
thresholds are expressed relative to it.

Randomness is always explicit: every function that draws numbers takes an
:class:`Rng`. Streams for parallel tasks are derived with
:meth:`Rng.child`, never by sharing one instance between threads.
"""
import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Optional
from typing import Tuple

import numpy as np

from spinreadout.errors import DatasetError

DEFAULT_TRACE_LEN = 480
DEFAULT_DT_US = 1.0


class Label(enum.Enum):
    """Single-shot outcome: charge transition seen (spin-down) or not (spin-up)."""

    EVENT = 'event'
    NO_EVENT = 'noevent'

    @classmethod
    def from_bool(cls, is_event):
        return cls.EVENT if is_event else cls.NO_EVENT

    @classmethod
    def from_code(cls, code):
        try:
            return {'E': cls.EVENT, 'N': cls.NO_EVENT}[code]
        except KeyError:
            raise DatasetError('Unknown label code: {!r}'.format(code))

    @property
    def is_event(self):
        return self is Label.EVENT

    @property
    def code(self):
        return 'E' if self is Label.EVENT else 'N'


@dataclass(frozen=True, eq=False)
class Trace:
    """
    Fixed-length sampled sensor voltage.

    :param samples: voltage values, event amplitude normalized to 1.0
    :param float dt_us: sample period in microseconds
    """

    samples: np.ndarray
    dt_us: float = DEFAULT_DT_US

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).ravel()
        if samples.size == 0:
            raise DatasetError('Trace must contain at least one sample')
        if not np.all(np.isfinite(samples)):
            raise DatasetError('Trace samples must be finite')
        if not self.dt_us > 0:
            raise DatasetError('Sample period must be positive, got {}'.format(self.dt_us))
        samples.setflags(write=False)
        object.__setattr__(self, 'samples', samples)
        object.__setattr__(self, 'dt_us', float(self.dt_us))

    def __len__(self):
        return self.samples.size

    @property
    def duration_us(self):
        return len(self) * self.dt_us

    def with_samples(self, samples):
        """Return a trace with the same sampling and new values."""
        return Trace(samples, dt_us=self.dt_us)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """
    Traces paired with event/no-event labels.

    All traces share one length and sample period. ``baseline_mean`` is the
    value already subtracted by standardization, or None for raw traces.
    """

    traces: Tuple[Trace, ...]
    labels: Tuple[Label, ...]
    seed: int = 0
    baseline_mean: Optional[float] = None

    def __post_init__(self):
        traces = tuple(self.traces)
        labels = tuple(self.labels)
        if len(traces) != len(labels):
            raise DatasetError('Got {} traces but {} labels'.format(len(traces), len(labels)))
        if traces:
            lengths = {len(t) for t in traces}
            periods = {t.dt_us for t in traces}
            if len(lengths) != 1 or len(periods) != 1:
                raise DatasetError('Traces differ in length or sample period')
        object.__setattr__(self, 'traces', traces)
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'seed', int(self.seed))

    @classmethod
    def from_arrays(cls, samples, is_event, dt_us=DEFAULT_DT_US, seed=0, baseline_mean=None):
        """Build a dataset from an N x L sample matrix and a boolean label vector."""
        is_event = np.asarray(is_event, dtype=bool).ravel()
        if is_event.size == 0:
            return cls(traces=(), labels=(), seed=seed, baseline_mean=baseline_mean)
        samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        return cls(
            traces=tuple(Trace(row, dt_us=dt_us) for row in samples),
            labels=tuple(Label.from_bool(flag) for flag in is_event),
            seed=seed,
            baseline_mean=baseline_mean,
        )

    def __len__(self):
        return len(self.traces)

    @property
    def trace_len(self):
        return len(self.traces[0]) if self.traces else 0

    @property
    def dt_us(self):
        return self.traces[0].dt_us if self.traces else DEFAULT_DT_US

    @cached_property
    def samples(self):
        """N x L matrix of all samples (read-only)."""
        if not self.traces:
            matrix = np.empty((0, 0))
        else:
            matrix = np.vstack([t.samples for t in self.traces])
        matrix.setflags(write=False)
        return matrix

    @cached_property
    def is_event(self):
        flags = np.array([label.is_event for label in self.labels], dtype=bool)
        flags.setflags(write=False)
        return flags

    def label_counts(self):
        n_event = int(np.count_nonzero(self.is_event))
        return {Label.EVENT: n_event, Label.NO_EVENT: len(self) - n_event}

    def subset(self, indices):
        indices = [int(i) for i in indices]
        return LabeledDataset(
            traces=tuple(self.traces[i] for i in indices),
            labels=tuple(self.labels[i] for i in indices),
            seed=self.seed,
            baseline_mean=self.baseline_mean,
        )


class Rng:
    """
    Seeded random stream.

    Algorithm: numpy ``PCG64`` bit generator seeded through
    ``SeedSequence(seed, spawn_key=key)``. The same seed, key and call
    sequence give the same numbers on every platform.

    Derivation rule for parallel work: ``rng.child(i, j)`` is the stream
    ``SeedSequence(seed, spawn_key=key + (i, j))``; it does not depend on how
    much of the parent has been consumed.

    Instances are single-owner; never share one between threads.
    """

    ALGORITHM = 'numpy.PCG64/SeedSequence'

    def __init__(self, seed, spawn_key=()):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise DatasetError('Seed must be a non-negative 64-bit integer, got {}'.format(seed))
        self.seed = seed
        self.spawn_key = tuple(int(k) for k in spawn_key)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def __repr__(self):
        return 'Rng(seed={}, spawn_key={})'.format(self.seed, self.spawn_key)

    def child(self, *keys):
        return Rng(self.seed, self.spawn_key + tuple(int(k) for k in keys))

    def normal(self, scale, size):
        return self.generator.normal(0.0, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def exponential(self, scale, size=None):
        return self.generator.exponential(scale, size)

    def poisson(self, lam):
        return int(self.generator.poisson(lam))

    def integers(self, low, high, size=None):
        return self.generator.integers(low, high, size)

    def random(self, size=None):
        return self.generator.random(size)

    def permutation(self, values):
        return self.generator.permutation(values)


def standardize(trace, baseline_mean):
    """
    Subtract the no-event baseline from every sample.

    :param Trace trace: raw trace
    :param float baseline_mean: mean of traces measured without charge transitions
    :return Trace: shifted trace with the same length and sample period
    """
    baseline_mean = float(baseline_mean)
    if not np.isfinite(baseline_mean):
        raise DatasetError('Baseline mean must be finite')
    return trace.with_samples(trace.samples - baseline_mean)


def baseline_from(ds):
    """Mean sample value over the no-event traces of a dataset."""
    no_event = ~ds.is_event
    if not np.any(no_event):
        raise DatasetError('Dataset has no no-event traces to estimate the baseline')
    return float(np.mean(ds.samples[no_event]))


def standardize_dataset(ds, baseline_mean):
    """Standardize every trace of a dataset and record the baseline."""
    baseline_mean = float(baseline_mean)
    if not np.isfinite(baseline_mean):
        raise DatasetError('Baseline mean must be finite')
    previous = ds.baseline_mean or 0.0
    return LabeledDataset.from_arrays(
        ds.samples - baseline_mean,
        ds.is_event,
        dt_us=ds.dt_us,
        seed=ds.seed,
        baseline_mean=previous + baseline_mean,
    )


def _stratified_quota(counts, n_train):
    """Split ``n_train`` over groups proportionally (largest remainder)."""
    total = sum(counts)
    exact = [n_train * c / total for c in counts]
    quota = [int(np.floor(x)) for x in exact]
    remainder = n_train - sum(quota)
    order = sorted(range(len(counts)), key=lambda i: quota[i] - exact[i])
    for i in order[:remainder]:
        quota[i] += 1
    return quota


def split_dataset(ds, n_train, n_eval, rng):
    """
    Stratified random partition into a training and an evaluation set.

    :param LabeledDataset ds: source dataset
    :param int n_train: training set size
    :param int n_eval: evaluation set size, ``n_train + n_eval == len(ds)``
    :param Rng rng: random stream
    :return tuple: (train, eval) datasets, disjoint and covering ``ds``
    """
    n_train, n_eval = int(n_train), int(n_eval)
    if n_train < 0 or n_eval < 0 or n_train + n_eval != len(ds):
        raise DatasetError('Cannot split {} traces into {} + {}'.format(len(ds), n_train, n_eval))
    if len(ds) == 0:
        return ds, ds

    groups = [np.flatnonzero(ds.is_event), np.flatnonzero(~ds.is_event)]
    quota = _stratified_quota([g.size for g in groups], n_train)

    train_parts, eval_parts = [], []
    for group, q in zip(groups, quota):
        shuffled = rng.permutation(group)
        train_parts.append(shuffled[:q])
        eval_parts.append(shuffled[q:])

    train_idx = rng.permutation(np.concatenate(train_parts))
    eval_idx = rng.permutation(np.concatenate(eval_parts))
    return ds.subset(train_idx), ds.subset(eval_idx)
