"""
Noise injection
===============

Additive noise sources for sensor traces, with levels relative to the
event amplitude:

* Gaussian: white noise, level = RMS
* drift: slow sinusoid (default 1 kHz, slower than a 480 us trace),
  level = sinusoid amplitude, phase uniform per trace
* spikes: Poisson number of rectangular pulses at uniform positions

:func:`apply_noise` always applies them in the order gaussian, drift, spike.
"""
import math
from dataclasses import dataclass

import numpy as np

from spinreadout.core import Trace
from spinreadout.errors import NoiseError


@dataclass(frozen=True)
class NoiseSpec:
    gaussian_level: float = 0.0
    drift_level: float = 0.0
    drift_freq_khz: float = 1.0
    spike_rate_per_trace: float = 0.0
    spike_amp: float = 1.2
    spike_width_samples: int = 3

    def __post_init__(self):
        for name in ('gaussian_level', 'drift_level', 'spike_rate_per_trace'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise NoiseError('{} must be finite and non-negative, got {}'.format(name, value))
        if not (math.isfinite(self.drift_freq_khz) and self.drift_freq_khz > 0):
            raise NoiseError('drift_freq_khz must be positive, got {}'.format(self.drift_freq_khz))
        if not math.isfinite(self.spike_amp):
            raise NoiseError('spike_amp must be finite')
        if self.spike_width_samples < 1:
            raise NoiseError('spike_width_samples must be at least 1')

    @property
    def is_clean(self):
        return self.gaussian_level == 0 and self.drift_level == 0 and self.spike_rate_per_trace == 0


def add_gaussian(trace, level, rng, amp_event=1.0):
    """Add white Gaussian noise with standard deviation ``level * amp_event``."""
    if not level >= 0:
        raise NoiseError('Gaussian level must be non-negative, got {}'.format(level))
    if level == 0:
        return trace
    return trace.with_samples(trace.samples + rng.normal(level * amp_event, len(trace)))


def drift_waveform(n_samples, dt_us, level, freq_khz, phase, amp_event=1.0):
    t_ms = np.arange(n_samples) * dt_us / 1000.0
    return level * amp_event * np.sin(2.0 * np.pi * freq_khz * t_ms + phase)


def add_drift(trace, level, freq_khz, rng, amp_event=1.0):
    """
    Add a sinusoidal baseline drift with a random phase.

    :param Trace trace: input trace
    :param float level: sinusoid amplitude relative to the event amplitude
    :param float freq_khz: drift frequency in kHz
    :param Rng rng: random stream (one uniform draw for the phase)
    """
    if not freq_khz > 0:
        raise NoiseError('Drift frequency must be positive, got {}'.format(freq_khz))
    if not level >= 0:
        raise NoiseError('Drift level must be non-negative, got {}'.format(level))
    if level == 0:
        return trace
    phase = rng.uniform(0.0, 2.0 * np.pi)
    drift = drift_waveform(len(trace), trace.dt_us, level, freq_khz, phase, amp_event)
    return trace.with_samples(trace.samples + drift)


def spike_positions(n_samples, rate_per_trace, width, rng):
    """Start indices of a Poisson number of pulses that fit inside the trace."""
    if not rate_per_trace >= 0:
        raise NoiseError('Spike rate must be non-negative, got {}'.format(rate_per_trace))
    if width < 1 or width > n_samples:
        raise NoiseError('Spike width must lie in [1, {}], got {}'.format(n_samples, width))
    if rate_per_trace == 0:
        return np.empty(0, dtype=np.int64)
    count = rng.poisson(rate_per_trace)
    return np.asarray(rng.integers(0, n_samples - width + 1, size=count), dtype=np.int64)


def spike_waveform(n_samples, starts, amp, width):
    waveform = np.zeros(n_samples)
    for start in starts:
        waveform[start:start + width] += amp
    return waveform


def add_spikes(trace, rate_per_trace, amp, width, rng):
    """Add rectangular pulses of amplitude ``amp`` and ``width`` samples."""
    starts = spike_positions(len(trace), rate_per_trace, width, rng)
    if starts.size == 0:
        return trace
    return trace.with_samples(trace.samples + spike_waveform(len(trace), starts, amp, width))


def apply_noise(trace, spec, rng, amp_event=1.0):
    """Apply every source of a :class:`NoiseSpec` in the fixed order gaussian, drift, spike."""
    trace = add_gaussian(trace, spec.gaussian_level, rng, amp_event)
    trace = add_drift(trace, spec.drift_level, spec.drift_freq_khz, rng, amp_event)
    return add_spikes(trace, spec.spike_rate_per_trace, spec.spike_amp * amp_event, spec.spike_width_samples, rng)


def total_noise_level(spec, n_samples=480):
    """Expected RMS of the composite noise relative to the event amplitude."""
    spike_power = spec.spike_rate_per_trace * spec.spike_width_samples * spec.spike_amp ** 2 / n_samples
    return math.sqrt(spec.gaussian_level ** 2 + spec.drift_level ** 2 / 2.0 + spike_power)


def rms(values):
    values = values.samples if isinstance(values, Trace) else np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise NoiseError('RMS of an empty sequence')
    return float(np.sqrt(np.mean(np.square(values))))


def snr_db(signal, noise):
    """
    Signal-to-noise ratio ``20 log10(rms(signal) / rms(noise))`` in dB.

    :raises NoiseError: when the noise RMS is zero
    """
    noise_rms = rms(noise)
    if noise_rms == 0:
        raise NoiseError('Noise RMS is zero, SNR is infinite')
    return 20.0 * math.log10(rms(signal) / noise_rms)


def event_snr_db(event_trace, noise):
    """
    SNR of a noiseless telegraph trace, with the signal RMS taken over its
    high-state samples, i.e. the event amplitude seen while an event lasts.
    """
    samples = event_trace.samples if isinstance(event_trace, Trace) else np.asarray(event_trace)
    high = samples[samples > 0]
    if high.size == 0:
        raise NoiseError('Trace contains no event samples')
    return snr_db(high, noise)
