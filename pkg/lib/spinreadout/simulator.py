"""
Trace simulator
===============

Continuous-time Markov chain model of charge tunneling seen by a charge
sensor.

Charging line: the electron tunnels out (signal steps to ``amp_event``)
after an exponential delay with mean ``tau_tunnel_us`` and back in after an
exponential dwell with mean ``tau_in_us``, repeating until the end of the
trace (random telegraph signal).

Energy-selective spin readout: only a spin-down electron can tunnel out.
It does so once, a spin-up electron tunnels back in and the signal stays
at baseline. A spin-down electron may relax to spin-up during readout
before it tunnels, in which case no event is produced.

Switching times are drawn in continuous time first and then sampled with
sample-and-hold on the ``k * dt_us`` grid.
"""
import logging
import math
from dataclasses import dataclass
from dataclasses import field
from typing import Optional

import numpy as np

from spinreadout.core import DEFAULT_DT_US
from spinreadout.core import Label
from spinreadout.core import LabeledDataset
from spinreadout.core import Trace
from spinreadout.errors import ConfigError
from spinreadout.errors import SimulationError

log = logging.getLogger(__name__)

# Number of exponential intervals drawn per vectorised chunk.
_CHUNK = 64


@dataclass(frozen=True)
class TunnelConfig:
    tau_tunnel_us: float = 33.0
    trace_len_us: float = 480.0
    dt_us: float = DEFAULT_DT_US
    amp_event: float = 1.0
    tau_in_us: Optional[float] = None
    max_retries: int = 1000

    def __post_init__(self):
        if not self.tau_tunnel_us > 0:
            raise ConfigError('tau_tunnel_us must be positive, got {}'.format(self.tau_tunnel_us))
        if self.tau_in_us is not None and not self.tau_in_us > 0:
            raise ConfigError('tau_in_us must be positive, got {}'.format(self.tau_in_us))
        if not self.dt_us > 0 or not self.trace_len_us >= self.dt_us:
            raise ConfigError('Need trace_len_us >= dt_us > 0, got {} and {}'.format(
                self.trace_len_us, self.dt_us))
        if self.max_retries < 1:
            raise ConfigError('max_retries must be at least 1')

    @property
    def tau_out(self):
        return self.tau_tunnel_us

    @property
    def tau_in(self):
        return self.tau_tunnel_us if self.tau_in_us is None else self.tau_in_us

    @property
    def n_samples(self):
        return int(round(self.trace_len_us / self.dt_us))

    @property
    def sample_times(self):
        return np.arange(self.n_samples) * self.dt_us

    @property
    def last_sample_us(self):
        return (self.n_samples - 1) * self.dt_us


@dataclass(frozen=True)
class SpinReadoutConfig:
    t1_us: float
    t_wait_us: float = 0.0
    p_down_init: float = 0.9
    tunnel: TunnelConfig = field(default_factory=TunnelConfig)
    relax_during_readout: bool = True

    def __post_init__(self):
        if not self.t1_us > 0:
            raise ConfigError('t1_us must be positive, got {}'.format(self.t1_us))
        if not self.t_wait_us >= 0:
            raise ConfigError('t_wait_us must be non-negative, got {}'.format(self.t_wait_us))
        if not 0.0 <= self.p_down_init <= 1.0:
            raise ConfigError('p_down_init must lie in [0, 1], got {}'.format(self.p_down_init))

    @property
    def p_down(self):
        """Probability that the spin is still down when readout starts."""
        return self.p_down_init * math.exp(-self.t_wait_us / self.t1_us)


def telegraph_edges(cfg, rng, t_end):
    """
    Switching times of a telegraph signal starting low at t = 0.

    Even indices are rising edges (tunnel out), odd indices falling edges.

    :param TunnelConfig cfg: tunnel times
    :param Rng rng: random stream
    :param float t_end: stop once a switching time reaches ``t_end``
    :return numpy.ndarray: increasing edge times strictly below ``t_end``
    """
    chunks = []
    t0, drawn = 0.0, 0
    while True:
        scales = np.where(np.arange(drawn, drawn + _CHUNK) % 2 == 0, cfg.tau_out, cfg.tau_in)
        times = t0 + np.cumsum(rng.exponential(scales))
        chunks.append(times[times < t_end])
        if times[-1] >= t_end:
            break
        t0, drawn = times[-1], drawn + _CHUNK
    return np.concatenate(chunks)


def sample_and_hold(edges, sample_times, amplitude=1.0):
    """Signal level at each sample time given alternating rise/fall edges."""
    crossed = np.searchsorted(edges, sample_times, side='right')
    return amplitude * (crossed % 2).astype(np.float64)


def gen_telegraph_trace(cfg, rng):
    """One charging-line trace without conditioning on an event."""
    edges = telegraph_edges(cfg, rng, cfg.trace_len_us)
    return Trace(sample_and_hold(edges, cfg.sample_times, cfg.amp_event), dt_us=cfg.dt_us)


def gen_event_trace(cfg, rng):
    """
    Charging-line trace that contains at least one visible transition.

    Draws are rejected until the sampled trace shows a rising edge.

    :raises SimulationError: when ``cfg.max_retries`` draws show no event
    """
    for _ in range(cfg.max_retries):
        trace = gen_telegraph_trace(cfg, rng)
        if trace.samples.max() > 0:
            return trace
    raise SimulationError('No charge transition in {} draws (tau_tunnel_us={}, trace_len_us={})'.format(
        cfg.max_retries, cfg.tau_tunnel_us, cfg.trace_len_us))


def gen_noevent_trace(cfg, rng=None):
    """Flat baseline trace, all zeros before noise injection."""
    return Trace(np.zeros(cfg.n_samples), dt_us=cfg.dt_us)


def event_probability(cfg):
    """Probability that an unconditioned trace tunnels out before its last sample."""
    return 1.0 - math.exp(-cfg.last_sample_us / cfg.tau_out)


def gen_spin_trace(cfg, rng):
    """
    Energy-selective single-shot readout trace.

    The label is the simulator ground truth as a classifier could see it:
    Event when a tunneling blip is present in the sampled trace.

    :param SpinReadoutConfig cfg: spin and tunnel parameters
    :param Rng rng: random stream
    :return tuple: (Trace, Label)
    """
    tunnel = cfg.tunnel
    samples = np.zeros(tunnel.n_samples)
    if rng.random() < cfg.p_down:
        t_out = rng.exponential(tunnel.tau_out)
        t_relax = math.inf
        if cfg.relax_during_readout and math.isfinite(cfg.t1_us):
            t_relax = rng.exponential(cfg.t1_us)
        if t_out < t_relax:
            t_in = t_out + rng.exponential(tunnel.tau_in)
            samples = sample_and_hold(np.array([t_out, t_in]), tunnel.sample_times, tunnel.amp_event)
    trace = Trace(samples, dt_us=tunnel.dt_us)
    return trace, Label.from_bool(samples.max() > 0)


def spin_event_probability(cfg):
    """
    Expected fraction of spin traces that show a tunneling blip.

    ``p_down * G_out / (G_out + G_rel) * (1 - exp(-(G_out + G_rel) * T))``
    with ``G_out = 1 / tau_out``, ``G_rel = 1 / T1`` (0 when relaxation during
    readout is off) and ``T`` the time of the last sample.
    """
    rate_out = 1.0 / cfg.tunnel.tau_out
    rate_rel = 1.0 / cfg.t1_us if cfg.relax_during_readout else 0.0
    total = rate_out + rate_rel
    return cfg.p_down * rate_out / total * (1.0 - math.exp(-total * cfg.tunnel.last_sample_us))


def gen_charging_dataset(cfg, n_per_class, rng, seed=0):
    """Raw (noiseless) event and no-event traces, events first."""
    traces = [gen_event_trace(cfg, rng) for _ in range(n_per_class)]
    traces += [gen_noevent_trace(cfg) for _ in range(n_per_class)]
    labels = [Label.EVENT] * n_per_class + [Label.NO_EVENT] * n_per_class
    log.debug('Simulated {} event and {} no-event traces'.format(n_per_class, n_per_class))
    return LabeledDataset(traces=tuple(traces), labels=tuple(labels), seed=seed)
