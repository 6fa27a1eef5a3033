import numpy as np
import pytest

from spinreadout.core import LabeledDataset
from spinreadout.core import Rng
from spinreadout.dnn.model import DnnConfig
from spinreadout.experiments import build_training_dataset
from spinreadout.noise import NoiseSpec
from spinreadout.simulator import TunnelConfig


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def tunnel():
    return TunnelConfig()


@pytest.fixture
def short_tunnel():
    return TunnelConfig(trace_len_us=60.0, tau_tunnel_us=8.0)


@pytest.fixture
def small_dnn():
    return DnnConfig(input_len=40, conv_layers=2, kernel=5)


@pytest.fixture
def charging_set(tunnel):
    """200 standardized traces at Gaussian level 0.1."""
    return build_training_dataset(tunnel, NoiseSpec(gaussian_level=0.1), 100, Rng(7))


@pytest.fixture
def step_set():
    """Steps and flat traces with clean labels, 40 samples each."""
    rows, flags = [], []
    for k in range(10):
        step = np.zeros(40)
        step[5 + 2 * k:] = 1.0
        rows.append(step)
        flags.append(True)
        rows.append(np.zeros(40))
        flags.append(False)
    return LabeledDataset.from_arrays(np.array(rows), np.array(flags), baseline_mean=0.0)
