"""
Experiment configuration
========================

The schema of the experiment config document is the root ``config.yaml``:
sections of options, each with ``type``, ``default`` and ``description``
and optionally ``min``, ``max``, ``choices``, ``nullable``, ``allow_inf``
and ``items`` (element type of a ``list``).

A config document uses the same sections with plain values:

.. sourcecode:: yaml

    noise:
      gaussian_level: 1.0
    sweep:
      levels: [1.0, 1.5, 2.0]

Missing options take their defaults, anything unknown or out of range is
a :class:`ConfigError`.
"""
import hashlib
import math
import os
from pathlib import Path

import yaml

from spinreadout.dnn.model import DnnConfig
from spinreadout.dnn.training import TrainConfig
from spinreadout.errors import ConfigError
from spinreadout.experiments import BaselineSettings
from spinreadout.experiments import ExperimentSettings
from spinreadout.experiments import SpikeScenario
from spinreadout.experiments import SweepSpec
from spinreadout.experiments import T1ExperimentSpec
from spinreadout.noise import NoiseSpec
from spinreadout.simulator import SpinReadoutConfig
from spinreadout.simulator import TunnelConfig

_ROOT_PATH = Path(os.environ.get('SPINREADOUT_ROOT', Path(__file__).resolve().parents[2]))
_DEFAULT_FILE = _ROOT_PATH / 'config.yaml'
_CACHE = {}

_TYPES = {
    'int': int,
    'float': float,
    'boolean': bool,
    'string': str,
}


def load_yaml(path):
    """Parsed YAML file, cached by resolved path."""
    path = Path(path).resolve()
    if path not in _CACHE:
        try:
            with path.open() as fp:
                _CACHE[path] = yaml.safe_load(fp.read())
        except FileNotFoundError:
            raise ConfigError('Config file not found: {}'.format(path))
        except yaml.YAMLError as e:
            raise ConfigError('{}: invalid YAML ({})'.format(path, e))
    return _CACHE[path]


def get(section=None, option=None, schema_file=_DEFAULT_FILE):
    """Schema entries: every section, one section, or one option."""
    if option and not section:
        raise ValueError('Cannot specify option without section')

    data = (load_yaml(schema_file) or {}).get('options', {})
    if section:
        data = data.get(section, {})
    if option:
        data = data.get(option)
    return data


def defaults(schema_file=_DEFAULT_FILE):
    return {
        section: {name: opt.get('default') for name, opt in options.items()}
        for section, options in get(schema_file=schema_file).items()
    }


def _check_scalar(kind, value, opt, where):
    if kind == 'float' and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    expected = _TYPES[kind]
    if not isinstance(value, expected) or (expected is int and isinstance(value, bool)):
        raise ConfigError('{}: expected {}, got {!r}'.format(where, kind, value))
    if kind == 'float' and not math.isfinite(value):
        if not (opt.get('allow_inf') and value == math.inf):
            raise ConfigError('{}: must be finite, got {}'.format(where, value))
    if 'choices' in opt and value not in opt['choices']:
        raise ConfigError('{}: {!r} is not one of {}'.format(where, value, opt['choices']))
    if 'min' in opt and value < opt['min']:
        raise ConfigError('{}: {} is below the minimum {}'.format(where, value, opt['min']))
    if 'max' in opt and value > opt['max']:
        raise ConfigError('{}: {} is above the maximum {}'.format(where, value, opt['max']))
    return value


def check_value(opt, value, where):
    """Validate one option value against its schema entry."""
    if value is None:
        if opt.get('nullable'):
            return None
        raise ConfigError('{}: a value is required'.format(where))
    if opt['type'] == 'list':
        if not isinstance(value, (list, tuple)):
            raise ConfigError('{}: expected a list, got {!r}'.format(where, value))
        return [_check_scalar(opt['items'], v, opt, '{}[{}]'.format(where, i)) for i, v in enumerate(value)]
    return _check_scalar(opt['type'], value, opt, where)


def validate(document, schema_file=_DEFAULT_FILE):
    """
    Full config with defaults filled in.

    :param dict document: parsed config document (may be partial or None)
    :return dict: section -> option -> value, every schema option present
    :raises ConfigError: unknown sections or options, wrong types, values
        outside ``choices``/``min``/``max``
    """
    document = document or {}
    if not isinstance(document, dict):
        raise ConfigError('Config document must be a mapping of sections')
    schema = get(schema_file=schema_file)
    unknown = sorted(set(document) - set(schema))
    if unknown:
        raise ConfigError('Unknown config sections: {}'.format(unknown))

    config = {}
    for section, options in schema.items():
        given = document.get(section) or {}
        if not isinstance(given, dict):
            raise ConfigError('Section {} must be a mapping'.format(section))
        unknown = sorted(set(given) - set(options))
        if unknown:
            raise ConfigError('Unknown options in section {}: {}'.format(section, unknown))
        config[section] = {}
        for name, opt in options.items():
            value = given.get(name, opt.get('default'))
            config[section][name] = check_value(opt, value, '{}.{}'.format(section, name))
    return config


def parse_override(text):
    """
    Split a ``section.key=value`` override; the value is parsed as YAML.

    :return tuple: (section, key, value)
    """
    target, sep, raw = text.partition('=')
    section, dot, key = target.strip().partition('.')
    if not sep or not dot or not section or not key:
        raise ConfigError('Override must look like section.key=value, got {!r}'.format(text))
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError('Override {!r}: invalid value ({})'.format(text, e))
    return section, key, value


def load_config(path=None, overrides=(), schema_file=_DEFAULT_FILE):
    """
    Read, override and validate a config document.

    :param path: config file, None for defaults only
    :param overrides: ``section.key=value`` strings applied in order
    :return dict: validated config
    """
    document = {}
    if path is not None:
        loaded = load_yaml(path)
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError('{}: config document must be a mapping of sections'.format(path))
        document = {k: dict(v) if isinstance(v, dict) else v for k, v in (loaded or {}).items()}
    for text in overrides:
        section, key, value = parse_override(text)
        current = document.setdefault(section, {})
        if not isinstance(current, dict):
            raise ConfigError('Section {} must be a mapping'.format(section))
        current[key] = value
    return validate(document, schema_file)


def config_hash(config):
    """SHA-256 over the canonical YAML dump of a validated config."""
    canonical = yaml.safe_dump(config, sort_keys=True, default_flow_style=False)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def tunnel_config(config):
    return TunnelConfig(**config['tunnel'])


def noise_spec(config):
    return NoiseSpec(**config['noise'])


def dnn_config(config):
    return DnnConfig(**config['dnn'])


def train_config(config):
    return TrainConfig(**config['train'])


def experiment_settings(config):
    return ExperimentSettings(
        tunnel=tunnel_config(config),
        dnn=dnn_config(config),
        train=train_config(config),
        baselines=BaselineSettings(**config['baselines']),
        train_fraction=config['dataset']['train_fraction'],
    )


def sweep_spec(config):
    sweep = config['sweep']
    return SweepSpec(
        noise_kind=sweep['noise_kind'],
        levels=tuple(sweep['levels']),
        n_per_class=config['dataset']['n_per_class'],
        classifiers=tuple(sweep['classifiers']),
        seed=config['run']['seed'],
        base_gaussian_level=sweep['base_gaussian_level'],
        drift_freq_khz=config['noise']['drift_freq_khz'],
    )


def spike_scenario(config):
    spike = config['spike']
    return SpikeScenario(
        gaussian_level=spike['gaussian_level'],
        spike_rate_per_trace=spike['spike_rate_per_trace'],
        spike_amp=spike['spike_amp'],
        spike_width_samples=spike['spike_width_samples'],
        n_per_class=config['dataset']['n_per_class'],
        classifiers=tuple(spike['classifiers']),
        seed=config['run']['seed'],
    )


def t1_spec(config):
    t1 = config['t1']
    spin_cfg = SpinReadoutConfig(
        t1_us=t1['t1_us'],
        p_down_init=t1['p_down_init'],
        tunnel=tunnel_config(config),
        relax_during_readout=t1['relax_during_readout'],
    )
    return T1ExperimentSpec(
        t_wait_list=tuple(t1['t_wait_list']),
        shots_per_point=t1['shots_per_point'],
        spin_cfg=spin_cfg,
        noise=noise_spec(config),
        classifiers=tuple(t1['classifiers']),
        n_per_class=config['dataset']['n_per_class'],
        seed=config['run']['seed'],
    )
