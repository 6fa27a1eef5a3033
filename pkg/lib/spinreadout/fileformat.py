"""
File formats
============

Traces, datasets and models share one container layout: a YAML header
followed by a flat list of float64 values.

Text variant (any extension other than ``.bin``)::

    # format: spinreadout-dataset/1
    # count: 2
    # length: 480
    # dt_us: 1.0
    # seed: 7
    # baseline_mean: null
    # labels: EN
    0.0
    0.0
    ...

Every header line starts with ``# ``; the remaining lines hold one value
each in shortest round-trip decimal form, trace after trace.

Binary variant (``.bin``): the 8-byte magic ``SPINRDT1``, a little-endian
uint32 header length, the UTF-8 YAML header, then little-endian float64
values.

Header keys:

* dataset (``spinreadout-dataset/1``): count, length, dt_us, seed,
  baseline_mean, labels (one ``E``/``N`` code per trace)
* trace (``spinreadout-trace/1``): length, dt_us, seed, label
  (``event``, ``noevent`` or null)
* model (``spinreadout-model/1``): config (DNN architecture), param_count
"""
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
import yaml

from spinreadout.core import Label
from spinreadout.core import LabeledDataset
from spinreadout.core import Trace
from spinreadout.errors import FormatError

DATASET_FORMAT = 'spinreadout-dataset/1'
TRACE_FORMAT = 'spinreadout-trace/1'
MODEL_FORMAT = 'spinreadout-model/1'

BINARY_MAGIC = b'SPINRDT1'
BINARY_SUFFIX = '.bin'


def atomic_write(path, data):
    """
    Write bytes or text to ``path`` through a temporary file and rename.

    A failure leaves any previous file untouched and no partial output.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode('utf-8')
    fd, tmp_name = tempfile.mkstemp(prefix='.spinreadout-', dir=str(path.parent))
    try:
        with os.fdopen(fd, 'wb') as fp:
            fp.write(data)
        os.replace(tmp_name, str(path))
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _dump_header(header):
    return yaml.safe_dump(header, sort_keys=False, default_flow_style=False, width=float('inf'))


def encode_document(header, values, binary=False):
    """Serialize a header dict and a float vector to bytes."""
    values = np.asarray(values, dtype=np.float64).ravel()
    header_text = _dump_header(header)
    if binary:
        header_bytes = header_text.encode('utf-8')
        return b''.join([
            BINARY_MAGIC,
            struct.pack('<I', len(header_bytes)),
            header_bytes,
            values.astype('<f8').tobytes(),
        ])
    lines = ['# {}'.format(line) for line in header_text.splitlines()]
    lines.extend(repr(v) for v in values.tolist())
    return ('\n'.join(lines) + '\n').encode('utf-8')


def decode_document(data):
    """Parse bytes produced by :func:`encode_document` into (header, values)."""
    if data.startswith(BINARY_MAGIC):
        offset = len(BINARY_MAGIC)
        try:
            (header_len,) = struct.unpack_from('<I', data, offset)
        except struct.error:
            raise FormatError('Truncated binary header')
        offset += 4
        header_text = data[offset:offset + header_len].decode('utf-8')
        body = data[offset + header_len:]
        if len(body) % 8:
            raise FormatError('Binary payload is not a whole number of float64 values')
        values = np.frombuffer(body, dtype='<f8').astype(np.float64)
    else:
        header_lines, value_lines = [], []
        for line in data.decode('utf-8').splitlines():
            if line.startswith('#'):
                header_lines.append(line[2:] if line.startswith('# ') else line[1:])
            elif line.strip():
                value_lines.append(line.strip())
        header_text = '\n'.join(header_lines)
        try:
            values = np.array([float(v) for v in value_lines], dtype=np.float64)
        except ValueError as e:
            raise FormatError('Malformed sample value: {}'.format(e))
    try:
        header = yaml.safe_load(header_text)
    except yaml.YAMLError as e:
        raise FormatError('Malformed header: {}'.format(e))
    if not isinstance(header, dict) or 'format' not in header:
        raise FormatError('Missing header or format key')
    return header, values


def read_document(path, expected_format):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise FormatError('Cannot read {}: {}'.format(path, e))
    header, values = decode_document(data)
    if header.get('format') != expected_format:
        raise FormatError('{}: expected format {}, got {}'.format(path, expected_format, header.get('format')))
    return header, values


def _is_binary(path):
    return Path(path).suffix == BINARY_SUFFIX


def dataset_header(ds):
    return {
        'format': DATASET_FORMAT,
        'count': len(ds),
        'length': ds.trace_len,
        'dt_us': ds.dt_us,
        'seed': ds.seed,
        'baseline_mean': ds.baseline_mean,
        'labels': ''.join(label.code for label in ds.labels),
    }


def save_dataset(ds, path):
    """Write a labeled dataset; ``.bin`` selects the binary variant."""
    atomic_write(path, encode_document(dataset_header(ds), ds.samples, binary=_is_binary(path)))


def load_dataset(path):
    header, values = read_document(path, DATASET_FORMAT)
    try:
        count, length = int(header['count']), int(header['length'])
        labels = str(header.get('labels') or '')
        dt_us = float(header['dt_us'])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError('{}: incomplete dataset header ({})'.format(path, e))
    if len(labels) != count or values.size != count * length:
        raise FormatError('{}: header announces {} x {} values, found {} values and {} labels'.format(
            path, count, length, values.size, len(labels)))
    baseline = header.get('baseline_mean')
    return LabeledDataset(
        traces=tuple(Trace(row, dt_us=dt_us) for row in values.reshape(count, length)),
        labels=tuple(Label.from_code(code) for code in labels),
        seed=int(header.get('seed') or 0),
        baseline_mean=None if baseline is None else float(baseline),
    )


def save_trace(trace, path, label=None, seed=0):
    header = {
        'format': TRACE_FORMAT,
        'length': len(trace),
        'dt_us': trace.dt_us,
        'seed': int(seed),
        'label': label.value if label is not None else None,
    }
    atomic_write(path, encode_document(header, trace.samples, binary=_is_binary(path)))


def load_trace(path):
    """Read a single trace; returns (Trace, Label or None)."""
    header, values = read_document(path, TRACE_FORMAT)
    if values.size != int(header.get('length', -1)):
        raise FormatError('{}: expected {} samples, found {}'.format(path, header.get('length'), values.size))
    label = header.get('label')
    try:
        label = Label(label) if label else None
    except ValueError:
        raise FormatError('{}: unknown label {!r}'.format(path, label))
    return Trace(values, dt_us=float(header['dt_us'])), label
