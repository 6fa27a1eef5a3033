"""
Result writers
==============

* delimiter-separated tables (report rows, plot data, fits, loss history)
* Prometheus text exposition files of the same numbers
* run manifest (YAML)
* human-readable run summary rendered from a jinja2 template

Every file is written atomically.
"""
import csv
import io
import math
from pathlib import Path

import pyaml
from jinja2 import Environment
from jinja2 import FileSystemLoader
from prometheus_client import CollectorRegistry
from prometheus_client import write_to_textfile
from prometheus_client.core import GaugeMetricFamily

from spinreadout import __version__
from spinreadout.core import Rng
from spinreadout.fileformat import atomic_write

TEMPLATES = Path(__file__).resolve().parent / 'templates'

REPORT_COLUMNS = ('classifier', 'level', 'snr_db', 'accuracy', 'correct', 'eval_count',
                  'true_event', 'missed_event', 'true_noevent', 'false_event')
PLOT_COLUMNS = ('classifier', 'x', 'y', 'error')
FIT_COLUMNS = ('classifier', 'A', 'sigma_A', 'T1_us', 'sigma_T1_us', 'B', 'sigma_B', 'status')


class ReportCollector(object):
    """
    Collector of ``[name, label_keys, label_values, value]`` stats, grouped
    into one gauge family per name.
    """

    def __init__(self, helper, prefix='spinreadout'):
        self.ALL_STATS = []
        self.HELPER = helper
        self.prefix = prefix

    def add(self, item, labels, value):
        keys = sorted(labels)
        self.ALL_STATS.append(['{}_{}'.format(self.prefix, item), keys, [str(labels[k]) for k in keys], value])

    def collect(self):
        items = {}

        for stat in self.ALL_STATS:
            if stat[0] not in items:
                items[stat[0]] = []
            items[stat[0]].append(stat[1:])

        for key, values in items.items():
            label_keys = values[0][0]
            g = GaugeMetricFamily(key, self.HELPER, labels=label_keys)
            for _, label_values, value in values:
                g.add_metric(label_values, value)
            yield g


def write_textfile(collector, path):
    registry = CollectorRegistry()
    registry.register(collector)
    write_to_textfile(str(path), registry)


def _fmt(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    return str(value)


def write_table(path, columns, rows):
    """Write dict rows as a comma-separated table with a header line."""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator='\n')
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k)) for k in columns})
    atomic_write(path, buffer.getvalue())


def read_table(path):
    with open(path, newline='') as fp:
        return list(csv.DictReader(fp))


def report_rows(report):
    for r in report.rows:
        yield {
            'classifier': r.classifier,
            'level': r.level,
            'snr_db': r.snr_db,
            'accuracy': r.accuracy,
            'correct': r.correct,
            'eval_count': r.eval_count,
            'true_event': r.confusion.true_event,
            'missed_event': r.confusion.missed_event,
            'true_noevent': r.confusion.true_noevent,
            'false_event': r.confusion.false_event,
        }


def accuracy_plot_rows(report):
    """Plot data: accuracy against level with a binomial error bar."""
    for r in report.rows:
        yield {
            'classifier': r.classifier,
            'x': r.level,
            'y': r.accuracy,
            'error': math.sqrt(r.accuracy * (1.0 - r.accuracy) / r.eval_count),
        }


def t1_plot_rows(t1_report):
    for name, result in t1_report.results.items():
        for t, p, s in zip(result.t_wait_us, result.p_down, result.sigma_p):
            yield {'classifier': name, 'x': t, 'y': p, 'error': s}


def fit_rows(t1_report):
    for name, result in t1_report.results.items():
        row = {'classifier': name}
        if result.fit is not None:
            row.update(result.fit.to_dict())
            row['status'] = 'ok'
        else:
            row['status'] = 'failed: {}'.format(result.fit_error)
        yield row


def accuracy_collector(report, prefix='spinreadout'):
    cc = ReportCollector('Single-shot readout classification accuracy', prefix=prefix)
    for r in report.rows:
        labels = {'report': report.name, 'classifier': r.classifier, 'level': r.level}
        cc.add('accuracy', labels, r.accuracy)
        cc.add('eval_count', labels, r.eval_count)
        for cell, count in r.confusion._asdict().items():
            cc.add('confusion', dict(labels, cell=cell), count)
    return cc


def t1_collector(t1_report, prefix='spinreadout'):
    cc = ReportCollector('Spin relaxation readout', prefix=prefix)
    for name, result in t1_report.results.items():
        for t, p, s, acc in zip(result.t_wait_us, result.p_down, result.sigma_p, result.readout_accuracy):
            labels = {'classifier': name, 't_wait_us': t}
            cc.add('p_down', labels, p)
            cc.add('p_down_sigma', labels, s)
            cc.add('readout_accuracy', labels, acc)
        if result.fit is not None:
            fit = result.fit
            for param, value, sigma in (('A', fit.amplitude_a, fit.sigma_a),
                                        ('T1_us', fit.t1_us, fit.sigma_t1),
                                        ('B', fit.offset_b, fit.sigma_b)):
                cc.add('fit_value', {'classifier': name, 'param': param}, value)
                cc.add('fit_sigma', {'classifier': name, 'param': param}, sigma)
    return cc


def training_collector(train_result, eval_row, prefix='spinreadout'):
    cc = ReportCollector('DNN training', prefix=prefix)
    cc.add('train_loss', {'epoch': 'final'}, train_result.loss_history[-1])
    cc.add('train_accuracy', {'split': 'train'}, train_result.train_accuracy)
    cc.add('accuracy', {'report': 'train', 'classifier': eval_row.classifier, 'level': 'eval'}, eval_row.accuracy)
    cc.add('eval_count', {'report': 'train', 'classifier': eval_row.classifier, 'level': 'eval'},
           eval_row.eval_count)
    return cc


def _plain(value):
    """Convert tuples and numpy scalars for YAML output."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, 'item'):
        return value.item()
    return value


def manifest(command, config, config_hash, outputs, **extra):
    data = {
        'tool': 'spinreadout {}'.format(__version__),
        'command': command,
        'seed': config['run']['seed'],
        'rng': Rng.ALGORITHM,
        'config_hash': config_hash,
        'outputs': sorted(str(Path(o).name) for o in outputs),
    }
    data.update(extra)
    return _plain(data)


def write_manifest(path, data):
    atomic_write(path, pyaml.dump(data))


def render_summary(**context):
    env = Environment(loader=FileSystemLoader(str(TEMPLATES)), keep_trailing_newline=True, trim_blocks=True,
                      lstrip_blocks=True)
    env.filters['num'] = lambda v, digits=4: '-' if v is None else '{:.{}f}'.format(v, digits)
    return env.get_template('summary.md.j2').render(**context)


def write_summary(path, **context):
    atomic_write(path, render_summary(**context))
