"""
Command line
============

.. sourcecode:: text

    spinreadout simulate -c tests/bundles/fig2a_gaussian.yaml -o out/data
    spinreadout train --dataset out/data/dataset.txt -o out/model
    spinreadout eval --model out/model/model.txt --dataset out/data/dataset.txt -o out/eval
    spinreadout sweep -c tests/bundles/fig2a_gaussian.yaml -o out/sweep
    spinreadout spike -c tests/bundles/spike.yaml -o out/spike
    spinreadout t1 -c tests/bundles/t1_noisy.yaml -o out/t1

All numeric parameters live in the config document (schema: root
``config.yaml``); flags only choose files and override options.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""
import argparse
import logging
import sys
from pathlib import Path

from spinreadout import __version__
from spinreadout import options
from spinreadout import reports
from spinreadout.core import Rng
from spinreadout.core import baseline_from
from spinreadout.core import split_dataset
from spinreadout.core import standardize_dataset
from spinreadout.dnn.model import DnnClassifier
from spinreadout.dnn.model import load_model
from spinreadout.dnn.model import save_model
from spinreadout.dnn.training import train
from spinreadout.errors import ConfigError
from spinreadout.errors import SpinReadoutError
from spinreadout.experiments import AccuracyReport
from spinreadout.experiments import build_training_dataset
from spinreadout.experiments import evaluate
from spinreadout.experiments import run_spike_scenario
from spinreadout.experiments import run_sweep
from spinreadout.experiments import run_t1_experiment
from spinreadout.fileformat import load_dataset
from spinreadout.fileformat import save_dataset
from spinreadout.workers import WorkerPool

log = logging.getLogger('spinreadout')

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'


class UsageError(ConfigError):
    """Bad command line."""


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError('{}: {}'.format(self.prog, message))


class Run:
    """Validated config plus everything a command needs to write its outputs."""

    def __init__(self, args):
        overrides = list(args.overrides or [])
        if args.seed is not None:
            overrides.append('run.seed={}'.format(args.seed))
        if args.threads is not None:
            overrides.append('run.threads={}'.format(args.threads))
        self.args = args
        self.config = options.load_config(args.config, overrides)
        self.config_hash = options.config_hash(self.config)
        self.out_dir = Path(args.output or self.config['output']['directory'])
        self.prefix = self.config['output']['metric_prefix']
        self.outputs = []

    @property
    def command(self):
        return 'spinreadout {}'.format(self.args.action)

    @property
    def seed(self):
        return self.config['run']['seed']

    def pool(self):
        return WorkerPool(max_workers=self.config['run']['threads'] or None, debug=self.args.debug)

    def path(self, name):
        path = self.out_dir / name
        self.outputs.append(path)
        return path

    def finish(self, title, rows=None, fits=None, training=None, **extra):
        summary = self.path('summary.md')
        manifest = reports.manifest(self.command, self.config, self.config_hash, self.outputs + [summary], **extra)
        reports.write_summary(summary, title=title, manifest=manifest, rows=rows or [], fits=fits or [],
                              training=training)
        reports.write_manifest(self.out_dir / 'manifest.yaml', manifest)
        log.info('Wrote {} files to {}'.format(len(self.outputs) + 1, self.out_dir))


def _existing(path, what):
    if path is None or not Path(path).is_file():
        raise ConfigError('{} not found: {}'.format(what, path))
    return path


def _standardized(ds):
    if ds.baseline_mean is None:
        return standardize_dataset(ds, baseline_from(ds))
    return ds


def write_accuracy(run, report, panel=None):
    rows = list(reports.report_rows(report))
    reports.write_table(run.path('report.csv'), reports.REPORT_COLUMNS, rows)
    reports.write_textfile(reports.accuracy_collector(report, run.prefix), run.path('report.prom'))
    if panel:
        reports.write_table(run.path('plot_{}.csv'.format(panel)), reports.PLOT_COLUMNS,
                            reports.accuracy_plot_rows(report))
    return rows


def cmd_simulate(run):
    """Labeled, standardized charging-line dataset plus a manifest."""
    settings = options.experiment_settings(run.config)
    noise = options.noise_spec(run.config)
    n_per_class = run.config['dataset']['n_per_class']
    ds = build_training_dataset(settings.tunnel, noise, n_per_class, Rng(run.seed))
    suffix = '.bin' if run.config['dataset']['format'] == 'binary' else '.txt'
    save_dataset(ds, run.path('dataset' + suffix))
    counts = {label.value: n for label, n in ds.label_counts().items()}
    print('Simulated {} traces ({})'.format(len(ds), ', '.join('{} {}'.format(k, v) for k, v in counts.items())))
    run.finish('Simulated dataset', traces=len(ds), labels=counts, baseline_mean=ds.baseline_mean)


def cmd_train(run):
    """Train the network on a dataset file and report held-out accuracy."""
    settings = options.experiment_settings(run.config)
    ds = _standardized(load_dataset(_existing(run.args.dataset, 'Dataset')))
    n_train, n_eval = settings.split_sizes(len(ds))
    train_set, eval_set = split_dataset(ds, n_train, n_eval, Rng(run.seed).child(1))
    result = train(train_set, settings.dnn, settings.train)
    row = evaluate(DnnClassifier(result.model), eval_set)

    save_model(result.model, run.path('model.txt'))
    reports.write_table(run.path('train_loss.csv'), ('epoch', 'loss'),
                        ({'epoch': i + 1, 'loss': v} for i, v in enumerate(result.loss_history)))
    reports.write_textfile(reports.training_collector(result, row, run.prefix), run.path('metrics.txt'))
    print('Eval accuracy: {:.4f} ({}/{})'.format(row.accuracy, row.correct, row.eval_count))
    training = {'epochs': len(result.loss_history), 'best_epoch': result.best_epoch, 'restarts': result.restarts,
                'loss': result.loss_history[-1], 'accuracy': result.train_accuracy}
    rows = [dict(classifier=row.classifier, level='eval', snr_db=None, accuracy=row.accuracy, correct=row.correct,
                 eval_count=row.eval_count, false_event=row.confusion.false_event,
                 missed_event=row.confusion.missed_event)]
    run.finish('DNN training', rows=rows, training=training, eval_accuracy=row.accuracy,
               dataset=str(run.args.dataset))


def cmd_eval(run):
    """Accuracy of a saved model on a dataset file."""
    model = load_model(_existing(run.args.model, 'Model'))
    ds = _standardized(load_dataset(_existing(run.args.dataset, 'Dataset')))
    report_row = evaluate(DnnClassifier(model), ds)
    report = AccuracyReport(name='eval', rows=(report_row,), seed=run.seed)
    rows = write_accuracy(run, report)
    print('Accuracy: {:.4f} ({}/{})'.format(report_row.accuracy, report_row.correct, report_row.eval_count))
    run.finish('Model evaluation', rows=rows, model=str(run.args.model), dataset=str(run.args.dataset))


def cmd_sweep(run):
    """Accuracy against Gaussian or drift noise level."""
    spec = options.sweep_spec(run.config)
    report = run_sweep(spec, options.experiment_settings(run.config), run.pool())
    rows = write_accuracy(run, report, panel=spec.noise_kind)
    for row in report.rows:
        print('{:<10} level {:<6} accuracy {:.4f}'.format(row.classifier, row.level, row.accuracy))
    run.finish('Accuracy sweep ({} noise)'.format(spec.noise_kind), rows=rows)


def cmd_spike(run):
    """Network against thresholding under spike noise."""
    scenario = options.spike_scenario(run.config)
    report = run_spike_scenario(scenario, options.experiment_settings(run.config))
    rows = write_accuracy(run, report, panel='spike')
    for row in report.rows:
        print('{:<10} accuracy {:.4f}'.format(row.classifier, row.accuracy))
    run.finish('Spike noise scenario', rows=rows)


def cmd_t1(run):
    """Down-spin probability against wait time and exponential fits."""
    spec = options.t1_spec(run.config)
    settings = options.experiment_settings(run.config)
    t1_report = run_t1_experiment(spec, settings, pool=run.pool())
    fits = list(reports.fit_rows(t1_report))
    reports.write_table(run.path('plot_t1.csv'), reports.PLOT_COLUMNS, reports.t1_plot_rows(t1_report))
    reports.write_table(run.path('fits.csv'), reports.FIT_COLUMNS, fits)
    reports.write_textfile(reports.t1_collector(t1_report, run.prefix), run.path('report.prom'))
    for fit in fits:
        print('{:<10} {}'.format(fit['classifier'], ' '.join(
            '{}={}'.format(k, fit[k]) for k in reports.FIT_COLUMNS[1:] if k in fit)))
    run.finish('Spin relaxation', fits=fits, true_fraction=list(t1_report.true_fraction))


def build_parser():
    common = ArgumentParser(add_help=False)
    common.add_argument('-c', '--config', dest='config', default=None, help='Experiment config document (YAML)')
    common.add_argument('--set', dest='overrides', action='append', metavar='SECTION.KEY=VALUE',
                        help='Override one config option (repeatable)')
    common.add_argument('--seed', dest='seed', type=int, default=None, help='Override run.seed')
    common.add_argument('--threads', dest='threads', type=int, default=None, help='Cap worker threads')
    common.add_argument('-o', '--output', dest='output', default=None,
                        help='Output directory (default: output.directory)')
    common.add_argument('--debug', dest='debug', action='store_true', help='Debug messages')

    parser = ArgumentParser(prog='spinreadout', description='Single-shot spin readout simulation and classification')
    parser.add_argument('--version', action='version', version='%(prog)s {}'.format(__version__))
    subparsers = parser.add_subparsers(dest='action', help='Choose an action')
    subparsers.required = True

    subparsers.add_parser('simulate', parents=[common], help='Simulate a labeled dataset').set_defaults(
        func=cmd_simulate)
    train_parser = subparsers.add_parser('train', parents=[common], help='Train the DNN on a dataset')
    train_parser.add_argument('--dataset', dest='dataset', required=True, help='Dataset file')
    train_parser.set_defaults(func=cmd_train)
    eval_parser = subparsers.add_parser('eval', parents=[common], help='Evaluate a saved model')
    eval_parser.add_argument('--model', dest='model', required=True, help='Model file')
    eval_parser.add_argument('--dataset', dest='dataset', required=True, help='Dataset file')
    eval_parser.set_defaults(func=cmd_eval)
    subparsers.add_parser('sweep', parents=[common], help='Accuracy against noise level').set_defaults(
        func=cmd_sweep)
    subparsers.add_parser('spike', parents=[common], help='Spike noise scenario').set_defaults(func=cmd_spike)
    subparsers.add_parser('t1', parents=[common], help='Spin relaxation experiment').set_defaults(func=cmd_t1)
    return parser


def setup_logging(debug=False):
    logging.basicConfig(stream=sys.stderr, format=LOG_FORMAT, datefmt=LOG_DATEFMT,
                        level=logging.DEBUG if debug else logging.INFO)
    if not debug:
        logging.getLogger('numba').setLevel(logging.WARNING)


def main(argv=None):
    """
    Run one command.

    :param list argv: arguments without the program name (default: sys.argv[1:])
    :return int: exit code
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        sys.stderr.write('{}\n'.format(e))
        return EXIT_CONFIG
    setup_logging(args.debug)

    try:
        run = Run(args)
    except SpinReadoutError as e:
        log.error('Invalid configuration: {}'.format(e))
        return EXIT_CONFIG
    try:
        args.func(run)
    except ConfigError as e:
        log.error(str(e))
        return EXIT_CONFIG
    except SpinReadoutError as e:
        log.error('{} failed: {}'.format(run.command, e))
        if args.debug:
            log.exception(e)
        return EXIT_RUNTIME
    except OSError as e:
        log.error('{} failed: {}'.format(run.command, e))
        return EXIT_RUNTIME
    return EXIT_OK
