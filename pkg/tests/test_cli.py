import pytest
import yaml

from spinreadout import cli
from spinreadout.dnn import load_model
from spinreadout.dnn import training
from spinreadout.fileformat import load_dataset

SMALL = [
    '--set', 'tunnel.trace_len_us=40',
    '--set', 'tunnel.tau_tunnel_us=8',
    '--set', 'dnn.input_len=40',
    '--set', 'dnn.kernel=5',
    '--set', 'dataset.n_per_class=10',
    '--set', 'train.epochs=3',
    '--set', 'train.batch_size=4',
    '--seed', '11',
]


def run(*argv):
    return cli.main(list(argv))


@pytest.fixture
def dataset_file(tmp_path):
    out = tmp_path / 'data'
    assert run('simulate', '-o', str(out), *SMALL) == cli.EXIT_OK
    return out / 'dataset.txt'


def test_simulate_writes_dataset_and_manifest(dataset_file):
    ds = load_dataset(dataset_file)
    assert len(ds) == 20
    assert ds.trace_len == 40
    manifest = yaml.safe_load((dataset_file.parent / 'manifest.yaml').read_text())
    assert manifest['seed'] == 11
    assert manifest['command'] == 'spinreadout simulate'
    assert manifest['outputs'] == ['dataset.txt', 'summary.md']
    assert len(manifest['config_hash']) == 64


def test_simulate_is_byte_identical(tmp_path, dataset_file):
    other = tmp_path / 'again'
    assert run('simulate', '-o', str(other), *SMALL) == cli.EXIT_OK
    assert (other / 'dataset.txt').read_bytes() == dataset_file.read_bytes()
    assert (other / 'manifest.yaml').read_bytes() == (dataset_file.parent / 'manifest.yaml').read_bytes()


def test_binary_dataset(tmp_path):
    out = tmp_path / 'bin'
    assert run('simulate', '-o', str(out), '--set', 'dataset.format=binary', *SMALL) == cli.EXIT_OK
    assert len(load_dataset(out / 'dataset.bin')) == 20


def test_invalid_key_writes_nothing(tmp_path):
    out = tmp_path / 'bad'
    assert run('simulate', '-o', str(out), '--set', 'tunnel.tau_out_us=3') == cli.EXIT_CONFIG
    assert not out.exists()


def test_usage_errors(tmp_path):
    assert run() == cli.EXIT_CONFIG
    assert run('calibrate') == cli.EXIT_CONFIG
    assert run('train', '-o', str(tmp_path)) == cli.EXIT_CONFIG
    assert run('simulate', '--set', 'seed') == cli.EXIT_CONFIG


def test_missing_dataset(tmp_path):
    code = run('train', '--dataset', str(tmp_path / 'nope.txt'), '-o', str(tmp_path / 'model'), *SMALL)
    assert code == cli.EXIT_CONFIG
    assert not (tmp_path / 'model').exists()


def test_train_then_eval(tmp_path, dataset_file, capsys):
    model_dir = tmp_path / 'model'
    assert run('train', '--dataset', str(dataset_file), '-o', str(model_dir), *SMALL) == cli.EXIT_OK
    trained = capsys.readouterr().out
    assert 'Eval accuracy:' in trained
    for name in ('model.txt', 'train_loss.csv', 'metrics.txt', 'summary.md', 'manifest.yaml'):
        assert (model_dir / name).is_file()
    assert len((model_dir / 'train_loss.csv').read_text().splitlines()) == 1 + 3
    assert load_model(model_dir / 'model.txt').config.input_len == 40

    again = tmp_path / 'model2'
    assert run('train', '--dataset', str(dataset_file), '-o', str(again), *SMALL) == cli.EXIT_OK
    assert (again / 'model.txt').read_bytes() == (model_dir / 'model.txt').read_bytes()

    eval_dir = tmp_path / 'eval'
    code = run('eval', '--model', str(model_dir / 'model.txt'), '--dataset', str(dataset_file), '-o', str(eval_dir),
               *SMALL)
    assert code == cli.EXIT_OK
    assert 'Accuracy:' in capsys.readouterr().out
    assert (eval_dir / 'report.csv').is_file()
    assert 'spinreadout_accuracy{' in (eval_dir / 'report.prom').read_text()


def test_divergence_exits_with_runtime_error(tmp_path, dataset_file, monkeypatch):
    monkeypatch.setattr(training.kernels, 'batch_loss_grad', lambda *args: float('inf'))
    code = run('train', '--dataset', str(dataset_file), '-o', str(tmp_path / 'model'), *SMALL)
    assert code == cli.EXIT_RUNTIME
    assert not (tmp_path / 'model' / 'model.txt').exists()


def test_empty_classifier_list(tmp_path):
    code = run('sweep', '-o', str(tmp_path / 'sweep'), '--set', 'sweep.classifiers=[]', *SMALL)
    assert code == cli.EXIT_CONFIG
    assert not (tmp_path / 'sweep').exists()


def test_threshold_sweep_outputs(tmp_path):
    out = tmp_path / 'sweep'
    code = run('sweep', '-o', str(out), '--set', 'sweep.classifiers=[threshold]', '--set', 'sweep.levels=[0.1, 1.0]',
               '--threads', '2', *SMALL)
    assert code == cli.EXIT_OK
    plot = (out / 'plot_gaussian.csv').read_text().splitlines()
    assert plot[0] == 'classifier,x,y,error'
    assert len(plot) == 3
    summary = (out / 'summary.md').read_text()
    assert summary.startswith('# Accuracy sweep (gaussian noise)')


@pytest.mark.parametrize('flags, debug', [(['--debug'], True), ([], False)])
def test_debug_flag_reaches_worker_pool(flags, debug):
    args = cli.build_parser().parse_args(['sweep', '--threads', '2'] + flags)
    pool = cli.Run(args).pool()
    assert pool.debug is debug
    assert pool.max_workers == 2
