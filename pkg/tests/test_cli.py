import json

import pytest

from opdomain import __version__
from opdomain.cli import EXIT_CONFIG, main, run_job
from opdomain.config import load_config
from opdomain.report import Verdict
from utility import display
from utility.open_file import example_path


def _run_example(name, out, *extra):
    return main(['run', '--example', name, '--out', str(out), '-q', *extra])


def _report(out):
    return json.loads((out / 'report.json').read_text(encoding='utf-8'))


def test_jacobi_example_passes(tmp_path):
    assert _run_example('jacobi_h_identity', tmp_path, '--seed', '7') == 0
    report = _report(tmp_path)
    assert report['overall'] == 'pass'
    labels = [c['label'] for c in report['checks']]
    for label in ('(h1)', '(h4)', '(AG)', '(M1) q=0', '(M2)', '(komintro)', '(HA=A*H)', '(limit-point)'):
        assert label in labels
    assert report['job']['seed'] == 7
    assert report['timestamp'] is None
    assert (tmp_path / 'curves').is_dir()


def test_reports_are_byte_identical_across_runs(tmp_path):
    first, second = tmp_path / 'a', tmp_path / 'b'
    assert _run_example('free_jacobi_limit_point', first, '--seed', '3') == 0
    assert _run_example('free_jacobi_limit_point', second, '--seed', '3') == 0
    one, two = _report(first), _report(second)
    one['job']['overrides'].pop('output')
    two['job']['overrides'].pop('output')
    assert one == two
    for curve in one['curves']:
        assert (first / curve['file']).read_bytes() == (second / curve['file']).read_bytes()


def test_same_output_directory_is_rewritten_identically(tmp_path):
    assert _run_example('free_jacobi_limit_point', tmp_path) == 0
    before = (tmp_path / 'report.json').read_bytes()
    assert _run_example('free_jacobi_limit_point', tmp_path) == 0
    assert (tmp_path / 'report.json').read_bytes() == before


def test_afnorm_violation_exits_one(tmp_path):
    assert _run_example('afnorm_violation', tmp_path) == 1
    first = _report(tmp_path)['checks'][0]
    assert first['label'] == '(Afnorm-1)'
    assert first['verdict'] == 'fail'
    assert first['witness'] == [1, 1]


def test_window_cap_applies_to_the_resolvent_probe(tmp_path):
    assert _run_example('resolvent_commuting_blocks', tmp_path, '--max-window', '256') == 0
    report = _report(tmp_path)
    assert report['job']['max_window'] == 256
    assert report['checks'][0]['label'] == '(resolvents)'


def test_run_job_without_writing():
    cfg = load_config(example_path('dirac_constant_alphas'))
    report = run_job(cfg)
    assert report.overall is Verdict.PASS
    assert 'essentially normal' in report.conclusion
    assert report.config_sha256 and len(report.config_sha256) == 64


@pytest.mark.parametrize('argv', [
    ['run', 'no/such/config.json'],
    ['run', '--example', 'no_such_example'],
    ['run'],
    ['run', '--max-window', '0', '--example', 'afnorm_violation'],
])
def test_configuration_problems_exit_three(argv, tmp_path):
    assert main(argv + ['-q', '--out', str(tmp_path)]) == EXIT_CONFIG


def test_invalid_config_file_exits_three(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text(json.dumps({'job': 'check-matrix', 'operator': {'family': 'nope'}}), encoding='utf-8')
    assert main(['run', str(path), '-q']) == EXIT_CONFIG
    assert not (tmp_path / 'report.json').exists()


def test_examples_listing(capsys, monkeypatch):
    monkeypatch.setattr(display.console, 'width', 300)
    assert main(['examples']) == 0
    assert 'jacobi_h_identity' in capsys.readouterr().out


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(['--version'])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out
