from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from cli import cli


def invoke(tmp_path, *args):
    runner = CliRunner()
    base = ['--workers', '1', '--output', str(tmp_path / 'results'), '--log-level', 'WARNING']
    return runner.invoke(cli, base + list(args))


def write_config(tmp_path, config, name='run.json'):
    path = tmp_path / name
    path.write_text(json.dumps(config), encoding='utf-8')
    return str(path)


def lebesgue_config(value=1.0):
    return {'experiment': 'kato', 'seed': 0,
            'parameters': {'operation': 'norm',
                           'measure': {'kind': 'density', 'family': 'constant', 'value': value}}}


def read_summary(tmp_path, stem):
    return json.loads((tmp_path / 'results' / f'{stem}_summary.json').read_text(encoding='utf-8'))


def test_presets_lists_catalog(tmp_path):
    result = invoke(tmp_path, 'presets')
    assert result.exit_code == 0
    assert 'constant-drift-oracle' in result.output
    assert 'kato-lebesgue-cantor' in result.output


def test_validate_ok(tmp_path):
    result = invoke(tmp_path, 'validate', write_config(tmp_path, lebesgue_config()))
    assert result.exit_code == 0
    assert 'ok: kato/norm' in result.output


def test_validate_rejects_unknown_key(tmp_path):
    config = lebesgue_config()
    config['parameters']['colour'] = 'red'
    result = invoke(tmp_path, 'validate', write_config(tmp_path, config))
    assert result.exit_code == 2


def test_run_needs_a_source(tmp_path):
    assert invoke(tmp_path, 'run').exit_code == 2


def test_run_rejects_file_and_preset_together(tmp_path):
    path = write_config(tmp_path, lebesgue_config())
    assert invoke(tmp_path, 'run', path, '--preset', 'phi-mdelta-identities').exit_code == 2


def test_run_unknown_preset(tmp_path):
    assert invoke(tmp_path, 'run', '--preset', 'no-such-preset').exit_code == 2


def test_run_lebesgue_norm(tmp_path):
    result = invoke(tmp_path, 'run', write_config(tmp_path, lebesgue_config()))
    assert result.exit_code == 0, result.output
    summary = read_summary(tmp_path, 'run')
    assert summary['experiment'] == 'kato'
    assert summary['max_rel_error'] < 1e-4
    assert summary['rate_exponent'] == pytest.approx(0.5, abs=1e-3)
    assert (tmp_path / 'results' / 'run_norm.csv').exists()
    manifest = json.loads((tmp_path / 'results' / 'run_manifest.json').read_text(encoding='utf-8'))
    assert manifest['seed'] == 0
    assert 'run_norm.csv' in manifest['files']


def test_run_zero_measure(tmp_path):
    result = invoke(tmp_path, 'run', write_config(tmp_path, lebesgue_config(0.0), name='zero.json'))
    assert result.exit_code == 0, result.output
    assert read_summary(tmp_path, 'zero')['max_rel_error'] == 0.0


def test_run_seed_override(tmp_path):
    path = write_config(tmp_path, lebesgue_config(), name='seeded.json')
    assert invoke(tmp_path, 'run', path, '--seed', '5').exit_code == 0
    manifest = json.loads((tmp_path / 'results' / 'seeded_manifest.json').read_text(encoding='utf-8'))
    assert manifest['seed'] == 5
    assert manifest['config']['seed'] == 5


def test_run_kernel_checks_preset(tmp_path):
    result = invoke(tmp_path, 'run', '--preset', 'phi-mdelta-identities')
    assert result.exit_code == 0, result.output
    summary = read_summary(tmp_path, 'phi-mdelta-identities')
    assert summary['phi_bound_holds'] is True
    assert summary['m_delta_max_diff'] < 1e-8
    assert 'phi-mdelta-identities_phi.csv' in result.output


def test_run_domain_error_exit_code(tmp_path):
    config = {'experiment': 'kato', 'parameters': {
        'operation': 'profile', 'measure': {'kind': 'density', 'family': 'constant', 'value': 1.0},
        'radii': [0.1, 0.2]}}
    assert invoke(tmp_path, 'run', write_config(tmp_path, config, name='bad.json')).exit_code == 2
