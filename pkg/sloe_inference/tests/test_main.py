import json
import os
from pathlib import Path

import numpy as np
import pytest

from config import SLOE_CONFIG
from conftest import TEST_FRONTIER, write_csv
from data_model import simulate_dataset
from main import EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, SEPARABLE_MESSAGE, main
from models import FeatureFamily
from probe_frontier import load_frontier, save_frontier
from simulation_harness import load_experiment_config


@pytest.fixture
def train_csv(tmp_path):
    data, _ = simulate_dataset(FeatureFamily.GAUSSIAN, 300, 15, 1.0, [42, 5])
    rows = [list(x) + [int(y)] for x, y in zip(data.features, data.outcomes)]
    return write_csv(tmp_path / "train.csv", data.names() + ["y"], rows)


@pytest.fixture
def frontier_csv(tmp_path):
    return save_frontier(TEST_FRONTIER, str(tmp_path / "frontier.csv"))


def stderr_error(capsys):
    err = capsys.readouterr().err
    start = err.index('{\n  "error"')
    return json.loads(err[start:])


class TestFit:
    def test_report(self, train_csv, capsys):
        assert main(['fit', train_csv, '--outcome', 'y', '--classical', '--standardize', '--raw-scale']) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload['schema_version'] == '1.0'
        assert payload['d'] == 15
        assert payload['alpha'] > 1.0
        assert payload['report']['covariance'] == 'empirical'
        assert payload['report_raw']['scale'] == 'raw'
        assert len(payload['classical']['coefficients']) == 15

    def test_test_points(self, train_csv, tmp_path, capsys):
        names = [f"x{j}" for j in range(1, 16)]
        test_csv = write_csv(tmp_path / "test.csv", names, [[0.0] * 15, [0.1] * 15])
        output = tmp_path / "report.json"
        assert main(['fit', train_csv, '--outcome', 'y', '--test-csv', test_csv, '-o', str(output)]) == EXIT_OK
        payload = json.loads(output.read_text(encoding="utf-8"))
        predictions = payload['report']['predictions']
        assert len(predictions) == 2
        assert predictions[0]['prob_hat'] == pytest.approx(0.5)

    def test_jobs_leave_global_config_alone(self, train_csv, capsys):
        default_workers = SLOE_CONFIG['loo_workers']
        assert main(['fit', train_csv, '--outcome', 'y', '--method', 'LOO_EXACT',
                     '--jobs', str(default_workers + 1)]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert SLOE_CONFIG['loo_workers'] == default_workers
        assert payload['signal']['method'] == 'LOO_EXACT'
        assert payload['seed'] is None

    def test_invalid_level(self, train_csv):
        assert main(['fit', train_csv, '--outcome', 'y', '--level', '1.5']) == EXIT_USAGE

    def test_missing_file(self, tmp_path):
        assert main(['fit', str(tmp_path / "absent.csv"), '--outcome', 'y']) == EXIT_DATA

    def test_non_binary_outcome(self, tmp_path):
        path = write_csv(tmp_path / "bad.csv", ["a", "y"], [[1.0, 1], [2.0, 3]])
        assert main(['fit', path, '--outcome', 'y']) == EXIT_DATA

    def test_constant_outcome(self, tmp_path, capsys):
        path = write_csv(tmp_path / "zeros.csv", ["a", "b", "y"], [[1.0, 2.0, 0], [2.0, 1.0, 0], [3.0, 5.0, 0]])
        assert main(['fit', path, '--outcome', 'y', '--covariance', 'identity']) == EXIT_NUMERICAL
        error = stderr_error(capsys)
        assert error['error'] == 'SeparableData'
        assert error['message'] == SEPARABLE_MESSAGE


class TestSolve:
    def test_classical_limit(self, frontier_csv, capsys):
        code = main(['solve', '--kappa', '0.001', '--gamma', '1', '--frontier', frontier_csv, '--no-cache'])
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert 1.0 <= payload['params']['alpha'] <= 1.02

    def test_gamma_eta_round_trip(self, frontier_csv, capsys):
        assert main(['solve', '--kappa', '0.2', '--gamma', '1', '--frontier', frontier_csv, '--no-cache']) == EXIT_OK
        forward = json.loads(capsys.readouterr().out)
        eta = repr(forward['eta'])
        assert main(['solve', '--kappa', '0.2', '--eta', eta, '--frontier', frontier_csv, '--no-cache']) == EXIT_OK
        backward = json.loads(capsys.readouterr().out)
        assert backward['params']['alpha'] == pytest.approx(forward['params']['alpha'], rel=1e-6)
        assert backward['gamma'] == pytest.approx(1.0, rel=1e-6)

    def test_outside_existence_region(self, frontier_csv, capsys):
        code = main(['solve', '--kappa', '0.6', '--gamma', '3', '--frontier', frontier_csv, '--no-cache'])
        assert code == EXIT_NUMERICAL
        assert stderr_error(capsys)['error'] == 'OutsideExistenceRegion'

    def test_gamma_and_eta_exclusive(self):
        assert main(['solve', '--kappa', '0.1', '--gamma', '1', '--eta', '2']) == EXIT_USAGE

    def test_invalid_kappa(self, frontier_csv):
        assert main(['solve', '--kappa', '1.5', '--gamma', '1', '--frontier', frontier_csv, '--no-cache']) == EXIT_USAGE


class TestSimulate:
    def test_create_config(self, tmp_path):
        path = tmp_path / "sample.json"
        assert main(['simulate', '--create-config', str(path), '--experiment', 'fdr']) == EXIT_OK
        assert load_experiment_config(str(path)).experiment == 'fdr'

    def test_run_is_reproducible(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({'experiment': 'coverage', 'n': 200, 'kappa_grid': [0.1], 'reps': 2,
                                      'test_size': 40, 'seed': 3}), encoding="utf-8")
        for name in ("a", "b"):
            assert main(['simulate', str(config), '-o', str(tmp_path / name)]) == EXIT_OK
        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert summary['records'] == 2
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_bad_config(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({'experiment': 'coverage', 'bogus': 1}), encoding="utf-8")
        assert main(['simulate', str(config)]) == EXIT_USAGE

    def test_missing_config_argument(self):
        assert main(['simulate']) == EXIT_USAGE


class TestFrontierCommand:
    def test_build_small_table(self, tmp_path, capsys):
        output = tmp_path / "frontier.csv"
        code = main(['frontier', '-o', str(output), '--n-sim', '60', '--reps', '2', '--gamma-grid', '0.5', '5'])
        assert code == EXIT_OK
        table = load_frontier(str(output))
        assert table.n_sim == 60
        assert np.all(np.diff(table.kappa_star) < 0)

    def test_bad_grid(self, tmp_path):
        code = main(['frontier', '-o', str(tmp_path / "f.csv"), '--gamma-grid', '1.0'])
        assert code == EXIT_USAGE


@pytest.mark.skipif(not os.environ.get("SLOE_HEART_CSV"), reason="SLOE_HEART_CSV не задан")
class TestHeartDisease:
    def test_alpha_estimate(self, capsys):
        path = os.environ["SLOE_HEART_CSV"]
        outcome = os.environ.get("SLOE_HEART_OUTCOME", "target")
        assert Path(path).exists()
        assert main(['fit', path, '--outcome', outcome, '--standardize']) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert abs(payload['alpha'] - 1.40) <= 0.05
