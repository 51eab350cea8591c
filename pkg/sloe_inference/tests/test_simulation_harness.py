import json
from pathlib import Path

import numpy as np
import pytest

from exceptions import ConfigError
from export_utils import drop_columns, records_frame, save_results
from models import ExperimentConfig, FeatureFamily, InferenceMethod
from simulation_harness import (
    TIMING_COLUMNS,
    config_from_dict,
    load_experiment_config,
    run_experiment,
    sample_config,
    validate_config,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def small_config(**overrides) -> ExperimentConfig:
    values = dict(experiment='coverage', n=200, kappa_grid=[0.1], gamma_sq_grid=[1.0], reps=3, seed=2021,
                  test_size=50, methods=[InferenceMethod.CLASSICAL, InferenceMethod.CORRECTED])
    values.update(overrides)
    return ExperimentConfig(**values)


class TestConfig:
    @pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.json")), ids=lambda p: p.stem)
    def test_shipped_configs_are_valid(self, path):
        config = load_experiment_config(str(path))
        assert config.reps >= 1

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({'experiment': 'coverage', 'replications': 3})

    def test_dimension_too_small(self):
        with pytest.raises(ConfigError) as info:
            config_from_dict({'experiment': 'coverage', 'n': 50, 'kappa_grid': [0.1]})
        assert info.value.diagnostics['problems']

    def test_empty_grid(self):
        with pytest.raises(ConfigError):
            validate_config(small_config(kappa_grid=[]))

    def test_enum_values_case_insensitive(self):
        config = config_from_dict({'experiment': 'coverage', 'feature_family': 'gwas', 'methods': ['corrected']})
        assert config.feature_family == FeatureFamily.GWAS
        assert config.methods == [InferenceMethod.CORRECTED]

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_experiment_config(str(tmp_path / "absent.json"))

    @pytest.mark.parametrize("experiment", ['coverage', 'runtime'])
    def test_sample_config_round_trip(self, experiment, tmp_path):
        path = tmp_path / "sample.json"
        path.write_text(json.dumps(sample_config(experiment)), encoding="utf-8")
        assert load_experiment_config(str(path)).experiment == experiment


class TestCoverage:
    def test_records_and_accounting(self):
        result = run_experiment(small_config())
        assert [r['method'] for r in result.records] == ['CLASSICAL', 'CORRECTED']
        for record in result.records:
            assert 0.0 <= record['coverage'] <= 1.0
            assert record['reps_used'] + record['dropped_separable'] + record['dropped_solver'] == 3
            assert record['d'] == 20
        assert result.config['test_size_resolved'] == {'200': 50}
        assert result.raw == []

    def test_reproducible_across_thread_counts(self):
        first = run_experiment(small_config())
        second = run_experiment(small_config(parallelism=3))
        assert first.records == second.records

    def test_curve_terminates_when_separable(self):
        result = run_experiment(small_config(kappa_grid=[0.1, 0.55, 0.6], methods=[InferenceMethod.CLASSICAL]))
        kappas = sorted({r['kappa'] for r in result.records})
        assert kappas == [0.1, 0.55]
        assert result.extras['terminated'] == [{'gamma_sq': 1.0, 'n': 200, 'kappa': 0.55}]
        separable = [r for r in result.records if r['kappa'] == 0.55][0]
        assert separable['dropped_separable'] >= 1

    def test_keep_raw(self):
        result = run_experiment(small_config(keep_raw=True, methods=[InferenceMethod.CLASSICAL]))
        assert len(result.raw) == 3
        assert {r['rep'] for r in result.raw} == {0, 1, 2}

    def test_bootstrap_baseline_adds_methods(self):
        config = small_config(experiment='bootstrap', reps=2, bootstrap_b=5, methods=[InferenceMethod.CLASSICAL])
        result = run_experiment(config)
        methods = [r['method'] for r in result.records]
        assert methods == ['CLASSICAL', 'CORRECTED', 'BOOTSTRAP']
        assert 'bootstrap_dropped_replicates' in result.records[-1]
        assert config.methods == [InferenceMethod.CLASSICAL]

    def test_null_signal_keeps_every_replicate(self):
        config = small_config(n=1000, kappa_grid=[0.01], gamma_sq_grid=[0.0], reps=20)
        by_method = {r['method']: r for r in run_experiment(config).records}
        for record in by_method.values():
            assert record['dropped_solver'] == 0
            assert record['reps_used'] == 20
            assert 0.8 <= record['coverage'] <= 0.98
        assert by_method['CORRECTED']['clamped_null'] >= 1
        assert by_method['CLASSICAL']['clamped_null'] == 0

    def test_bootstrap_logits_are_inflated(self):
        config = small_config(experiment='bootstrap', n=1000, kappa_grid=[0.1], gamma_sq_grid=[5.0], reps=2,
                              bootstrap_b=20, methods=[InferenceMethod.CORRECTED])
        bootstrap = [r for r in run_experiment(config).records if r['method'] == 'BOOTSTRAP'][0]
        assert bootstrap['bootstrap_logit_ratio'] > 1.0
        assert bootstrap['mle_logit_ratio'] > 1.0


class TestPValuesAndFdr:
    def test_null_pvalues(self):
        result = run_experiment(small_config(experiment='null_pvalues', reps=4))
        assert len(result.records) == 2
        for record in result.records:
            assert record['n_pvalues'] > 0
            assert 0.0 <= record['ks_statistic'] <= 1.0
        pooled = result.extras['pvalues'][0]['pvalues']['CORRECTED']
        assert np.all((pooled >= 0.0) & (pooled <= 1.0))

    def test_fdr(self):
        result = run_experiment(small_config(experiment='fdr', q_grid=[0.0, 0.1]))
        assert len(result.records) == 4
        for record in result.records:
            assert 0.0 <= record['fdp_mean'] <= 1.0
            if record['q'] == 0.0:
                assert record['fdp_mean'] == 0.0
                assert record['mean_selected'] == 0.0


class TestSloeConvergenceAndRuntime:
    def test_sloe_convergence(self):
        result = run_experiment(small_config(experiment='sloe_convergence', n_grid=[200, 400], reps=2))
        assert [r['n'] for r in result.records] == [200, 400]
        for record in result.records:
            assert np.isfinite(record['mean_sloe_vs_truth'])
            assert record['eta_sq'] > 1.0
            assert record['point_status'] == 'ok'

    def test_sloe_convergence_skips_points_outside_existence(self):
        result = run_experiment(small_config(experiment='sloe_convergence', kappa_grid=[0.1, 0.6],
                                             n_grid=[200], reps=2))
        by_kappa = {r['kappa']: r for r in result.records}
        assert by_kappa[0.1]['point_status'] == 'ok'
        assert np.isfinite(by_kappa[0.1]['mean_sloe_vs_truth'])
        assert by_kappa[0.6]['point_status'] == 'outside_existence'
        assert np.isnan(by_kappa[0.6]['eta_sq'])
        assert by_kappa[0.6]['reps_total'] == 0

    def test_runtime(self):
        result = run_experiment(small_config(experiment='runtime', n_grid=[200], reps=2))
        methods = [r['method'] for r in result.records]
        assert methods == ['SLOE', 'PROBE_FRONTIER']
        assert all(r['median_seconds'] > 0 for r in result.records)
        assert result.extras['speedup'][0]['speedup'] > 0


class TestExport:
    def test_csv_is_deterministic(self, tmp_path):
        first = run_experiment(small_config())
        second = run_experiment(small_config())
        _, csv_a = save_results(first, str(tmp_path / "a"))
        _, csv_b = save_results(second, str(tmp_path / "b"))
        assert Path(csv_a).read_bytes() == Path(csv_b).read_bytes()

    def test_json_has_metadata(self, tmp_path):
        result = run_experiment(small_config(methods=[InferenceMethod.CLASSICAL]))
        json_path, _ = save_results(result, str(tmp_path / "out"))
        payload = json.loads(Path(json_path).read_text(encoding="utf-8"))
        assert payload['schema_version'] == '1.0'
        assert payload['seed'] == 2021
        assert payload['experiment'] == 'coverage'

    def test_timing_columns_can_be_dropped(self):
        result = run_experiment(small_config(experiment='runtime', n_grid=[200], reps=1))
        frame = drop_columns(records_frame(result.records), TIMING_COLUMNS)
        assert 'median_seconds' not in frame.columns
        assert list(frame.columns[:4]) == ['experiment', 'n', 'd', 'kappa']


@pytest.mark.slow
class TestMonteCarloAcceptance:
    def test_coverage(self):
        config = small_config(n=1000, kappa_grid=[0.05, 0.1, 0.2], gamma_sq_grid=[1.0, 5.0], reps=200,
                              test_size=500, parallelism=4)
        records = run_experiment(config).records
        corrected = {(r['kappa'], r['gamma_sq']): r['coverage'] for r in records if r['method'] == 'CORRECTED'}
        classical = {(r['kappa'], r['gamma_sq']): r['coverage'] for r in records if r['method'] == 'CLASSICAL'}
        for point, coverage in corrected.items():
            assert 0.88 <= coverage <= 0.92, point
        for gamma_sq in (1.0, 5.0):
            assert classical[(0.2, gamma_sq)] <= corrected[(0.2, gamma_sq)] - 0.05

    def test_coverage_gwas(self):
        config = small_config(n=1000, kappa_grid=[0.1], reps=200, test_size=500, parallelism=4,
                              feature_family=FeatureFamily.GWAS, methods=[InferenceMethod.CORRECTED])
        record = run_experiment(config).records[0]
        assert 0.87 <= record['coverage'] <= 0.93

    def test_null_pvalues_uniform(self):
        config = small_config(experiment='null_pvalues', n=2000, kappa_grid=[0.1], gamma_sq_grid=[5.0],
                              reps=20, parallelism=4)
        by_method = {r['method']: r for r in run_experiment(config).records}
        assert by_method['CORRECTED']['n_pvalues'] >= 2000
        assert by_method['CORRECTED']['ks_pvalue'] > 0.01
        assert by_method['CLASSICAL']['ks_pvalue'] < 0.01

    def test_sloe_convergence_shape(self):
        config = small_config(experiment='sloe_convergence', kappa_grid=[0.2], n_grid=[400, 800, 1600],
                              reps=200, parallelism=4)
        records = run_experiment(config).records
        largest = records[-1]
        assert largest['mean_sloe_vs_quad'] < largest['mean_quad_vs_truth']
        for name in ('mean_sloe_vs_truth', 'mean_quad_vs_truth'):
            curve = [r[name] for r in records]
            assert all(b <= a for a, b in zip(curve, curve[1:]))

    def test_bootstrap_undercovers(self):
        config = small_config(experiment='bootstrap', n=1000, kappa_grid=[0.2], reps=100, bootstrap_b=200,
                              test_size=500, parallelism=4, methods=[InferenceMethod.CORRECTED])
        by_method = {r['method']: r for r in run_experiment(config).records}
        assert by_method['BOOTSTRAP']['coverage'] < 0.88
        assert by_method['BOOTSTRAP']['mean_ci_width'] > by_method['CORRECTED']['mean_ci_width']

    def test_runtime_speedup(self):
        config = small_config(experiment='runtime', kappa_grid=[0.2], n_grid=[1000, 3000], reps=3)
        speedups = {s['n']: s['speedup'] for s in run_experiment(config).extras['speedup']}
        assert speedups[1000] >= 10.0
        assert speedups[3000] >= 30.0

    def test_fdr_calibration(self):
        config = small_config(experiment='fdr', n=1000, kappa_grid=[0.15], gamma_sq_grid=[5.0], reps=50,
                              q_grid=[0.1, 0.2, 0.3], parallelism=4)
        records = run_experiment(config).records
        for record in records:
            if record['method'] == 'CORRECTED':
                assert abs(record['fdp_mean'] - record['q']) <= 0.10
        classical = [r for r in records if r['method'] == 'CLASSICAL' and r['q'] == 0.1][0]
        assert classical['fdp_mean'] > 0.1
