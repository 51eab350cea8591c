import numpy as np
import pytest

import probe_frontier
from data_model import simulate_dataset
from exceptions import AlreadySeparable, DataError, FrontierOutOfRange, MissingFileError
from models import Dataset, EstimatorMethod, FeatureFamily, FrontierProvenance, FrontierTable
from probe_frontier import (
    _invert_frontier,
    build_frontier,
    default_frontier,
    frontier_beta,
    load_frontier,
    monotone_regularize,
    probe_frontier_gamma,
    save_frontier,
    separation_frequency,
    set_default_frontier,
)


class TestFrontierTable:
    def test_interpolation(self, frontier_table):
        assert frontier_table.kappa_star_at(1.0) == pytest.approx(0.43)
        assert frontier_table.kappa_star_at(1.25) == pytest.approx(0.41)
        assert frontier_table.gamma_at(0.41) == pytest.approx(1.25)

    def test_requires_strict_decrease(self):
        with pytest.raises(ValueError):
            FrontierTable(gamma=[1.0, 2.0, 3.0], kappa_star=[0.4, 0.4, 0.3])
        with pytest.raises(ValueError):
            FrontierTable(gamma=[1.0, 1.0], kappa_star=[0.4, 0.3])

    def test_monotone_regularize(self):
        fitted = monotone_regularize(np.array([0.5, 0.45, 0.47, 0.3, 0.3, 0.1]))
        assert np.all(np.diff(fitted) < 0)
        assert fitted[0] == pytest.approx(0.5)
        assert fitted[-1] == pytest.approx(0.1)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        table = FrontierTable(gamma=[0.5, 1.0, 2.0], kappa_star=[0.47, 0.43, 0.35], n_sim=100, reps=4, seed=9)
        path = save_frontier(table, str(tmp_path / "frontier.csv"))
        loaded = load_frontier(path)
        np.testing.assert_allclose(loaded.gamma, table.gamma)
        np.testing.assert_allclose(loaded.kappa_star, table.kappa_star)
        assert loaded.provenance == FrontierProvenance.MONTE_CARLO
        assert (loaded.n_sim, loaded.reps, loaded.seed) == (100, 4, 9)

    def test_user_supplied_table(self, tmp_path):
        path = tmp_path / "mine.csv"
        path.write_text("gamma,kappa_star\n0.5,0.47\n2.0,0.35\n", encoding="utf-8")
        loaded = load_frontier(str(path))
        assert loaded.provenance == FrontierProvenance.USER_SUPPLIED

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("g,k\n0.5,0.47\n2.0,0.35\n", encoding="utf-8")
        with pytest.raises(DataError):
            load_frontier(str(path))

    def test_not_decreasing(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("gamma,kappa_star\n0.5,0.3\n2.0,0.35\n", encoding="utf-8")
        with pytest.raises(DataError):
            load_frontier(str(path))

    def test_missing(self, tmp_path):
        with pytest.raises(MissingFileError):
            load_frontier(str(tmp_path / "absent.csv"))

    def test_default_table_override(self, frontier_table):
        assert default_frontier() is frontier_table
        other = FrontierTable(gamma=[0.5, 1.0], kappa_star=[0.47, 0.43])
        set_default_frontier(other)
        assert default_frontier() is other

    def test_default_table_loaded_from_path(self, tmp_path, monkeypatch):
        table = FrontierTable(gamma=[0.5, 1.0], kappa_star=[0.47, 0.43])
        path = save_frontier(table, str(tmp_path / "frontier.csv"))
        monkeypatch.setattr(probe_frontier, 'FRONTIER_PATH', path)
        set_default_frontier(None)
        np.testing.assert_allclose(default_frontier().kappa_star, [0.47, 0.43])


class TestBuildFrontier:
    def test_beta_norm(self):
        assert np.linalg.norm(frontier_beta(40, 2.0)) == pytest.approx(2.0)
        np.testing.assert_allclose(frontier_beta(2, 3.0), [3.0, 0.0])

    def test_separation_frequency(self):
        separable = Dataset(features=np.array([[1.0], [2.0], [-1.0], [-2.0]]), outcomes=np.array([1, 1, 0, 0]))
        assert separation_frequency(lambda rep: separable, 3) == 1.0
        with pytest.raises(ValueError):
            separation_frequency(lambda rep: separable, 0)

    def test_small_build(self):
        table = build_frontier([0.1, 5.0], n_sim=80, reps=4, seed=3)
        assert table.provenance == FrontierProvenance.MONTE_CARLO
        assert table.kappa_star[0] > table.kappa_star[1]
        assert 0.3 < table.kappa_star[0] < 0.7
        again = build_frontier([0.1, 5.0], n_sim=80, reps=4, seed=3, workers=2)
        np.testing.assert_array_equal(table.kappa_star, again.kappa_star)

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            build_frontier([1.0])
        with pytest.raises(ValueError):
            build_frontier([2.0, 1.0])

    @pytest.mark.slow
    def test_null_frontier_near_half(self):
        table = build_frontier([0.01, 1.0], n_sim=1000, reps=16, seed=5)
        assert abs(table.kappa_star[0] - 0.5) <= 0.03


class TestProbeFrontier:
    def test_inversion_bounds(self, frontier_table):
        with pytest.raises(FrontierOutOfRange):
            _invert_frontier(frontier_table, 0.05)
        assert _invert_frontier(frontier_table, 0.6) == pytest.approx(frontier_table.gamma[0])
        assert _invert_frontier(frontier_table, 0.43) == pytest.approx(1.0)

    def test_already_separable(self, frontier_table):
        separable = Dataset(features=np.array([[1.0], [2.0], [-1.0], [-2.0]]), outcomes=np.array([1, 1, 0, 0]))
        with pytest.raises(AlreadySeparable):
            probe_frontier_gamma(separable, frontier_table)

    def test_no_separable_subsample_size(self, frontier_table, monkeypatch):
        data, _ = simulate_dataset(FeatureFamily.GAUSSIAN, 400, 40, 1.0, [42, 4])
        monkeypatch.setattr(probe_frontier, 'separation_frequency', lambda *args, **kwargs: 0.0)
        with pytest.raises(FrontierOutOfRange) as info:
            probe_frontier_gamma(data, frontier_table, subsample_reps=2, seed=3)
        assert info.value.diagnostics['d'] == 40
        assert info.value.diagnostics['probes']

    def test_estimate(self, frontier_table):
        data, _ = simulate_dataset(FeatureFamily.GAUSSIAN, 400, 40, 1.0, [42, 3])
        signal = probe_frontier_gamma(data, frontier_table, subsample_reps=5, seed=11)
        info = signal.diagnostics
        assert signal.method == EstimatorMethod.PROBE_FRONTIER
        assert data.d < info['n_prime'] < data.n
        assert info['kappa_star_hat'] == pytest.approx(data.d / info['n_prime'])
        assert signal.eta_sq == pytest.approx(info['alpha'] ** 2 * info['gamma_sq_hat']
                                              + data.kappa * info['sigma_star'] ** 2, rel=1e-9)
        again = probe_frontier_gamma(data, frontier_table, subsample_reps=5, seed=11)
        assert again.eta_sq == signal.eta_sq
