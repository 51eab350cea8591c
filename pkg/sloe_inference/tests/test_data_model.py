import numpy as np
import pytest

from conftest import write_csv
from data_model import (
    allele_frequencies,
    gen_gaussian,
    gen_gwas,
    gen_outcomes,
    load_csv,
    load_feature_rows,
    make_beta,
    simulate_dataset,
    standardize_dataset,
)
from exceptions import (
    ConstantColumnError,
    DataError,
    MissingFileError,
    NonBinaryOutcomeError,
    NonNumericCellError,
)
from models import Dataset, FeatureFamily


class TestLoadCsv:
    def test_outcome_column_removed_by_name(self, tmp_path):
        path = write_csv(tmp_path / "train.csv", ["a", "y", "b"],
                         [[1.0, 1, 2.0], [2.0, 0, 1.0], [3.0, 1, 5.0]])
        data = load_csv(path, "y")
        assert data.column_names == ("a", "b")
        np.testing.assert_array_equal(data.outcomes, [1.0, 0.0, 1.0])
        np.testing.assert_array_equal(data.features[:, 1], [2.0, 1.0, 5.0])
        assert not data.standardized

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFileError):
            load_csv(str(tmp_path / "nope.csv"), "y")

    def test_missing_outcome_column(self, tmp_path):
        path = write_csv(tmp_path / "train.csv", ["a", "b"], [[1, 2], [3, 4]])
        with pytest.raises(DataError):
            load_csv(path, "y")

    def test_non_binary_outcome(self, tmp_path):
        path = write_csv(tmp_path / "train.csv", ["a", "y"], [[1, 1], [2, 2]])
        with pytest.raises(NonBinaryOutcomeError):
            load_csv(path, "y")

    def test_non_numeric_cell(self, tmp_path):
        path = write_csv(tmp_path / "train.csv", ["a", "y"], [[1, 1], ["abc", 0]])
        with pytest.raises(NonNumericCellError):
            load_csv(path, "y")

    def test_empty_cell_is_data_error(self, tmp_path):
        path = write_csv(tmp_path / "train.csv", ["a", "b", "y"], [[1, "", 1], [2, 3, 0]])
        with pytest.raises(DataError):
            load_csv(path, "y")

    def test_standardize(self, tmp_path):
        rng = np.random.default_rng(42)
        rows = [[float(u), float(v), int(y)] for u, v, y in
                zip(rng.normal(5, 2, 50), rng.normal(-1, 0.5, 50), rng.integers(0, 2, 50))]
        path = write_csv(tmp_path / "train.csv", ["a", "b", "y"], rows)
        data = load_csv(path, "y", standardize=True)
        assert data.standardized
        np.testing.assert_allclose(data.features.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(data.features.var(axis=0), 1.0, rtol=1e-10)
        np.testing.assert_allclose(data.column_scales, np.std(np.array(rows)[:, :2], axis=0), rtol=1e-12)

    def test_constant_column_cannot_be_standardized(self, tmp_path):
        path = write_csv(tmp_path / "train.csv", ["a", "b", "y"], [[1, 7, 1], [2, 7, 0], [3, 7, 1]])
        with pytest.raises(ConstantColumnError):
            load_csv(path, "y", standardize=True)


class TestLoadFeatureRows:
    def test_columns_follow_training_order(self, tmp_path):
        path = write_csv(tmp_path / "test.csv", ["b", "y", "a"], [[10, 1, 1], [20, 0, 2]])
        rows = load_feature_rows(path, ["a", "b"], outcome_column="y")
        np.testing.assert_array_equal(rows, [[1.0, 10.0], [2.0, 20.0]])

    def test_missing_feature_column(self, tmp_path):
        path = write_csv(tmp_path / "test.csv", ["a"], [[1], [2]])
        with pytest.raises(DataError):
            load_feature_rows(path, ["a", "b"])

    def test_standardize_rows_matches_training(self):
        rng = np.random.default_rng(42)
        raw = Dataset(features=rng.normal(3.0, 2.0, (40, 3)), outcomes=rng.integers(0, 2, 40))
        data = standardize_dataset(raw)
        np.testing.assert_allclose(data.standardize_rows(raw.features), data.features, atol=1e-12)

    def test_standardize_is_idempotent(self):
        rng = np.random.default_rng(5)
        once = standardize_dataset(Dataset(features=rng.normal(-2.0, 4.0, (60, 4)), outcomes=rng.integers(0, 2, 60)))
        twice = standardize_dataset(once)
        np.testing.assert_allclose(twice.features, once.features, rtol=0.0, atol=1e-10)
        np.testing.assert_allclose(twice.column_scales, once.column_scales, rtol=1e-10)
        np.testing.assert_allclose(twice.column_means, once.column_means, atol=1e-10)


class TestGenerators:
    def test_gaussian_is_deterministic(self):
        np.testing.assert_array_equal(gen_gaussian(20, 5, 7), gen_gaussian(20, 5, 7))
        assert not np.array_equal(gen_gaussian(20, 5, 7), gen_gaussian(20, 5, 8))

    def test_gaussian_moments(self):
        column = gen_gaussian(100000, 1, 13)[:, 0]
        assert abs(column.mean()) <= 4.0 / np.sqrt(100000)
        assert column.var() == pytest.approx(1.0, rel=0.05)

    def test_gaussian_columns_uncorrelated(self):
        features = gen_gaussian(10000, 2, 17)
        assert abs(np.corrcoef(features, rowvar=False)[0, 1]) <= 0.05

    def test_gwas_genotypes(self):
        genotypes = gen_gwas(500, 6, seed=3, standardize=False)
        assert set(np.unique(genotypes)) <= {0.0, 1.0, 2.0}

    def test_gwas_standardized_moments(self):
        features = gen_gwas(20000, 4, seed=11)
        np.testing.assert_allclose(features.mean(axis=0), 0.0, atol=0.05)
        np.testing.assert_allclose(features.var(axis=0), 1.0, atol=0.05)

    def test_allele_frequencies_span_range(self):
        p = allele_frequencies(5)
        np.testing.assert_allclose(p, [0.25, 0.375, 0.5, 0.625, 0.75])
        with pytest.raises(ValueError):
            allele_frequencies(3, (0.0, 0.5))

    def test_outcomes_follow_probabilities(self):
        features = np.zeros((4000, 2))
        outcomes, mu = gen_outcomes(features, np.array([1.0, -1.0]), seed=5)
        np.testing.assert_allclose(mu, 0.5)
        assert abs(outcomes.mean() - 0.5) < 0.03


class TestMakeBeta:
    def test_blocks_when_divisible_by_eight(self):
        beta = make_beta(16, 1.0)
        np.testing.assert_allclose(beta[:2], 0.5)
        np.testing.assert_allclose(beta[2:4], -0.5)
        np.testing.assert_array_equal(beta[4:], 0.0)
        assert beta @ beta == pytest.approx(1.0)

    def test_blocks_round_down(self):
        beta = make_beta(10, 2.0)
        value = 4.0 / np.sqrt(10)
        np.testing.assert_allclose(beta, [value, -value] + [0.0] * 8)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            make_beta(0, 1.0)
        with pytest.raises(ValueError):
            make_beta(8, -1.0)


class TestSimulateDataset:
    def test_reproducible_with_sequence_seed(self):
        first, truth = simulate_dataset(FeatureFamily.GAUSSIAN, 100, 16, 1.0, [1, 2, 3, 0])
        second, _ = simulate_dataset(FeatureFamily.GAUSSIAN, 100, 16, 1.0, [1, 2, 3, 0])
        np.testing.assert_array_equal(first.features, second.features)
        np.testing.assert_array_equal(first.outcomes, second.outcomes)
        assert truth.gamma_sq == pytest.approx(1.0)
        assert first.column_names[0] == "x1"

    def test_gwas_family(self):
        data, truth = simulate_dataset(FeatureFamily.GWAS, 200, 16, 5.0, 9)
        assert data.d == 16
        assert truth.gamma_sq == pytest.approx(5.0)
