import numpy as np
import pytest

from survprobe.data import (
    Dataset,
    TimeBins,
    artificial_censor,
    bin_of,
    bins_of,
    load_csv,
    make_bins,
    split_train_test,
    standardize,
    synth_generate,
)
from survprobe.errors import (
    ConfigurationError,
    DegenerateBinsError,
    ParseError,
    SchemaError,
    ValidationError,
)


def write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestLoadCsv:
    def test_default_costs(self, tmp_path):
        path = write_csv(tmp_path,
                         "time,event,a\n1.0,1,0.5\n2.0,1,1.5\n3.0,0,2.5\n")
        ds = load_csv(path)
        assert np.array_equal(ds.cost, [1.0, 1.0, 1.0])
        assert np.array_equal(ds.t_true, [1.0, 2.0, 3.0])
        assert np.array_equal(ds.delta_true, [1, 1, 0])
        assert ds.t_obs is not ds.t_true
        assert np.array_equal(ds.t_obs, ds.t_true)

    def test_constant_column_standardizes_to_zero(self, tmp_path):
        path = write_csv(tmp_path,
                         "time,event,a,b\n1,1,7,0.1\n2,1,7,0.7\n3,0,7,0.4\n")
        ds = load_csv(path)
        col = ds.feature_names.index("a")
        assert np.array_equal(ds.x[:, col], np.zeros(3))

    def test_support_like_width(self, tmp_path):
        rng = np.random.default_rng(0)
        n_features = 42
        header = "time,event," + ",".join(f"f{i}" for i in range(n_features))
        rows = [
            f"{rng.uniform(0.1, 5):.4f},{rng.integers(0, 2)},"
            + ",".join(f"{v:.4f}" for v in rng.normal(size=n_features))
            for _ in range(20)
        ]
        ds = load_csv(write_csv(tmp_path, header + "\n" + "\n".join(rows)))
        assert ds.x.shape == (20, 42)

    def test_cost_column_used(self, tmp_path):
        path = write_csv(tmp_path, "time,event,cost,a\n1,1,0.4,0\n2,0,0.6,1\n")
        assert np.array_equal(load_csv(path).cost, [0.4, 0.6])

    def test_missing_column(self, tmp_path):
        path = write_csv(tmp_path, "time,a\n1,2\n")
        with pytest.raises(SchemaError):
            load_csv(path)

    def test_bad_cell_reports_row(self, tmp_path):
        path = write_csv(tmp_path, "time,event,a\n1,1,0\n2,1,oops\n")
        with pytest.raises(ParseError, match="row 1"):
            load_csv(path)

    def test_negative_time(self, tmp_path):
        path = write_csv(tmp_path, "time,event,a\n-1,1,0\n")
        with pytest.raises(ValidationError):
            load_csv(path)

    def test_roundtrip_through_audit_csv(self, tmp_path):
        ds = synth_generate(30, 3, rng_seed=1)
        out = tmp_path / "audit.csv"
        ds.to_csv(out)
        back = load_csv(str(out))
        assert np.array_equal(back.t_true, ds.t_true)
        assert np.array_equal(back.delta_true, ds.delta_true)


class TestStandardize:
    def test_moments(self):
        rng = np.random.default_rng(3)
        x = rng.normal(5.0, 3.0, size=(500, 4))
        z = standardize(x)
        assert np.all(np.abs(z.mean(axis=0)) < 1e-9)
        assert np.all(np.abs(z.std(axis=0) - 1.0) < 1e-6)


class TestMakeBins:
    def test_deciles(self):
        bins = make_bins(np.arange(1.0, 11.0), 10)
        assert bins.n == 10
        assert bins.edges.size == 9
        expected = np.quantile(np.arange(1.0, 11.0), np.arange(1, 10) / 10)
        np.testing.assert_allclose(bins.edges, expected)

    def test_median_split(self):
        bins = make_bins([1.0, 2.0, 3.0, 4.0], 2)
        assert bins.edges.size == 1
        assert bins.edges[0] == np.quantile([1.0, 2.0, 3.0, 4.0], 0.5)

    def test_degenerate(self):
        with pytest.raises(DegenerateBinsError):
            make_bins([1.0, 1.0, 2.0], 3)

    def test_quantile_mass_balanced(self):
        # empirical-CDF oracle: each bin should hold ~10% of the sample
        rng = np.random.default_rng(7)
        times = rng.exponential(2.0, size=1000)
        bins = make_bins(times, 10)
        assert np.all(np.diff(bins.edges) > 0)
        counts = np.bincount(bins_of(times, bins), minlength=10)
        np.testing.assert_allclose(counts / 1000, 0.1, atol=0.02)


class TestBinOf:
    bins = TimeBins(np.array([1.0, 2.0, 3.0, 4.0]))

    def test_second_interval(self):
        # t = 1.3 falls in the second bin [1, 2)
        assert bin_of(1.3, self.bins) == 1

    def test_left_edge(self):
        assert bin_of(0.0, self.bins) == 0

    def test_far_right_is_last(self):
        assert bin_of(1e9, self.bins) == self.bins.n - 1

    def test_edge_consistency(self):
        eps = 1e-9
        for j, e in enumerate(self.bins.edges):
            assert bin_of(e - eps, self.bins) == j
            assert bin_of(e, self.bins) == j + 1

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            bin_of(-0.1, self.bins)


class TestArtificialCensor:
    def test_uniform_recensoring(self):
        ds = Dataset(np.zeros((50, 1)), np.full(50, 5.0), np.ones(50, int))
        out = artificial_censor(ds, rng_seed=0, censored_per_uncensored=9.0)
        cens = out.delta_obs == 0
        assert cens.sum() == 45
        assert np.all(out.t_obs[cens] < 5.0)
        assert np.all(out.t_obs[cens] > 0.0)
        unc = ~cens
        assert np.all(out.t_obs[unc] == 5.0)

    def test_recensors_already_censored(self):
        t = np.full(20, 4.0)
        delta = np.zeros(20, int)  # everything already censored
        ds = Dataset(np.zeros((20, 1)), t, delta, t_obs=t, delta_obs=delta)
        with pytest.raises(ConfigurationError):
            # a 1:1 ratio needs true events to keep uncensored
            artificial_censor(ds, 0, censored_per_uncensored=1.0)
        out = artificial_censor(ds, 0, censored_per_uncensored=1e9)
        assert np.all(out.t_obs < 4.0)
        assert np.all(out.delta_obs == 0)

    def test_deterministic(self):
        ds = synth_generate(100, 3, rng_seed=5)
        a = artificial_censor(ds, rng_seed=11)
        b = artificial_censor(ds, rng_seed=11)
        assert np.array_equal(a.t_obs, b.t_obs)
        assert np.array_equal(a.delta_obs, b.delta_obs)

    def test_invariants(self):
        ds = synth_generate(200, 4, rng_seed=2)
        out = artificial_censor(ds, rng_seed=3)
        assert np.all(out.t_obs <= out.t_true)
        unc = out.delta_obs == 1
        assert np.all(out.t_obs[unc] == out.t_true[unc])
        assert np.all(out.delta_true[unc] == 1)


class TestSynthGenerate:
    def test_deterministic(self):
        a = synth_generate(1000, 10, rng_seed=42)
        b = synth_generate(1000, 10, rng_seed=42)
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.t_true, b.t_true)

    def test_no_censoring_limit(self):
        ds = synth_generate(500, 3, rng_seed=0, censor_rate=0.0)
        assert np.all(ds.delta_true == 1)

    def test_censoring_fraction_matches_mc_oracle(self):
        # Monte-Carlo oracle for P(C < T) under the same generator family:
        # T | x ~ Exp(exp(beta.x)), C ~ Exp(rate). With ||beta|| = 1 and
        # x standard normal the censoring probability is
        # E[ rate / (rate + exp(beta.x)) ] over beta.x ~ N(0,1).
        rate = 0.3
        rng = np.random.default_rng(123)
        z = rng.normal(size=1_000_000)
        expected = float(np.mean(rate / (rate + np.exp(z))))
        ds = synth_generate(20_000, 8, rng_seed=9, censor_rate=rate)
        observed = 1.0 - ds.delta_true.mean()
        assert abs(observed - expected) < 0.03


class TestSplit:
    def test_censoring_proportion_preserved(self):
        ds = synth_generate(2000, 5, rng_seed=1)
        train, test = split_train_test(ds, 0.3, rng_seed=0)
        overall = 1.0 - ds.delta_true.mean()
        for part in (train, test):
            frac = 1.0 - part.delta_true.mean()
            assert abs(frac - overall) < 0.02

    def test_sizes(self):
        ds = synth_generate(1000, 2, rng_seed=4)
        train, test = split_train_test(ds, 0.3, rng_seed=0)
        assert len(train) + len(test) == 1000
        assert abs(len(test) - 300) <= 2
