import numpy as np
import pytest

from survprobe.acquisition import (
    CensoredProbRow,
    MutualInformationScorer,
    batch_mutual_information,
    censored_rows,
    entropy_bits,
    kmeans,
    pca_components,
    pca_project,
    score_batchbald,
    score_bb_surv,
    score_cbald,
    score_cfb,
    score_cth,
    score_entropy,
    score_ideal,
    score_mctm,
    score_random,
    score_variance,
    to_p_cens,
    to_p_final,
)
from survprobe.data import Dataset, TimeBins, make_bins, synth_generate
from survprobe.errors import (
    ConfigSpaceOverflow,
    DegenerateRowError,
    ValidationError,
)
from survprobe.model import VariationalPosterior, sample_posterior

from oracles import bald_single, mi_bruteforce

FIG1_ROW = np.array([0.20, 0.25, 0.20, 0.05, 0.30])
FIG1_BINS = TimeBins(np.array([1.0, 2.0, 3.0, 4.0]))


def random_rows(rng, n_inst, n_classes, n_samples):
    rows = []
    for _ in range(n_inst):
        r = rng.uniform(0.05, 1.0, size=(n_samples, n_classes))
        rows.append(r / r.sum(axis=1, keepdims=True))
    return rows


class TestToPCens:
    def test_worked_example(self):
        # censor time 1.3 lies in the second bin; the first bin zeroes out
        # and the remainder is scaled by 1/(1 - 0.2)
        out = to_p_cens(FIG1_ROW, censor_bin=1)
        expected = [0.0, 0.3125, 0.25, 0.0625, 0.375]
        np.testing.assert_allclose(out.probs, expected, atol=1e-12)
        assert out.probs[0] == 0.0

    def test_first_bin_unchanged(self):
        out = to_p_cens(FIG1_ROW, censor_bin=0)
        np.testing.assert_allclose(out.probs, FIG1_ROW, atol=1e-15)

    def test_idempotent(self):
        once = to_p_cens(FIG1_ROW, 1)
        twice = to_p_cens(once.probs, 1)
        np.testing.assert_allclose(twice.probs, once.probs, atol=1e-15)

    def test_degenerate_tail(self):
        row = np.array([1.0, 0.0, 0.0])
        with pytest.raises(DegenerateRowError):
            to_p_cens(row, 1)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(0)
        rows = random_rows(rng, 1, 5, 6)[0]
        stacked = censored_rows(rows, 2)
        for j in range(rows.shape[0]):
            np.testing.assert_allclose(stacked[j],
                                       to_p_cens(rows[j], 2).probs,
                                       atol=1e-15)


class TestToPFinal:
    def test_worked_example(self):
        cens = to_p_cens(FIG1_ROW, 1)
        out = to_p_final(cens, c=1.3, k=1.0, bins=FIG1_BINS)
        # knowable bins 2 and 3 keep their p_cens mass; the rest merges
        np.testing.assert_allclose(out.probs, [0.3125, 0.25, 0.4375],
                                   atol=1e-12)
        assert out.class_map == [1, 2, -1]
        assert out.has_unknowable

    def test_saturating_depth_returns_p_cens(self):
        cens = to_p_cens(FIG1_ROW, 1)
        out = to_p_final(cens, c=1.3, k=100.0, bins=FIG1_BINS)
        np.testing.assert_allclose(out.probs, cens.probs, atol=0)
        assert not out.has_unknowable
        assert out.class_map == [0, 1, 2, 3, 4]

    def test_uniform_ten_bins_hand_case(self):
        # uniform p over 10 bins censored in bin 4 (index 3), horizon in
        # bin 6 (index 5): knowable bins at 1/7 each, unknowable 4/7
        bins = make_bins(np.arange(1.0, 11.0), 10)
        row = np.full(10, 0.1)
        c = float(bins.edges[2] + 0.01)           # inside bin index 3
        horizon_bin = 5
        k = float(bins.edges[4] + 0.01 - c)       # lands inside bin index 5
        cens = to_p_cens(row, 3)
        out = to_p_final(cens, c, k, bins)
        np.testing.assert_allclose(out.probs,
                                   [1 / 7, 1 / 7, 1 / 7, 4 / 7], atol=1e-12)
        assert out.class_map == [3, 4, 5, -1]
        assert horizon_bin == out.class_map[-2]

    def test_preserves_total_mass_and_values(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            row = rng.uniform(0.01, 1.0, size=8)
            row /= row.sum()
            j0 = int(rng.integers(0, 7))
            cens = to_p_cens(row, j0)
            c = float(rng.uniform(0, 10))
            bins = TimeBins(np.linspace(1.0, 7.0, 7))
            j0 = int(np.searchsorted(bins.edges, c, side="right"))
            cens = to_p_cens(row, j0)
            k = float(rng.uniform(0, 8))
            out = to_p_final(cens, c, k, bins)
            assert out.probs.sum() == pytest.approx(1.0, abs=1e-9)
            for cls, orig_bin in enumerate(out.class_map):
                if orig_bin >= 0:
                    assert out.probs[cls] == cens.probs[orig_bin]


class TestBatchMutualInformation:
    def test_identical_samples_zero(self):
        row = np.array([[0.2, 0.3, 0.5]] * 4)
        mi = batch_mutual_information([row, row])
        assert abs(mi) < 1e-12

    def test_maximal_disagreement_one_bit(self):
        row = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert batch_mutual_information([row]) == pytest.approx(1.0,
                                                                abs=1e-12)

    def test_matches_bruteforce_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            rows = random_rows(rng, int(rng.integers(1, 4)),
                               int(rng.integers(2, 5)),
                               int(rng.integers(2, 6)))
            ours = batch_mutual_information(rows)
            oracle = mi_bruteforce(rows)
            assert abs(ours - oracle) < 1e-9

    def test_heterogeneous_class_counts(self):
        rng = np.random.default_rng(5)
        rows = [random_rows(rng, 1, m, 4)[0] for m in (2, 5, 3)]
        ours = batch_mutual_information(rows)
        assert abs(ours - mi_bruteforce(rows)) < 1e-9

    def test_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            rows = random_rows(rng, 3, 3, 4)
            assert batch_mutual_information(rows) >= -1e-12

    def test_overflow_instructs_sampling(self):
        rng = np.random.default_rng(0)
        rows = random_rows(rng, 8, 10, 3)
        with pytest.raises(ConfigSpaceOverflow, match="sampled"):
            batch_mutual_information(rows, max_configs=1000)
        # sampled mode accepts the same input
        batch_mutual_information(rows, mode="sampled", n_draws=100)

    def test_sampled_mode_converges_to_exact(self):
        rng = np.random.default_rng(8)
        rows = random_rows(rng, 2, 3, 5)
        exact = batch_mutual_information(rows)
        approx = batch_mutual_information(rows, mode="sampled",
                                          n_draws=200_000, rng_seed=1)
        assert abs(exact - approx) < 0.02

    def test_monotone_in_batch(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            rows = random_rows(rng, 4, 3, 4)
            for b in range(1, 4):
                smaller = batch_mutual_information(rows[:b])
                larger = batch_mutual_information(rows[:b + 1])
                assert larger >= smaller - 1e-9

    def test_requires_two_samples(self):
        with pytest.raises(ValidationError):
            batch_mutual_information([np.array([[0.5, 0.5]])])


class TestMutualInformationScorer:
    def test_exact_state_matches_from_scratch(self):
        rng = np.random.default_rng(4)
        rows = random_rows(rng, 5, 3, 4)
        scorer = MutualInformationScorer(rows)
        batch = []
        for idx in (2, 0, 4):
            ext = scorer.extension_scores(
                [c for c in range(5) if c not in batch])
            candidates = [c for c in range(5) if c not in batch]
            for cand, val in zip(candidates, ext):
                want = batch_mutual_information(
                    [rows[i] for i in batch + [cand]])
                assert val == pytest.approx(want, abs=1e-12)
            scorer.commit(idx)
            batch.append(idx)
            assert scorer.score() == pytest.approx(
                batch_mutual_information([rows[i] for i in batch]),
                abs=1e-12)

    def test_sampled_state_tracks_exact(self):
        rng = np.random.default_rng(6)
        rows = random_rows(rng, 6, 4, 5)
        scorer = MutualInformationScorer(rows, max_configs=32,
                                         n_draws=200_000, rng_seed=0)
        for idx in (0, 1, 2):
            scorer.commit(idx)
        assert not scorer.exact
        ext = scorer.extension_scores([3, 5])
        for cand, val in zip((3, 5), ext):
            want = batch_mutual_information(
                [rows[i] for i in (0, 1, 2, cand)])
            assert val == pytest.approx(want, abs=0.02)


def pool_with_posterior(seed=0, n=40, n_bins=5, s_post=6):
    ds = synth_generate(n, 3, rng_seed=seed, censor_rate=0.4, signal=1.0)
    cens = ds.delta_true == 0
    if cens.sum() < 5:  # ensure enough candidates
        ds.delta_obs[:10] = 0
        ds.t_obs[:10] = ds.t_true[:10] * 0.5
    ds.bins = make_bins(ds.t_obs[ds.delta_obs == 1], n_bins)
    rng = np.random.default_rng(seed + 1)
    dim = (n_bins - 1) * (ds.dim + 1)
    q = VariationalPosterior(rng.normal(scale=0.5, size=dim),
                             rng.normal(size=dim) - 1.0, n_bins, ds.dim)
    samples = sample_posterior(q, s_post, seed=seed)
    return ds, samples


class TestBatchScorers:
    def test_empty_batch_zero(self):
        ds, samples = pool_with_posterior()
        assert score_bb_surv([], ds, samples, k=1.0).value == 0.0
        assert score_batchbald([], ds, samples).value == 0.0

    def test_saturating_depth_equals_batchbald_bitwise(self):
        ds, samples = pool_with_posterior()
        cands = ds.censored_indices()[:4].tolist()
        horizon = float(ds.bins.edges[-1]) + 1.0
        a = score_bb_surv(cands, ds, samples, k=horizon)
        b = score_batchbald(cands, ds, samples)
        assert a.value == b.value  # bit-for-bit

    def test_singleton_matches_independent_bald_oracle(self):
        ds, samples = pool_with_posterior(seed=3)
        i = int(ds.censored_indices()[0])
        k = 0.7
        got = score_bb_surv([i], ds, samples, k=k).value

        from survprobe.model import predict
        probs = predict(samples, ds.x[[i]], ds.bins)[0]
        c = float(ds.t_obs[i])
        j0 = int(np.searchsorted(ds.bins.edges, c, side="right"))
        finals = np.stack([
            to_p_final(to_p_cens(probs[s], j0), c, k, ds.bins).probs
            for s in range(probs.shape[0])])
        assert got == pytest.approx(bald_single(finals), abs=1e-9)

    def test_rejects_uncensored_members(self):
        ds, samples = pool_with_posterior()
        unc = int(np.flatnonzero(ds.delta_obs == 1)[0])
        with pytest.raises(ValidationError):
            score_bb_surv([unc], ds, samples, k=1.0)

    def test_duplicates_score_below_diverse(self):
        # Alice/Bob construction: four posterior samples spanning two
        # independent parameter bits. Alice's label reveals the first
        # bit, Carol's the second; a near-duplicate of Alice adds almost
        # nothing while Carol doubles the information.
        lo, hi = 0.05, 0.95
        alice = np.array([[hi, lo], [hi, lo], [lo, hi], [lo, hi]])
        bob = np.array([[hi - 0.01, lo + 0.01]] * 2
                       + [[lo + 0.01, hi - 0.01]] * 2)
        carol = np.array([[hi, lo], [lo, hi], [hi, lo], [lo, hi]])
        pair_dup = batch_mutual_information([alice, bob])
        pair_div = batch_mutual_information([alice, carol])
        assert pair_div > pair_dup + 0.5
        # the joint score discounts redundancy that a per-instance sum
        # (BALD-style) would double count
        bald_sum = (batch_mutual_information([alice])
                    + batch_mutual_information([bob]))
        assert pair_dup < bald_sum - 0.5


class TestPerInstanceScores:
    def test_entropy_uniform_and_onehot(self):
        n = 8
        uniform = np.full((1, n), 1.0 / n)
        onehot = np.eye(n)[[0]]
        assert score_entropy(uniform)[0] == pytest.approx(np.log2(n))
        assert score_entropy(onehot)[0] == pytest.approx(0.0)

    def test_variance_uniform_and_onehot(self):
        n = 5
        uniform = np.full((1, n), 1.0 / n)
        onehot = np.eye(n)[[0]]
        assert score_variance(uniform)[0] == pytest.approx(0.0)
        # direct formula for a one-hot row
        mean = 1.0 / n
        expected = ((1 - mean) ** 2 + (n - 1) * mean ** 2) / n
        assert score_variance(onehot)[0] == pytest.approx(expected)

    def test_cth_window(self):
        bins = TimeBins(np.array([1.0, 2.0, 3.0, 4.0]))
        row = np.array([[0.0, 0.5, 0.2, 0.2, 0.1]])
        # c = 1.3, k = 1: window covers bins 2 and 3 -> p = 0.7
        d = score_cth(row, [1.3], 1.0, bins)
        assert d[0] == pytest.approx(abs(0.7 - 0.5))
        # p_window = 0.5 scores a perfect 0
        row2 = np.array([[0.0, 0.3, 0.2, 0.4, 0.1]])
        assert score_cth(row2, [1.3], 1.0, bins)[0] == pytest.approx(0.0)

    def test_mctm_center_and_extreme(self):
        n = 5
        center = np.zeros((1, n))
        center[0, 2] = 1.0  # mean bin = 3 = (n+1)/2
        assert score_mctm(center)[0] == pytest.approx(0.0)
        first = np.eye(n)[[0]]
        assert score_mctm(first)[0] == pytest.approx(2.0)

    def test_cbald_zero_when_samples_agree(self):
        row = np.tile(np.array([0.2, 0.3, 0.5]), (4, 1))
        rows = np.stack([row, row])
        scores = score_cbald(rows)
        np.testing.assert_allclose(scores, 0.0, atol=1e-12)

    def test_cbald_matches_weighted_bald(self):
        rng = np.random.default_rng(0)
        rows = np.stack(random_rows(rng, 3, 4, 5))
        got = score_cbald(rows, censor_weight=1.5)
        want = [1.5 * bald_single(rows[i]) for i in range(3)]
        np.testing.assert_allclose(got, want, atol=1e-9)

    def test_ideal_exploitation_only(self):
        rng = np.random.default_rng(1)
        rows = np.stack(random_rows(rng, 4, 5, 6))
        xs = rng.normal(size=(4, 3))
        queried = rng.normal(size=(2, 3))
        got = score_ideal(xs, rows, queried, d=0.0)
        exp_bin = rows @ np.arange(1, 6)
        np.testing.assert_allclose(got, exp_bin.var(axis=1), atol=1e-12)

    def test_ideal_zero_diversity_at_queried_point(self):
        rng = np.random.default_rng(2)
        rows = np.stack(random_rows(rng, 2, 4, 5))
        queried = np.array([[1.0, 2.0]])
        xs = np.array([[1.0, 2.0], [5.0, 5.0]])
        scores_d0 = score_ideal(xs, rows, queried, d=0.0)
        scores_d5 = score_ideal(xs, rows, queried, d=5.0)
        assert scores_d5[0] == pytest.approx(scores_d0[0])  # z == 0 there
        assert scores_d5[1] > scores_d0[1]                  # far point gains


class TestPcaKmeans:
    def test_pca_matches_2x2_eigendecomposition(self):
        rng = np.random.default_rng(0)
        base = rng.normal(size=(300, 2)) @ np.array([[2.0, 0.3], [0.3, 0.5]])
        comps, vals = pca_components(base, 2)
        # closed-form eigendecomposition of the 2x2 covariance
        c = np.cov(base - base.mean(axis=0), rowvar=False)
        tr, det = c[0, 0] + c[1, 1], c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0]
        disc = np.sqrt(tr ** 2 / 4 - det)
        lam = np.array([tr / 2 + disc, tr / 2 - disc])
        np.testing.assert_allclose(vals, lam, rtol=1e-10)
        for i, l in enumerate(lam):
            v = np.array([c[0, 1], l - c[0, 0]])
            v = v / np.linalg.norm(v)
            dot = abs(float(np.dot(comps[i], v)))
            assert dot == pytest.approx(1.0, abs=1e-8)

    def test_projection_shape_and_variance_order(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(200, 5)) * np.array([5.0, 2.0, 1.0, 0.5, 0.1])
        proj = pca_project(x, 3)
        assert proj.shape == (200, 3)
        variances = proj.var(axis=0)
        assert variances[0] >= variances[1] >= variances[2]

    def test_kmeans_separated_blobs(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(30, 2)) + [10, 10]
        b = rng.normal(size=(30, 2)) - [10, 10]
        labels, centroids = kmeans(np.vstack([a, b]), 2, rng_seed=0)
        assert len(set(labels[:30])) == 1
        assert len(set(labels[30:])) == 1
        assert labels[0] != labels[30]


def cfb_pool(seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(30, 3)) + 8.0     # all censored
    b = rng.normal(size=(30, 3)) - 8.0     # all uncensored
    x = np.vstack([a, b])
    t_true = rng.uniform(1.0, 5.0, size=60)
    delta_obs = np.concatenate([np.zeros(30, int), np.ones(30, int)])
    t_obs = np.where(delta_obs == 1, t_true, t_true * 0.5)
    return Dataset(x, t_true, np.ones(60, int), t_obs=t_obs,
                   delta_obs=delta_obs)


class TestCfb:
    def test_censored_blob_exhausted_first(self):
        pool = cfb_pool()
        ranked = score_cfb(pool, pca_dims=2, n_clusters=2, rng_seed=0)
        assert set(ranked) == set(range(30))  # only censored are rankable
        assert ranked[:30] == sorted(ranked[:30], key=lambda i: ranked.index(i))

    def test_single_cluster_is_proximity_ranking(self):
        pool = cfb_pool(seed=1)
        ranked = score_cfb(pool, pca_dims=2, n_clusters=1, rng_seed=0)
        proj = pca_project(pool.x, 2)
        centroid = proj.mean(axis=0)
        cens = np.flatnonzero(pool.delta_obs == 0)
        dists = np.linalg.norm(proj[cens] - centroid, axis=1)
        expected = cens[np.argsort(dists, kind="stable")].tolist()
        assert ranked == expected

    def test_needs_enough_censored(self):
        pool = cfb_pool()
        with pytest.raises(ValidationError):
            score_cfb(pool, n_clusters=31)


class TestRandomRanking:
    def test_uniform_costs_uniform_first_pick(self):
        ds = cfb_pool()
        counts = np.zeros(60)
        for s in range(2000):
            first = score_random(ds, rng_seed=s)[0]
            counts[first] += 1
        observed = counts[:30] / 2000
        assert abs(observed.sum() - 1.0) < 1e-12
        assert np.all(np.abs(observed - 1 / 30) < 5 * np.sqrt(
            (1 / 30) * (29 / 30) / 2000))

    def test_inverse_cost_first_pick_ratio(self):
        ds = Dataset(np.zeros((2, 1)), [5.0, 5.0], [1, 1],
                     t_obs=[1.0, 1.0], delta_obs=[0, 0], cost=[1.0, 4.0])
        n = 100_000
        picks = np.array([score_random(ds, rng_seed=s)[0]
                          for s in range(n)])
        p_cheap = (picks == 0).mean()
        se = np.sqrt(0.8 * 0.2 / n)
        assert abs(p_cheap - 0.8) < 3 * se

    def test_deterministic(self):
        ds = cfb_pool()
        assert score_random(ds, 9) == score_random(ds, 9)
