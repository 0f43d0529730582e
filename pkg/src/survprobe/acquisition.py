"""Acquisition scoring for budgeted probing of censored instances.

Two transforms adapt model bin probabilities to a censored instance:

* ``to_p_cens`` zeroes the bins before the censor bin and renormalizes
  (the instance is known to have survived that long);
* ``to_p_final`` merges every bin past the probe horizon ``c + k`` into
  a single "unknowable" class, since a probe of depth ``k`` can never
  place the event there.

Batch value is the mutual information between the batch's labels and
the model parameters, estimated from posterior samples either by exact
enumeration of the joint configuration space or by Monte Carlo when the
space is too large. The remaining scorers are the per-instance
baselines used as experimental controls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, TimeBins, bin_of
from .errors import (
    ConfigSpaceOverflow,
    DegenerateRowError,
    ValidationError,
)
from .model import PosteriorSampleSet, predict

TAIL_FLOOR = 1e-12
EXACT_CONFIG_LIMIT = 100_000
MC_CONFIG_DRAWS = 10_000
UNKNOWABLE = -1  # class_map marker for the merged class


@dataclass
class CensoredProbRow:
    """Bin distribution conditioned on surviving past the censor bin."""

    probs: np.ndarray
    censor_bin: int


@dataclass
class KnowableProbRow:
    """Distribution over knowable bins plus one merged unknowable class.

    ``class_map[c]`` is the original bin index of class ``c``, or
    ``UNKNOWABLE`` for the merged class (absent when the probe horizon
    reaches the last bin, in which case probs equals p_cens).
    """

    probs: np.ndarray
    class_map: list[int]

    @property
    def has_unknowable(self) -> bool:
        return bool(self.class_map) and self.class_map[-1] == UNKNOWABLE


@dataclass
class BatchScore:
    value: float  # bits, >= 0
    batch: list[int]


def to_p_cens(row: np.ndarray, censor_bin: int) -> CensoredProbRow:
    """Zero all bins before the censor bin and renormalize the tail."""
    row = np.asarray(row, dtype=float)
    if not 0 <= censor_bin < row.size:
        raise ValidationError(f"censor bin {censor_bin} out of range")
    tail = row[censor_bin:].sum()
    if tail < TAIL_FLOOR:
        raise DegenerateRowError(
            f"no probability mass at or after censor bin {censor_bin}")
    out = np.zeros_like(row)
    out[censor_bin:] = row[censor_bin:] / tail
    return CensoredProbRow(out, censor_bin)


def censored_rows(rows: np.ndarray, censor_bin: int) -> np.ndarray:
    """Vectorized :func:`to_p_cens` over an (S, n) stack of rows."""
    rows = np.asarray(rows, dtype=float)
    tails = rows[:, censor_bin:].sum(axis=1)
    if np.any(tails < TAIL_FLOOR):
        raise DegenerateRowError(
            f"a posterior sample has no mass past censor bin {censor_bin}")
    out = np.zeros_like(rows)
    out[:, censor_bin:] = rows[:, censor_bin:] / tails[:, None]
    return out


def to_p_final(row: CensoredProbRow, c: float, k: float,
               bins: TimeBins) -> KnowableProbRow:
    """Merge every bin after the one containing ``c + k`` into one class.

    Knowable bins (those intersecting [c, c + k]) keep their p_cens
    values exactly. When ``c + k`` already falls in the last bin there
    is nothing to merge and the full p_cens row is returned.
    """
    if c < 0 or k < 0:
        raise ValidationError("censor time and probe depth must be >= 0")
    n = row.probs.size
    j0 = row.censor_bin
    j1 = max(bin_of(c + k, bins), j0)
    if j1 >= n - 1:
        return KnowableProbRow(row.probs.copy(), list(range(n)))
    probs = np.concatenate([row.probs[j0:j1 + 1], [row.probs[j1 + 1:].sum()]])
    return KnowableProbRow(probs, list(range(j0, j1 + 1)) + [UNKNOWABLE])


def entropy_bits(p: np.ndarray, axis: int = -1) -> np.ndarray:
    """Shannon entropy in bits with exact 0 * log 0 = 0."""
    p = np.asarray(p, dtype=float)
    logp = np.log2(np.where(p > 0, p, 1.0))
    return -(p * logp).sum(axis=axis)


def _validate_rows(rows) -> int:
    if len(rows) < 1:
        raise ValidationError("need at least one instance")
    s = rows[0].shape[0]
    if s < 2:
        raise ValidationError("need at least two posterior samples")
    for r in rows:
        if r.ndim != 2 or r.shape[0] != s:
            raise ValidationError("inconsistent sample counts across rows")
    return s


def _conditional_entropy(rows) -> np.ndarray:
    """Per-sample sum of instance label entropies, shape (S,)."""
    per_inst = np.stack([entropy_bits(r, axis=1) for r in rows])
    return per_inst.sum(axis=0)


def _draw_configs(rows, n_draws: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Sample configurations from the posterior-mixture joint.

    Returns (sample index per draw, per-sample probability matrix of the
    drawn configurations with shape (S, M)).
    """
    s = rows[0].shape[0]
    j_draws = rng.integers(0, s, size=n_draws)
    q = np.ones((s, n_draws))
    for r in rows:
        cum = np.cumsum(r, axis=1)
        u = rng.uniform(size=n_draws)
        cls = (cum[j_draws] < u[:, None]).sum(axis=1)
        np.clip(cls, 0, r.shape[1] - 1, out=cls)
        q *= r[:, cls]
    return j_draws, q


def batch_mutual_information(rows, mode: str = "exact", *,
                             max_configs: int = EXACT_CONFIG_LIMIT,
                             n_draws: int = MC_CONFIG_DRAWS,
                             rng_seed: int = 0) -> float:
    """Mutual information (bits) between a batch's labels and parameters.

    ``rows`` is one (S, m_i) probability matrix per instance; class
    counts may differ across instances. Exact mode enumerates the full
    product configuration space and raises :class:`ConfigSpaceOverflow`
    past ``max_configs``; sampled mode estimates the joint entropy from
    ``n_draws`` configurations drawn from the mixture joint.
    """
    rows = [np.asarray(r, dtype=float) for r in rows]
    s = _validate_rows(rows)
    cond = float(_conditional_entropy(rows).mean())

    if mode == "exact":
        joint = np.ones((s, 1))
        for r in rows:
            if joint.shape[1] * r.shape[1] > max_configs:
                raise ConfigSpaceOverflow(
                    f"joint space exceeds {max_configs} configurations; "
                    "use mode='sampled'")
            joint = (joint[:, :, None] * r[:, None, :]).reshape(s, -1)
        h_joint = float(entropy_bits(joint.mean(axis=0)))
    elif mode == "sampled":
        rng = np.random.default_rng(rng_seed)
        _, q = _draw_configs(rows, n_draws, rng)
        pbar = q.mean(axis=0)
        h_joint = float(-np.log2(pbar).mean())
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    return h_joint - cond


class MutualInformationScorer:
    """Incremental batch-MI scorer for greedy selection.

    Holds the joint configuration state of the committed batch so the
    marginal value of every remaining candidate costs one matrix product
    per step. Enumeration is exact until the configuration space would
    exceed ``max_configs``, then the state is subsampled to ``n_draws``
    configurations with importance weights.

    Instances are addressed by their position in ``rows``.
    """

    def __init__(self, rows, *, max_configs: int = EXACT_CONFIG_LIMIT,
                 n_draws: int = MC_CONFIG_DRAWS, rng_seed: int = 0):
        self.rows = [np.asarray(r, dtype=float) for r in rows]
        self.s = _validate_rows(self.rows)
        self.max_configs = max_configs
        self.n_draws = n_draws
        self.rng = np.random.default_rng(rng_seed)
        self._ent = [entropy_bits(r, axis=1) for r in self.rows]  # (S,) each
        self.members: list[int] = []
        self.exact = True
        self.q = np.ones((self.s, 1))      # per-sample config probabilities
        self.j_draws = None                # mixture component per config
        self._cond = np.zeros(self.s)

    # -- state transitions -------------------------------------------------

    def _maybe_downsample(self, next_m: int) -> None:
        if not self.exact or self.q.shape[1] * next_m <= self.max_configs:
            return
        j = self.rng.integers(0, self.s, size=self.n_draws)
        u = self.rng.uniform(size=self.n_draws)
        cum = np.cumsum(self.q, axis=1)
        cfg = (cum[j] < u[:, None]).sum(axis=1)
        np.clip(cfg, 0, self.q.shape[1] - 1, out=cfg)
        self.q = self.q[:, cfg]
        self.j_draws = j
        self.exact = False

    def commit(self, idx: int) -> None:
        """Extend the batch state with instance ``idx``."""
        r = self.rows[idx]
        self._maybe_downsample(r.shape[1])
        if self.exact:
            self.q = (self.q[:, :, None] * r[:, None, :]).reshape(self.s, -1)
        else:
            cum = np.cumsum(r[self.j_draws], axis=1)
            u = self.rng.uniform(size=self.q.shape[1])
            cls = (cum < u[:, None]).sum(axis=1)
            np.clip(cls, 0, r.shape[1] - 1, out=cls)
            self.q = self.q * r[:, cls]
        self.members.append(idx)
        self._cond = self._cond + self._ent[idx]

    def score(self) -> float:
        """MI of the committed batch under the current state."""
        if not self.members:
            return 0.0
        if self.exact:
            h = float(entropy_bits(self.q.mean(axis=0)))
        else:
            h = float(-np.log2(self.q.mean(axis=0)).mean())
        return h - float(self._cond.mean())

    def extension_scores(self, candidates) -> np.ndarray:
        """MI of batch + {candidate} for every candidate, current state.

        Candidates with equal class counts are scored with one matrix
        product per group.
        """
        candidates = list(candidates)
        max_m = max(self.rows[c].shape[1] for c in candidates)
        self._maybe_downsample(max_m)
        qT = np.ascontiguousarray(self.q.T)          # (C, S)
        denom = self.q.mean(axis=0)                  # (C,)
        n_cfg = self.q.shape[1]
        out = np.empty(len(candidates))

        by_m: dict[int, list[int]] = {}
        for pos, c in enumerate(candidates):
            by_m.setdefault(self.rows[c].shape[1], []).append(pos)

        for m, group in by_m.items():
            block = max(1, 4_000_000 // (n_cfg * m))
            for start in range(0, len(group), block):
                chunk = group[start:start + block]
                stacked = np.concatenate(
                    [self.rows[candidates[p]] for p in chunk], axis=1)
                rbar = (qT @ stacked / self.s).reshape(n_cfg, len(chunk), m)
                logr = np.log2(np.where(rbar > 0, rbar, 1.0))
                if self.exact:
                    h = -(rbar * logr).sum(axis=(0, 2))
                else:
                    h = -((rbar / denom[:, None, None]) * logr).sum(
                        axis=(0, 2)) / n_cfg
                for gi, pos in enumerate(chunk):
                    cond = float(
                        (self._cond + self._ent[candidates[pos]]).mean())
                    out[pos] = h[gi] - cond
        return out


def _prepare_rows(batch, pool: Dataset, samples: PosteriorSampleSet,
                  k: float | None):
    """p_cens (and, with k, p_final) rows for each batch member."""
    if pool.bins is None:
        raise ValidationError("pool has no time bins attached")
    if any(pool.delta_obs[i] == 1 for i in batch):
        raise ValidationError("only censored instances can be scored")
    probs = predict(samples, pool.x[list(batch)], pool.bins)
    rows = []
    for pos, i in enumerate(batch):
        c = float(pool.t_obs[i])
        j0 = bin_of(c, pool.bins)
        cens = censored_rows(probs[pos], j0)
        if k is None:
            rows.append(cens)
            continue
        finals = [to_p_final(CensoredProbRow(cens[s], j0), c, k, pool.bins)
                  for s in range(cens.shape[0])]
        rows.append(np.stack([f.probs for f in finals]))
    return rows


def score_bb_surv(batch, pool: Dataset, samples: PosteriorSampleSet,
                  k: float, mode: str = "exact", **mi_kwargs) -> BatchScore:
    """Batch MI on the probe-depth-aware p_final distributions."""
    batch = list(batch)
    if not batch:
        return BatchScore(0.0, [])
    rows = _prepare_rows(batch, pool, samples, k)
    value = batch_mutual_information(rows, mode, **mi_kwargs)
    return BatchScore(max(value, 0.0), batch)


def score_batchbald(batch, pool: Dataset, samples: PosteriorSampleSet,
                    mode: str = "exact", **mi_kwargs) -> BatchScore:
    """Batch MI on the plain p_cens distributions (no horizon merging)."""
    batch = list(batch)
    if not batch:
        return BatchScore(0.0, [])
    rows = _prepare_rows(batch, pool, samples, k=None)
    value = batch_mutual_information(rows, mode, **mi_kwargs)
    return BatchScore(max(value, 0.0), batch)


# -- per-instance baseline scorers ------------------------------------------
#
# All of these consume candidate-aligned arrays prepared by the caller:
# mean_rows is the mean-over-samples p_cens matrix (N, n); sample_rows is
# the per-sample p_cens tensor (N, S, n). Direction is noted per scorer.


def score_entropy(mean_rows: np.ndarray) -> np.ndarray:
    """Predictive entropy in bits (higher first)."""
    return entropy_bits(np.atleast_2d(mean_rows), axis=1)


def score_variance(mean_rows: np.ndarray) -> np.ndarray:
    """Variance of the bin probabilities around their mean (higher first)."""
    rows = np.atleast_2d(mean_rows)
    return ((rows - rows.mean(axis=1, keepdims=True)) ** 2).mean(axis=1)


def score_cth(mean_rows: np.ndarray, censor_times, k: float,
              bins: TimeBins) -> np.ndarray:
    """Distance of the probe-window event probability from 0.5 (lower
    first). Bins partially covered by (c, c+k] count in full."""
    rows = np.atleast_2d(mean_rows)
    censor_times = np.atleast_1d(np.asarray(censor_times, dtype=float))
    out = np.empty(rows.shape[0])
    for i in range(rows.shape[0]):
        c = censor_times[i]
        if k == 0:
            p_window = 0.0
        else:
            j0, j1 = bin_of(c, bins), bin_of(c + k, bins)
            p_window = rows[i, j0:j1 + 1].sum()
        out[i] = abs(p_window - 0.5)
    return out


def score_mctm(mean_rows: np.ndarray) -> np.ndarray:
    """Distance of the mean predicted bin (1-based) from the middle bin
    (n+1)/2 (lower first)."""
    rows = np.atleast_2d(mean_rows)
    n = rows.shape[1]
    mean_bin = rows @ np.arange(1, n + 1)
    return np.abs(mean_bin - (n + 1) / 2.0)


def score_cbald(sample_rows: np.ndarray, censor_weight: float = 1.5
                ) -> np.ndarray:
    """Per-instance BALD mutual information times the censor weight
    (higher first). All probe candidates are censored, so the weight is
    a uniform scale here; it is kept configurable because the cited
    method is only sketched."""
    rows = np.asarray(sample_rows, dtype=float)
    h_mean = entropy_bits(rows.mean(axis=1), axis=1)
    mean_h = entropy_bits(rows, axis=2).mean(axis=1)
    return censor_weight * (h_mean - mean_h)


def score_ideal(xs: np.ndarray, sample_rows: np.ndarray,
                queried_xs: np.ndarray, d: float = 1.0) -> np.ndarray:
    """Inverse-distance exploration score s^2(x) + d * z(x) (higher first).

    s^2 is the across-sample variance of the expected bin index; z is an
    inverse-distance-weighting diversity term, zero at any already-
    queried covariate vector.
    """
    xs = np.atleast_2d(xs)
    rows = np.asarray(sample_rows, dtype=float)
    n = rows.shape[2]
    exp_bin = rows @ np.arange(1, n + 1)        # (N, S)
    s2 = exp_bin.var(axis=1)
    z = np.empty(xs.shape[0])
    queried_xs = np.atleast_2d(queried_xs)
    for i in range(xs.shape[0]):
        if queried_xs.shape[0] == 0:
            z[i] = 0.0
            continue
        d2 = ((queried_xs - xs[i]) ** 2).sum(axis=1)
        if np.any(d2 == 0):
            z[i] = 0.0
        else:
            z[i] = 1.0 / (1.0 / d2).sum()
    return s2 + d * z


def pca_components(x: np.ndarray, n_components: int):
    """Top covariance eigenvectors, variance-ordered.

    Returns (components with shape (k, dim), eigenvalues)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n_components = min(n_components, x.shape[1])
    xc = x - x.mean(axis=0)
    cov = np.atleast_2d(np.cov(xc, rowvar=False))
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:n_components]
    return vecs[:, order].T, vals[order]


def pca_project(x: np.ndarray, n_components: int) -> np.ndarray:
    comps, _ = pca_components(x, n_components)
    xc = x - x.mean(axis=0)
    return xc @ comps.T


def kmeans(points: np.ndarray, n_clusters: int, rng_seed: int = 0,
           max_iter: int = 100):
    """Lloyd's algorithm with deterministic seeding.

    Empty clusters are re-seeded to a random point. Returns
    (labels, centroids)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if n_clusters > points.shape[0]:
        raise ValidationError("more clusters than points")
    rng = np.random.default_rng(rng_seed)
    centroids = points[rng.choice(points.shape[0], n_clusters, replace=False)]
    labels = np.zeros(points.shape[0], dtype=int)
    for _ in range(max_iter):
        dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        for c in range(n_clusters):
            mask = new_labels == c
            if mask.any():
                centroids[c] = points[mask].mean(axis=0)
            else:
                centroids[c] = points[rng.integers(points.shape[0])]
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centroids


def score_cfb(pool: Dataset, pca_dims: int = 2, n_clusters: int = 5,
              rng_seed: int = 0) -> list[int]:
    """Cluster-based ranking of censored candidates.

    The whole pool is clustered in PCA space; clusters with a higher
    censored share come first, and within a cluster instances closest to
    the centroid come first. Only censored positions are returned.
    """
    censored = pool.delta_obs == 0
    if censored.sum() < n_clusters:
        raise ValidationError("need at least n_clusters censored instances")
    proj = pca_project(pool.x, pca_dims)
    labels, centroids = kmeans(proj, n_clusters, rng_seed)
    cluster_censoring = np.array([
        censored[labels == c].mean() if (labels == c).any() else 0.0
        for c in range(n_clusters)])
    order = np.argsort(-cluster_censoring, kind="stable")
    ranked = []
    for c in order:
        members = np.flatnonzero((labels == c) & censored)
        if members.size == 0:
            continue
        prox = np.linalg.norm(proj[members] - centroids[c], axis=1)
        ranked.extend(members[np.argsort(prox, kind="stable")].tolist())
    return ranked


def score_random(pool: Dataset, rng_seed: int = 0) -> list[int]:
    """Cost-weighted random ranking of censored candidates.

    Sequential sampling without replacement with probability
    proportional to 1/cost, realized as an exponential race.
    """
    censored = pool.censored_indices()
    rng = np.random.default_rng(rng_seed)
    keys = rng.exponential(size=censored.size) * pool.cost[censored]
    return censored[np.argsort(keys, kind="stable")].tolist()
