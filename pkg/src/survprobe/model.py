"""Variational Bayesian multi-task logistic regression over time bins.

The discrete-time model scores bin ``r`` with the suffix sum of
per-threshold logistic scores,

    s_r = sum_{j >= r} (W_j . x + b_j)   (s for the last bin is 0),

and turns scores into bin probabilities with a softmax. Censored
instances contribute the log of the tail mass from their censor bin
onward, so they participate in training directly.

Training maximizes the ELBO of a mean-field Gaussian posterior over the
flattened parameters with reparameterized gradients; the default prior
is an isotropic Gaussian, with an optional two-component scale-mixture
("spike and slab") prior whose KL term is estimated pathwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, TimeBins, bins_of
from .errors import TrainingError, ValidationError


@dataclass
class MtlrParams:
    """One concrete parameter draw: per-threshold weights and biases."""

    W: np.ndarray  # (n_bins - 1, dim)
    b: np.ndarray  # (n_bins - 1,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValidationError("inconsistent MTLR parameter shapes")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ValidationError("non-finite MTLR parameters")

    @property
    def n_bins(self) -> int:
        return self.W.shape[0] + 1

    @property
    def dim(self) -> int:
        return self.W.shape[1]


def _flatten(W: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.concatenate([W.ravel(), b])


def _unflatten(theta: np.ndarray, n_bins: int, dim: int):
    k = (n_bins - 1) * dim
    return theta[:k].reshape(n_bins - 1, dim), theta[k:]


def mtlr_logits(params: MtlrParams, x: np.ndarray) -> np.ndarray:
    """Length-n score vector for one covariate vector (softmax it for
    bin probabilities)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.dim,):
        raise ValidationError(
            f"covariate shape {x.shape} does not match dim {params.dim}")
    f = params.W @ x + params.b
    scores = np.zeros(params.n_bins)
    scores[:-1] = np.cumsum(f[::-1])[::-1]
    return scores


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def bin_probabilities(params: MtlrParams, x: np.ndarray) -> np.ndarray:
    return _softmax(mtlr_logits(params, x))


def _logsumexp(a: np.ndarray, axis=-1) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.exp(a - m).sum(axis=axis))


def log_likelihood(params: MtlrParams, inst, bins: TimeBins) -> float:
    """Log-probability of one instance's observed label.

    Uncensored: log p(bin containing t_obs). Censored: log of the tail
    mass from that bin onward.
    """
    scores = mtlr_logits(params, inst.x)
    j = int(np.searchsorted(bins.edges, inst.t_obs, side="right"))
    lse_all = _logsumexp(scores)
    if inst.delta_obs == 1:
        return float(scores[j] - lse_all)
    return float(_logsumexp(scores[j:]) - lse_all)


def _batch_scores(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(N, n) score matrix for one parameter draw."""
    f = X @ W.T + b
    scores = np.zeros((X.shape[0], W.shape[0] + 1))
    scores[:, :-1] = np.cumsum(f[:, ::-1], axis=1)[:, ::-1]
    return scores


def _loglik_and_grad(theta, X, label_bins, censored, n_bins):
    """Summed data log-likelihood and its gradient w.r.t. theta."""
    N, dim = X.shape
    W, b = _unflatten(theta, n_bins, dim)
    scores = _batch_scores(X, W, b)
    m = scores.max(axis=1, keepdims=True)
    e = np.exp(scores - m)
    denom = e.sum(axis=1)
    p = e / denom[:, None]

    tail_mask = np.arange(n_bins)[None, :] >= label_bins[:, None]
    tail_e = np.where(tail_mask, e, 0.0)
    tail_sum = tail_e.sum(axis=1)

    ll = np.where(
        censored,
        np.log(tail_sum) - np.log(denom),
        scores[np.arange(N), label_bins] - (m[:, 0] + np.log(denom)))
    # softmax target: one-hot for events, tail-renormalized for censored
    target = np.where(censored[:, None], tail_e / tail_sum[:, None], 0.0)
    target[~censored, label_bins[~censored]] = 1.0
    g_scores = target - p

    g_f = np.cumsum(g_scores, axis=1)[:, : n_bins - 1]
    grad = _flatten(g_f.T @ X, g_f.sum(axis=0))
    return float(ll.sum()), grad


@dataclass
class TrainConfig:
    epochs: int = 5000
    lr: float = 1e-2
    prior_sigma: float = 1.0
    mc_samples: int = 1          # reparameterized draws per step
    init_log_sigma: float = -2.3
    spike_slab: bool = False     # scale-mixture prior instead of Gaussian
    spike_pi: float = 0.5
    spike_sigma: float = 0.01
    slab_sigma: float = 1.0


@dataclass
class VariationalPosterior:
    """Mean-field Gaussian over the flattened MTLR parameters."""

    mu: np.ndarray
    log_sigma: np.ndarray
    n_bins: int
    feature_dim: int
    seed: int = 0

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.log_sigma = np.asarray(self.log_sigma, dtype=float)
        if self.mu.shape != self.log_sigma.shape:
            raise ValidationError("mu / log_sigma shape mismatch")

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma)

    def mean_params(self) -> MtlrParams:
        W, b = _unflatten(self.mu, self.n_bins, self.feature_dim)
        return MtlrParams(W, b)

    def to_json(self) -> str:
        return json.dumps({
            "mu": self.mu.tolist(), "log_sigma": self.log_sigma.tolist(),
            "n_bins": self.n_bins, "feature_dim": self.feature_dim,
            "seed": self.seed})

    @classmethod
    def from_json(cls, text: str) -> "VariationalPosterior":
        d = json.loads(text)
        return cls(np.asarray(d["mu"]), np.asarray(d["log_sigma"]),
                   int(d["n_bins"]), int(d["feature_dim"]),
                   int(d.get("seed", 0)))


def gaussian_kl(mu, log_sigma, prior_sigma: float) -> float:
    """KL( N(mu, diag exp(2 log_sigma)) || N(0, prior_sigma^2 I) )."""
    var = np.exp(2.0 * log_sigma)
    return float(np.sum(np.log(prior_sigma) - log_sigma
                        + (var + mu ** 2) / (2.0 * prior_sigma ** 2) - 0.5))


def _mixture_logpdf_and_score(theta, pi, s1, s2):
    """log p and d(log p)/d(theta) for a two-component Gaussian mixture."""
    def comp(s):
        return -0.5 * (theta / s) ** 2 - np.log(s) - 0.5 * np.log(2 * np.pi)
    l1, l2 = comp(s1) + np.log(pi), comp(s2) + np.log(1.0 - pi)
    m = np.maximum(l1, l2)
    logp = m + np.log(np.exp(l1 - m) + np.exp(l2 - m))
    w1 = np.exp(l1 - logp)
    score = w1 * (-theta / s1 ** 2) + (1.0 - w1) * (-theta / s2 ** 2)
    return logp, score


def elbo_and_grads(mu, log_sigma, eps, X, label_bins, censored, n_bins,
                   cfg: TrainConfig):
    """ELBO estimate and exact gradients for a frozen set of eps draws.

    ``eps`` has shape (mc_samples, D). The returned value is a
    deterministic function of (mu, log_sigma) given eps, so its
    gradients can be checked against finite differences.
    """
    sigma = np.exp(log_sigma)
    S = eps.shape[0]
    ll_total = 0.0
    g_theta_mean = np.zeros_like(mu)
    g_theta_eps_mean = np.zeros_like(mu)
    prior_mean = 0.0
    prior_g_mu = np.zeros_like(mu)
    prior_g_ls = np.zeros_like(mu)

    for s in range(S):
        theta = mu + sigma * eps[s]
        ll, g = _loglik_and_grad(theta, X, label_bins, censored, n_bins)
        ll_total += ll
        g_theta_mean += g
        g_theta_eps_mean += g * eps[s]
        if cfg.spike_slab:
            logp, score = _mixture_logpdf_and_score(
                theta, cfg.spike_pi, cfg.spike_sigma, cfg.slab_sigma)
            prior_mean += float(logp.sum())
            prior_g_mu += score
            prior_g_ls += score * eps[s]

    ll_mean = ll_total / S
    g_mu = g_theta_mean / S
    g_ls = (g_theta_eps_mean / S) * sigma

    if cfg.spike_slab:
        # log q evaluated at the sampled theta; its mu-gradient vanishes
        # pointwise and its log_sigma-gradient is -1 per dimension
        log_q = -float(np.sum(log_sigma)) \
            - mu.size * 0.5 * np.log(2 * np.pi) \
            - float((0.5 * eps ** 2).sum()) / S
        kl = log_q - prior_mean / S
        elbo = ll_mean - kl
        g_mu += prior_g_mu / S
        g_ls += (prior_g_ls / S) * sigma + 1.0
    else:
        elbo = ll_mean - gaussian_kl(mu, log_sigma, cfg.prior_sigma)
        g_mu -= mu / cfg.prior_sigma ** 2
        g_ls -= np.exp(2.0 * log_sigma) / cfg.prior_sigma ** 2 - 1.0
    return elbo, g_mu, g_ls


def fit(ds: Dataset, config: TrainConfig = None, rng_seed: int = 0,
        *, track_every: int = 0):
    """Fit the variational posterior by Adam ascent on the ELBO.

    Deterministic given ``rng_seed``. With ``track_every > 0`` also
    returns a list of (epoch, elbo) pairs evaluated with a frozen set of
    evaluation draws.
    """
    if ds.bins is None:
        raise ValidationError("dataset has no time bins attached")
    cfg = config or TrainConfig()
    bins = ds.bins
    n_bins = bins.n
    X = ds.x
    label_bins = bins_of(ds.t_obs, bins)
    censored = ds.delta_obs == 0
    D = (n_bins - 1) * (ds.dim + 1)

    rng = np.random.default_rng(rng_seed)
    mu = 0.01 * rng.normal(size=D)
    log_sigma = np.full(D, float(cfg.init_log_sigma))
    eval_eps = rng.normal(size=(8, D))  # frozen draws for tracking

    m_mu = np.zeros(D); v_mu = np.zeros(D)
    m_ls = np.zeros(D); v_ls = np.zeros(D)
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    history = []

    def tracked_elbo():
        e, _, _ = elbo_and_grads(mu, log_sigma, eval_eps, X, label_bins,
                                 censored, n_bins, cfg)
        return e

    if track_every:
        history.append((0, tracked_elbo()))

    for epoch in range(1, cfg.epochs + 1):
        eps = rng.normal(size=(cfg.mc_samples, D))
        elbo, g_mu, g_ls = elbo_and_grads(mu, log_sigma, eps, X, label_bins,
                                          censored, n_bins, cfg)
        if not np.isfinite(elbo):
            raise TrainingError(
                f"ELBO diverged at epoch {epoch}: elbo={elbo}, "
                f"|mu|={np.linalg.norm(mu):.3g}, "
                f"max sigma={np.exp(log_sigma).max():.3g}")
        t = epoch
        for g, m_, v_, param in ((g_mu, m_mu, v_mu, mu),
                                 (g_ls, m_ls, v_ls, log_sigma)):
            m_ *= beta1; m_ += (1 - beta1) * g
            v_ *= beta2; v_ += (1 - beta2) * g * g
            mhat = m_ / (1 - beta1 ** t)
            vhat = v_ / (1 - beta2 ** t)
            param += cfg.lr * mhat / (np.sqrt(vhat) + adam_eps)
        if track_every and epoch % track_every == 0:
            history.append((epoch, tracked_elbo()))

    q = VariationalPosterior(mu, log_sigma, n_bins, ds.dim, seed=rng_seed)
    if track_every:
        return q, history
    return q


class PosteriorSampleSet:
    """Stack of parameter draws from the variational posterior."""

    def __init__(self, W: np.ndarray, b: np.ndarray, seed: int = 0):
        self.W = np.asarray(W, dtype=float)   # (S, n_bins-1, dim)
        self.b = np.asarray(b, dtype=float)   # (S, n_bins-1)
        self.seed = seed
        if self.W.ndim != 3 or self.b.shape != self.W.shape[:2]:
            raise ValidationError("inconsistent sample stack shapes")

    def __len__(self) -> int:
        return self.W.shape[0]

    def __getitem__(self, j: int) -> MtlrParams:
        return MtlrParams(self.W[j], self.b[j])

    @property
    def n_bins(self) -> int:
        return self.W.shape[1] + 1


def sample_posterior(q: VariationalPosterior, s_post: int,
                     seed: int = 0) -> PosteriorSampleSet:
    """Draw ``s_post`` reparameterized samples; deterministic given seed."""
    if s_post < 1:
        raise ValidationError("need at least one posterior sample")
    rng = np.random.default_rng(seed)
    eps = rng.normal(size=(s_post, q.mu.size))
    theta = q.mu[None, :] + q.sigma[None, :] * eps
    k = (q.n_bins - 1) * q.feature_dim
    W = theta[:, :k].reshape(s_post, q.n_bins - 1, q.feature_dim)
    b = theta[:, k:]
    return PosteriorSampleSet(W, b, seed=seed)


def predict(samples: PosteriorSampleSet, xs: np.ndarray,
            bins: TimeBins) -> np.ndarray:
    """Bin-probability tensor of shape (instances, samples, bins).

    Every (instance, sample) row is a simplex; tail sums give the ISD.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if bins.n != samples.n_bins:
        raise ValidationError("bin count mismatch between samples and bins")
    # f[i, s, j] = W[s, j] . x[i] + b[s, j]
    f = np.einsum("id,sjd->isj", xs, samples.W) + samples.b[None, :, :]
    scores = np.zeros((xs.shape[0], len(samples), bins.n))
    scores[:, :, :-1] = np.cumsum(f[:, :, ::-1], axis=2)[:, :, ::-1]
    return _softmax(scores)


def survival_curve(prob_row: np.ndarray) -> np.ndarray:
    """Survival values at each bin start: S_j = sum_{r >= j} p_r."""
    return np.cumsum(prob_row[..., ::-1], axis=-1)[..., ::-1]
