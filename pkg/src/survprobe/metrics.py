"""Survival evaluation: Kaplan-Meier, MAE with pseudo-observations,
Harrell's concordance index, IPCW integrated Brier score, and the
confidence-interval / t-test helpers used by the result tables.

Point predictions are median survival times read off the ISD with
linear interpolation inside the crossing bin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import TimeBins
from .errors import MetricUndefinedError, ValidationError

CENSOR_WEIGHT_FLOOR = 1e-3


@dataclass
class KmCurve:
    """Product-limit survival curve as a right-continuous step function."""

    times: np.ndarray  # distinct observed times, sorted
    surv: np.ndarray   # S(t) just after each time

    def evaluate(self, t, left: bool = False) -> np.ndarray:
        """S(t); with ``left`` the left limit S(t-)."""
        side = "left" if left else "right"
        idx = np.searchsorted(self.times, t, side=side)
        padded = np.concatenate(([1.0], self.surv))
        return padded[idx]


def km_fit(times, events) -> KmCurve:
    """Kaplan-Meier estimator; events=1 are deaths, 0 right-censorings."""
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=int)
    if t.size == 0:
        raise ValidationError("empty sample")
    if np.any(t < 0):
        raise ValidationError("times must be non-negative")
    order = np.argsort(t, kind="stable")
    t, e = t[order], e[order]
    uniq = np.unique(t)
    surv = np.empty(uniq.size)
    s = 1.0
    at_risk = t.size
    for i, ut in enumerate(uniq):
        mask = t == ut
        deaths = int(e[mask].sum())
        if deaths and at_risk > 0:
            s *= 1.0 - deaths / at_risk
        surv[i] = s
        at_risk -= int(mask.sum())
    return KmCurve(uniq, surv)


def rmst(curve: KmCurve, tau: float) -> float:
    """Restricted mean survival time: integral of S(t) on [0, tau]."""
    if tau < 0:
        raise ValidationError("tau must be non-negative")
    knots = np.concatenate(([0.0], curve.times, [np.inf]))
    values = np.concatenate(([1.0], curve.surv))
    total = 0.0
    for i in range(values.size):
        lo, hi = knots[i], min(knots[i + 1], tau)
        if hi <= lo:
            break
        total += values[i] * (hi - lo)
    return total


def survival_knots(prob_row: np.ndarray,
                   bins: TimeBins) -> tuple[np.ndarray, np.ndarray]:
    """ISD evaluation points: S(0)=1 and the tail mass at each edge."""
    p = np.asarray(prob_row, dtype=float)
    tails = np.cumsum(p[::-1])[::-1]
    ts = np.concatenate(([0.0], bins.edges))
    vs = np.concatenate(([1.0], tails[1:]))
    return ts, vs


def predict_time(ts: np.ndarray, vs: np.ndarray) -> float:
    """Median crossing time of a survival curve (linear interpolation).

    A curve that never reaches 0.5 predicts the midpoint of a virtual
    final bin whose width repeats the last knot spacing.
    """
    ts = np.asarray(ts, dtype=float)
    vs = np.asarray(vs, dtype=float)
    if vs[0] <= 0.5:
        return float(ts[0])
    below = np.flatnonzero(vs <= 0.5)
    if below.size == 0:
        if ts.size < 2:
            return float(ts[-1])
        return float(ts[-1] + 0.5 * (ts[-1] - ts[-2]))
    i = int(below[0])
    frac = (vs[i - 1] - 0.5) / (vs[i - 1] - vs[i])
    return float(ts[i - 1] + frac * (ts[i] - ts[i - 1]))


def median_from_probs(prob_row: np.ndarray, bins: TimeBins) -> float:
    return predict_time(*survival_knots(prob_row, bins))


def pseudo_observations(times, events, *, clamp_at_zero: bool = True
                        ) -> np.ndarray:
    """Jackknife pseudo-observations of the restricted mean survival time.

    e_i = N * theta - (N-1) * theta_(-i), with theta the RMST of the
    sample KM curve restricted at the largest observed time. Values are
    clamped at zero by default (leave-one-out RMSTs can overshoot).
    Returned for every instance; callers typically use them for the
    censored ones only.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=int)
    n = t.size
    if n < 2:
        raise MetricUndefinedError(
            "pseudo-observations need at least two instances")
    tau = float(t.max())
    theta = rmst(km_fit(t, e), tau)
    out = np.empty(n)
    idx = np.arange(n)
    for i in range(n):
        keep = idx != i
        theta_i = rmst(km_fit(t[keep], e[keep]), tau)
        out[i] = n * theta - (n - 1) * theta_i
    if clamp_at_zero:
        np.maximum(out, 0.0, out=out)
    return out


def mae_po(pred_times, times, events) -> float:
    """MAE with censored targets replaced by KM pseudo-observations."""
    pred = np.asarray(pred_times, dtype=float)
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=int)
    if t.size == 0:
        raise MetricUndefinedError("empty test set")
    targets = t.astype(float).copy()
    censored = e == 0
    if censored.any():
        if t.size == 1:
            raise MetricUndefinedError(
                "single censored instance has no pseudo-observation")
        targets[censored] = pseudo_observations(t, e)[censored]
    return float(np.abs(targets - pred).mean())


def mae_uncensored(pred_times, times, events) -> float:
    """Plain MAE over the uncensored test instances (nan if none)."""
    e = np.asarray(events, dtype=int)
    if not np.any(e == 1):
        return float("nan")
    pred = np.asarray(pred_times, dtype=float)
    t = np.asarray(times, dtype=float)
    return float(np.abs(t[e == 1] - pred[e == 1]).mean())


def c_index(pred_times, times, events) -> float:
    """Harrell's concordance over comparable pairs; prediction ties
    count one half."""
    pred = np.asarray(pred_times, dtype=float)
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=int)
    comparable = (e[:, None] == 1) & (t[:, None] < t[None, :])
    n_pairs = int(comparable.sum())
    if n_pairs == 0:
        raise MetricUndefinedError("no comparable pairs")
    correct = pred[:, None] < pred[None, :]
    ties = pred[:, None] == pred[None, :]
    good = correct[comparable].sum() + 0.5 * ties[comparable].sum()
    return float(good / n_pairs)


def default_ibs_grid(times, n_points: int = 100) -> np.ndarray:
    """100 equally spaced points up to the 95th percentile of times."""
    t = np.asarray(times, dtype=float)
    return np.linspace(0.0, float(np.quantile(t, 0.95)), n_points)


def integrated_brier(surv_on_grid, times, events, grid,
                     weight_floor: float = CENSOR_WEIGHT_FLOOR) -> float:
    """IPCW Brier score averaged over the grid by the trapezoid rule.

    ``surv_on_grid[i, g]`` is instance i's predicted survival at
    ``grid[g]``. Censoring weights come from the KM curve of the
    censoring distribution, floored at ``weight_floor``.
    """
    survs = np.atleast_2d(np.asarray(surv_on_grid, dtype=float))
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=int)
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2 or grid[-1] <= grid[0]:
        raise ValidationError("grid needs at least two increasing points")
    if survs.shape != (t.size, grid.size):
        raise ValidationError("surv_on_grid shape mismatch")

    g_curve = km_fit(t, 1 - e)  # KM of the censoring distribution
    g_at_event = np.maximum(g_curve.evaluate(t, left=True), weight_floor)
    g_at_grid = np.maximum(g_curve.evaluate(grid), weight_floor)

    had_event = (e == 1)[:, None] & (t[:, None] <= grid[None, :])
    still_at_risk = t[:, None] > grid[None, :]
    bs_terms = (had_event * survs ** 2 / g_at_event[:, None]
                + still_at_risk * (1.0 - survs) ** 2 / g_at_grid[None, :])
    bs = bs_terms.mean(axis=0)
    return float(np.trapezoid(bs, grid) / (grid[-1] - grid[0]))


def ci95(values) -> float:
    """Half-width of the normal-approximation 95% confidence interval."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise MetricUndefinedError("need at least two values for a CI")
    return float(1.96 * v.std(ddof=1) / np.sqrt(v.size))


def two_sample_t(a, b, alternative: str = "two-sided") -> tuple[float, float]:
    """Welch's t-test; degenerate equal-constant samples give p = 1.

    ``alternative='less'`` tests mean(a) < mean(b).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise MetricUndefinedError("need at least two values per sample")
    if a.std(ddof=1) == 0.0 and b.std(ddof=1) == 0.0:
        if a.mean() == b.mean():
            return 0.0, 1.0
        t_stat = float("-inf") if a.mean() < b.mean() else float("inf")
        if alternative == "less":
            return t_stat, 0.0 if t_stat < 0 else 1.0
        if alternative == "greater":
            return t_stat, 0.0 if t_stat > 0 else 1.0
        return t_stat, 0.0
    res = stats.ttest_ind(a, b, equal_var=False, alternative=alternative)
    return float(res.statistic), float(res.pvalue)


@dataclass
class MetricReport:
    """Aggregated evaluation of one experiment cell."""

    mae_po: float
    mae_uncensored: float
    c_index: float
    ibs: float
    ci: dict = field(default_factory=dict)  # metric name -> 95% half-width

    @classmethod
    def from_repetitions(cls, values: dict) -> "MetricReport":
        """Aggregate per-repetition metric arrays into mean +- ci95."""
        means = {k: float(np.mean(v)) for k, v in values.items()}
        half = {k: ci95(v) if len(v) > 1 else 0.0 for k, v in values.items()}
        return cls(mae_po=means["mae_po"],
                   mae_uncensored=means["mae_uncensored"],
                   c_index=means["c_index"], ibs=means["ibs"], ci=half)
