"""Survival data model: CSV ingestion, quantile time bins, artificial
censoring, train/test splitting and synthetic data generation.

Conventions used throughout the package:

* times are in years, ``t >= 0``;
* an event indicator of 1 means the event was observed at that time, 0
  means the instance is right-censored there (the time is a lower bound);
* bin indices are 0-based: bin ``j`` covers ``[edges[j-1], edges[j])``
  with an implicit left edge of 0 and a final half-open bin to infinity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateBinsError,
    ParseError,
    SchemaError,
    ValidationError,
)

STD_FLOOR = 1e-12  # constant columns standardize to zero instead of inf


@dataclass
class SurvivalInstance:
    """One row of a survival dataset.

    ``t_true``/``delta_true`` are what the probing oracle knows;
    ``t_obs``/``delta_obs`` are what the learner sees. The invariants
    ``t_obs <= t_true`` and (``delta_obs == 1`` implies ``t_obs == t_true``)
    hold at all times.
    """

    id: int
    x: np.ndarray
    t_true: float
    delta_true: int
    t_obs: float
    delta_obs: int
    cost: float = 1.0


@dataclass(frozen=True)
class TimeBins:
    """Ordered interior boundaries of the discrete time bins.

    ``n`` bins need ``n - 1`` strictly increasing positive edges; the
    first bin starts at 0 and the last one is open to infinity.
    """

    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        object.__setattr__(self, "edges", edges)
        if edges.ndim != 1 or edges.size < 1:
            raise ValidationError("need at least one bin edge")
        if np.any(edges <= 0):
            raise ValidationError("bin edges must be positive")
        if np.any(np.diff(edges) <= 0):
            raise ValidationError("bin edges must be strictly increasing")

    @property
    def n(self) -> int:
        return self.edges.size + 1

    def midpoint(self, j: int) -> float:
        """Midpoint of bin ``j``; the open last bin reuses the previous
        bin's width (a single-edge axis reuses the first edge)."""
        starts, ends = self.starts_ends()
        return 0.5 * (starts[j] + ends[j])

    def starts_ends(self) -> tuple[np.ndarray, np.ndarray]:
        """Bin start/end arrays with a virtual finite end for the last bin."""
        e = self.edges
        starts = np.concatenate(([0.0], e))
        last_width = e[-1] - e[-2] if e.size >= 2 else e[0]
        ends = np.concatenate((e, [e[-1] + last_width]))
        return starts, ends


class Dataset:
    """Columnar survival dataset.

    Covariates and labels live in numpy arrays; ``instances`` material-
    izes :class:`SurvivalInstance` views. All operations besides oracle
    probing treat a dataset as read-only.
    """

    def __init__(self, x, t_true, delta_true, t_obs=None, delta_obs=None,
                 cost=None, bins=None, feature_names=None, ids=None):
        self.x = np.asarray(x, dtype=float)
        self.t_true = np.asarray(t_true, dtype=float)
        self.delta_true = np.asarray(delta_true, dtype=int)
        self.t_obs = (self.t_true.copy() if t_obs is None
                      else np.asarray(t_obs, dtype=float))
        self.delta_obs = (self.delta_true.copy() if delta_obs is None
                          else np.asarray(delta_obs, dtype=int))
        self.cost = (np.ones(len(self.t_true)) if cost is None
                     else np.asarray(cost, dtype=float))
        self.bins = bins
        self.feature_names = (list(feature_names) if feature_names is not None
                              else [f"x{i}" for i in range(self.x.shape[1])])
        self.ids = (np.arange(len(self.t_true)) if ids is None
                    else np.asarray(ids, dtype=int))
        self._validate()

    def _validate(self):
        n = len(self.t_true)
        if self.x.ndim != 2 or self.x.shape[0] != n:
            raise ValidationError("covariate matrix shape mismatch")
        for name, arr in (("t_true", self.t_true), ("t_obs", self.t_obs),
                          ("delta_true", self.delta_true),
                          ("delta_obs", self.delta_obs), ("cost", self.cost)):
            if len(arr) != n:
                raise ValidationError(f"{name} length mismatch")
        if np.any(self.t_true < 0) or np.any(self.t_obs < 0):
            raise ValidationError("times must be non-negative")
        if np.any(self.cost <= 0):
            raise ValidationError("costs must be positive")
        if np.any(self.t_obs > self.t_true + 1e-12):
            raise ValidationError("t_obs must not exceed t_true")
        uncensored = self.delta_obs == 1
        if np.any(self.t_obs[uncensored] != self.t_true[uncensored]):
            raise ValidationError("delta_obs=1 requires t_obs == t_true")
        if np.any((self.delta_obs == 1) & (self.delta_true == 0)):
            raise ValidationError("delta_obs=1 requires delta_true=1")

    def __len__(self) -> int:
        return len(self.t_true)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def instances(self) -> list[SurvivalInstance]:
        return [self.instance(i) for i in range(len(self))]

    def instance(self, i: int) -> SurvivalInstance:
        return SurvivalInstance(
            id=int(self.ids[i]), x=self.x[i],
            t_true=float(self.t_true[i]), delta_true=int(self.delta_true[i]),
            t_obs=float(self.t_obs[i]), delta_obs=int(self.delta_obs[i]),
            cost=float(self.cost[i]))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.x[idx], self.t_true[idx], self.delta_true[idx],
                       self.t_obs[idx], self.delta_obs[idx], self.cost[idx],
                       bins=self.bins, feature_names=self.feature_names,
                       ids=self.ids[idx])

    def copy(self) -> "Dataset":
        return Dataset(self.x.copy(), self.t_true.copy(),
                       self.delta_true.copy(), self.t_obs.copy(),
                       self.delta_obs.copy(), self.cost.copy(),
                       bins=self.bins, feature_names=self.feature_names,
                       ids=self.ids.copy())

    def censored_indices(self) -> np.ndarray:
        return np.flatnonzero(self.delta_obs == 0)

    def to_csv(self, path) -> None:
        """Write the learner-visible schema plus audit columns."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "event", "cost"] + self.feature_names
                            + ["t_true", "delta_true"])
            for i in range(len(self)):
                writer.writerow(
                    [repr(float(self.t_obs[i])), int(self.delta_obs[i]),
                     repr(float(self.cost[i]))]
                    + [repr(float(v)) for v in self.x[i]]
                    + [repr(float(self.t_true[i])), int(self.delta_true[i])])


def standardize(x: np.ndarray) -> np.ndarray:
    """Z-score columns; constant columns map to zero via a std floor."""
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    return (x - mu) / np.maximum(sd, STD_FLOOR)


def load_csv(path, schema=None) -> Dataset:
    """Load a survival CSV.

    ``schema`` maps the roles ``time``/``event``/``cost`` to column
    names (cost optional, defaults to 1.0 per instance). Every other
    numeric column is a feature; features are z-scored on load.
    """
    schema = dict(schema or {})
    time_col = schema.get("time", "time")
    event_col = schema.get("event", "event")
    cost_col = schema.get("cost", "cost")

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)

    for col in (time_col, event_col):
        if col not in header:
            raise SchemaError(f"{path}: missing required column {col!r}")
    has_cost = cost_col in header
    special = {time_col, event_col} | ({cost_col} if has_cost else set())
    feature_names = [c for c in header if c not in special]
    col_idx = {c: header.index(c) for c in header}

    def parse(row_i, row, col):
        try:
            return float(row[col_idx[col]])
        except (ValueError, IndexError):
            raise ParseError(
                f"{path}: row {row_i}: cannot parse column {col!r}") from None

    times, events, costs, feats = [], [], [], []
    for i, row in enumerate(rows):
        t = parse(i, row, time_col)
        if t < 0:
            raise ValidationError(f"{path}: row {i}: negative time {t}")
        times.append(t)
        events.append(int(parse(i, row, event_col)))
        costs.append(parse(i, row, cost_col) if has_cost else 1.0)
        feats.append([parse(i, row, c) for c in feature_names])

    x = standardize(np.asarray(feats, dtype=float).reshape(len(rows), -1))
    return Dataset(x, times, events, cost=costs, feature_names=feature_names)


def make_bins(event_times, n: int) -> TimeBins:
    """Quantile bins over uncensored event times.

    Edges sit at the j/n quantiles for j = 1..n-1. Tied quantiles are
    nudged upward by a minimal epsilon so the edges stay strictly
    increasing; fewer distinct times than bins is an error.
    """
    times = np.asarray(event_times, dtype=float)
    if n < 2:
        raise ValidationError("need at least two bins")
    if times.size == 0:
        raise ValidationError("no event times to bin")
    if np.unique(times).size < n:
        raise DegenerateBinsError(
            f"{np.unique(times).size} distinct event times cannot fill "
            f"{n} bins")
    edges = np.quantile(times, np.arange(1, n) / n)
    for j in range(1, edges.size):
        if edges[j] <= edges[j - 1]:
            edges[j] = np.nextafter(edges[j - 1], np.inf)
    if edges[0] <= 0:
        edges[0] = np.nextafter(0.0, np.inf)
        for j in range(1, edges.size):
            if edges[j] <= edges[j - 1]:
                edges[j] = np.nextafter(edges[j - 1], np.inf)
    return TimeBins(edges)


def bin_of(t: float, bins: TimeBins) -> int:
    """0-based index of the bin containing ``t`` (total on t >= 0)."""
    if t < 0:
        raise ValidationError("time must be non-negative")
    return int(np.searchsorted(bins.edges, t, side="right"))


def bins_of(ts, bins: TimeBins) -> np.ndarray:
    """Vectorized :func:`bin_of`."""
    ts = np.asarray(ts, dtype=float)
    if np.any(ts < 0):
        raise ValidationError("times must be non-negative")
    return np.searchsorted(bins.edges, ts, side="right")


def artificial_censor(ds: Dataset, rng_seed: int, *,
                      censored_per_uncensored: float = 9.0) -> Dataset:
    """Re-label a pool so censored:uncensored matches the given ratio.

    Instances chosen to stay uncensored keep their original labels (and
    must be true events); every other instance gets ``t_obs`` drawn
    uniformly from (0, t_true) with ``delta_obs = 0`` — already-censored
    instances are censored further back.
    """
    rng = np.random.default_rng(rng_seed)
    n = len(ds)
    n_unc = int(round(n / (1.0 + censored_per_uncensored)))
    true_events = np.flatnonzero(ds.delta_true == 1)
    if n_unc > true_events.size:
        raise ConfigurationError(
            f"ratio needs {n_unc} uncensored instances but only "
            f"{true_events.size} true events exist")
    keep = rng.choice(true_events, size=n_unc, replace=False)
    keep_mask = np.zeros(n, dtype=bool)
    keep_mask[keep] = True

    out = ds.copy()
    censor = ~keep_mask
    u = rng.uniform(0.0, 1.0, size=int(censor.sum()))
    out.t_obs[censor] = u * ds.t_true[censor]
    out.delta_obs[censor] = 0
    out.t_obs[keep_mask] = ds.t_true[keep_mask]
    out.delta_obs[keep_mask] = 1
    return out


def synth_generate(n: int, dim: int, rng_seed: int, *,
                   censor_rate: float = 0.3,
                   signal: float = 1.0) -> Dataset:
    """Synthetic survival data with non-informative censoring.

    Covariates are standard normal; the event time is exponential with
    rate ``exp(beta . x)`` for a fixed random ``beta`` (scaled so the
    linear predictor has standard deviation ``signal``); the censoring
    time is an independent exponential with rate ``censor_rate`` (0
    disables censoring).
    """
    if n < 1 or dim < 1:
        raise ValidationError("need n >= 1 and dim >= 1")
    rng = np.random.default_rng(rng_seed)
    beta = rng.normal(size=dim)
    beta *= signal / max(np.linalg.norm(beta), 1e-12)
    x = rng.normal(size=(n, dim))
    rate = np.exp(x @ beta)
    t_event = rng.exponential(1.0 / rate)
    if censor_rate > 0:
        t_cens = rng.exponential(1.0 / censor_rate, size=n)
    else:
        t_cens = np.full(n, np.inf)
    t_true = np.minimum(t_event, t_cens)
    delta_true = (t_event <= t_cens).astype(int)
    return Dataset(x, t_true, delta_true)


def split_train_test(ds: Dataset, test_fraction: float = 0.3,
                     rng_seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified split by true event status, preserving the censoring
    proportion on both sides."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(rng_seed)
    test_idx = []
    for value in (0, 1):
        stratum = np.flatnonzero(ds.delta_true == value)
        k = int(round(stratum.size * test_fraction))
        test_idx.append(rng.choice(stratum, size=k, replace=False))
    test_mask = np.zeros(len(ds), dtype=bool)
    test_mask[np.concatenate(test_idx)] = True
    return ds.subset(np.flatnonzero(~test_mask)), ds.subset(np.flatnonzero(test_mask))
