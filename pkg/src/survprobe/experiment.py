"""Config-driven experiment harness.

One cell = (method, budget, seed): build a 9:1-style censored pool,
fit the Bayesian MTLR, select a probe batch with the method under the
budget, probe the oracle once, refit on the enriched pool and evaluate
on the held-out test set with repeated posterior predictions.

RNG streams are derived from named stages so that results are
reproducible under any execution order, and so that every stream a
method cannot influence (pool construction, costs, fits, evaluation) is
method-independent: at budget 0 all methods therefore produce
bit-identical reports.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import acquisition as acq
from .data import (
    Dataset,
    load_csv,
    make_bins,
    split_train_test,
    synth_generate,
)
from .errors import ConfigurationError, ValidationError
from .metrics import (
    MetricReport,
    c_index,
    default_ibs_grid,
    integrated_brier,
    km_fit,
    mae_uncensored,
    predict_time,
    pseudo_observations,
    survival_knots,
    two_sample_t,
)
from .model import TrainConfig, fit, predict, sample_posterior
from .oracle import BudgetLedger, probe_batch
from .selection import fill_budget, greedy_ratio

METHODS = ("bb_surv", "batchbald", "entropy", "variance", "cth", "cfb",
           "mctm", "random", "cbald", "ideal")

_STAGE_POOL, _STAGE_COSTS, _STAGE_FIT, _STAGE_ACQ_SAMPLES, \
    _STAGE_SELECT, _STAGE_REFIT, _STAGE_EVAL = range(7)


@dataclass
class ExperimentConfig:
    dataset: str = "synthetic"          # path to a CSV or "synthetic"
    n_uncensored: int = 100
    n_censored: int = 900
    budgets: tuple = (0.0, 1.0, 5.0, 10.0, 15.0, 20.0)
    probe_depth: float = 10.0
    cost_mode: str = "uniform"          # uniform | random:lo:hi | scaled:f
    methods: tuple = METHODS
    seeds: tuple = (0,)
    n_bins: int = 10
    s_post: int = 50                    # posterior samples for acquisition
    eval_repetitions: int = 40
    epochs: int = 5000
    lr: float = 1e-2
    prior_sigma: float = 1.0
    mc_samples: int = 1                 # gradient draws per training step
    spike_slab: bool = False
    test_fraction: float = 0.3
    data_seed: int = 7
    synth_n: int = 4000
    synth_dim: int = 10
    synth_censor_rate: float = 0.3
    synth_signal: float = 1.0
    mi_max_configs: int = acq.EXACT_CONFIG_LIMIT
    mi_draws: int = acq.MC_CONFIG_DRAWS
    cbald_weight: float = 1.5
    ideal_d: float = 1.0
    cfb_pca_dims: int = 2
    cfb_clusters: int = 5
    charge_uncensored: bool = True
    pool_per_seed: bool = True          # False: one shared pool, seeds only
                                        # vary fits/selection/evaluation
    cell_time_cap: float = 0.0          # seconds per cell; 0 disables

    def validate(self) -> None:
        if not self.methods:
            raise ConfigurationError("need at least one method")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigurationError(f"unknown methods: {sorted(unknown)}")
        if any(b < 0 for b in self.budgets):
            raise ConfigurationError("budgets must be non-negative")
        if self.probe_depth < 0:
            raise ConfigurationError("probe depth must be non-negative")
        parse_cost_mode(self.cost_mode)


def parse_cost_mode(mode: str):
    """Normalize ``uniform`` / ``random:lo:hi`` / ``scaled:f``."""
    parts = str(mode).split(":")
    kind = parts[0]
    if kind == "uniform":
        return ("uniform",)
    if kind == "random":
        if len(parts) != 3:
            raise ConfigurationError("random mode needs lo and hi")
        lo, hi = float(parts[1]), float(parts[2])
        if lo <= 0 or hi < lo:
            raise ValidationError(f"invalid cost range ({lo}, {hi})")
        return ("random", lo, hi)
    if kind == "scaled":
        if len(parts) != 2:
            raise ConfigurationError("scaled mode needs a factor")
        f = float(parts[1])
        if f <= 0:
            raise ValidationError("scale factor must be positive")
        return ("scaled", f)
    raise ConfigurationError(f"unknown cost mode {mode!r}")


def assign_costs(ds: Dataset, mode: str, rng_seed: int = 0) -> Dataset:
    """Return a copy of ``ds`` with costs set per the cost mode."""
    parsed = parse_cost_mode(mode)
    out = ds.copy()
    if parsed[0] == "uniform":
        out.cost[:] = 1.0
    elif parsed[0] == "random":
        rng = np.random.default_rng(rng_seed)
        out.cost[:] = rng.uniform(parsed[1], parsed[2], size=len(ds))
    else:
        out.cost[:] = ds.cost * parsed[1]
    return out


def _stage_seed(base_seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(entropy=int(base_seed),
                                spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1)[0])


def build_pool(train: Dataset, n_uncensored: int, n_censored: int,
               rng_seed: int) -> Dataset:
    """Draw a pool with the requested composition and censor it.

    Kept-uncensored instances must be true events; every pool-censored
    instance gets a uniform time in (0, t_true) so censoring stays
    non-informative.
    """
    rng = np.random.default_rng(rng_seed)
    events = np.flatnonzero(train.delta_true == 1)
    if events.size < n_uncensored:
        raise ConfigurationError(
            f"train split has {events.size} events, need {n_uncensored}")
    if len(train) < n_uncensored + n_censored:
        raise ConfigurationError("train split smaller than requested pool")
    keep = rng.choice(events, size=n_uncensored, replace=False)
    rest = np.setdiff1d(np.arange(len(train)), keep)
    cens = rng.choice(rest, size=n_censored, replace=False)

    pool = train.subset(np.concatenate([keep, cens]))
    m = n_uncensored
    pool.t_obs[:m] = pool.t_true[:m]
    pool.delta_obs[:m] = 1
    u = rng.uniform(size=n_censored)
    pool.t_obs[m:] = u * pool.t_true[m:]
    pool.delta_obs[m:] = 0
    pool.ids = np.arange(len(pool))
    return pool


# -- selection dispatch ------------------------------------------------------


def _ranked_fill(order, pool: Dataset, budget: float):
    return fill_budget(order, pool.cost, budget)[0]


def select_batch(method: str, pool: Dataset, cens_rows, mean_rows,
                 candidates: np.ndarray, budget: float, probe_depth: float,
                 cfg: ExperimentConfig, rng_seed: int) -> list[int]:
    """Pool positions to probe, total cost within budget.

    ``cens_rows`` is the per-candidate (S, n) p_cens tensor and
    ``mean_rows`` its mean over samples, both aligned with
    ``candidates``.
    """
    bins = pool.bins
    costs = pool.cost

    if method in ("bb_surv", "batchbald"):
        if method == "bb_surv":
            rows = []
            for pos, i in enumerate(candidates):
                c = float(pool.t_obs[i])
                j0 = int(np.searchsorted(bins.edges, c, side="right"))
                finals = [acq.to_p_final(
                    acq.CensoredProbRow(cens_rows[pos][s], j0), c,
                    probe_depth, bins).probs
                    for s in range(cens_rows[pos].shape[0])]
                rows.append(np.stack(finals))
        else:
            rows = [cens_rows[pos] for pos in range(len(candidates))]
        scorer = acq.MutualInformationScorer(
            rows, max_configs=cfg.mi_max_configs, n_draws=cfg.mi_draws,
            rng_seed=rng_seed)
        result = greedy_ratio(range(len(candidates)), budget, scorer,
                              costs[candidates])
        return [int(candidates[i]) for i in result.batch]

    if method == "entropy":
        scores = acq.score_entropy(mean_rows)
        order = candidates[np.argsort(-scores, kind="stable")]
    elif method == "variance":
        scores = acq.score_variance(mean_rows)
        order = candidates[np.argsort(-scores, kind="stable")]
    elif method == "cth":
        scores = acq.score_cth(mean_rows, pool.t_obs[candidates],
                               probe_depth, bins)
        order = candidates[np.argsort(scores, kind="stable")]
    elif method == "mctm":
        scores = acq.score_mctm(mean_rows)
        order = candidates[np.argsort(scores, kind="stable")]
    elif method == "cbald":
        scores = acq.score_cbald(cens_rows, cfg.cbald_weight)
        order = candidates[np.argsort(-scores, kind="stable")]
    elif method == "cfb":
        order = acq.score_cfb(pool, cfg.cfb_pca_dims, cfg.cfb_clusters,
                              rng_seed)
    elif method == "random":
        order = acq.score_random(pool, rng_seed)
    elif method == "ideal":
        return _select_ideal(pool, cens_rows, candidates, budget, cfg)
    else:
        raise ConfigurationError(f"unknown method {method!r}")
    return _ranked_fill(order, pool, budget)


def _select_ideal(pool: Dataset, cens_rows, candidates, budget, cfg):
    """Sequential inverse-distance selection: re-score after each pick."""
    queried = pool.x[pool.delta_obs == 1]
    remaining = list(range(len(candidates)))
    chosen: list[int] = []
    spent = 0.0
    while True:
        affordable = [r for r in remaining
                      if pool.cost[candidates[r]] <= budget - spent + 1e-12]
        if not affordable:
            break
        scores = acq.score_ideal(pool.x[candidates[affordable]],
                                 cens_rows[affordable], queried, cfg.ideal_d)
        pick = affordable[int(np.argmax(scores))]
        pos = int(candidates[pick])
        chosen.append(pos)
        spent += float(pool.cost[pos])
        queried = np.vstack([queried, pool.x[pos]])
        remaining.remove(pick)
    return chosen


# -- evaluation --------------------------------------------------------------


@dataclass
class _TestContext:
    """Label-only quantities shared by every evaluation repetition."""

    targets: np.ndarray       # event time or pseudo-observation per instance
    times: np.ndarray
    events: np.ndarray
    grid: np.ndarray
    uncensored: np.ndarray


def make_test_context(test: Dataset) -> _TestContext:
    t, e = test.t_obs, test.delta_obs
    targets = t.astype(float).copy()
    cens = e == 0
    if cens.any():
        targets[cens] = pseudo_observations(t, e)[cens]
    return _TestContext(targets=targets, times=t, events=e,
                        grid=default_ibs_grid(t), uncensored=e == 1)


def evaluate_repetitions(q, test: Dataset, ctx: _TestContext,
                         repetitions: int, rng_seed: int) -> dict:
    """Per-repetition metric values from single-draw predictions."""
    samples = sample_posterior(q, repetitions, rng_seed)
    probs = predict(samples, test.x, test.bins)  # (N, R, n)
    values = {"mae_po": [], "mae_uncensored": [], "c_index": [], "ibs": []}
    n_test = len(test)
    for r in range(repetitions):
        preds = np.empty(n_test)
        surv_grid = np.empty((n_test, ctx.grid.size))
        for i in range(n_test):
            ts, vs = survival_knots(probs[i, r], test.bins)
            preds[i] = predict_time(ts, vs)
            surv_grid[i] = np.interp(ctx.grid, ts, vs)
        values["mae_po"].append(
            float(np.abs(ctx.targets - preds).mean()))
        values["mae_uncensored"].append(
            mae_uncensored(preds, ctx.times, ctx.events))
        values["c_index"].append(c_index(preds, ctx.times, ctx.events))
        values["ibs"].append(
            integrated_brier(surv_grid, ctx.times, ctx.events, ctx.grid))
    return values


# -- the sweep ---------------------------------------------------------------


@dataclass
class CellResult:
    method: str
    budget: float
    seed: int
    probe_depth: float
    cost_mode: str
    report: MetricReport | None = None
    spent: float = 0.0
    batch_size: int = 0
    error: str | None = None


@dataclass
class ResultTable:
    config: ExperimentConfig
    cells: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return all(c.error is None for c in self.cells)

    def seed_values(self, method: str, budget: float,
                    metric: str = "mae_po") -> np.ndarray:
        vals = [getattr(c.report, metric) for c in self.cells
                if c.method == method and c.budget == budget
                and c.report is not None]
        return np.asarray(vals, dtype=float)

    def to_json(self) -> str:
        cfg = asdict(self.config)
        cells = []
        for c in self.cells:
            d = asdict(c)
            cells.append(d)
        return json.dumps({"config": cfg, "cells": cells}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ResultTable":
        d = json.loads(text)
        cfg_d = d["config"]
        for key in ("budgets", "methods", "seeds"):
            cfg_d[key] = tuple(cfg_d[key])
        cfg = ExperimentConfig(**cfg_d)
        cells = []
        for cd in d["cells"]:
            rep = cd.pop("report")
            cell = CellResult(**cd)
            if rep is not None:
                cell.report = MetricReport(**rep)
            cells.append(cell)
        return cls(cfg, cells)


def _load_base_data(cfg: ExperimentConfig) -> Dataset:
    if cfg.dataset == "synthetic":
        return synth_generate(cfg.synth_n, cfg.synth_dim, cfg.data_seed,
                              censor_rate=cfg.synth_censor_rate,
                              signal=cfg.synth_signal)
    return load_csv(cfg.dataset)


def run_experiment(cfg: ExperimentConfig, *, audit_log=None,
                   progress=None) -> ResultTable:
    """Run the full (method x budget x seed) sweep.

    Stage errors abort only their own cell. Every budget point restarts
    from the pristine pool; the initial model fit is shared by all cells
    of a seed because it only depends on that pool.
    """
    cfg.validate()
    data = _load_base_data(cfg)
    train, test = split_train_test(data, cfg.test_fraction, cfg.data_seed)
    ctx = make_test_context(test)
    train_cfg = TrainConfig(epochs=cfg.epochs, lr=cfg.lr,
                            prior_sigma=cfg.prior_sigma,
                            mc_samples=cfg.mc_samples,
                            spike_slab=cfg.spike_slab)
    table = ResultTable(cfg)

    for seed in cfg.seeds:
        pool_key = seed if cfg.pool_per_seed else cfg.data_seed
        pool0 = build_pool(train, cfg.n_uncensored, cfg.n_censored,
                           _stage_seed(pool_key, _STAGE_POOL))
        pool0 = assign_costs(pool0, cfg.cost_mode,
                             _stage_seed(pool_key, _STAGE_COSTS))
        bins = make_bins(pool0.t_obs[pool0.delta_obs == 1], cfg.n_bins)
        pool0.bins = bins
        test.bins = bins

        q0 = fit(pool0, train_cfg, _stage_seed(seed, _STAGE_FIT))
        acq_samples = sample_posterior(
            q0, cfg.s_post, _stage_seed(seed, _STAGE_ACQ_SAMPLES))
        candidates = pool0.censored_indices()
        probs = predict(acq_samples, pool0.x[candidates], bins)
        cens_rows = np.empty_like(probs)
        for pos, i in enumerate(candidates):
            j0 = int(np.searchsorted(bins.edges, pool0.t_obs[i],
                                     side="right"))
            cens_rows[pos] = acq.censored_rows(probs[pos], j0)
        mean_rows = cens_rows.mean(axis=1)

        for b_idx, budget in enumerate(cfg.budgets):
            for m_idx, method in enumerate(cfg.methods):
                cell = CellResult(method=method, budget=float(budget),
                                  seed=int(seed),
                                  probe_depth=cfg.probe_depth,
                                  cost_mode=cfg.cost_mode)
                started = time.monotonic()
                try:
                    pool = pool0.copy()
                    pool.bins = bins
                    ledger = BudgetLedger(float(budget))
                    batch = select_batch(
                        method, pool, cens_rows, mean_rows, candidates,
                        float(budget), cfg.probe_depth, cfg,
                        _stage_seed(seed, _STAGE_SELECT, b_idx,
                                    METHODS.index(method)))
                    probe_batch(batch, pool, cfg.probe_depth, ledger,
                                audit_log=audit_log,
                                charge_uncensored=cfg.charge_uncensored)
                    q1 = fit(pool, train_cfg,
                             _stage_seed(seed, _STAGE_REFIT, b_idx))
                    values = evaluate_repetitions(
                        q1, test, ctx, cfg.eval_repetitions,
                        _stage_seed(seed, _STAGE_EVAL, b_idx))
                    cell.report = MetricReport.from_repetitions(values)
                    cell.spent = ledger.spent
                    cell.batch_size = len(batch)
                    elapsed = time.monotonic() - started
                    if cfg.cell_time_cap and elapsed > cfg.cell_time_cap:
                        cell.report = None
                        cell.error = (f"timeout: {elapsed:.1f}s exceeds "
                                      f"cap {cfg.cell_time_cap:.1f}s")
                except Exception as exc:  # cell-local failure
                    cell.error = f"{type(exc).__name__}: {exc}"
                table.cells.append(cell)
                if progress is not None:
                    progress(cell)
    return table


# -- report emission ---------------------------------------------------------

CSV_COLUMNS = ("method", "dataset", "budget", "probe_depth", "cost_mode",
               "seed", "mae_po", "mae_unc", "cindex", "ibs")


def cells_to_csv(table: ResultTable) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(CSV_COLUMNS)
    for c in table.cells:
        if c.report is None:
            continue
        writer.writerow([c.method, table.config.dataset, c.budget,
                         c.probe_depth, c.cost_mode, c.seed,
                         repr(c.report.mae_po),
                         repr(c.report.mae_uncensored),
                         repr(c.report.c_index), repr(c.report.ibs)])
    return out.getvalue()


def _bold_set(table: ResultTable, budget: float) -> set:
    """Methods statistically tied with the per-budget best MAE-PO."""
    means = {}
    for m in table.config.methods:
        vals = table.seed_values(m, budget)
        if vals.size:
            means[m] = vals.mean()
    if not means:
        return set()
    best = min(means, key=means.get)
    bold = {best}
    best_vals = table.seed_values(best, budget)
    for m in means:
        if m == best:
            continue
        vals = table.seed_values(m, budget)
        if best_vals.size < 2 or vals.size < 2:
            if means[m] == means[best]:
                bold.add(m)
            continue
        _, p = two_sample_t(vals, best_vals)
        if p >= 0.05:
            bold.add(m)
    return bold


def to_markdown(table: ResultTable) -> str:
    """One row per budget; the best MAE-PO group (two-sample t-test at
    p < 0.05) is bolded."""
    cfg = table.config
    lines = [f"MAE-PO, probe depth +{cfg.probe_depth}y, "
             f"cost mode {cfg.cost_mode}, dataset {cfg.dataset}", ""]
    header = "| budget | " + " | ".join(cfg.methods) + " |"
    sep = "|" + "---|" * (len(cfg.methods) + 1)
    lines += [header, sep]
    for budget in cfg.budgets:
        bold = _bold_set(table, float(budget))
        row = [f"| {budget:g} "]
        for m in cfg.methods:
            vals = table.seed_values(m, float(budget))
            if vals.size == 0:
                row.append("| (error) ")
                continue
            half = (1.96 * vals.std(ddof=1) / np.sqrt(vals.size)
                    if vals.size > 1 else 0.0)
            text = f"{vals.mean():.3f} ± {half:.3f}"
            row.append(f"| **{text}** " if m in bold else f"| {text} ")
        lines.append("".join(row) + "|")
    errors = [c for c in table.cells if c.error is not None]
    if errors:
        lines += ["", f"{len(errors)} cell(s) failed:"]
        lines += [f"- {c.method} @ budget {c.budget}, seed {c.seed}: "
                  f"{c.error}" for c in errors]
    return "\n".join(lines) + "\n"


def emit_report(table: ResultTable, fmt: str, out_dir) -> str:
    """Write the table in the requested format; returns the file path."""
    if not table.cells:
        raise ValidationError("empty result table")
    os.makedirs(out_dir, exist_ok=True)
    if fmt == "csv":
        path = os.path.join(out_dir, "results.csv")
        payload = cells_to_csv(table)
    elif fmt == "json":
        path = os.path.join(out_dir, "results.json")
        payload = table.to_json()
    elif fmt == "markdown":
        path = os.path.join(out_dir, "results.md")
        payload = to_markdown(table)
    else:
        raise ValidationError(f"unknown report format {fmt!r}")
    with open(path, "w") as fh:
        fh.write(payload)
    return path
