import csv
import io
import json

import numpy as np
import pytest

from survprobe.data import synth_generate
from survprobe.errors import ConfigurationError, ValidationError
from survprobe.experiment import (
    METHODS,
    ExperimentConfig,
    ResultTable,
    assign_costs,
    build_pool,
    cells_to_csv,
    emit_report,
    parse_cost_mode,
    run_experiment,
    to_markdown,
)


def small_config(**overrides):
    base = dict(
        dataset="synthetic",
        n_uncensored=20,
        n_censored=60,
        budgets=(0.0, 3.0),
        probe_depth=100.0,
        methods=("bb_surv", "random"),
        seeds=(0,),
        n_bins=5,
        s_post=8,
        eval_repetitions=5,
        epochs=60,
        synth_n=400,
        synth_dim=4,
        data_seed=3,
        mi_max_configs=2000,
        mi_draws=500,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestAssignCosts:
    def setup_method(self):
        self.ds = synth_generate(200, 3, rng_seed=0)

    def test_uniform(self):
        out = assign_costs(self.ds, "uniform")
        assert np.all(out.cost == 1.0)

    def test_random_range_mean(self):
        ds = synth_generate(100_000, 1, rng_seed=1)
        out = assign_costs(ds, "random:0.2:0.8", rng_seed=5)
        assert np.all((out.cost >= 0.2) & (out.cost <= 0.8))
        assert abs(out.cost.mean() - 0.5) < 0.01

    def test_scaled(self):
        uniform = assign_costs(self.ds, "uniform")
        out = assign_costs(uniform, "scaled:0.2")
        assert np.allclose(out.cost, 0.2)

    def test_bad_modes(self):
        with pytest.raises(ValidationError):
            assign_costs(self.ds, "random:0:1")
        with pytest.raises(ConfigurationError):
            assign_costs(self.ds, "lottery")
        with pytest.raises(ConfigurationError):
            parse_cost_mode("random:1.0")

    def test_original_untouched(self):
        before = self.ds.cost.copy()
        assign_costs(self.ds, "scaled:0.5")
        assert np.array_equal(self.ds.cost, before)


class TestBuildPool:
    def test_composition(self):
        ds = synth_generate(1000, 3, rng_seed=2)
        pool = build_pool(ds, 30, 120, rng_seed=0)
        assert len(pool) == 150
        assert (pool.delta_obs == 1).sum() == 30
        assert (pool.delta_obs == 0).sum() == 120
        cens = pool.delta_obs == 0
        assert np.all(pool.t_obs[cens] <= pool.t_true[cens])

    def test_infeasible(self):
        ds = synth_generate(50, 2, rng_seed=0, censor_rate=5.0)
        with pytest.raises(ConfigurationError):
            build_pool(ds, 45, 5, rng_seed=0)


class TestConfig:
    def test_unknown_method(self):
        with pytest.raises(ConfigurationError):
            small_config(methods=("bb_surv", "quantum")).validate()

    def test_negative_budget(self):
        with pytest.raises(ConfigurationError):
            small_config(budgets=(-1.0,)).validate()

    def test_all_methods_known(self):
        assert len(METHODS) == 10


@pytest.fixture(scope="module")
def table():
    return run_experiment(small_config())


class TestRunExperiment:

    def test_one_cell_per_combination(self, table):
        assert len(table.cells) == 2 * 2  # methods x budgets
        assert table.complete

    def test_budget_respected(self, table):
        for cell in table.cells:
            assert cell.spent <= cell.budget + 1e-9

    def test_budget_zero_invariant_across_methods(self, table):
        reports = [c.report for c in table.cells if c.budget == 0.0]
        assert all(r == reports[0] for r in reports)

    def test_budget_zero_probes_nothing(self, table):
        for cell in table.cells:
            if cell.budget == 0.0:
                assert cell.batch_size == 0 and cell.spent == 0.0

    def test_reproducible(self, table):
        again = run_experiment(small_config())
        assert again.to_json() == table.to_json()

    def test_json_roundtrip(self, table):
        back = ResultTable.from_json(table.to_json())
        assert back.to_json() == table.to_json()

    def test_csv_matches_json_cells(self, table):
        text = cells_to_csv(table)
        rows = list(csv.DictReader(io.StringIO(text)))
        assert len(rows) == len(table.cells)
        by_key = {(c.method, c.budget, c.seed): c for c in table.cells}
        for row in rows:
            cell = by_key[(row["method"], float(row["budget"]),
                           int(row["seed"]))]
            assert float(row["mae_po"]) == cell.report.mae_po
            assert float(row["cindex"]) == cell.report.c_index

    def test_markdown_bolds_a_group(self, table):
        text = to_markdown(table)
        assert text.count("|") > 8
        assert "**" in text

    def test_emit_report_files(self, table, tmp_path):
        for fmt, name in (("csv", "results.csv"), ("json", "results.json"),
                          ("markdown", "results.md")):
            path = emit_report(table, fmt, tmp_path)
            assert path.endswith(name)
        parsed = json.loads((tmp_path / "results.json").read_text())
        assert parsed["config"]["n_uncensored"] == 20

    def test_probe_depth_and_cost_mode_recorded(self, table):
        for cell in table.cells:
            assert cell.probe_depth == 100.0
            assert cell.cost_mode == "uniform"


class TestErrorIsolation:
    def test_cell_errors_do_not_kill_sweep(self):
        # a pool too small for the requested CfB clusters fails that cell
        cfg = small_config(methods=("cfb", "random"), cfb_clusters=1000)
        table = run_experiment(cfg)
        cfb_cells = [c for c in table.cells if c.method == "cfb"]
        rnd_cells = [c for c in table.cells if c.method == "random"]
        assert all(c.error is not None for c in cfb_cells)
        assert all(c.error is None for c in rnd_cells)
        assert not table.complete


class TestNonUniformCosts:
    def test_random_costs_run(self):
        cfg = small_config(cost_mode="random:0.2:0.8", budgets=(2.0,))
        table = run_experiment(cfg)
        assert table.complete
        for cell in table.cells:
            assert cell.spent <= 2.0 + 1e-9
