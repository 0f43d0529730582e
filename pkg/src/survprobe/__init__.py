"""Budgeted active learning over right-censored survival data."""

from .acquisition import (
    BatchScore,
    CensoredProbRow,
    KnowableProbRow,
    MutualInformationScorer,
    batch_mutual_information,
    entropy_bits,
    score_batchbald,
    score_bb_surv,
    to_p_cens,
    to_p_final,
)
from .data import (
    Dataset,
    SurvivalInstance,
    TimeBins,
    artificial_censor,
    bin_of,
    load_csv,
    make_bins,
    split_train_test,
    synth_generate,
)
from .experiment import (
    ExperimentConfig,
    ResultTable,
    assign_costs,
    emit_report,
    run_experiment,
)
from .metrics import (
    KmCurve,
    MetricReport,
    c_index,
    ci95,
    integrated_brier,
    km_fit,
    mae_po,
    predict_time,
    rmst,
    two_sample_t,
)
from .model import (
    MtlrParams,
    PosteriorSampleSet,
    TrainConfig,
    VariationalPosterior,
    fit,
    log_likelihood,
    mtlr_logits,
    predict,
    sample_posterior,
)
from .oracle import BudgetLedger, ProbeResult, probe, probe_batch
from .selection import (
    CoverageInstance,
    SelectionResult,
    brute_force_optimal,
    check_monotone,
    check_submodular,
    greedy_enumerated,
    greedy_ratio,
)

__version__ = "0.1.0"
