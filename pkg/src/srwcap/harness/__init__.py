"""Experiment driver, statistics and persistence."""
from .experiments import (DEFAULT_NS, D3_SCALE, D4_TARGET, bm_capacities, clear_sample_cache,
                          exp_d3_limit, exp_d3_second_moment, exp_d4_mean_curve, exp_d4_wlln,
                          exp_tau_mechanism, parallel_map, range_capacities, rare_event_tau)
from .report import BASE_COLUMNS, ExperimentReport, format_number, git_describe
from .stats import (EmpiricalSample, MomentAccumulator, bootstrap, ks_statistic, ks_uniform,
                    reduce_accumulators, welford_merge)

__all__ = [
    "BASE_COLUMNS", "D3_SCALE", "D4_TARGET", "DEFAULT_NS", "EmpiricalSample", "ExperimentReport",
    "MomentAccumulator", "bm_capacities", "bootstrap", "clear_sample_cache", "exp_d3_limit",
    "exp_d3_second_moment", "exp_d4_mean_curve", "exp_d4_wlln", "exp_tau_mechanism",
    "format_number", "git_describe", "ks_statistic", "ks_uniform", "parallel_map",
    "range_capacities", "rare_event_tau", "reduce_accumulators", "welford_merge",
]
