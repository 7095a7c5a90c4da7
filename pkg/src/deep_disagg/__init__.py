"""Deep sparse coding for appliance-level energy disaggregation.

Learns a cascade of dictionaries per appliance (greedy layer-wise, or jointly
by variable splitting) and separates an aggregate meter signal by joint
non-negative sparse coding over the collapsed per-appliance bases.
"""

__version__ = "0.1.0"

from .data import (AGGREGATE_COLUMN, CsvError, CsvSchema, HomeDataset, SynthConfig,
                   home_csv_text, load_csv, resample_mean, split_homes, synth_generate,
                   windowize)
from .disaggregate import DisaggConfig, disaggregate, effective_dictionary
from .exact import (ExactConfig, ExactState, ExactTraceEntry, bregman_update,
                    exact_trace_csv, feasibility_gaps, solve_stacked_lsq, sweep_once,
                    train_exact)
from .greedy import GreedyConfig, deep_objective, fit_linear_layer, train_greedy
from .metrics import (EvalReport, disagg_accuracy, evaluate, normalized_error,
                      report_to_csv, report_to_json, write_report_csv, write_report_json)
from .model import (ApplianceModel, DeepDictionary, DisaggregationResult, EnergySeries,
                    LayerDictionary, SignalMatrix, SparseCode, chained_product, load_model,
                    model_from_document, model_to_document, model_to_json, save_model,
                    validate)
from .shallow import ShallowConfig, TraceEntry, learn_shallow
from .sparse_ops import (IstaOptions, ista_solve, l1_objective, lsq_code, lsq_dictionary,
                         nonneg_soft_threshold, normalize_columns, soft_threshold,
                         spectral_step)

__all__ = [
    "__version__",
    "AGGREGATE_COLUMN", "CsvError", "CsvSchema", "HomeDataset", "SynthConfig",
    "home_csv_text", "load_csv", "resample_mean", "split_homes", "synth_generate",
    "windowize",
    "DisaggConfig", "disaggregate", "effective_dictionary",
    "ExactConfig", "ExactState", "ExactTraceEntry", "bregman_update", "exact_trace_csv",
    "feasibility_gaps", "solve_stacked_lsq", "sweep_once", "train_exact",
    "GreedyConfig", "deep_objective", "fit_linear_layer", "train_greedy",
    "EvalReport", "disagg_accuracy", "evaluate", "normalized_error",
    "report_to_csv", "report_to_json", "write_report_csv", "write_report_json",
    "ApplianceModel", "DeepDictionary", "DisaggregationResult", "EnergySeries",
    "LayerDictionary", "SignalMatrix", "SparseCode", "chained_product", "load_model",
    "model_from_document", "model_to_document", "model_to_json", "save_model", "validate",
    "ShallowConfig", "TraceEntry", "learn_shallow",
    "IstaOptions", "ista_solve", "l1_objective", "lsq_code", "lsq_dictionary",
    "nonneg_soft_threshold", "normalize_columns", "soft_threshold", "spectral_step",
]
