"""Multi-fidelity multi-objective search with co-Kriging surrogates."""

from ._kernels import IMPLEMENTATION as kernel_implementation
from .benchmarks import MfZdtProblem, PairedVariableProblem, make_benchmark
from .encoding import (SpaceConfig, architecture_from_vector,
                       assemble_architecture, decode, decode_continuous,
                       decode_discrete, estimate_flops, export_architecture,
                       op_flops, schema)
from .evaluator import (CachingEvaluator, EvaluationRequest,
                        EvaluationResponse, EvaluatorError, Problem,
                        SubprocessEvaluator, builtin_names, make_problem,
                        register_builtin)
from .evolution import (de_minimize, de_offspring, hypervolume_2d, kmeans,
                        maximin_lhd, maximin_subset, nondominated_sort,
                        nsga2_minimize)
from .optimizer import (IterationReport, Optimizer, RunResult, SearchConfig,
                        normalized_hv, run_search, union_extremes,
                        write_run_artifacts)
from .store import EvaluationRecord, SampleDatabase
from .surrogate import (CoKrigingModel, KrigingModel, expected_improvement,
                        fit_cokriging, fit_kriging)

__version__ = "0.1.0"

__all__ = [
    "CachingEvaluator", "CoKrigingModel", "EvaluationRecord",
    "EvaluationRequest", "EvaluationResponse", "EvaluatorError",
    "IterationReport", "KrigingModel", "MfZdtProblem",
    "Optimizer", "PairedVariableProblem", "Problem", "RunResult",
    "SampleDatabase", "SearchConfig", "SpaceConfig", "SubprocessEvaluator",
    "architecture_from_vector", "assemble_architecture", "builtin_names",
    "de_minimize", "de_offspring", "decode", "decode_continuous",
    "decode_discrete", "estimate_flops", "expected_improvement",
    "export_architecture", "fit_cokriging", "fit_kriging", "hypervolume_2d",
    "kernel_implementation", "kmeans", "make_benchmark", "make_problem",
    "maximin_lhd", "maximin_subset", "nondominated_sort", "normalized_hv",
    "nsga2_minimize", "op_flops", "register_builtin", "run_search", "schema",
    "union_extremes", "write_run_artifacts",
]
