"""Adaptive distributed Newton solver for generalized linear models.

Minimizes f(A alpha) + sum_i g_i(alpha_i) over column-partitioned data with
a block-separable second-order surrogate whose quadratic scaling sigma is
adapted each round, trust-region style, from the measured model fit.
"""

from .control import (ConvergenceConstants, RoundDecision, TrustConfig,
                      compute_rho, decide_round, predict_constants,
                      sigma_sup_bounds, sigma_sup_lipschitz_hessian,
                      sigma_sup_quasi_self_concordant, update_sigma_parameter_free,
                      update_sigma_threshold)
from .data import SyntheticSpec, generate_synthetic, normalize_columns, parse_libsvm
from .engine import (EngineOptions, LineSearchConfig, MetricsRecord, RunResult,
                     StopCriteria, run_adn, run_cocoa, run_line_search,
                     write_metrics_csv, write_summary_json)
from .messages import (MasterToWorker, ProbeReply, ProbeRequest, WorkerToMaster,
                       deserialize_message, serialize_message)
from .objectives import (ObjectiveValue, ProblemSpec, Regularizer, SmoothLoss,
                         duality_gap, eval_objective, f_eval, f_grad,
                         f_hess_diag, g_conj, g_conj_subgrad, g_eval, g_sum,
                         prox_g)
from .solver import LocalSolve, SolverBudget, certify_eta, eta_certificate, solve_local
from .sparse import (BlockNormConstant, Partition, SharedVector, SparseColMatrix,
                     block_matvec, block_norm_constant, column_norms,
                     extract_block, load_columns, partition_columns)
from .surrogate import (LocalSubproblem, build_subproblems, eval_global_model,
                        eval_local_model, model_quadratic_term)

__version__ = "0.1.0"
