"""Decentralized noisy sensor network localization.

Solves the node-based semidefinite relaxation with a matrix-parametrized
proximal splitting whose consensus matrices come from Sinkhorn-Knopp
balancing of the communication graph, next to a decentralized ADMM baseline,
with warm starting, objective-based early termination, and a seeded
experiment harness.
"""

from .admm import (AdmmState, build_gprime, init_admm_cold, run_admm,
                   warm_start_admm)
from .design import (MatrixParams, NoSupportError, NotConvergedError,
                     ValidationReport, lower_factor, sinkhorn_knopp,
                     sinkhorn_knopp_decentralized, two_block_params,
                     validate_params)
from .experiments import (ExperimentConfig, run_centrality_trace,
                          run_comparison, run_early_termination_study)
from .lifted import LiftedPoint, frobenius_norm, gram_point, weighted_norm
from .metrics import MetricRecord, centrality, mean_distance, relative_error
from .problem import (DisconnectedGraphError, GenerationError,
                      InvalidInstanceError, ProblemInstance, build_adjacency,
                      g_i, generate_instance, load_instance, objective,
                      save_instance)
from .prox import (GProxData, build_g_prox_data, delta_prox, g_prox,
                   psd_project, psd_residual, soft_threshold, submatrix)
from .splitting import (EarlyStopOptions, InnerOptions, SolverOptions,
                        SolverState, SolverTrace, early_stop_monitor,
                        init_cold, iterate, perturb_truth, run,
                        run_decentralized, sensor_estimates, warm_start_v)

__version__ = "0.1.0"
