"""Identification of uniform low-order linear time-periodic systems.

A P-periodic SISO system is rewritten as P switched FIR sub-models and fit
from input/output records by one of four estimators: plain least squares,
Hankel nuclear norm regularization, atomic norm regularization over a fixed
pole dictionary, and its grouped variant that ties every pole's coefficients
across the tag times so all sub-models share one support. The grouped
variant is the point of the package: its per-pole groups are zeroed or
kept whole, so every sub-model draws on the same poles and the estimated
orders come out uniform.
"""

from .atoms import (AtomResponseMatrix, CoefficientMatrix, GridSpec,
                    PoleGrid, REFERENCE_GRID_PRESET, atom_response,
                    build_atom_responses, build_pole_grid,
                    hankel_nuclear_norm_of_atom, reconstruct,
                    response_basis)
from .estimators import (CrossValReport, EstimatorSpec, Method,
                         case_study_gamma_grid, default_gamma_grid,
                         estimated_orders, identify, order_sweep,
                         orders_to_csv)
from .experiments import (McCell, McStats, MonteCarloSpec, PendulumSpec,
                          default_methods, pendulum_dataset, pendulum_truth,
                          random_ltp_bank, read_raw_csv, run_monte_carlo,
                          simulate_pendulum_nonlinear)
from .kernels import NUMBA_ENABLED
from .ltp import (FitReport, ImpulseResponseMatrix, PeriodicStateSpace,
                  StabilityReport, fit_metric, impulse_from_csv,
                  impulse_to_csv, is_stable, monodromy, simulate,
                  true_impulse_response)
from .regression import (AtomRegression, IdentDataset, TagRegression,
                         atom_regressors, build_tag_regressions,
                         dataset_from_csv, ls_objective, record_from_csv,
                         record_to_csv)
from .solvers import (Regularizer, SolveResult, SolverConfig,
                      SolverDivergence, group_kkt_residuals, group_norms,
                      hankel_admm_tag, hankel_adjoint, hankel_matrix,
                      hankel_overlap_counts, kill_zone_gamma, prox_group,
                      prox_l1, prox_nuclear, regularizer_value,
                      solve_hankel_admm, solve_ls, solve_prox_grad)

__version__ = "0.1.0"
