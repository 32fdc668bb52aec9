"""Global-and-local penalized regression for multi-task problems.

Fits a shared coefficient vector plus per-patient corrections with separate
l1 penalties, via block coordinate minimization or a single stacked lasso,
with a full regularization path, uniqueness certificates, model selection,
outlier detection, and baseline comparisons.
"""
from .baselines import (BenchmarkConfig, BenchmarkReport, DirtyModel,
                        OutlierReport, cv_dirty_model, cv_pooled_lasso,
                        detect_outliers, dirty_mse, run_table1_benchmark,
                        solve_dirty_model)
from .bcm import (PER_PATIENT_HALF_N, UNNORMALIZED, GlopModel, GlopPenalty,
                  evaluate_mse, glop_objective, load_model, predict,
                  save_model, solve_glop_bcm)
from .data import (MultiTaskDataset, PatientBlock, TruePopulation,
                   generate_outlier_scenario, generate_small_example,
                   generate_tau_population, holdout_testset, load_csv,
                   write_csv)
from .errors import (CapacityError, DataError, EmptyInputError, GlopError,
                     NumericalError, ParseError, PathRangeError, SchemaError,
                     SelectionError, SolverError, TieError)
from .lars import (GlopPath, RegularizationPath, export_path_csv, glop_path,
                   lars_lasso_path, path_eval)
from .lasso import (LassoProblem, LassoSolution, brute_force_lasso_oracle,
                    kkt_residuals, solve_weighted_lasso)
from .selection import (CvGrid, SelectionResult, bic_grid_select, bic_score,
                        cv_grid_search, select_from_table, stratified_folds)
from .stacked import (StackedDesign, build_stacked_design,
                      solve_glop_single_lasso, stack_coefficients,
                      unstack_coefficients)
from .uniqueness import (AinWitness, EquicorrelationSet, UniquenessCertificate,
                         active_rank_check, check_ain_bruteforce,
                         equicorrelation_set, is_ain, theorem1_certificate)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
