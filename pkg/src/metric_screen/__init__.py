"""Metric-learning variable screening with interaction detection."""
from .errors import (DataError, DegeneratePairs, DegenerateWeights, InfeasibleConstraint,
                     MetricScreenError)
from .kernels import KernelSpec, f_eval, f_prime, pair_delta
from .objective import WeightedDataset, evaluate, evaluate_with_gradient, gradient, pair_mass
from .optimizer import AscentConfig, AscentResult, ConstraintSet, ascend, is_stationary, project
from .rebalance import BoostConfig, compute_weights, fit_conditional, rebalance
from .screening import (PermutationThreshold, ScreenConfig, ScreenResult, TheoryThreshold,
                        calibrate_gamma_permutation, calibrate_lambda_permutation, screen,
                        screen_hier, screen_high_dim,
                        screen_low_dim, signal_strength_hier, signal_strength_main,
                        tune_lambda)

__version__ = "0.1.0"
