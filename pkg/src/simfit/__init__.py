"""Sparse single index models: SILO, iSILO, ciSILO and baselines."""

from simfit.algorithms import (FitSpec, cisilo_fit, fit, isilo_fit, silo_fit, slisotron_fit,
                               slr_fit)
from simfit.core import (Dataset, SimModel, SolverOptions, SplitDataset, TrainReport,
                         misclassification, mse, project_intersection, project_l1_ball,
                         project_l2_ball, soft_threshold)
from simfit.data import (GroundTruth, Noise, SyntheticSpec, Transfer, compute_theta, generate,
                         load, split)
from simfit.monotone import (ChainQP, ConvergenceError, MonotoneFn, integral_of, interpolate,
                             lpav_fit, qpfit)

__version__ = "0.1.0"
