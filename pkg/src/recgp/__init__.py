"""Simulated distributed massive-MIMO RSS, principal-subspace analysis and RecGP localization."""

from .channel import PathLossParams, RssMatrix
from .errors import (ConfigError, DataError, DomainError, NumericError, ParameterError,
                     RecGPError, TrainingError)
from .gp import KernelParams, TrainConfig, TrainedGp
from .scenario import Point2D, Scenario
from .subspace import SubspaceModel, SvdFactors

__version__ = "0.1.0"
