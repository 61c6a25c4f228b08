"""Sleep-stage and sleep-health classification on selective state spaces.

The package is self-contained: a small float64 autograd core (`tensor`),
zero-order-hold state-space layers with a bidirectional block (`ssm`),
channel attention (`eca`), the two classifiers (`model`), Adam training
with subject-wise folds (`training`), EDF/synthetic data handling
(`data`), confusion-matrix metrics and hypnogram rendering (`metrics`),
and a CLI (`bimamba`) that drives end-to-end runs.
"""

from .errors import (
    AlignmentError,
    BimambaError,
    ConfigError,
    ContractError,
    DomainError,
    ModeError,
    ParseError,
    ShapeError,
    TrainingError,
)
from .stages import N_STAGES, STAGE_CHARS, STAGE_NAMES, StageLabel
from .tensor import Tensor, backward, grad_check, no_grad

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "backward",
    "grad_check",
    "no_grad",
    "StageLabel",
    "N_STAGES",
    "STAGE_NAMES",
    "STAGE_CHARS",
    "BimambaError",
    "ShapeError",
    "DomainError",
    "ModeError",
    "ContractError",
    "ConfigError",
    "ParseError",
    "AlignmentError",
    "TrainingError",
    "__version__",
]
