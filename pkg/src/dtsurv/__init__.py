"""Regression for discrete-time survival data with competing risks."""

from . import expansion, twostage
from .data import (
    ExpandedDataset, EventTable, Schema, SurvivalDataset, clip_tail, event_table, expand,
    from_arrays, load_csv, merge_times, validate_counts, write_csv,
)
from .errors import (
    AdmissibilityError, ConvergenceError, DataLoadError, DTSurvError, EstimabilityError,
    RootError, SeparationError,
)
from .model import (
    ModelParams, TimeGrid, cif, curves, event_probability, hazard, marginal_event_probability,
    overall_survival, predict_curves,
)
from .optim import PenaltySpec
from .results import FittedModel, summary
from .simulation import CensoringSpec, CoefficientSpec, generate

__version__ = "0.1.0"
