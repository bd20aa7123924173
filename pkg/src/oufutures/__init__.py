"""Two-factor mean-reverting model of commodity futures term structures."""

from .data import FuturesPanel, load_panel, save_panel
from .errors import DomainError, EstimationError, NumericalError, PanelFormatError
from .kalman import (
    FilterOutput,
    SmootherOutput,
    init_state,
    log_likelihood,
    run_filter,
    run_smoother,
)
from .model import (
    DEFAULT_DT,
    PARAM_NAMES,
    MeasurementModel,
    ModelParams,
    StateDistribution,
    StateVec,
    TransitionModel,
    build_measurement,
    build_transition,
    canonicalize,
    compute_A,
    log_futures_price,
)

__version__ = "0.1.0"
