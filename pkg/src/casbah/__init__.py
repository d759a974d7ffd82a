"""Shared-atoms Bayesian nonparametric mixture for principal stratification."""

from .exceptions import CasbahError, InputError, NumericalError
from .gibbs import GibbsConfig, PosteriorDraws, run_chain
from .model import (
    Hyperparams,
    MixtureState,
    ObservedDataset,
    OutcomeState,
    compute_weights,
    init_state,
    prior_dissociative_probability,
    rho_moments,
)
from .strata import StratumLabel, adjusted_rand_index, summarize

__version__ = "0.1.0"
