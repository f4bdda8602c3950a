"""Bonus-Malus system pricing: Markov level dynamics, relativities, mixture base premiums."""

__version__ = "0.1.0"

from .bms import (  # noqa: E402
    BonusMalusSystem,
    Explicit,
    JumpToTop,
    Step,
    level_distribution,
    preset,
    steady_state,
    transition_matrix,
)
from .distributions import GammaComponent, GammaMixturePrior, Poisson, ZIPoisson  # noqa: E402
from .mixture import MixtureClaimModel, SufficientStats, approx_bayes_base_premium  # noqa: E402
from .relativity import efficiency_sweep, loimaranta_efficiency, relativity_tables  # noqa: E402

__all__ = [
    "BonusMalusSystem",
    "Explicit",
    "JumpToTop",
    "Step",
    "level_distribution",
    "preset",
    "steady_state",
    "transition_matrix",
    "GammaComponent",
    "GammaMixturePrior",
    "Poisson",
    "ZIPoisson",
    "MixtureClaimModel",
    "SufficientStats",
    "approx_bayes_base_premium",
    "efficiency_sweep",
    "loimaranta_efficiency",
    "relativity_tables",
]
