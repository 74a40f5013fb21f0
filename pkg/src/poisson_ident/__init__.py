"""Secure message identification over discrete-time Poisson wiretap channels.

Submodules:
  channel   -- Poisson observation law, sampling, certified truncation
  captools  -- mutual information, capacity, secrecy capacity, dichotomy
  idcode    -- two-stage polynomial coloring functions over prime fields
  phycode   -- random on-off transmission code and binned wiretap code
  simkit    -- end-to-end protocol and Monte Carlo error/leakage harness
  cli       -- experiment runner with TOML configs and JSON/CSV reports
"""

__version__ = "0.1.0"

from .channel import PoissonChannel, WiretapChannelPair
from .captools import (
    AmplitudeGrid,
    CapacityResult,
    ConvergenceError,
    IdCapacityResult,
    InputDistribution,
    capacity,
    id_capacity,
    mutual_information,
    secrecy_capacity,
)
from .idcode import ColoringNumber, Identity, TagScheme, scheme_for_budget
from .phycode import (
    CodeBudget,
    EnumerationInfeasibleError,
    InfeasibleCodeError,
    LeakageEstimate,
    TransmissionCodebook,
    WiretapCodebook,
    exact_leakage,
)
from .simkit import (
    EveReport,
    IdentificationSystem,
    SimulationReport,
    build_system,
    estimate_errors,
    eve_advantage,
    scaling_study,
)

__all__ = [
    "__version__",
    "PoissonChannel",
    "WiretapChannelPair",
    "AmplitudeGrid",
    "InputDistribution",
    "CapacityResult",
    "IdCapacityResult",
    "ConvergenceError",
    "capacity",
    "secrecy_capacity",
    "id_capacity",
    "mutual_information",
    "TagScheme",
    "Identity",
    "ColoringNumber",
    "scheme_for_budget",
    "CodeBudget",
    "TransmissionCodebook",
    "WiretapCodebook",
    "InfeasibleCodeError",
    "EnumerationInfeasibleError",
    "LeakageEstimate",
    "exact_leakage",
    "IdentificationSystem",
    "SimulationReport",
    "EveReport",
    "build_system",
    "estimate_errors",
    "eve_advantage",
    "scaling_study",
]
