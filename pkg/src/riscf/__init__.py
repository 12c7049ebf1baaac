"""Joint BS precoding and RIS phase design for RIS-aided cell-free MIMO-OFDM.

The usual entry points are :func:`riscf.optimizer.run` for a scenario
config, :class:`riscf.estimator.JointPrecoder` for a channel set, and the
``riscf`` command line tool for sweeps.
"""

from .channels import ChannelSet, generate_channel_set
from .config import PathLossParams, RicianFactors, ScenarioConfig, SolverSettings, load_config, save_config, validate
from .core import NetworkDims, PhaseConfig, PhaseConstraint, PrecoderStack, db_to_linear, dbm_to_watts
from .estimator import JointPrecoder
from .experiments import SweepSpec, run_sweep, scenario_fig4, scenario_fig7
from .metrics import RateReport, sinr_matrix, wsr
from .optimizer import MonotonicityError, RunResult, optimize, run

__version__ = "0.1.0"

__all__ = [
    "ChannelSet",
    "JointPrecoder",
    "MonotonicityError",
    "NetworkDims",
    "PathLossParams",
    "PhaseConfig",
    "PhaseConstraint",
    "PrecoderStack",
    "RateReport",
    "RicianFactors",
    "RunResult",
    "ScenarioConfig",
    "SolverSettings",
    "SweepSpec",
    "db_to_linear",
    "dbm_to_watts",
    "generate_channel_set",
    "load_config",
    "optimize",
    "run",
    "run_sweep",
    "save_config",
    "scenario_fig4",
    "scenario_fig7",
    "sinr_matrix",
    "validate",
    "wsr",
]
