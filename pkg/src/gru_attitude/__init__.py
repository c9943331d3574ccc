"""Spacecraft attitude simulator: magnetorquer PID plus iterative GRU disturbance compensation."""

__version__ = "0.1.0"

from .actuation import ActuatorConfig, FieldModel, PidGains, PidState
from .compensator import IterationConfig, IterationRecord, Scenario, run_campaign, run_iteration
from .disturbance import DisturbanceModel, DisturbanceSeries
from .dynamics import AttitudeState, FormationGeometry
from .gru import GruNetwork, TrainConfig

__all__ = [
    "ActuatorConfig", "AttitudeState", "DisturbanceModel", "DisturbanceSeries", "FieldModel",
    "FormationGeometry", "GruNetwork", "IterationConfig", "IterationRecord", "PidGains",
    "PidState", "Scenario", "TrainConfig", "run_campaign", "run_iteration",
]
