"""Spiking neural networks with learnable, annealed recurrent delays."""

from .kernel import SigmaSchedule, horizon, kernel_table, sigma_at_epoch, spread_value
from .network import ArchitectureSpec, Network, build
from .recurrent import RecurrentDelayLayer, ScheduleBuffer, dense_oracle_forward

__all__ = [
    "ArchitectureSpec", "Network", "RecurrentDelayLayer", "ScheduleBuffer", "SigmaSchedule",
    "build", "dense_oracle_forward", "horizon", "kernel_table", "sigma_at_epoch", "spread_value",
]
__version__ = "0.1.0"
