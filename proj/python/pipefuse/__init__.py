"""Pipeline sensor-network fusion: EKF, validated fusion, consensus and the scenario simulator."""

from ._pipefuse import (
    PipefuseError,
    ValidationGate,
    ekf_filter,
    metropolis_weights,
    run_consensus,
    run_scenario,
)

__all__ = [
    "PipefuseError",
    "ValidationGate",
    "ekf_filter",
    "metropolis_weights",
    "run_consensus",
    "run_scenario",
]
