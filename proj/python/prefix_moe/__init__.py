"""Prefix tuning read as a mixture of experts, with the NoRGa gate."""

from ._core import (
    ConfigError,
    ContractError,
    DimensionError,
    DomainError,
    ExperimentError,
    NumericError,
    ProtocolError,
    cl_metrics,
    degenerate_curve,
    gate_weights,
    head_forward,
    moe_head_row,
    norga_head_forward,
    rate_experiment,
    run_cl,
    verify,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "DomainError",
    "ExperimentError",
    "NumericError",
    "ProtocolError",
    "cl_metrics",
    "degenerate_curve",
    "gate_weights",
    "head_forward",
    "moe_head_row",
    "norga_head_forward",
    "rate_experiment",
    "run_cl",
    "verify",
]
