"""Robust HOCBF safety filter, simulator and DAgger policy distillation."""

import json

from ._core import (
    DimMismatch,
    DivergenceError,
    Error,
    Expert,
    ExpertFailure,
    Infeasible,
    InvalidArgument,
    Mlp,
    NumericalError,
    Scenario,
    SeparabilityViolation,
    __version__,
    check_scenario,
    dagger_beta,
    render_svg,
    rollout,
    run_dagger,
    solve_box_qp_wopt,
    solve_control_qp,
    solve_linear_wopt,
)

__all__ = [
    "DimMismatch",
    "DivergenceError",
    "Error",
    "Expert",
    "ExpertFailure",
    "Infeasible",
    "InvalidArgument",
    "Mlp",
    "NumericalError",
    "Scenario",
    "SeparabilityViolation",
    "__version__",
    "check",
    "dagger",
    "dagger_beta",
    "render_svg",
    "rollout",
    "solve_box_qp_wopt",
    "solve_control_qp",
    "solve_linear_wopt",
]


def check(scenario, states=200, seed=0):
    """Derivative and separability checks as a dict."""
    return json.loads(check_scenario(scenario, states, seed))


def dagger(scenario, **kwargs):
    """Run DAgger; returns (policy, report dict)."""
    policy, report = run_dagger(scenario, **kwargs)
    return policy, json.loads(report)
