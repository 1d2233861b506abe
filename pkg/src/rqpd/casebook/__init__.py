"""Case studies packaged as runnable scenarios."""

from .scenarios import (
    REGISTRY,
    CheckResult,
    Options,
    Report,
    Scenario,
    UnknownScenario,
    export_fixture,
    get_scenario,
    list_scenarios,
    run_scenario,
)

__all__ = [
    "REGISTRY",
    "CheckResult",
    "Options",
    "Report",
    "Scenario",
    "UnknownScenario",
    "export_fixture",
    "get_scenario",
    "list_scenarios",
    "run_scenario",
]
