"""Protocol executions with honest parties and a withholding adversary."""
from .adversary import Adversary, PrivateChain, SelfishMining
from .config import DerivedParams, SimConfig, Strategy, compliance_check, config_compliant
from .measures import (
    PropertyReport,
    chain_record_owners,
    consistency_depth,
    growth_bounds,
    growth_increments,
    ic_bound_check,
    measure_consistency,
    measure_fairness,
    measure_freshness,
    measure_growth,
    property_report,
    window_fractions,
)
from .runner import ComplianceError, ExecutionTrace, MinedEvent, check_config, run_execution

__all__ = [
    "Adversary", "PrivateChain", "SelfishMining",
    "DerivedParams", "SimConfig", "Strategy", "compliance_check", "config_compliant",
    "PropertyReport", "chain_record_owners", "consistency_depth", "growth_bounds",
    "growth_increments", "ic_bound_check", "measure_consistency", "measure_fairness",
    "measure_freshness", "measure_growth", "property_report", "window_fractions",
    "ComplianceError", "ExecutionTrace", "MinedEvent", "check_config", "run_execution",
]
