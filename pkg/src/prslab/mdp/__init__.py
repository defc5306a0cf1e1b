from .estimator import MechanismEvaluator
from .metrics import (
    CurveRow,
    Metric,
    MetricResult,
    censorship_susceptibility,
    evaluate,
    optimal_relative_reward,
    read_curve_csv,
    relative_reward,
    subversion_gain,
    sweep,
    write_curve_csv,
)
from .model import (
    ADOPT,
    MATCH,
    WAIT,
    Action,
    Fork,
    InfeasibleAction,
    MdpConfig,
    MdpState,
    Mechanism,
    TransitionEntry,
    feasible_actions,
    override,
    step,
)
from .solver import NonConvergence, compile_mdp, evaluate_policy, honest_policy, maximize_ratio

__all__ = [
    "ADOPT", "MATCH", "WAIT", "Action", "CurveRow", "Fork", "InfeasibleAction", "MdpConfig",
    "MdpState", "MechanismEvaluator", "Mechanism", "Metric", "MetricResult", "NonConvergence",
    "TransitionEntry", "censorship_susceptibility", "compile_mdp", "evaluate", "evaluate_policy",
    "feasible_actions", "honest_policy", "maximize_ratio", "optimal_relative_reward",
    "override", "read_curve_csv", "relative_reward", "step", "subversion_gain", "sweep",
    "write_curve_csv",
]
