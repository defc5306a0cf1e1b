"""Security metrics on top of the MDP solver, plus sweeps and curve export."""
from __future__ import annotations

import csv
import enum
import functools
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import MdpConfig
from .solver import CompiledMdp, compile_mdp, honest_policy, maximize_ratio


class Metric(str, enum.Enum):
    RELATIVE_REWARD = "relative_reward"
    SUBVERSION_GAIN = "subversion_gain"
    CENSORSHIP = "censorship"


@dataclass(frozen=True)
class MetricResult:
    value: float
    lower: float
    upper: float
    iterations: int
    n_states: int


@functools.lru_cache(maxsize=8)
def compiled(cfg: MdpConfig) -> CompiledMdp:
    return compile_mdp(cfg)


def _solve(mdp: CompiledMdp, num: np.ndarray, den: np.ndarray, tol: float,
           lower: float, upper: float) -> MetricResult:
    res = maximize_ratio(mdp, num, den, tol=tol, lower=lower, upper=upper,
                         start_policy=honest_policy(mdp))
    return MetricResult(res.value, res.lower, res.upper, res.iterations, mdp.n_states)


def relative_reward(cfg: MdpConfig, tol: float = 1e-4) -> MetricResult:
    """Best long-run share of all rewards the attacker can secure."""
    if cfg.alpha == 0.0:
        return MetricResult(0.0, 0.0, 0.0, 0, 0)
    mdp = compiled(cfg)
    return _solve(mdp, mdp.reward_a, mdp.reward_a + mdp.reward_h, tol, 0.0, 1.0)


def subversion_gain(cfg: MdpConfig, tol: float = 1e-4) -> MetricResult:
    """Best attacker income per mining event, double-spend bonus included, minus ``alpha``.

    Honest mining earns exactly ``alpha`` per event, so a zero gain means no
    attack beats honest behaviour.
    """
    if cfg.alpha == 0.0:
        return MetricResult(0.0, 0.0, 0.0, 0, 0)
    mdp = compiled(cfg)
    num = mdp.reward_a + mdp.bonus
    upper = float(np.max(num / mdp.elapsed))
    res = _solve(mdp, num, mdp.elapsed, tol, 0.0, max(upper, cfg.alpha + tol))
    a = cfg.alpha
    return MetricResult(max(res.value - a, 0.0), max(res.lower - a, 0.0), res.upper - a,
                        res.iterations, res.n_states)


def censorship_susceptibility(cfg: MdpConfig, tol: float = 1e-4) -> MetricResult:
    """Largest fraction of their income honest miners can be made to lose."""
    if cfg.alpha == 0.0:
        return MetricResult(0.0, 0.0, 0.0, 0, 0)
    mdp = compiled(cfg)
    fair = 1.0 - cfg.alpha
    num = fair * mdp.elapsed - mdp.reward_h
    return _solve(mdp, num, fair * mdp.elapsed, tol, 0.0, 1.0)


_METRICS = {
    Metric.RELATIVE_REWARD: relative_reward,
    Metric.SUBVERSION_GAIN: subversion_gain,
    Metric.CENSORSHIP: censorship_susceptibility,
}


def evaluate(metric: Metric | str, cfg: MdpConfig, tol: float = 1e-4) -> MetricResult:
    return _METRICS[Metric(metric)](cfg, tol)


def optimal_relative_reward(cfg: MdpConfig, tol: float = 1e-4) -> float:
    return relative_reward(cfg, tol).value


@dataclass(frozen=True)
class CurveRow:
    mechanism: str
    metric: str
    alpha: float
    gamma: float
    omega: int
    wfork: int
    value: float
    solver_iterations: int


CURVE_FIELDS = ("mechanism", "metric", "alpha", "gamma", "omega", "wfork", "value", "solver_iterations")


def sweep(metric: Metric | str, base: MdpConfig, alphas: Sequence[float], *,
          tol: float = 1e-4, **overrides) -> list[CurveRow]:
    """Evaluate ``metric`` on every alpha of the grid.

    ``overrides`` replace fields of ``base`` (``omega``, ``wfork``,
    ``mechanism`` and so on) for the whole sweep.
    """
    if len(alphas) == 0:
        raise ValueError("alpha grid is empty")
    metric = Metric(metric)
    rows = []
    for a in alphas:
        cfg = replace(base, alpha=float(a), **overrides)
        res = evaluate(metric, cfg, tol)
        rows.append(CurveRow(cfg.mechanism.value, metric.value, cfg.alpha, cfg.gamma,
                             cfg.omega, cfg.wfork, res.value, res.iterations))
    return rows


def write_curve_csv(rows: Iterable[CurveRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_FIELDS)
        for r in rows:
            w.writerow([r.mechanism, r.metric, f"{r.alpha:.6g}", f"{r.gamma:.6g}", r.omega,
                        r.wfork, f"{r.value:.6f}", r.solver_iterations])


def read_curve_csv(path: str | Path) -> list[CurveRow]:
    with open(path, newline="") as fh:
        return [CurveRow(r["mechanism"], r["metric"], float(r["alpha"]), float(r["gamma"]),
                         int(r["omega"]), int(r["wfork"]), float(r["value"]),
                         int(r["solver_iterations"]))
                for r in csv.DictReader(fh)]
