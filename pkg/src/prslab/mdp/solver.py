"""Compilation of the MDP into sparse arrays and average-reward solvers."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from .model import (
    ADOPT,
    INITIAL_STATE,
    Action,
    MdpConfig,
    MdpState,
    feasible_actions,
    override,
    step,
)

logger = logging.getLogger(__name__)


class NonConvergence(RuntimeError):
    """The solver hit its iteration cap before reaching the requested tolerance."""


@dataclass
class CompiledMdp:
    """All feasible (state, action) pairs of the reachable state space.

    Rows are grouped by state: the rows of state ``i`` are
    ``row_start[i]:row_start[i + 1]``.
    """

    cfg: MdpConfig
    states: list[MdpState]
    index: dict[MdpState, int]
    actions: list[Action]  # one per row
    row_state: np.ndarray
    row_start: np.ndarray
    P: sparse.csr_matrix  # rows x states
    reward_a: np.ndarray
    reward_h: np.ndarray
    elapsed: np.ndarray
    bonus: np.ndarray  # expected double-spend bonus per row

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_rows(self) -> int:
        return len(self.actions)

    def row_of(self, state: MdpState, action: Action) -> int:
        i = self.index[state]
        for r in range(self.row_start[i], self.row_start[i + 1]):
            if self.actions[r] == action:
                return r
        raise KeyError(f"{action} not feasible in {state}")


def compile_mdp(cfg: MdpConfig) -> CompiledMdp:
    """Enumerate the states reachable from the initial state and tabulate transitions."""
    index = {INITIAL_STATE: 0}
    states = [INITIAL_STATE]
    queue = deque([INITIAL_STATE])
    table: list[tuple[int, Action, list]] = []
    while queue:
        s = queue.popleft()
        i = index[s]
        for a in feasible_actions(s, cfg):
            entries = step(s, a, cfg)
            for e in entries:
                if e.next_state not in index:
                    index[e.next_state] = len(states)
                    states.append(e.next_state)
                    queue.append(e.next_state)
            table.append((i, a, entries))
    table.sort(key=lambda t: t[0])

    n_rows = len(table)
    rows, cols, probs = [], [], []
    reward_a = np.zeros(n_rows)
    reward_h = np.zeros(n_rows)
    elapsed = np.zeros(n_rows)
    bonus = np.zeros(n_rows)
    row_state = np.empty(n_rows, dtype=np.int64)
    actions = []
    for r, (i, a, entries) in enumerate(table):
        row_state[r] = i
        actions.append(a)
        for e in entries:
            rows.append(r)
            cols.append(index[e.next_state])
            probs.append(e.probability)
            reward_a[r] += e.probability * e.reward_a
            reward_h[r] += e.probability * e.reward_h
            elapsed[r] += e.probability * e.elapsed
            bonus[r] += e.probability * cfg.double_spend_bonus(e.orphaned)
    P = sparse.csr_matrix((probs, (rows, cols)), shape=(n_rows, len(states)))
    row_start = np.searchsorted(row_state, np.arange(len(states) + 1))
    logger.debug("compiled %s: %d states, %d rows", cfg.mechanism.value, len(states), n_rows)
    return CompiledMdp(cfg, states, index, actions, row_state, row_start, P,
                       reward_a, reward_h, elapsed, bonus)


@dataclass
class RviResult:
    gain_low: float
    gain_high: float
    values: np.ndarray
    policy: np.ndarray  # chosen row per state
    iterations: int


def relative_value_iteration(mdp: CompiledMdp, reward: np.ndarray, *, tol: float = 1e-7,
                             max_iter: int = 200_000, tau: float = 0.5,
                             values: np.ndarray | None = None,
                             stop_on_sign: bool = False) -> RviResult:
    """Average-reward relative value iteration.

    Runs on the aperiodic transform ``tau * P + (1 - tau) * I``; the returned
    gain bounds are rescaled to the original chain.  With ``stop_on_sign`` the
    iteration stops as soon as the bounds exclude zero.
    """
    V = np.zeros(mdp.n_states) if values is None else values.copy()
    starts = mdp.row_start[:-1]
    P, rs = mdp.P, mdp.row_state
    for it in range(1, max_iter + 1):
        Q = reward + tau * (P @ V) + (1.0 - tau) * V[rs]
        V_new = np.maximum.reduceat(Q, starts)
        diff = V_new - V
        lo, hi = diff.min(), diff.max()
        V = V_new - V_new[0]
        if hi - lo < tol * tau or (stop_on_sign and (lo > 0.0 or hi < 0.0)):
            policy = _greedy(Q, V_new, mdp)
            return RviResult(lo / tau, hi / tau, V, policy, it)
    raise NonConvergence(f"value iteration did not reach span {tol} in {max_iter} iterations")


def _greedy(Q: np.ndarray, V: np.ndarray, mdp: CompiledMdp) -> np.ndarray:
    best = Q >= V[mdp.row_state] - 1e-12
    rows = np.flatnonzero(best)
    # first maximising row of each state
    first = np.full(mdp.n_states, -1, dtype=np.int64)
    states = mdp.row_state[rows]
    order = np.argsort(states, kind="stable")
    rows, states = rows[order], states[order]
    keep = np.ones(len(rows), dtype=bool)
    keep[1:] = states[1:] != states[:-1]
    first[states[keep]] = rows[keep]
    return first


def stationary_distribution(mdp: CompiledMdp, policy: np.ndarray, start: int = 0) -> np.ndarray:
    """Long-run state occupancy of ``policy`` started in state ``start``."""
    P = mdp.P[policy]
    reach = csgraph.breadth_first_order(P, start, directed=True, return_predecessors=False)
    reach = np.sort(reach)
    sub = P[reach][:, reach].tocsr()
    n_comp, labels = csgraph.connected_components(sub, directed=True, connection="strong")
    leaving = np.zeros(n_comp, dtype=bool)
    coo = sub.tocoo()
    cross = labels[coo.row] != labels[coo.col]
    leaving[labels[coo.row[cross]]] = True
    closed = np.flatnonzero(~leaving)
    pi = np.zeros(mdp.n_states)
    if len(closed) == 1:
        members = np.flatnonzero(labels == closed[0])
        M = sub[members][:, members]
        A = (M.T - sparse.identity(len(members))).tolil()
        A[0, :] = 1.0
        b = np.zeros(len(members))
        b[0] = 1.0
        x = spsolve(A.tocsc(), b) if len(members) > 1 else np.ones(1)
        pi[reach[members]] = x
        return pi
    # several closed classes: average the lazy chain's powers from the start state
    x = np.zeros(len(reach))
    x[np.searchsorted(reach, start)] = 1.0
    lazy = 0.5 * (sub + sparse.identity(len(reach), format="csr"))
    for _ in range(100_000):
        x_new = lazy.T @ x
        if np.abs(x_new - x).sum() < 1e-14:
            break
        x = x_new
    pi[reach] = x
    return pi


def evaluate_policy(mdp: CompiledMdp, policy: np.ndarray, *, start: int = 0) -> dict[str, float]:
    """Exact long-run per-step rates of a deterministic stationary policy."""
    pi = stationary_distribution(mdp, policy, start)
    occupied = np.flatnonzero(pi)
    w = np.zeros(mdp.n_rows)
    w[policy[occupied]] = pi[occupied]
    return {
        "reward_a": float(w @ mdp.reward_a),
        "reward_h": float(w @ mdp.reward_h),
        "elapsed": float(w @ mdp.elapsed),
        "bonus": float(w @ mdp.bonus),
    }


def honest_policy(mdp: CompiledMdp) -> np.ndarray:
    """Publish every attacker block at once and adopt every honest block."""
    policy = np.empty(mdp.n_states, dtype=np.int64)
    for i, s in enumerate(mdp.states):
        act = override(1) if s.la > s.lc else ADOPT
        policy[i] = mdp.row_of(s, act)
    return policy


@dataclass
class RatioResult:
    value: float
    lower: float
    upper: float
    policy: np.ndarray
    iterations: int
    probes: int


def maximize_ratio(mdp: CompiledMdp, num: np.ndarray, den: np.ndarray, *, tol: float = 1e-4,
                   lower: float = 0.0, upper: float = 1.0, start_policy: np.ndarray | None = None,
                   vi_tol: float = 1e-7, max_probes: int = 60) -> RatioResult:
    """Maximise the long-run ratio ``sum(num) / sum(den)`` over stationary policies.

    Searches on ``lam`` with the transformed reward ``num - lam * den``.  A
    positive optimal gain proves ``lam`` is below the optimum, a negative one
    proves it is above.  Every probe's greedy policy is evaluated exactly and
    its ratio tightens the lower bound, which makes the search converge in a
    handful of probes near the optimum.
    """
    def ratio_of(policy):
        pi = stationary_distribution(mdp, policy)
        occ = np.flatnonzero(pi)
        w = np.zeros(mdp.n_rows)
        w[policy[occ]] = pi[occ]
        d = w @ den
        return (w @ num) / d if d > 0 else -np.inf

    lo, hi = lower, upper
    best = start_policy
    if start_policy is not None:
        lo = max(lo, ratio_of(start_policy))
    V = None
    iters = 0
    for probe in range(1, max_probes + 1):
        if hi - lo <= tol:
            return RatioResult(0.5 * (lo + hi), lo, hi, best, iters, probe - 1)
        lam = min(lo + 0.5 * tol, 0.5 * (lo + hi))
        res = relative_value_iteration(mdp, num - lam * den, tol=vi_tol, values=V,
                                       stop_on_sign=True)
        iters += res.iterations
        V = res.values
        r_pi = ratio_of(res.policy)
        if r_pi > lo:
            lo, best = r_pi, res.policy
        if res.gain_low > 0.0:
            lo = max(lo, lam)
        elif res.gain_high < 0.0:
            hi = min(hi, lam)
        else:
            # |gain| below solver resolution: lam is the optimum up to vi_tol
            lo, hi = max(lo, lam - 0.5 * tol), min(hi, lam + 0.5 * tol)
        if best is None:
            best = res.policy
    if hi - lo <= tol:
        return RatioResult(0.5 * (lo + hi), lo, hi, best, iters, max_probes)
    raise NonConvergence(f"ratio search stalled at [{lo}, {hi}] after {max_probes} probes")
