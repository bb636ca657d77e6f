"""Average-cost MDP for AoCI-aware update scheduling, with exact solvers.

The state is (aoci, aoi) on a capped grid; the action is a binary
transmit/idle decision. The main solver is relative policy iteration with a
threshold shortcut in the improvement step; relative value iteration and an
exhaustive policy enumeration serve as independent oracles for it.

State indexing convention throughout: i = (aoci - 1) * aoi_cap + (aoi - 1),
so the reference state (1, 1) is index 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import csvio
from .errors import InvalidParameterError, NonConvergenceError, SolverFailureError
from .stateproc import return_probability

_EVAL_RESIDUAL_TOL = 1e-10
_DENSE_LIMIT = 2048          # dense LU below this many states, sparse LU above
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class AociState:
    aoci: int
    aoi: int


@dataclass(frozen=True)
class MdpSpec:
    """Caps, probabilities, and cost weights of one scheduling problem.

    p_tx is the per-attempt delivery success probability; content_q drives
    the age-dependent return probability of the content process.
    """

    aoci_cap: int
    aoi_cap: int
    p_tx: float
    content_q: float
    update_cost: float
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.aoci_cap < 2 or self.aoi_cap < 2:
            raise InvalidParameterError("caps must be >= 2")
        if self.aoci_cap < self.aoi_cap:
            raise InvalidParameterError(
                "aoci_cap must be >= aoi_cap (AoCI never falls below AoI)")
        for name in ("p_tx", "content_q"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise InvalidParameterError(f"{name} must lie in [0, 1], got {v}")
        if self.update_cost < 0 or self.weight < 0:
            raise InvalidParameterError("update_cost and weight must be >= 0")

    @property
    def num_states(self) -> int:
        return self.aoci_cap * self.aoi_cap

    def return_prob(self, delta: int) -> float:
        return return_probability(self.content_q, int(delta))

    def state_index(self, s: AociState) -> int:
        if not (1 <= s.aoci <= self.aoci_cap and 1 <= s.aoi <= self.aoi_cap):
            raise InvalidParameterError(f"state {s} outside the capped grid")
        return (s.aoci - 1) * self.aoi_cap + (s.aoi - 1)

    def state_at(self, index: int) -> AociState:
        return AociState(index // self.aoi_cap + 1, index % self.aoi_cap + 1)


@dataclass
class PolicyTable:
    """Deterministic stationary policy: action per (aoci, aoi) cell."""

    actions: np.ndarray  # (aoci_cap, aoi_cap) of {0, 1}

    def __post_init__(self) -> None:
        self.actions = np.asarray(self.actions, dtype=np.int8)
        if self.actions.ndim != 2:
            raise InvalidParameterError("actions must be a 2-D table")
        if not np.isin(self.actions, (0, 1)).all():
            raise InvalidParameterError("actions must be 0 or 1")

    def action(self, s: AociState) -> int:
        return int(self.actions[s.aoci - 1, s.aoi - 1])

    def flat(self) -> np.ndarray:
        return self.actions.reshape(-1)

    @classmethod
    def from_flat(cls, flat: np.ndarray, spec: MdpSpec) -> "PolicyTable":
        return cls(np.asarray(flat).reshape(spec.aoci_cap, spec.aoi_cap))

    @classmethod
    def constant(cls, spec: MdpSpec, action: int) -> "PolicyTable":
        return cls(np.full((spec.aoci_cap, spec.aoi_cap), action, dtype=np.int8))


@dataclass
class SolveResult:
    gain: float
    bias: np.ndarray               # (aoci_cap, aoi_cap), zero at the reference state
    policy: PolicyTable
    iterations: int
    gain_history: list = field(default_factory=list)
    shortcut_conflicts: list = field(default_factory=list)
    method: str = ""


class _Kernel:
    """Vectorized transition/cost tables for one spec."""

    def __init__(self, spec: MdpSpec):
        self.spec = spec
        n = spec.num_states
        dcap, acap = spec.aoci_cap, spec.aoi_cap
        idx = np.arange(n)
        self.aoci = idx // acap + 1
        self.aoi = idx % acap + 1
        up_aoci = np.minimum(self.aoci + 1, dcap)
        up_aoi = np.minimum(self.aoi + 1, acap)
        self.idx_idle = (up_aoci - 1) * acap + (up_aoi - 1)
        self.idx_unch = (up_aoci - 1) * acap      # (aoci+1 capped, 1)
        self.idx_reset = 0                        # (1, 1)
        pr = return_probability(spec.content_q, self.aoi)
        self.p_return = np.asarray(pr, dtype=float)
        self.p_change = spec.p_tx * (1.0 - self.p_return)
        self.p_unch = spec.p_tx * self.p_return
        self.p_fail = 1.0 - spec.p_tx
        self.cost0 = self.aoci.astype(float)
        self.cost1 = self.cost0 + spec.weight * spec.update_cost

    @property
    def n(self) -> int:
        return self.spec.num_states

    def successor_lists(self, actions: np.ndarray):
        """(indices, probs) per state for the given flat action vector,
        zero-probability branches dropped."""
        out = []
        for i in range(self.n):
            if actions[i] == 0:
                out.append(([self.idx_idle[i]], [1.0]))
            else:
                pairs = [(self.idx_reset, self.p_change[i]),
                         (self.idx_unch[i], self.p_unch[i]),
                         (self.idx_idle[i], self.p_fail)]
                nxt = [j for j, p in pairs if p > 0.0]
                prb = [p for _, p in pairs if p > 0.0]
                out.append((nxt, prb))
        return out

    def transition_matrix(self, actions: np.ndarray) -> np.ndarray:
        """Dense row-stochastic matrix of the policy-induced chain."""
        n = self.n
        P = np.zeros((n, n))
        rows = np.arange(n)
        idle = actions == 0
        np.add.at(P, (rows[idle], self.idx_idle[idle]), 1.0)
        up = ~idle
        np.add.at(P, (rows[up], np.full(up.sum(), self.idx_reset)), self.p_change[up])
        np.add.at(P, (rows[up], self.idx_unch[up]), self.p_unch[up])
        np.add.at(P, (rows[up], self.idx_idle[up]), self.p_fail)
        return P

    def stage_costs(self, actions: np.ndarray) -> np.ndarray:
        return np.where(actions == 0, self.cost0, self.cost1)

    def q_values(self, V: np.ndarray):
        """One-step lookahead values (Q0, Q1) for every state."""
        Q0 = self.cost0 + V[self.idx_idle]
        Q1 = (self.cost1 + self.p_change * V[self.idx_reset]
              + self.p_unch * V[self.idx_unch] + self.p_fail * V[self.idx_idle])
        return Q0, Q1


def transitions(s: AociState, a: int, spec: MdpSpec):
    """Successor distribution of (s, a); at most three (state, prob) pairs."""
    spec.state_index(s)
    if a not in (0, 1):
        raise InvalidParameterError("action must be 0 or 1")
    up_aoci = min(s.aoci + 1, spec.aoci_cap)
    up_aoi = min(s.aoi + 1, spec.aoi_cap)
    if a == 0:
        return [(AociState(up_aoci, up_aoi), 1.0)]
    pr = spec.return_prob(s.aoi)
    branches = [
        (AociState(1, 1), spec.p_tx * (1.0 - pr)),          # delivered, content changed
        (AociState(up_aoci, 1), spec.p_tx * pr),            # delivered, unchanged
        (AociState(up_aoci, up_aoi), 1.0 - spec.p_tx),      # lost
    ]
    return [(ns, p) for ns, p in branches if p > 0.0]


def stage_cost(s: AociState, a: int, spec: MdpSpec) -> float:
    """Instantaneous cost: current AoCI plus the weighted update cost if transmitting."""
    spec.state_index(s)
    return float(s.aoci) + (spec.weight * spec.update_cost if a else 0.0)


def reachable_states(spec: MdpSpec, start: AociState = AociState(1, 1)):
    """Breadth-first closure of `start` under both actions."""
    kernel = _Kernel(spec)
    seen = np.zeros(kernel.n, dtype=bool)
    frontier = [spec.state_index(start)]
    seen[frontier[0]] = True
    while frontier:
        nxt = []
        for i in frontier:
            succs = {kernel.idx_idle[i]}
            if kernel.p_unch[i] > 0:
                succs.add(kernel.idx_unch[i])
            if kernel.p_change[i] > 0:
                succs.add(kernel.idx_reset)
            for j in succs:
                if not seen[j]:
                    seen[j] = True
                    nxt.append(j)
        frontier = nxt
    return [spec.state_at(i) for i in np.flatnonzero(seen)]


# ---------------------------------------------------------------------------
# policy evaluation


def _solve_evaluation_system(kernel: _Kernel, actions: np.ndarray, ref_idx: int,
                             sparse: bool):
    """Solve gain/bias linear equations with bias anchored at ref_idx.

    Unknowns x = [V_0, ..., V_{n-1}, gain]; the dense gain column and the
    anchor row sit last so sparse LU eliminates the sparse block first.
    Singular systems (multichain policies) raise SolverFailureError.
    """
    n = kernel.n
    costs = kernel.stage_costs(actions)
    rows_i, cols_i, vals = [], [], []

    def entry(r, c, v):
        rows_i.append(r)
        cols_i.append(c)
        vals.append(v)

    for i, (nxt, prb) in enumerate(kernel.successor_lists(actions)):
        entry(i, i, 1.0)
        for j, p in zip(nxt, prb):
            entry(i, j, -p)
        entry(i, n, 1.0)
    entry(n, ref_idx, 1.0)
    b = np.concatenate([costs, [0.0]])
    try:
        if sparse:
            from scipy.sparse import coo_matrix
            from scipy.sparse.linalg import splu
            A = coo_matrix((vals, (rows_i, cols_i)), shape=(n + 1, n + 1)).tocsc()
            x = splu(A).solve(b)
            resid = np.abs(A @ x - b).max()
        else:
            A = np.zeros((n + 1, n + 1))
            np.add.at(A, (rows_i, cols_i), vals)
            x = np.linalg.solve(A, b)
            resid = np.abs(A @ x - b).max()
    except Exception as exc:  # LinAlgError / singular factorization
        raise SolverFailureError(
            f"evaluation system is singular (multichain policy?): {exc}") from exc
    if not np.isfinite(x).all() or resid > 1e-8 * max(1.0, np.abs(b).max()):
        raise SolverFailureError(
            f"evaluation system ill-conditioned: residual {resid:.3e}")
    gain = float(x[n])
    V = x[:n]
    V = V - V[ref_idx]   # exact zero at the reference state
    return gain, V


def _sweep_evaluate(kernel: _Kernel, actions: np.ndarray, ref_idx: int,
                    residual_tol: float = _EVAL_RESIDUAL_TOL,
                    max_sweeps: int = 2_000_000):
    """Relative-value sweeps for a fixed policy; O(successors) work per sweep.

    Returns (gain, V, stats) where stats carries the per-sweep transition
    touch count used by the complexity checks.
    """
    n = kernel.n
    idle = actions == 0
    up = ~idle
    # logical touches: idle rows have one successor; update rows one per
    # positive-probability branch
    touches = (int(idle.sum())
               + int((kernel.p_change[up] > 0).sum())
               + int((kernel.p_unch[up] > 0).sum())
               + int(up.sum()) * int(kernel.p_fail > 0))
    costs = kernel.stage_costs(actions)
    V = np.zeros(n)
    damping = 0.0
    last_resid = np.inf
    stall = 0
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        W = np.where(
            idle,
            costs + V[kernel.idx_idle],
            costs + kernel.p_change * V[kernel.idx_reset]
            + kernel.p_unch * V[kernel.idx_unch] + kernel.p_fail * V[kernel.idx_idle],
        )
        gain = float(W[ref_idx])
        V_new = W - gain
        if damping:
            V_new = damping * V + (1.0 - damping) * V_new
        resid = np.abs(V_new - V).max()
        V = V_new
        if resid <= residual_tol:
            stats = {"sweeps": sweeps, "touches_per_sweep": touches,
                     "touched_total": touches * sweeps}
            return gain, V - V[ref_idx], stats
        if resid >= last_resid:
            stall += 1
            if stall > 1000 and damping == 0.0:
                damping = 0.5   # aperiodicity fix for oscillating chains
                stall = 0
        else:
            stall = 0
        last_resid = resid
    raise NonConvergenceError(f"policy evaluation sweeps did not reach "
                              f"residual {residual_tol} in {max_sweeps} sweeps")


def evaluate_policy(policy: PolicyTable, spec: MdpSpec,
                    ref_state: AociState = AociState(1, 1),
                    method: str = "auto"):
    """Gain and anchored bias of a stationary policy.

    method: "dense" | "sparse" | "sweep" | "auto" (dense for small spaces,
    sparse LU otherwise; "sweep" trades exactness for O(|S|)-per-pass work).
    """
    kernel = _Kernel(spec)
    actions = policy.flat()
    ref_idx = spec.state_index(ref_state)
    if method == "auto":
        method = "dense" if kernel.n <= _DENSE_LIMIT else "sparse"
    if method == "dense":
        gain, V = _solve_evaluation_system(kernel, actions, ref_idx, sparse=False)
    elif method == "sparse":
        gain, V = _solve_evaluation_system(kernel, actions, ref_idx, sparse=True)
    elif method == "sweep":
        gain, V, _ = _sweep_evaluate(kernel, actions, ref_idx)
    else:
        raise InvalidParameterError(f"unknown evaluation method {method!r}")
    return gain, V.reshape(spec.aoci_cap, spec.aoi_cap)


def sweep_evaluation_stats(policy: PolicyTable, spec: MdpSpec,
                           ref_state: AociState = AociState(1, 1)):
    """Sweep-based evaluation plus instrumentation counters."""
    kernel = _Kernel(spec)
    gain, V, stats = _sweep_evaluate(kernel, policy.flat(), spec.state_index(ref_state))
    return gain, V.reshape(spec.aoci_cap, spec.aoi_cap), stats


# ---------------------------------------------------------------------------
# policy improvement


def _improve(kernel: _Kernel, V: np.ndarray, tie_tol: float = _TIE_TOL,
             gain_vec: np.ndarray | None = None):
    """Greedy improvement with the threshold shortcut.

    Returns (actions, conflicts) where conflicts lists states at which the
    fired shortcut disagreed with the generic argmin; on disagreement the
    argmin action wins and the state is reported instead of silently used.

    With a non-constant per-state gain (multichain iterate), actions that
    strictly improve the expected gain win outright and the bias rule only
    breaks gain ties.
    """
    spec = kernel.spec
    Q0, Q1 = kernel.q_values(V)
    generic = (Q1 < Q0 - tie_tol).astype(np.int8)   # ties resolve to idle

    pr1 = return_probability(spec.content_q, 1)
    pr_next = np.asarray(return_probability(spec.content_q, kernel.aoi + 1))
    denom = V[kernel.idx_unch] - V[kernel.idx_reset]
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(denom > 0, kernel.aoi / denom, -np.inf)
    cond_curvature = (denom > 0) & ((pr1 - pr_next) <= bound)
    cond_margin = (spec.p_tx * (1.0 - kernel.p_return) * kernel.aoci
                   - spec.p_tx * kernel.aoi
                   - spec.weight * spec.update_cost) >= 0.0
    fires = cond_curvature & cond_margin

    disagree = fires & (Q1 > Q0 + 1e-9)
    conflicts = [kernel.spec.state_at(i) for i in np.flatnonzero(disagree)]
    actions = np.where(fires & ~disagree, 1, generic).astype(np.int8)

    if gain_vec is not None and np.ptp(gain_vec) > 1e-10:
        g = gain_vec
        G0 = g[kernel.idx_idle]
        G1 = (kernel.p_change * g[kernel.idx_reset]
              + kernel.p_unch * g[kernel.idx_unch] + kernel.p_fail * g[kernel.idx_idle])
        actions = np.where(G1 < G0 - 1e-10, 1,
                           np.where(G0 < G1 - 1e-10, 0, actions)).astype(np.int8)
    return actions, conflicts


def improve_policy(V: np.ndarray, gain: float, spec: MdpSpec) -> PolicyTable:
    """One improvement step given bias values (the gain rides along unused:
    the argmin of c + sum(P V) does not involve it)."""
    kernel = _Kernel(spec)
    actions, _ = _improve(kernel, np.asarray(V).reshape(-1))
    return PolicyTable.from_flat(actions, spec)


def threshold_for(delta: int, spec: MdpSpec):
    """Smallest AoCI at which updating satisfies the margin inequality
    p_tx (1 - p_r(delta)) * aoci - p_tx * delta - weight * cost >= 0,
    or None when no AoCI within the cap does."""
    if delta < 1:
        raise InvalidParameterError("delta must be >= 1")
    pr = spec.return_prob(delta)
    den = spec.p_tx * (1.0 - pr)
    if den <= 0.0:
        return None
    num = spec.p_tx * delta + spec.weight * spec.update_cost
    k = max(1, math.floor(num / den + 1e-9))
    if den * k < num - 1e-9:
        k += 1
    return k if k <= spec.aoci_cap else None


# ---------------------------------------------------------------------------
# solvers


def relative_policy_iteration(spec: MdpSpec,
                              ref_state: AociState = AociState(1, 1),
                              max_iterations: int = 1000,
                              eval_method: str = "auto") -> SolveResult:
    """Policy iteration on anchored gain/bias pairs, starting from all-idle.

    The gain sequence is nonincreasing; a revisited policy (possible only at
    exactly tied gains) terminates the loop at the tied optimum.
    """
    kernel = _Kernel(spec)
    ref_idx = spec.state_index(ref_state)
    actions = np.zeros(kernel.n, dtype=np.int8)
    seen = {actions.tobytes()}
    gain_history: list[float] = []
    conflicts: list = []
    prev_gain = np.inf
    for it in range(1, max_iterations + 1):
        gain_vec = None
        try:
            gain, V2d = evaluate_policy(PolicyTable.from_flat(actions, spec), spec,
                                        ref_state, method=eval_method)
            V = V2d.reshape(-1)
        except SolverFailureError:
            # multichain iterate (possible when p_tx = 1): per-state gains
            gain_vec, V = _evaluate_multichain(kernel, actions)
            gain = float(gain_vec[ref_idx])
            V2d = (V - V[ref_idx]).reshape(spec.aoci_cap, spec.aoi_cap)
        if gain > prev_gain + 1e-9:
            raise SolverFailureError(
                f"gain increased across iterations: {prev_gain} -> {gain}")
        gain_history.append(gain)
        prev_gain = gain
        new_actions, step_conflicts = _improve(kernel, V, gain_vec=gain_vec)
        conflicts.extend(step_conflicts)
        if np.array_equal(new_actions, actions) or new_actions.tobytes() in seen:
            # fixed point, or a tied-gain cycle already at the optimum
            bias = V2d - V2d[ref_state.aoci - 1, ref_state.aoi - 1]
            return SolveResult(gain=gain, bias=bias,
                               policy=PolicyTable.from_flat(actions, spec),
                               iterations=it, gain_history=gain_history,
                               shortcut_conflicts=conflicts, method="rpi")
        seen.add(new_actions.tobytes())
        actions = new_actions
    raise NonConvergenceError(f"policy iteration did not converge "
                              f"in {max_iterations} iterations")


def relative_value_iteration(spec: MdpSpec,
                             ref_state: AociState = AociState(1, 1),
                             span_tol: float = 1e-9,
                             max_iterations: int = 2_000_000) -> SolveResult:
    """Relative value iteration with span-seminorm stopping.

    Runs on the half-damped chain P' = (I + P)/2, which preserves every
    policy's gain and the argmin actions while guaranteeing span contraction
    on periodic chains; the reported bias is rescaled back.
    """
    kernel = _Kernel(spec)
    ref_idx = spec.state_index(ref_state)
    V = np.zeros(kernel.n)
    for it in range(1, max_iterations + 1):
        Q0, Q1 = kernel.q_values(V)
        W = 0.5 * V + 0.5 * np.minimum(Q0, Q1)
        diff = W - V
        span = float(diff.max() - diff.min())
        if span <= span_tol:
            # diff converges to (gain / 2) * ones under the half-damped operator
            gain = float(diff.max() + diff.min())
            actions = (Q1 < Q0 - _TIE_TOL).astype(np.int8)
            bias = V - V[ref_idx]
            return SolveResult(gain=gain,
                               bias=bias.reshape(spec.aoci_cap, spec.aoi_cap),
                               policy=PolicyTable.from_flat(actions, spec),
                               iterations=it, method="rvi")
        V = W - W[ref_idx]
    raise NonConvergenceError(f"value iteration span did not reach {span_tol} "
                              f"in {max_iterations} iterations")


# ---------------------------------------------------------------------------
# stationary analysis and the enumeration oracle


def _closure_from(kernel: _Kernel, actions: np.ndarray, start_idx: int) -> np.ndarray:
    succ = kernel.successor_lists(actions)
    seen = np.zeros(kernel.n, dtype=bool)
    seen[start_idx] = True
    frontier = [start_idx]
    while frontier:
        nxt = []
        for i in frontier:
            for j in succ[i][0]:
                if not seen[j]:
                    seen[j] = True
                    nxt.append(j)
        frontier = nxt
    return seen


def _stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Unique stationary distribution of a unichain transition matrix."""
    r = P.shape[0]
    M = (np.eye(r) - P).T
    M[0, :] = 1.0
    rhs = np.zeros(r)
    rhs[0] = 1.0
    pi = np.linalg.solve(M, rhs)
    if np.any(pi < -1e-9):
        raise SolverFailureError("stationary solve produced negative mass "
                                 "(multichain restriction?)")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _chain_structure(P: np.ndarray):
    """(classes, assigned) of a transition matrix: closed communicating
    classes and a per-state label (class id, or -2 for transient)."""
    r = P.shape[0]
    if r > 4096:
        raise SolverFailureError("general multichain analysis limited to small chains")
    reach = np.eye(r, dtype=bool) | (P > 0)
    for _ in range(int(math.ceil(math.log2(max(r, 2))))):
        reach = reach @ reach
    mutual = reach & reach.T
    assigned = np.full(r, -1)
    classes = []
    for i in range(r):
        if assigned[i] != -1:
            continue
        cls = np.flatnonzero(mutual[i])
        closed = not np.any(P[np.ix_(cls, np.setdiff1d(np.arange(r), cls))] > 0)
        if closed:
            assigned[cls] = len(classes)
            classes.append(cls)
        else:
            assigned[cls] = -2
    return classes, assigned


def _gain_general(P: np.ndarray, costs: np.ndarray, start_local: int) -> float:
    """Average cost from a start state, valid for multichain policies.

    Finds the closed communicating classes, their stationary costs, and the
    absorption split from the start state. Intended for small restrictions.
    """
    classes, assigned = _chain_structure(P)
    thetas = []
    for cls in classes:
        pi = _stationary_distribution(P[np.ix_(cls, cls)])
        thetas.append(float(pi @ costs[cls]))
    if assigned[start_local] >= 0:
        return thetas[assigned[start_local]]
    r = P.shape[0]
    transient = np.flatnonzero(assigned < 0)
    t_index = {s: k for k, s in enumerate(transient)}
    Q = P[np.ix_(transient, transient)]
    B = np.zeros((len(transient), len(classes)))
    for c, cls in enumerate(classes):
        B[:, c] = P[np.ix_(transient, cls)].sum(axis=1)
    absorb = np.linalg.solve(np.eye(len(transient)) - Q, B)
    probs = absorb[t_index[start_local]]
    return float(probs @ np.asarray(thetas))


def _evaluate_multichain(kernel: _Kernel, actions: np.ndarray):
    """Per-state gain and true bias for a possibly multichain policy.

    The gain is constant on each closed class and absorption-weighted on
    transients; the bias solves (I - P) h = c - g with zero stationary mean
    on each class, which is the normalization multichain policy improvement
    needs.
    """
    n = kernel.n
    P = kernel.transition_matrix(actions)
    costs = kernel.stage_costs(actions)
    classes, assigned = _chain_structure(P)
    g = np.zeros(n)
    h = np.zeros(n)
    pis = []
    for cls in classes:
        Pc = P[np.ix_(cls, cls)]
        pi = _stationary_distribution(Pc)
        pis.append(pi)
        theta = float(pi @ costs[cls])
        g[cls] = theta
        # bias on the class: (I - Pc) h = c - theta with pi . h = 0
        A = np.vstack([np.eye(len(cls)) - Pc, pi])
        rhs = np.concatenate([costs[cls] - theta, [0.0]])
        sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        if np.abs(A @ sol - rhs).max() > 1e-8:
            raise SolverFailureError("class bias system inconsistent")
        h[cls] = sol
    transient = np.flatnonzero(assigned < 0)
    if len(transient):
        Q = P[np.ix_(transient, transient)]
        B = np.zeros((len(transient), len(classes)))
        for c, cls in enumerate(classes):
            B[:, c] = P[np.ix_(transient, cls)].sum(axis=1)
        thetas = np.array([g[cls[0]] for cls in classes])
        absorb = np.linalg.solve(np.eye(len(transient)) - Q, B)
        g[transient] = absorb @ thetas
        rhs = costs[transient] - g[transient]
        for c, cls in enumerate(classes):
            rhs = rhs + P[np.ix_(transient, cls)] @ h[cls]
        h[transient] = np.linalg.solve(np.eye(len(transient)) - Q, rhs)
    return g, h


def _stationary_sparse(kernel: _Kernel, actions: np.ndarray, sub: np.ndarray):
    """Stationary distribution on a closed subset via sparse LU."""
    from scipy.sparse import coo_matrix, eye
    from scipy.sparse.linalg import spsolve
    local = np.full(kernel.n, -1)
    local[sub] = np.arange(len(sub))
    succ = kernel.successor_lists(actions)
    rows, cols, vals = [], [], []
    for g in sub:
        for j, p in zip(*succ[g]):
            rows.append(local[g])
            cols.append(local[j])
            vals.append(p)
    r = len(sub)
    P = coo_matrix((vals, (rows, cols)), shape=(r, r)).tocsr()
    M = (eye(r, format="csr") - P).T.tolil()
    M[0, :] = 1.0
    rhs = np.zeros(r)
    rhs[0] = 1.0
    pi = spsolve(M.tocsr(), rhs)
    if not np.isfinite(pi).all() or np.any(pi < -1e-9):
        raise SolverFailureError("sparse stationary solve failed "
                                 "(multichain restriction?)")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _stationary_on_closure(kernel: _Kernel, actions: np.ndarray, start_idx: int):
    """(subset indices, stationary distribution, stage costs) of the chain
    restricted to the closure of start_idx; pi is None when the restriction
    is not unichain."""
    seen = _closure_from(kernel, actions, start_idx)
    sub = np.flatnonzero(seen)
    costs = kernel.stage_costs(actions)[sub]
    if len(sub) > _DENSE_LIMIT:
        return sub, _stationary_sparse(kernel, actions, sub), costs
    P = kernel.transition_matrix(actions)[np.ix_(sub, sub)]
    try:
        return sub, _stationary_distribution(P), costs
    except (SolverFailureError, np.linalg.LinAlgError):
        return sub, None, costs


def average_cost_of(policy: PolicyTable, spec: MdpSpec,
                    start: AociState = AociState(1, 1)) -> float:
    """Long-run average cost of a policy from `start`, computed from the
    stationary distribution of the chain restricted to the states the start
    can reach. Independent of the gain/bias evaluation route."""
    kernel = _Kernel(spec)
    actions = policy.flat()
    start_idx = spec.state_index(start)
    sub, pi, costs = _stationary_on_closure(kernel, actions, start_idx)
    if pi is not None:
        return float(pi @ costs)
    local = {g: l for l, g in enumerate(sub)}
    P = kernel.transition_matrix(actions)[np.ix_(sub, sub)]
    return _gain_general(P, costs, local[start_idx])


def recurrent_states(policy: PolicyTable, spec: MdpSpec,
                     start: AociState = AociState(1, 1)):
    """States with positive stationary mass in the chain reached from `start`."""
    kernel = _Kernel(spec)
    sub, pi, _ = _stationary_on_closure(kernel, policy.flat(),
                                        spec.state_index(start))
    if pi is None:
        raise SolverFailureError("recurrent_states needs a unichain restriction")
    return [spec.state_at(g) for g, mass in zip(sub, pi) if mass > 1e-12]


def enumerate_policies_oracle(spec: MdpSpec,
                              ref_state: AociState = AociState(1, 1)):
    """Brute-force ground truth: evaluates all 2^|S| deterministic policies
    on the chain reachable from (1, 1) and returns (best gain, best policy).

    Requires |S| <= 16. Ties go to the smallest policy encoding (bit i of the
    encoding is the action at flat state index i).
    """
    n = spec.num_states
    if n > 16:
        raise InvalidParameterError("enumeration oracle limited to <= 16 states")
    kernel = _Kernel(spec)
    ref_idx = spec.state_index(ref_state)
    num_pol = 1 << n
    pol_idx = np.arange(num_pol, dtype=np.uint32)
    bits = ((pol_idx[:, None] >> np.arange(n)[None, :]) & 1).astype(np.int8)

    succ_masks = np.zeros((2, n), dtype=np.uint32)
    prob_rows = np.zeros((2, n, n))
    for a in (0, 1):
        acts = np.full(n, a, dtype=np.int8)
        for i, (nxt, prb) in enumerate(kernel.successor_lists(acts)):
            for j, p in zip(nxt, prb):
                succ_masks[a, i] |= np.uint32(1 << j)
                prob_rows[a, i, j] += p

    succ_ps = np.where(bits == 1, succ_masks[1][None, :], succ_masks[0][None, :])
    reach = np.full(num_pol, np.uint32(1 << ref_idx), dtype=np.uint32)
    for _ in range(n):
        member = ((reach[:, None] >> np.arange(n, dtype=np.uint32)[None, :]) & 1) == 1
        add = np.bitwise_or.reduce(np.where(member, succ_ps, np.uint32(0)), axis=1)
        new = reach | add
        if np.array_equal(new, reach):
            break
        reach = new
    in_r = ((reach[:, None] >> np.arange(n)[None, :]) & 1) == 1

    row_a = np.zeros((2, n, n + 1))
    for a in (0, 1):
        row_a[a, :, 0] = 1.0
        row_a[a, np.arange(n), 1 + np.arange(n)] += 1.0
        row_a[a, :, 1:] -= prob_rows[a]
    ident_rows = np.zeros((n, n + 1))
    ident_rows[np.arange(n), 1 + np.arange(n)] = 1.0
    anchor = np.zeros(n + 1)
    anchor[1 + ref_idx] = 1.0
    c_pair = np.stack([kernel.cost0, kernel.cost1])

    gains = np.empty(num_pol)
    chunk = 4096
    srange = np.arange(n)
    for lo in range(0, num_pol, chunk):
        hi = min(lo + chunk, num_pol)
        bsl = bits[lo:hi]
        inr = in_r[lo:hi]
        A_states = row_a[bsl, srange[None, :]]
        A_states = np.where(inr[..., None], A_states, ident_rows[None, ...])
        A = np.concatenate(
            [A_states, np.broadcast_to(anchor, (hi - lo, 1, n + 1))], axis=1)
        b = np.concatenate(
            [np.where(inr, c_pair[bsl, srange[None, :]], 0.0),
             np.zeros((hi - lo, 1))], axis=1)
        bad = np.zeros(hi - lo, dtype=bool)
        try:
            x = np.linalg.solve(A, b[..., None])[..., 0]
            resid = np.abs(np.einsum("pij,pj->pi", A, x) - b).max(axis=1)
            bad = ~np.isfinite(resid) | (resid > 1e-8)
            gains[lo:hi] = x[:, 0]
        except np.linalg.LinAlgError:
            bad[:] = True
        for off in np.flatnonzero(bad):
            p = lo + off
            acts = bits[p]
            sub = np.flatnonzero(in_r[p])
            local = {g: l for l, g in enumerate(sub)}
            P = kernel.transition_matrix(acts)[np.ix_(sub, sub)]
            costs = kernel.stage_costs(acts)[sub]
            gains[p] = _gain_general(P, costs, local[ref_idx])

    best = int(np.argmin(gains))
    return float(gains[best]), PolicyTable.from_flat(bits[best], spec)


# ---------------------------------------------------------------------------
# CSV export


def export_policy_csv(policy: PolicyTable, path, comments=None) -> None:
    rows = []
    dcap, acap = policy.actions.shape
    for aoi in range(1, acap + 1):
        for aoci in range(1, dcap + 1):
            rows.append((aoi, aoci, int(policy.actions[aoci - 1, aoi - 1])))
    csvio.write_csv(path, ["delta", "aoci", "action"], rows, comments=comments)


def import_policy_csv(path) -> PolicyTable:
    _, rows, _ = csvio.read_csv(path)
    if not rows:
        raise InvalidParameterError(f"no policy rows in {path}")
    acap = max(int(r["delta"]) for r in rows)
    dcap = max(int(r["aoci"]) for r in rows)
    actions = np.full((dcap, acap), -1, dtype=np.int8)
    for r in rows:
        actions[int(r["aoci"]) - 1, int(r["delta"]) - 1] = int(r["action"])
    if np.any(actions < 0):
        raise InvalidParameterError(f"policy table in {path} has missing cells")
    return PolicyTable(actions)


def export_solve_csv(result: SolveResult, path, comments=None) -> None:
    lines = list(comments or [])
    lines.append(f"gain={result.gain!r} iterations={result.iterations}")
    rows = []
    dcap, acap = result.bias.shape
    for aoi in range(1, acap + 1):
        for aoci in range(1, dcap + 1):
            rows.append((aoi, aoci, float(result.bias[aoci - 1, aoi - 1])))
    csvio.write_csv(path, ["delta", "aoci", "bias"], rows, comments=lines)


def read_solve_header(path):
    """(gain, iterations) recorded in a solve CSV's comment header."""
    _, _, comments = csvio.read_csv(path)
    for line in comments:
        if line.startswith("gain="):
            parts = dict(p.split("=", 1) for p in line.split())
            return float(parts["gain"]), int(parts["iterations"])
    raise InvalidParameterError(f"no gain header in {path}")
