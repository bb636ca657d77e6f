from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtmec import schedmdp as m
from dtmec.errors import InvalidParameterError, SolverFailureError
from dtmec.schedmdp import AociState, MdpSpec, PolicyTable


def small_spec(**kw):
    base = dict(aoci_cap=4, aoi_cap=4, p_tx=0.8, content_q=0.3,
                update_cost=2.0, weight=1.0)
    base.update(kw)
    return MdpSpec(**base)


# ---------------------------------------------------------------------------
# spec and state plumbing


def test_spec_invariants():
    with pytest.raises(InvalidParameterError):
        MdpSpec(aoci_cap=1, aoi_cap=1, p_tx=0.5, content_q=0.5, update_cost=1.0)
    with pytest.raises(InvalidParameterError):
        MdpSpec(aoci_cap=3, aoi_cap=5, p_tx=0.5, content_q=0.5, update_cost=1.0)
    with pytest.raises(InvalidParameterError):
        small_spec(p_tx=1.5)
    with pytest.raises(InvalidParameterError):
        small_spec(update_cost=-1.0)


def test_state_indexing_roundtrip():
    spec = small_spec()
    for i in range(spec.num_states):
        assert spec.state_index(spec.state_at(i)) == i
    with pytest.raises(InvalidParameterError):
        spec.state_index(AociState(5, 1))


# ---------------------------------------------------------------------------
# transitions and costs


def test_idle_transition_is_deterministic_drift():
    spec = small_spec()
    out = m.transitions(AociState(3, 2), 0, spec)
    assert out == [(AociState(4, 3), 1.0)]


def test_update_transition_example():
    spec = small_spec()
    out = dict((s, p) for s, p in m.transitions(AociState(3, 2), 1, spec))
    # p_r(2) = (1 + 0.4^2)/2 = 0.58
    assert out[AociState(1, 1)] == pytest.approx(0.8 * 0.42, abs=1e-15)
    assert out[AociState(4, 1)] == pytest.approx(0.8 * 0.58, abs=1e-15)
    assert out[AociState(4, 3)] == pytest.approx(0.2, abs=1e-15)


def test_transition_saturation_at_caps():
    spec = small_spec()
    assert m.transitions(AociState(4, 4), 0, spec) == [(AociState(4, 4), 1.0)]
    out = dict(m.transitions(AociState(4, 4), 1, spec))
    assert AociState(4, 1) in out and AociState(1, 1) in out and AociState(4, 4) in out


def test_update_with_certain_delivery_has_two_successors():
    spec = small_spec(p_tx=1.0)
    out = m.transitions(AociState(2, 2), 1, spec)
    assert len(out) == 2


@given(p_tx=st.fractions(0, 1), q=st.fractions(0, 1),
       aoci=st.integers(1, 4), aoi=st.integers(1, 4), action=st.integers(0, 1))
@settings(max_examples=200)
def test_transition_probabilities_close_exactly_as_rationals(p_tx, q, aoci, aoi, action):
    spec = MdpSpec(aoci_cap=4, aoi_cap=4, p_tx=float(p_tx), content_q=float(q),
                   update_cost=1.0)
    out = m.transitions(AociState(aoci, aoi), action, spec)
    # rational reconstruction from the same p_tx / p_r the implementation uses
    P = Fraction(spec.p_tx)
    R = Fraction(spec.return_prob(aoi))
    if action == 0:
        exact = [Fraction(1)]
    else:
        exact = [x for x in (P * (1 - R), P * R, 1 - P) if x != 0]
    assert sum(exact) == 1
    got = sorted(p for _, p in out)
    want = sorted(float(x) for x in exact)
    assert len(got) == len(want)
    for g, w in zip(got, want):
        assert g == pytest.approx(w, abs=1e-12)
    assert sum(p for _, p in out) == pytest.approx(1.0, abs=1e-12)


def test_reachable_states_satisfy_aoci_at_least_aoi():
    for spec in (small_spec(), small_spec(p_tx=1.0, content_q=0.1),
                 small_spec(aoci_cap=6, aoi_cap=3)):
        for s in m.reachable_states(spec):
            assert s.aoci >= s.aoi


def test_stage_cost_examples():
    spec = MdpSpec(aoci_cap=8, aoi_cap=8, p_tx=0.8, content_q=0.3,
                   update_cost=12.0, weight=1.0)
    assert m.stage_cost(AociState(5, 2), 0, spec) == 5.0
    assert m.stage_cost(AociState(5, 2), 1, spec) == 17.0
    zero_w = MdpSpec(aoci_cap=8, aoi_cap=8, p_tx=0.8, content_q=0.3,
                     update_cost=12.0, weight=0.0)
    assert m.stage_cost(AociState(1, 1), 1, zero_w) == 1.0


# ---------------------------------------------------------------------------
# evaluation


def matrix_power_gain(policy, spec, power=4096):
    """Independent oracle: start-state row of P^power times stage costs."""
    kernel = m._Kernel(spec)
    P = kernel.transition_matrix(policy.flat())
    costs = kernel.stage_costs(policy.flat())
    Pk = np.linalg.matrix_power(P, power)
    return float(Pk[0] @ costs)


def test_all_idle_gain_is_the_cap():
    spec = small_spec()
    idle = PolicyTable.constant(spec, 0)
    gain, bias = m.evaluate_policy(idle, spec)
    assert gain == pytest.approx(4.0, abs=1e-12)
    assert bias[0, 0] == 0.0
    # long-run drift check
    assert matrix_power_gain(idle, spec, power=64) == pytest.approx(4.0, abs=1e-12)


def test_zw_gain_matches_stationary_oracle_3x3():
    spec = MdpSpec(aoci_cap=3, aoi_cap=3, p_tx=0.8, content_q=0.3, update_cost=2.0)
    zw = PolicyTable.constant(spec, 1)
    gain, _ = m.evaluate_policy(zw, spec)
    assert gain == pytest.approx(matrix_power_gain(zw, spec), abs=1e-9)
    assert m.average_cost_of(zw, spec) == pytest.approx(gain, abs=1e-9)


def test_evaluation_methods_agree():
    spec = small_spec(aoci_cap=8, aoi_cap=8)
    pol = PolicyTable.constant(spec, 1)
    g_dense, V_dense = m.evaluate_policy(pol, spec, method="dense")
    g_sparse, V_sparse = m.evaluate_policy(pol, spec, method="sparse")
    g_sweep, V_sweep = m.evaluate_policy(pol, spec, method="sweep")
    assert g_sparse == pytest.approx(g_dense, abs=1e-10)
    assert g_sweep == pytest.approx(g_dense, abs=1e-8)
    assert np.allclose(V_sparse, V_dense, atol=1e-8)
    assert V_dense[0, 0] == 0.0 and V_sparse[0, 0] == 0.0 and V_sweep[0, 0] == 0.0


def test_sweep_touch_instrumentation():
    spec = small_spec(aoci_cap=10, aoi_cap=10)
    res = m.relative_policy_iteration(spec)
    _, _, stats = m.sweep_evaluation_stats(res.policy, spec)
    assert stats["touches_per_sweep"] <= 3 * spec.num_states


def test_multichain_policy_raises_in_unichain_evaluator():
    # p_tx=1 trap: update only at (1,1), which then self-loops with certainty
    spec = MdpSpec(aoci_cap=4, aoi_cap=4, p_tx=1.0, content_q=1.0, update_cost=1.0)
    actions = np.zeros(16, dtype=np.int8)
    actions[0] = 1
    pol = PolicyTable.from_flat(actions, spec)
    with pytest.raises(SolverFailureError):
        m.evaluate_policy(pol, spec, method="dense")
    # the stationary-route average cost still resolves it from the start state
    assert m.average_cost_of(pol, spec) == pytest.approx(1.0 + 1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# improvement and thresholds


def test_improve_with_zero_bias_and_big_cost_idles():
    spec = small_spec(update_cost=50.0)
    pol = m.improve_policy(np.zeros((4, 4)), 0.0, spec)
    assert not pol.actions.any()


def test_improve_matches_brute_argmin_on_solved_instance():
    spec = small_spec()
    res = m.relative_policy_iteration(spec)
    kernel = m._Kernel(spec)
    V = res.bias.reshape(-1)
    Q0, Q1 = kernel.q_values(V)
    brute = np.where(Q1 < Q0 - 1e-12, 1, 0)
    improved = m.improve_policy(res.bias, res.gain, spec)
    assert np.array_equal(improved.flat(), brute)
    assert res.shortcut_conflicts == []


def test_threshold_for_pinned_value():
    spec = MdpSpec(aoci_cap=100, aoi_cap=100, p_tx=0.8, content_q=0.5,
                   update_cost=12.0, weight=1.0)
    # p_r(2) = 0.5 at q = 0.5: 0.4 * aoci >= 13.6  =>  34
    assert m.threshold_for(2, spec) == 34


def test_threshold_for_zero_cost_formula():
    spec = MdpSpec(aoci_cap=100, aoi_cap=100, p_tx=0.7, content_q=0.3,
                   update_cost=0.0, weight=1.0)
    pr1 = spec.return_prob(1)
    expected = int(np.ceil(1.0 / (1.0 - pr1) - 1e-9))
    assert m.threshold_for(1, spec) == expected


def test_threshold_for_none_cases():
    frozen = MdpSpec(aoci_cap=50, aoi_cap=50, p_tx=0.8, content_q=0.0,
                     update_cost=12.0)
    assert m.threshold_for(3, frozen) is None          # content never changes
    tiny_cap = MdpSpec(aoci_cap=5, aoi_cap=5, p_tx=0.8, content_q=0.5,
                       update_cost=12.0)
    assert m.threshold_for(2, tiny_cap) is None        # threshold beyond the cap


# ---------------------------------------------------------------------------
# solvers


def test_rpi_boundary_always_update():
    spec = MdpSpec(aoci_cap=4, aoi_cap=4, p_tx=1.0, content_q=1.0,
                   update_cost=5.0, weight=0.0)
    res = m.relative_policy_iteration(spec)
    assert res.gain == pytest.approx(1.0, abs=1e-12)
    theta, _ = m.enumerate_policies_oracle(spec)
    assert theta == pytest.approx(1.0, abs=1e-9)


def test_rpi_boundary_never_update():
    spec = small_spec(update_cost=4 * 4 * 4.0)
    res = m.relative_policy_iteration(spec)
    assert res.gain == pytest.approx(4.0, abs=1e-9)
    assert not res.policy.actions.any()
    theta, _ = m.enumerate_policies_oracle(spec)
    assert theta == pytest.approx(4.0, abs=1e-9)


def test_rpi_gain_history_monotone():
    spec = small_spec(aoci_cap=12, aoi_cap=12, update_cost=6.0)
    res = m.relative_policy_iteration(spec)
    hist = res.gain_history
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_rpi_agrees_with_enumeration_4x4():
    spec = small_spec()
    res = m.relative_policy_iteration(spec)
    theta, pol = m.enumerate_policies_oracle(spec)
    assert res.gain == pytest.approx(theta, abs=1e-9)
    for s in m.recurrent_states(res.policy, spec):
        assert res.policy.action(s) == pol.action(s)


def test_rvi_agrees_with_rpi():
    for spec in (small_spec(), small_spec(p_tx=0.5, content_q=0.1, update_cost=1.0),
                 small_spec(p_tx=1.0)):
        rpi = m.relative_policy_iteration(spec)
        rvi = m.relative_value_iteration(spec)
        assert rvi.gain == pytest.approx(rpi.gain, abs=1e-9)


def test_policy_threshold_monotone_in_aoci():
    for p_tx in (0.5, 0.8, 1.0):
        for q in (0.1, 0.3):
            for wc in (1.0, 12.0):
                spec = MdpSpec(aoci_cap=8, aoi_cap=8, p_tx=p_tx, content_q=q,
                               update_cost=wc, weight=1.0)
                res = m.relative_policy_iteration(spec)
                acts = res.policy.actions
                diffs = np.diff(acts.astype(int), axis=0)
                assert (diffs >= 0).all(), f"non-monotone at p={p_tx} q={q} wc={wc}"


# ---------------------------------------------------------------------------
# enumeration oracle against an exact rational computation


def sympy_policy_gain(actions_flat, spec):
    """Exact rational average cost from (1,1) via sympy."""
    import sympy as sp

    q = sp.Rational(3, 10)
    p = sp.Rational(4, 5)
    wc = sp.Rational(int(spec.weight * spec.update_cost))
    n = spec.num_states

    def pr(delta):
        return (1 + (1 - 2 * q) ** delta) / 2

    P = sp.zeros(n, n)
    costs = []
    for i in range(n):
        s = spec.state_at(i)
        up_a = min(s.aoci + 1, spec.aoci_cap)
        up_d = min(s.aoi + 1, spec.aoi_cap)
        idle_j = spec.state_index(AociState(up_a, up_d))
        if actions_flat[i] == 0:
            P[i, idle_j] += 1
            costs.append(sp.Integer(s.aoci))
        else:
            P[i, 0] += p * (1 - pr(s.aoi))
            P[i, spec.state_index(AociState(up_a, 1))] += p * pr(s.aoi)
            P[i, idle_j] += 1 - p
            costs.append(s.aoci + wc)
    # closure from state 0
    seen = {0}
    frontier = [0]
    while frontier:
        nxt = []
        for i in frontier:
            for j in range(n):
                if P[i, j] != 0 and j not in seen:
                    seen.add(j)
                    nxt.append(j)
        frontier = nxt
    sub = sorted(seen)
    r = len(sub)
    Ps = P[sub, sub]
    A = (Ps.T - sp.eye(r))
    A = A.row_insert(r, sp.ones(1, r))
    b = sp.zeros(r + 1, 1)
    b[r] = 1
    pi = A.solve_least_squares(b)
    theta = sum(pi[k] * costs[sub[k]] for k in range(r))
    return float(theta)


def test_enumeration_oracle_matches_exact_rational_on_2x2():
    spec = MdpSpec(aoci_cap=2, aoi_cap=2, p_tx=0.8, content_q=0.3,
                   update_cost=2.0, weight=1.0)
    exact = [sympy_policy_gain([(pol >> i) & 1 for i in range(4)], spec)
             for pol in range(16)]
    theta, best = m.enumerate_policies_oracle(spec)
    assert theta == pytest.approx(min(exact), abs=1e-12)
    for pol in range(16):
        acts = np.array([(pol >> i) & 1 for i in range(4)], dtype=np.int8)
        got = m.average_cost_of(PolicyTable.from_flat(acts, spec), spec)
        assert got == pytest.approx(exact[pol], abs=1e-10)


def test_enumeration_oracle_rejects_large_spaces():
    with pytest.raises(InvalidParameterError):
        m.enumerate_policies_oracle(small_spec(aoci_cap=5, aoi_cap=4))


def test_average_cost_examples():
    spec = MdpSpec(aoci_cap=6, aoi_cap=6, p_tx=1.0, content_q=1.0,
                   update_cost=12.0, weight=1.0)
    assert m.average_cost_of(PolicyTable.constant(spec, 1), spec) == pytest.approx(13.0)
    assert m.average_cost_of(PolicyTable.constant(spec, 0), spec) == pytest.approx(6.0)


def test_average_cost_matches_simulation():
    from dtmec import simulator as sim
    spec = MdpSpec(aoci_cap=20, aoi_cap=20, p_tx=0.8, content_q=0.3,
                   update_cost=2.0, weight=1.0)
    res = m.relative_policy_iteration(spec)
    analytic = m.average_cost_of(res.policy, spec)
    assert analytic == pytest.approx(res.gain, abs=1e-9)
    setup = sim.SimulationSetup.from_spec(spec, horizon_slots=2000, burn_in_slots=100)
    mc = sim.run_monte_carlo(sim.threshold_policy(res.policy), setup, 500, 5)
    assert mc.mean.total_avg_cost == pytest.approx(analytic, rel=0.005)


# ---------------------------------------------------------------------------
# export / import


def test_policy_csv_roundtrip(tmp_path):
    spec = small_spec()
    res = m.relative_policy_iteration(spec)
    path = tmp_path / "policy.csv"
    m.export_policy_csv(res.policy, path, comments=["test"])
    loaded = m.import_policy_csv(path)
    assert np.array_equal(loaded.actions, res.policy.actions)


def test_solve_csv_header(tmp_path):
    spec = small_spec()
    res = m.relative_policy_iteration(spec)
    path = tmp_path / "solve.csv"
    m.export_solve_csv(res, path)
    gain, iters = m.read_solve_header(path)
    assert gain == res.gain
    assert iters == res.iterations
