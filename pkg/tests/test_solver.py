"""Max-flow solver: exactness vs enumeration, duality, size modes, formats."""

import numpy as np
import pytest

import oracles
from graphseg import (
    ConfigError,
    DataError,
    InfeasibleSizeError,
    SizeSpec,
    SolverParams,
    WeightSpec,
    assemble_costs,
    binary_difference,
    brute_force_oracle,
    build_knn_graph,
    dual_energy,
    primal_energy,
    solve,
    threshold_dual,
    threshold_rounding,
)
from graphseg.graph import _directed_from_pairs
from graphseg.solver import (
    class_sizes,
    penalty_value,
    read_labels_csv,
    write_labels_csv,
    write_trace_csv,
)

TIGHT = SolverParams(c=0.1, delta=1e-12, max_iters=100000)


def manual_graph(n, pairs, weights):
    return _directed_from_pairs(
        n,
        np.array([p[0] for p in pairs], dtype=np.int64),
        np.array([p[1] for p in pairs], dtype=np.int64),
        np.array(weights, dtype=np.float64),
    )


def chain_graph():
    # 10-node chain with a unique cheapest cut at edge (4,5).
    w = [1.0, 0.9, 0.8, 1.1, 0.2, 0.3, 1.0, 1.2, 0.7]
    g = manual_graph(10, [(i, i + 1) for i in range(9)], w)
    costs = assemble_costs({0: 1, 9: 2}, eta=500.0, n_nodes=10, n_classes=2)
    return g, costs


def random_instance(seed, N=12, n=2, k=3):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(N, 2))
    g = build_knn_graph(pts, k=k, weight=WeightSpec.gaussian(1.0))
    sup_nodes = rng.choice(N, size=n, replace=False)
    sup = {int(x): i + 1 for i, x in enumerate(sup_nodes)}
    costs = assemble_costs(sup, eta=500.0, n_nodes=N, n_classes=n)
    return g, costs


# ---------------------------------------------------------------------------
# Cost assembly and elementary pieces
# ---------------------------------------------------------------------------

def test_assemble_costs_row_frozen():
    # supervise node as class 2 of 3: row (eta, 0, eta)
    costs = assemble_costs({4: 2}, eta=500.0, n_nodes=6, n_classes=3)
    assert costs.C.shape == (6, 3)
    assert list(costs.C[4]) == [500.0, 0.0, 500.0]
    assert np.all(costs.C[[0, 1, 2, 3, 5]] == 0.0)


def test_assemble_costs_array_input_and_conflicts():
    c1 = assemble_costs(({2: 1, 5: 2}), eta=9.0, n_nodes=8, n_classes=2)
    c2 = assemble_costs((np.array([5, 2]), np.array([2, 1])),
                        eta=9.0, n_nodes=8, n_classes=2)
    assert np.array_equal(c1.C, c2.C)
    with pytest.raises(DataError):
        assemble_costs((np.array([3, 3]), np.array([1, 2])),
                       eta=9.0, n_nodes=8, n_classes=2)
    with pytest.raises(DataError):
        assemble_costs({9: 1}, n_nodes=8, n_classes=2)
    with pytest.raises(DataError):
        assemble_costs({0: 3}, n_nodes=8, n_classes=2)
    with pytest.raises(ConfigError):
        assemble_costs({0: 1})


def test_assemble_costs_region_terms_add():
    region = np.arange(6.0).reshape(3, 2)
    costs = assemble_costs({0: 2}, eta=10.0, region=region)
    assert np.array_equal(costs.C, region + np.array([[10.0, 0], [0, 0], [0, 0]]))


def test_threshold_rounding_ties_frozen():
    u = np.array([[0.2, 0.5, 0.3], [0.5, 0.5, 0.0], [0.0, 0.0, 0.0]])
    assert list(threshold_rounding(u)) == [2, 1, 1]


def test_binary_difference_frozen():
    u = np.array([[1.0, 0.0], [0.75, 0.25]])
    # rounding is [[1,0],[1,0]]; |diff| sums to 0.5 -> /(2*2*2) = 0.0625
    assert abs(binary_difference(u) - 0.0625) < 1e-15


def test_penalty_value_frozen():
    spec = SizeSpec.penalty([4, 4], [6, 6], 2.0)
    assert penalty_value([3, 7], spec) == pytest.approx(4.0)
    assert penalty_value([5, 5], spec) == 0.0
    hard = SizeSpec.interval([4, 4], [6, 6])
    assert penalty_value([5, 6], hard) == 0.0
    assert penalty_value([3, 7], hard) == np.inf
    assert penalty_value([1, 9], SizeSpec.none()) == 0.0


def test_size_spec_validation():
    with pytest.raises(ConfigError):
        SizeSpec("exact", lower=np.array([2.0]), upper=np.array([1.0]),
                 gamma=np.inf)
    with pytest.raises(ConfigError):
        SizeSpec.penalty([1], [2], gamma=np.inf)
    with pytest.raises(ConfigError):
        SizeSpec.penalty([1], [2], gamma=0.0)
    with pytest.raises(InfeasibleSizeError):
        SizeSpec.exact([3, 4]).validate(n_nodes=10, n_classes=2)
    with pytest.raises(InfeasibleSizeError):
        SizeSpec.interval([1, 1], [3, 3]).validate(n_nodes=10, n_classes=2)
    SizeSpec.exact([3, 7]).validate(n_nodes=10, n_classes=2)


# ---------------------------------------------------------------------------
# Frozen tiny instances
# ---------------------------------------------------------------------------

def test_two_node_instance_exact():
    g = manual_graph(2, [(0, 1)], [0.01])
    costs = assemble_costs({0: 1, 1: 2}, eta=500.0, n_nodes=2, n_classes=2)
    lab, e = brute_force_oracle(g, costs)
    assert list(lab) == [1, 2] and e == pytest.approx(0.02)

    res = solve(g, costs, params=TIGHT)
    assert res.converged
    assert list(res.labels) == [1, 2]
    assert list(res.labels_dual) == [1, 2]
    assert res.primal == pytest.approx(0.02, abs=1e-9)
    assert abs(res.primal - res.dual) < 1e-9
    assert np.allclose(res.u, [[1, 0], [0, 1]], atol=1e-9)


def test_triangle_two_seeds_energy():
    # complete K3 of unit weights, two supervised corners: either assignment
    # of the free node ends with two boundary pairs of total weight 4.
    g = manual_graph(3, [(0, 1), (0, 2), (1, 2)], [1.0, 1.0, 1.0])
    costs = assemble_costs({0: 1, 1: 2}, eta=500.0, n_nodes=3, n_classes=2)
    lab, e = brute_force_oracle(g, costs)
    assert e == pytest.approx(4.0)
    assert list(lab) == [1, 2, 1]  # enumeration prefers the lower label
    res = solve(g, costs, params=TIGHT)
    assert res.primal == pytest.approx(4.0, abs=1e-8)
    # optimum is non-unique, so only the energy (not the labeling) is pinned
    assert res.labels[0] == 1 and res.labels[1] == 2


def test_oracle_enumeration_matches_loop_reference():
    g, costs = random_instance(3, N=8, n=2)
    edges = oracles.as_edge_dict(g.src, g.dst, g.weight)
    want_lab, want_e = oracles.exhaustive_minimum(8, 2, edges, costs.C.tolist())
    lab, e = brute_force_oracle(g, costs)
    assert list(lab) == want_lab
    assert e == pytest.approx(want_e, abs=1e-12)


def test_oracle_size_guard():
    g, costs = random_instance(5, N=16, n=3, k=3)
    with pytest.raises(ConfigError):
        brute_force_oracle(g, costs)


# ---------------------------------------------------------------------------
# Exactness against enumeration
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(8))
def test_two_class_recovery_is_exact(seed):
    g, costs = random_instance(seed, N=12, n=2)
    res = solve(g, costs, params=TIGHT)
    lab, e = brute_force_oracle(g, costs)
    assert res.converged
    assert np.array_equal(res.labels, lab)
    assert res.primal == pytest.approx(e, abs=1e-9)
    assert res.binary_difference_final < 1e-9


@pytest.mark.parametrize("seed", [100, 101, 102, 103])
def test_three_class_recovery_is_exact(seed):
    g, costs = random_instance(seed, N=9, n=3)
    res = solve(g, costs, params=TIGHT)
    lab, e = brute_force_oracle(g, costs)
    assert np.array_equal(res.labels, lab)
    assert res.primal == pytest.approx(e, abs=1e-9)


def test_dual_threshold_agrees_when_unique():
    g, costs = random_instance(7, N=12, n=2)
    res = solve(g, costs, params=TIGHT)
    assert np.array_equal(res.labels_dual, res.labels)
    assert res.dual_tie_count == 0


# ---------------------------------------------------------------------------
# Saddle-point structure at convergence
# ---------------------------------------------------------------------------

def test_converged_state_is_feasible_saddle():
    g, costs = random_instance(11, N=12, n=3)
    res = solve(g, costs, params=TIGHT)
    st = res.state
    # flows feasible
    assert np.max(np.abs(st.q)) <= 1.0 + 1e-12
    assert np.all(st.p <= costs.C + 1e-8)
    # u converged to the simplex
    assert np.max(np.abs(st.u.sum(axis=1) - 1.0)) < 1e-8
    assert st.u.min() > -1e-6 and st.u.max() < 1 + 1e-6
    # flow conservation: div q - p_s + p + rho2 - rho1 = 0
    resid = st.div_q - st.p_s[:, None] + st.p \
        + (st.rho2 - st.rho1)[None, :]
    assert np.max(np.abs(resid)) < 1e-9
    # weak + strong duality at the relaxed optimum
    relaxed = primal_energy(g, st.u, costs)
    assert relaxed >= res.dual - 1e-8
    assert abs(relaxed - res.dual) < 1e-6


def test_duality_gap_closes():
    for seed in (0, 1):
        g, costs = random_instance(seed, N=20, n=3, k=4)
        res = solve(g, costs, params=TIGHT)
        gap = abs(res.primal - res.dual) / max(1.0, abs(res.primal))
        assert gap <= 1e-4


def test_ps_orders_reach_the_same_saddle():
    g, costs = random_instance(13, N=12, n=2)
    a = solve(g, costs, params=TIGHT)
    b = solve(g, costs, params=SolverParams(c=0.1, delta=1e-12,
                                            max_iters=100000,
                                            ps_order="post_p"))
    assert np.array_equal(a.labels, b.labels)
    assert abs(a.primal - b.primal) < 1e-9
    assert abs(b.primal - b.dual) <= 1e-6


def test_inner_q_steps_reach_the_same_labels():
    g, costs = random_instance(17, N=12, n=2)
    a = solve(g, costs, params=TIGHT)
    b = solve(g, costs, params=SolverParams(c=0.1, delta=1e-12,
                                            max_iters=100000, inner_q_steps=3))
    assert np.array_equal(a.labels, b.labels)
    assert abs(a.primal - b.primal) < 1e-9


def test_forced_rho_steps_are_inert_without_sizes():
    g, costs = random_instance(19, N=10, n=2)
    plain = solve(g, costs, params=TIGHT)
    forced = solve(g, costs, params=TIGHT, _force_rho_steps=True)
    assert np.array_equal(plain.u, forced.u)  # bitwise: rho stays zero
    assert np.array_equal(plain.state.q, forced.state.q)
    assert np.all(forced.state.rho1 == 0.0) and np.all(forced.state.rho2 == 0.0)


def test_warm_start_resumes_bitwise():
    g, costs = random_instance(23, N=12, n=2)
    short = SolverParams(c=0.1, delta=0.0 + 1e-300, max_iters=100,
                         record_trace=False)
    first = solve(g, costs, params=short)
    resumed = solve(g, costs, params=short, init=first.state)
    full = solve(g, costs, params=SolverParams(c=0.1, delta=1e-300,
                                               max_iters=200,
                                               record_trace=False))
    assert np.array_equal(resumed.u, full.u)
    assert np.array_equal(resumed.state.q, full.state.q)
    assert np.array_equal(resumed.state.p_s, full.state.p_s)


def test_unconverged_run_reports_it():
    g, costs = random_instance(29, N=12, n=2)
    res = solve(g, costs, params=SolverParams(c=0.1, delta=1e-12, max_iters=3))
    assert not res.converged
    assert res.iterations == 3


# ---------------------------------------------------------------------------
# Size handling
# ---------------------------------------------------------------------------

def test_exact_sizes_tight_case_matches_enumeration():
    g, costs = chain_graph()
    size = SizeSpec.exact([6, 4])
    res = solve(g, costs, size, params=TIGHT)
    lab, e = brute_force_oracle(g, costs, size)
    assert np.array_equal(res.labels, lab)
    assert list(class_sizes(res.labels, 2)) == [6, 4]
    assert res.primal == pytest.approx(e, abs=1e-8)
    assert abs(res.primal - res.dual) < 1e-8


def test_exact_sizes_loose_case_solves_relaxation():
    # here the relaxed optimum is fractional (mass splits along the chain),
    # so thresholding cannot match enumeration; the solve itself must still
    # close the relaxed duality gap and hit the size sums exactly.
    g, costs = chain_graph()
    size = SizeSpec.exact([3, 7])
    res = solve(g, costs, size, params=TIGHT)
    st = res.state
    assert np.allclose(st.u.sum(axis=0), [3.0, 7.0], atol=1e-6)
    relaxed = primal_energy(g, st.u, costs, size)
    assert abs(relaxed - res.dual) < 1e-6
    _, e = brute_force_oracle(g, costs, size)
    assert relaxed <= e + 1e-9  # relaxation lower-bounds the binary optimum


def test_interval_sizes_match_enumeration():
    g, costs = chain_graph()
    for lo, hi in ([(4, 4), (6, 6)], [(6, 2), (8, 4)]):
        size = SizeSpec.interval(list(lo), list(hi))
        res = solve(g, costs, size, params=TIGHT)
        lab, e = brute_force_oracle(g, costs, size)
        counts = class_sizes(res.labels, 2)
        assert np.all(counts >= np.array(lo)) and np.all(counts <= np.array(hi))
        assert res.primal == pytest.approx(e, abs=1e-8)


def test_penalty_sizes_match_enumeration():
    g, costs = chain_graph()
    # bounds sum past N, so some violation is always paid; weak gamma keeps
    # the unconstrained cut, strong gamma rebalances, asymmetric bounds shift
    for lo, hi, gamma in ([(6, 6), (6, 6), 0.01],
                          [(6, 6), (6, 6), 5.0],
                          [(7, 1), (7, 3), 0.15]):
        size = SizeSpec.penalty(list(lo), list(hi), gamma)
        res = solve(g, costs, size, params=TIGHT)
        lab, e = brute_force_oracle(g, costs, size)
        assert res.primal == pytest.approx(e, abs=1e-8), (lo, hi, gamma)
        assert np.array_equal(res.labels, lab), (lo, hi, gamma)


def test_penalty_multipliers_stay_in_box():
    g, costs = chain_graph()
    size = SizeSpec.penalty([6, 6], [6, 6], 0.25)
    res = solve(g, costs, size, params=TIGHT)
    for rho in (res.state.rho1, res.state.rho2):
        assert np.all(rho >= -1e-15) and np.all(rho <= 0.25 + 1e-15)


def test_size_graph_mismatch_and_infeasibility():
    g, costs = chain_graph()
    with pytest.raises(InfeasibleSizeError):
        solve(g, costs, SizeSpec.exact([4, 4]), params=TIGHT)
    bad = assemble_costs({0: 1}, n_nodes=9, n_classes=2)
    with pytest.raises(DataError):
        solve(g, bad, params=TIGHT)


# ---------------------------------------------------------------------------
# eta = inf supervision
# ---------------------------------------------------------------------------

def test_infinite_eta_pins_supervision():
    g, costs = random_instance(31, N=12, n=2)
    hard = assemble_costs(
        (costs.supervised_nodes, costs.supervised_classes),
        eta=np.inf, n_nodes=12, n_classes=2)
    res = solve(g, hard, params=TIGHT)
    soft = solve(g, costs, params=TIGHT)
    assert np.array_equal(res.labels, soft.labels)
    for node, cls in zip(hard.supervised_nodes, hard.supervised_classes):
        assert abs(res.u[node, cls - 1] - 1.0) < 1e-9
    assert np.isfinite(res.primal)


# ---------------------------------------------------------------------------
# Trace and file formats
# ---------------------------------------------------------------------------

def test_trace_contents_and_csv(tmp_path):
    g, costs = random_instance(37, N=12, n=2)
    res = solve(g, costs, params=SolverParams(c=0.1, delta=1e-12,
                                              max_iters=100000))
    tr = res.trace
    assert list(tr["iter"][:3]) == [1, 2, 3]
    assert len(tr["iter"]) == res.iterations
    assert tr["binary_diff"][-1] == pytest.approx(res.binary_difference_final)
    assert tr["primal"][-1] == pytest.approx(res.primal)
    assert tr["u_change"][-1] < 1e-12

    path = tmp_path / "trace.csv"
    write_trace_csv(tr, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "iter,primal,dual,binary_diff,u_change"
    assert len(lines) == 1 + res.iterations
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.allclose(data[:, 1], tr["primal"])

    lpath = tmp_path / "labels.csv"
    write_labels_csv(res.labels, lpath)
    assert lpath.read_text().splitlines()[0] == "node_index,label"
    assert np.array_equal(read_labels_csv(lpath), res.labels)


def test_trace_every_subsamples():
    g, costs = random_instance(41, N=10, n=2)
    res = solve(g, costs, params=SolverParams(c=0.1, delta=1e-12,
                                              max_iters=1000, trace_every=10))
    assert list(res.trace["iter"][:3]) == [10, 20, 30]
