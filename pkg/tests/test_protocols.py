import pytest

from netcon.core import Configuration, ProtocolDefinition, ProtocolError, apply_pairwise, crash
from netcon.invariants import invariants_for
from netcon.protocols import (PartitionParams, get_protocol, supernode_index, three_partition)
from netcon.restart import (RestartState, compose_restart_net, compose_restart_pp,
                            degree_mismatches, leaders)
from netcon.scheduling import AdversarySchedule, StopRule, random_crash_steps, simulate


def test_clique_table():
    p = get_protocol("clique")
    assert set(p.states) == {"b", "r"} and len(p.delta1) == 3 and p.delta2 == {}


def test_cycle_cover_table():
    p = get_protocol("ft-cycle-cover")
    assert p.delta1[("q1", "q1", 0)] == ("q2", "q2", 1)
    assert p.delta2[("q2", 1)] == "q1"


def test_supernodes_k3_rejected():
    with pytest.raises(ProtocolError):
        get_protocol("supernodes", PartitionParams.complete_multipartite(3))


def test_supernodes_needs_params():
    with pytest.raises(ProtocolError):
        get_protocol("supernodes")


def test_partition_params_f_below_k():
    with pytest.raises(ProtocolError):
        PartitionParams.complete_multipartite(2, f=2)


def test_partition_params_lonely_class():
    with pytest.raises(ProtocolError):
        PartitionParams(2, frozenset({(0, 0)}))


def test_unknown_protocol():
    with pytest.raises(ProtocolError):
        get_protocol("spanning-tree")


def test_three_partition_has_q0_prime():
    assert "q0'" in three_partition().states


def test_ft_line_literal_differs():
    assert len(get_protocol("ft-line-literal").delta1) < len(get_protocol("ft-line").delta1)


@pytest.mark.parametrize("k", [2, 4, 8])
def test_supernodes_fault_free_sizes(k):
    # each class ends with n/k - 1 < s <= ceil(n/k)
    p = get_protocol("supernodes", PartitionParams.complete_multipartite(k))
    n = 40
    for seed in range(5):
        tr = simulate(p, n, seed, stop=StopRule(max_steps=10**7, window=0, until="silent"))
        assert tr.status == "silent"
        sizes = [0] * k
        for q in tr.final.state:
            sizes[supernode_index(q, k)] += 1
        assert all(n / k - 1 < s <= -(-n // k) for s in sizes), sizes


@pytest.mark.parametrize("name", ["ft-cycle-cover", "ft-line", "ft-star", "clique"])
def test_per_step_invariants_hold(name):
    p = get_protocol(name)
    for seed in range(10):
        adv = AdversarySchedule.at_steps(random_crash_steps(2, 300, seed))
        tr = simulate(p, 9, seed, adv, StopRule(max_steps=20_000), checks=invariants_for(p))
        assert tr.violation is None


# restart composition ------------------------------------------------------

def rs(role, phase, inner="b", restart=0, degree=0):
    return RestartState(role, phase, restart, degree, inner)


def pp():
    # a population protocol: two a's meet and both become b
    inner = ProtocolDefinition("pair", ("a", "b"), "a", {("a", "a", 0): ("b", "b", 0)})
    return compose_restart_pp(inner)


def test_pp_rejects_edge_protocols():
    with pytest.raises(ProtocolError):
        compose_restart_pp(get_protocol("clique"))


def test_leader_leader_both_max_plus_one():
    p = pp()
    outs = p.outcomes(rs("l", 3, "b"), rs("l", 5, "b"), 0)
    roles = {(a.role, b.role) for a, b, _ in outs}
    assert roles == {("l", "f"), ("f", "l")}
    for a, b, _ in outs:
        assert a.phase == b.phase == 6 and a.inner == b.inner == "a"


def test_leader_follower_same_phase_runs_inner():
    p = pp()
    (a, b, e), = p.outcomes(rs("l", 4, "a"), rs("f", 4, "a"), 0)
    assert (a.role, a.phase, b.role, b.phase) == ("l", 4, "f", 4)
    assert a.inner == b.inner == "b"


def test_follower_follower_lower_catches_up():
    p = pp()
    (a, b, _), = p.outcomes(rs("f", 2, "b"), rs("f", 7, "b"), 0)
    assert a.phase == 7 and a.inner == "a" and b == rs("f", 7, "b")


def test_notification_makes_leader():
    p = pp()
    q = p.notify(rs("f", 3, "b"), 1)
    assert q.role == "l" and q.phase == 4 and q.inner == "a"


def test_net_restart_edge_removal_decrements():
    p = compose_restart_net(get_protocol("clique"))
    a = rs("f", 6, "r", restart=1, degree=2)
    b = rs("f", 5, "r", degree=1)
    (a2, b2, e), = p.outcomes(a, b, 1)
    assert e == 0 and a2.degree == 1 and b2.degree == 0
    # b had its only edge removed and was pulled into phase 6: it resumes at once
    assert b2.phase == 6 and b2.restart == 0 and b2.inner == "b"


def test_net_restart_reaching_zero_resets():
    p = compose_restart_net(get_protocol("clique"))
    a = rs("f", 6, "r", restart=1, degree=1)
    b = rs("f", 6, "r", restart=1, degree=1)
    (a2, b2, e), = p.outcomes(a, b, 1)
    assert e == 0 and a2.restart == 0 and a2.degree == 0 and a2.inner == "b"


def test_net_flag1_decrements_and_restarts():
    p = compose_restart_net(get_protocol("clique"))
    q = p.notify(rs("f", 2, "r", degree=3), 1)
    assert q.degree == 2 and q.restart == 1 and q.phase == 3 and q.role == "l"


def test_net_degree_counter_follows_edges():
    p = compose_restart_net(get_protocol("clique"))
    bad = []

    def mon(c):
        if degree_mismatches(c):
            bad.append(c.step)
    for seed in range(3):
        adv = AdversarySchedule.at_steps(random_crash_steps(2, 1500, seed))
        tr = simulate(p, 6, seed, adv, StopRule(max_steps=10**6, window=720, until="silent"),
                      monitor=mon)
        assert tr.stabilized and len(leaders(tr.final)) == 1
    assert bad == []


def test_degree_cap_loses_count():
    p = compose_restart_net(get_protocol("clique"), degree_cap=1)
    c = Configuration.initial(4, p)
    c.state = [rs("f", 0, "r", degree=1) for _ in range(4)]
    for u in (1, 2, 3):
        apply_pairwise(c, 0, u, p)
    assert c.degree(0) == 3 and c.state[0].degree == 1
    assert 0 in degree_mismatches(c)


def test_restart_registry_names():
    assert get_protocol("restart-net(ft-star)").name == "restart-net(ft-star)"
    with pytest.raises(ProtocolError):
        get_protocol("restart-pp(ft-star)")


def test_crash_notifies_restart_neighbours():
    p = compose_restart_net(get_protocol("clique"))
    c = Configuration.initial(3, p)
    c.state = [rs("l", 1, "r", degree=2), rs("f", 1, "r", degree=2), rs("f", 1, "r", degree=2)]
    for u, v in ((0, 1), (0, 2), (1, 2)):
        c.edges[u, v] = c.edges[v, u] = 1
    crash(c, 0, p)
    assert degree_mismatches(c) == []
    assert all(c.state[u].phase == 2 and c.state[u].restart == 1 for u in (1, 2))
