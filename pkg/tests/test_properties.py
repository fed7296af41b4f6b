import itertools

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from netcon.core import Configuration, OutputGraph, apply_pairwise, crash
from netcon.invariants import BASIC, invariants_for
from netcon.languages import (check, cycle_cover, find_partition, spanning_clique, spanning_line,
                              spanning_star)
from netcon.protocols import PartitionParams, get_protocol
from netcon.scheduling import AdversarySchedule, StopRule, random_crash_steps, simulate

NAMES = ["clique", "ft-star", "ft-cycle-cover", "ft-line", "3-partition"]
settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@st.composite
def event_runs(draw):
    name = draw(st.sampled_from(NAMES))
    n = draw(st.integers(2, 7))
    events = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.booleans()),
                           max_size=80))
    return name, n, events


def play(name, n, events):
    p = get_protocol(name)
    c = Configuration.initial(n, p)
    crashes = 0
    for u, v, is_crash in events:
        if is_crash and crashes < n - 2 and c.alive[u]:
            crash(c, u, p)
            crashes += 1
        elif u != v and c.alive[u] and c.alive[v]:
            apply_pairwise(c, u, v, p, choice=0)
        yield p, c


@given(event_runs())
def test_edge_symmetry_and_dead_isolation(run):
    for p, c in play(*run):
        assert BASIC.check(c) is None


@given(event_runs())
def test_protocol_safety_invariants(run):
    for p, c in play(*run):
        assert invariants_for(p).check(c) is None


@given(st.sampled_from(NAMES + ["supernodes"]))
def test_delta1_symmetric(name):
    params = PartitionParams.complete_multipartite(4) if name == "supernodes" else None
    p = get_protocol(name, params)
    for a, b, e in itertools.product(p.states, p.states, (0, 1)):
        fwd = set(p.outcomes(a, b, e))
        back = {(y, x, e2) for x, y, e2 in p.outcomes(b, a, e)}
        assert fwd == back


@given(st.sampled_from(["clique", "ft-star", "ft-line"]), st.integers(2, 9), st.integers(0, 10**6))
@settings(max_examples=25)
def test_runs_deterministic(name, n, seed):
    p = get_protocol(name)
    f = min(2, n - 2)

    def once():
        adv = AdversarySchedule.at_steps(random_crash_steps(f, 200, seed)) if f else None
        tr = simulate(p, n, seed, adv, StopRule(max_steps=2000))
        return tr.final.state, tr.final.edges.tobytes(), tr.crashes
    assert once() == once()


graphs = st.integers(1, 7).flatmap(lambda n: st.tuples(
    st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=15)))


def build(n, edges):
    return OutputGraph.from_edges([(u, v) for u, v in edges if u != v], range(n))


@given(graphs, st.randoms(use_true_random=False))
def test_check_invariant_under_relabelling(g_spec, rnd):
    n, edges = g_spec
    g = build(n, edges)
    perm = list(range(n))
    rnd.shuffle(perm)
    h = build(n, [(perm[u], perm[v]) for u, v in g.edges])
    for lang in (spanning_clique(), spanning_star(), spanning_line(), cycle_cover()):
        assert check(g, lang)[0] == check(h, lang)[0]


def brute_partition(g, params):
    k, spread = params.k, (params.f or 0) + 1
    vs = sorted(g.vertices)
    for colours in itertools.product(range(k), repeat=len(vs)):
        sizes = [colours.count(c) for c in range(k)]
        if max(sizes) - min(sizes) > spread:
            continue
        col = dict(zip(vs, colours))
        if all(((col[u], col[v]) in params.H) == ((min(u, v), max(u, v)) in g.edges)
               for u, v in itertools.combinations(vs, 2)):
            return True
    return False


@given(st.integers(1, 8), st.sampled_from([1, 2, 4]), st.data())
@settings(max_examples=80)
def test_partition_matches_brute_force(n, k, data):
    pairs = [(i, j) for i in range(k) for j in range(i, k)]
    H = frozenset(data.draw(st.sets(st.sampled_from(pairs), min_size=1)))
    try:
        params = PartitionParams(k, H, data.draw(st.sampled_from([None] + list(range(k)))))
    except ValueError:
        return
    # half the time build a graph from a planted colouring, so positives occur
    if data.draw(st.booleans()):
        col = data.draw(st.lists(st.integers(0, k - 1), min_size=n, max_size=n))
        edges = [(u, v) for u, v in itertools.combinations(range(n), 2) if (col[u], col[v]) in params.H]
    else:
        edges = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=12))
    g = build(n, edges)
    assert (find_partition(g, params) is not None) == brute_partition(g, params)


@given(event_runs())
def test_output_graph_only_alive(run):
    from netcon.core import output_graph
    for p, c in play(*run):
        g = output_graph(c, p)
        assert all(c.alive[v] for v in g.vertices)
        assert all(u in g.vertices and v in g.vertices for u, v in g.edges)
        assert np.array_equal(c.edges, c.edges.T)
