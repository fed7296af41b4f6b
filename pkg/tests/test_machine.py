import itertools
from collections import Counter

import networkx as nx
import pytest

from netcon.core import OutputGraph, ProtocolError, apply_pairwise, crash
from netcon.languages import check, spanning_star
from netcon.machine import (SHIPPED, SimulationError, build_universal, decide_graph,
                            direction_pass, draw_random_graph_on_D, get_tm, make_structure,
                            parse_tm, read_edge, read_mem_edge, run_universal, write_mem_edge)
from netcon.machine.universal import structure_report
from netcon.rng import SplitMix64
from netcon.scheduling import AdversarySchedule, StopRule


def all_graphs(n):
    pairs = list(itertools.combinations(range(n), 2))
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        yield OutputGraph.from_edges([p for p, b in zip(pairs, bits) if b], range(n))


def nx_of(g):
    h = nx.Graph()
    h.add_nodes_from(g.vertices)
    h.add_edges_from(g.edges)
    return h


@pytest.mark.parametrize("name", sorted(SHIPPED))
def test_tm_text_round_trip(name):
    tm = get_tm(name)
    back = parse_tm(tm.to_text())
    assert back.transitions == tm.transitions and back.space == tm.space


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_decide_graph_against_brute_force(n):
    star, clique, even = get_tm("is-star"), get_tm("is-clique"), get_tm("even-edges")
    for g in all_graphs(n):
        h = nx_of(g)
        # a single vertex is the trivial star
        is_star = n == 1 or (h.number_of_edges() == n - 1 and max(d for _, d in h.degree()) == n - 1)
        assert decide_graph(star, g) == is_star
        assert decide_graph(clique, g) == (h.number_of_edges() == n * (n - 1) // 2)
        assert decide_graph(even, g) == (h.number_of_edges() % 2 == 0)
        assert check(g, spanning_star())[0] == is_star


def test_memory_tm_agrees_with_even_edges():
    mem, even = get_tm("mem-even-edges"), get_tm("even-edges")
    for g in all_graphs(4):
        assert decide_graph(mem, g) == decide_graph(even, g)


def test_parse_tm_missing_header():
    with pytest.raises(ValueError, match="start"):
        parse_tm("name: x\ntapes: work input\nalphabet: _\naccept: a\nreject: r\n")


def test_quadratic_machine_rejected_by_half():
    with pytest.raises(ProtocolError):
        build_universal(get_tm("mem-even-edges"), "half")


def test_direction_pass_three_nodes():
    _, ctx = make_structure(3)
    direction_pass(ctx)
    assert ctx.directions() == ["head", "r", "r"]
    assert ctx.tape() == ["<", "_", ">"]


def test_direction_pass_single_node():
    _, ctx = make_structure(1)
    direction_pass(ctx)
    assert ctx.directions() == ["head"]


def test_forced_coin_single_edge():
    class Heads:
        def coin(self):
            return 1
    _, ctx = make_structure(2)
    direction_pass(ctx)
    assert draw_random_graph_on_D(ctx, Heads()) == [(0, 1)]


def test_single_d_node_draws_nothing():
    _, ctx = make_structure(1)
    assert draw_random_graph_on_D(ctx) == []


def test_draw_uniform_chi_square():
    # 8 graphs on 3 D nodes, 2000 draws; 7 degrees of freedom, p = 0.001 cut at 24.32
    _, ctx = make_structure(3, rng=SplitMix64(5))
    direction_pass(ctx)
    counts = Counter(tuple(draw_random_graph_on_D(ctx)) for _ in range(2000))
    assert len(counts) == 8
    exp = 2000 / 8
    assert sum((c - exp) ** 2 / exp for c in counts.values()) < 24.32


def test_read_edge_after_forcing():
    _, ctx = make_structure(3)
    direction_pass(ctx)
    ctx.set_edge(ctx.D[0], ctx.D[1], 1)
    assert read_edge(ctx, 0, 1) == 1 and read_edge(ctx, 1, 2) == 0


def test_read_edge_same_index_errors():
    _, ctx = make_structure(3)
    direction_pass(ctx)
    with pytest.raises(SimulationError):
        read_edge(ctx, 1, 1)
    with pytest.raises(SimulationError):
        read_edge(ctx, 0, 3)


def test_memory_write_then_read():
    _, ctx = make_structure(4, "third", get_tm("mem-even-edges"))
    direction_pass(ctx)
    write_mem_edge(ctx, 0, 2, 1)
    assert read_mem_edge(ctx, 0, 2) == 1
    write_mem_edge(ctx, 0, 2, 0)
    assert read_mem_edge(ctx, 0, 2) == 0


def test_half_variant_has_no_memory():
    _, ctx = make_structure(3)
    with pytest.raises(SimulationError):
        write_mem_edge(ctx, 0, 1, 1)


def test_d_crash_releases_u_node():
    # the U node cannot tell its D from a line neighbour, so it waits in ur
    # instead of returning to q0; its line neighbours become l1
    p, ctx = make_structure(5)
    cfg = ctx.config
    u, d = ctx.line[2], ctx.D[2]
    crash(cfg, d, p)
    assert cfg.state[u].role == "ur"
    for w in (ctx.line[1], ctx.line[3]):
        apply_pairwise(cfg, u, w, p)
        assert cfg.state[w].line == "l1" and cfg.edges[u, w] == 0
    assert cfg.degree(u) == 0 and cfg.state[u].role == "ur"


def test_built_structure_reports_ok():
    _, ctx = make_structure(4, "third")
    ok, counts, problems = structure_report(ctx.config, "third")
    assert ok and counts == {"U": 4, "D": 4, "M": 4} and not problems


def test_always_accept_keeps_first_draw():
    rec = run_universal(get_tm("always-accept"), "half", 8, seed=3).run
    assert rec.status == "stable" and rec.verdict
    assert rec.extra["retries"] == 0 and rec.extra["D"] == 4


def test_half_n6_structure():
    rec = run_universal(get_tm("always-accept"), "half", 6, seed=1).run
    assert rec.extra["U"] == 3 and rec.extra["D"] == 3 and rec.extra["structure_ok"]


def test_third_n9_structure():
    rec = run_universal(get_tm("always-accept"), "third", 9, seed=2).run
    assert rec.status == "stable" and rec.extra["structure_ok"]
    assert rec.extra["U"] == rec.extra["D"] == rec.extra["M"] == 3


def test_star_n12_waste_6():
    rep = run_universal(get_tm("is-star"), "half", 12, seed=1)
    rec = rep.run
    assert rec.status == "stable" and rec.waste == 6
    cfg = rep.artifacts[0].config
    D = [u for u in cfg.alive_nodes() if cfg.state[u].role == "qd"]
    g = OutputGraph.from_edges(rec.extra["edges"], D)
    assert check(g, spanning_star(6))[0]


def test_star_n12_one_fault():
    adv = AdversarySchedule.at_steps([3000])
    rec = run_universal(get_tm("is-star"), "half", 12, adv, seed=4).run
    assert rec.status == "stable" and rec.faults == 1
    assert rec.extra["D"] >= 5 and rec.waste <= 12 - 5 and rec.verdict
