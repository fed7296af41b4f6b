"""Exhaustive checking at tiny n and stabilization detection for simulations.

The oracle explores every configuration reachable by interactions and by up
to ``fault_budget`` crashes (flag-2 targets branched over all survivors).
Fair executions after the last crash end in a bottom strongly connected
component of the interaction-only transition graph, so those components are
the terminal classes: a class is good when no transition inside it changes
the output and that output belongs to the language with the right order.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

import networkx as nx

from .core import Configuration, apply_pairwise, crash, output_graph
from .languages import check, spanning_star
from .scheduling import (AdversarySchedule, Event, SchedulerState, StopRule, quiescent, replay,
                         run)

PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"


@dataclass
class TerminalClass:
    size: int
    alive: int
    output: object
    satisfies: bool
    representative: object
    witness: object = None
    keys: frozenset = frozenset()


@dataclass
class ReachabilityVerdict:
    status: str
    explored: int
    terminal_classes: list = field(default_factory=list)
    counterexample: list | None = None
    counterexample_config: object = None
    note: str = ""
    key_of: object = None

    def classify(self, config):
        """The terminal class containing ``config``, or None."""
        k = self.key_of(config)
        for tc in self.terminal_classes:
            if k in tc.keys:
                return tc
        return None

    @property
    def passed(self):
        return self.status == PASS

    def events_jsonl(self):
        import json
        if not self.counterexample:
            return ""
        return "".join(json.dumps({"type": e.kind, "step": i, "u": e.u, "v": e.v, "choice": e.choice}) + "\n"
                       for i, e in enumerate(self.counterexample))


class _Codec:
    """Canonical keys for configurations up to node relabelling."""

    def __init__(self, protocol, symmetry):
        self.symmetry = symmetry
        self.codes = {q: i for i, q in enumerate(getattr(protocol, "states", ()))}

    def code(self, q):
        c = self.codes.get(q)
        if c is None:
            c = self.codes[q] = len(self.codes)
        return c

    def key(self, cfg):
        n = cfg.n_initial
        st = [self.code(q) if a else -1 for q, a in zip(cfg.state, cfg.alive)]
        E = cfg.edges
        if not self.symmetry:
            return tuple(st) + tuple(int(E[i, j]) for i in range(n) for j in range(i + 1, n))
        nb = [tuple(sorted(st[j] for j in range(n) if E[i, j])) for i in range(n)]
        inv = [(st[i], len(nb[i]), nb[i]) for i in range(n)]
        order = sorted(range(n), key=inv.__getitem__)
        groups = [list(g) for _, g in itertools.groupby(order, key=inv.__getitem__)]
        best = None
        for perm in itertools.product(*(itertools.permutations(g) for g in groups)):
            p = [x for grp in perm for x in grp]
            enc = tuple(int(E[p[i], p[j]]) for i in range(n) for j in range(i + 1, n))
            if best is None or enc < best:
                best = enc
        return tuple(st[i] for i in order) + best


def _successors(cfg, p, fault_budget):
    """(event, config, is_crash) for every possible next step."""
    alive = cfg.alive_nodes()
    out = []
    for i, u in enumerate(alive):
        for v in alive[i + 1:]:
            outs = p.outcomes(cfg.state[u], cfg.state[v], int(cfg.edges[u, v]))
            for ch in range(len(outs)):
                nxt = apply_pairwise(cfg.copy(), u, v, p, choice=ch)
                out.append((Event("interact", u, v, ch if len(outs) > 1 else -1), nxt, False))
    crashes = cfg.n_initial - len(alive)
    if crashes < fault_budget and len(alive) >= 2:
        for u in alive:
            survivors = [w for w in alive if w != u]
            targets = [-1]
            if p.uses_notifications and not cfg.neighbors(u):
                targets = survivors
            for t in targets:
                nxt = crash(cfg.copy(), u, p, notify_target=t if t >= 0 else None)
                out.append((Event("crash", u, -1, t), nxt, True))
    return out


def explore(p, start, fault_budget, lang, *, symmetry=True, node_budget=300_000):
    """Reachability analysis from ``start``; see :func:`reachability_check`."""
    codec = _Codec(p, symmetry)
    k0 = codec.key(start)
    reps = {k0: start}
    parent = {k0: None}
    inter = nx.DiGraph()
    inter.add_node(k0)
    unstable_edges = set()
    queue = deque([k0])
    while queue:
        k = queue.popleft()
        cfg = reps[k]
        for ev, nxt, is_crash in _successors(cfg, p, fault_budget):
            k2 = codec.key(nxt)
            if k2 not in reps:
                if len(reps) >= node_budget:
                    return ReachabilityVerdict(INCONCLUSIVE, len(reps),
                                               note=f"node budget {node_budget} exceeded")
                reps[k2] = nxt
                parent[k2] = (k, ev)
                queue.append(k2)
            if not is_crash:
                inter.add_edge(k, k2)
                if output_graph(cfg, p) != output_graph(nxt, p):
                    unstable_edges.add(k)
            else:
                inter.add_node(k2)
    classes = []
    bad_key = None
    cond = nx.condensation(inter)
    members = cond.graph["mapping"]
    by_comp = {}
    for key, comp in members.items():
        by_comp.setdefault(comp, []).append(key)
    for comp in cond.nodes:
        if cond.out_degree(comp):
            continue
        keys = by_comp[comp]
        rep = reps[keys[0]]
        g = output_graph(rep, p)
        alive = sum(rep.alive)
        stable = not any(key in unstable_edges for key in keys)
        ok, wit = check(g, lang.with_order(alive)) if stable else (False, {"output_not_stable": True})
        classes.append(TerminalClass(len(keys), alive, g, ok, rep, wit, frozenset(keys)))
        if not ok and bad_key is None:
            bad_key = keys[0]
    verdict = ReachabilityVerdict(PASS if bad_key is None else FAIL, len(reps), classes,
                                  key_of=codec.key)
    if bad_key is not None:
        path = []
        k = bad_key
        while parent[k] is not None:
            k, ev = parent[k]
            path.append(ev)
        verdict.counterexample = path[::-1]
        verdict.counterexample_config = reps[bad_key]
    return verdict


def reachability_check(p, n, fault_budget, lang, *, symmetry=True, node_budget=300_000):
    """Exhaustive fault-tolerance check on n nodes with up to ``fault_budget``
    crashes.  PASS iff every terminal class reachable after any crash pattern
    has a stable output in ``lang`` of order n minus the crashes."""
    if n > 6:
        raise ValueError("exhaustive search is limited to n <= 6")
    start = Configuration.initial(n, p)
    return explore(p, start, fault_budget, lang, symmetry=symmetry, node_budget=node_budget)


def detect_stabilization(trace, window=None, c=20):
    """Step after which the output never changes again, provided the trace
    runs at least ``window`` steps past it (default c*n^2); else None.

    ``trace`` is a :class:`Trace` or a sequence of per-step output values.
    """
    if hasattr(trace, "last_output_change"):
        W = c * trace.n ** 2 if window is None else window
        last, length = trace.last_output_change, trace.length
    else:
        seq = list(trace)
        if window is None:
            raise ValueError("window required for raw output sequences")
        W = window
        length = len(seq) - 1
        last = 0
        for t in range(1, len(seq)):
            if seq[t] != seq[t - 1]:
                last = t
    return last if length - last >= W else None


def _smallest_producer(p, q, max_n=5):
    """Smallest population and event path (no crashes) producing state q."""
    for n in range(2, max_n + 1):
        start = Configuration.initial(n, p)
        if q in start.state:
            return n, [], 0
        codec = _Codec(p, symmetry=False)
        seen = {codec.key(start): (start, [])}
        queue = deque([start])
        while queue:
            cfg = queue.popleft()
            path = seen[codec.key(cfg)][1]
            for ev, nxt, _ in _successors(cfg, p, 0):
                k = codec.key(nxt)
                if k in seen:
                    continue
                seen[k] = (nxt, path + [ev])
                if q in nxt.state:
                    u = next(i for i, s in enumerate(nxt.state) if s == q)
                    return n, path + [ev], u
                queue.append(nxt)
    raise ValueError(f"state {q!r} not produced on <= {max_n} nodes")


def independent_set_attack(p, independent_states):
    """Build the unbounded-fault prefix: for each state of the independent
    set, run its smallest producing execution on a fresh block of nodes, then
    crash every other node of that block.  Returns (config, events)."""
    blocks = [_smallest_producer(p, q) for q in independent_states]
    n = sum(b[0] for b in blocks)
    cfg = Configuration.initial(n, p)
    events = []
    off = 0
    keep = []
    for size, path, u in blocks:
        for ev in path:
            events.append(ev._replace(u=ev.u + off, v=ev.v + off))
        keep.append(u + off)
        off += size
    cfg = replay(events, p, n)
    off = 0
    for (size, _, u), kept in zip(blocks, keep):
        for w in range(off, off + size):
            if w != kept:
                t = -1
                if p.uses_notifications and not cfg.neighbors(w):
                    t = next(x for x in cfg.alive_nodes() if x != w)
                crash(cfg, w, p, notify_target=t if t >= 0 else None)
                events.append(Event("crash", w, -1, t))
        off += size
    return cfg, events


def attack_verdict(p, independent_states, lang=None):
    """Oracle verdict on the configuration left by :func:`independent_set_attack`."""
    cfg, events = independent_set_attack(p, independent_states)
    lang = lang or spanning_star()
    v = explore(p, cfg, 0, lang)
    return v, cfg, events


@dataclass
class ScenarioVerdict:
    passed: bool
    violations: list
    steps: int
    final_ok: bool
    max_phase: int
    leaders: int


def restart_soundness_scenario(degree_cap=None, n=6, seed=7, crash_node=0, max_steps=400_000):
    """Restart composition around Clique: let the clique form, crash one
    node, then run to silence.  Every step is audited: stored degree must
    equal true degree, and a node leaving the restarting phase must have no
    active edges left.  Passes iff no audit fires and the survivors end in a
    spanning clique."""
    from .languages import spanning_clique
    from .protocols import clique
    from .restart import compose_restart_net, degree_mismatches, leaders

    p = compose_restart_net(clique(), degree_cap=degree_cap)
    cfg = Configuration.initial(n, p)
    sched = SchedulerState(seed)
    violations = []
    prev = {"restart": [0] * n}

    def audit(c):
        for u in degree_mismatches(c):
            violations.append((c.step, u, "stored degree != true degree"))
        for u in c.alive_nodes():
            r = c.state[u].restart
            if prev["restart"][u] == 1 and r == 0 and c.degree(u) != 0:
                violations.append((c.step, u, "resumed with active edges"))
        prev["restart"] = [s.restart for s in c.state]

    def formed(c):
        g = output_graph(c, p)
        return (check(g, spanning_clique(sum(c.alive)))[0] and len(leaders(c)) == 1
                and len({c.state[u].phase for u in c.alive_nodes()}) == 1)

    stop = StopRule(max_steps=2000, window=None)
    while not formed(cfg) and cfg.step < max_steps:
        run(cfg, p, sched, AdversarySchedule.none(), stop, monitor=audit)
    adv = AdversarySchedule.at_steps([cfg.step], selector=f"by_id({crash_node})")
    run(cfg, p, sched, adv, StopRule(max_steps=max_steps, window=20 * n * n, until="silent"),
        monitor=audit)
    g = output_graph(cfg, p)
    final_ok = check(g, spanning_clique(sum(cfg.alive)))[0] and quiescent(cfg, p)
    mp = max(s.phase for s, a in zip(cfg.state, cfg.alive) if a)
    return ScenarioVerdict(not violations and final_ok, violations, cfg.step, final_ok, mp,
                           len(leaders(cfg)))
