"""Graph-language predicates used to judge stable outputs."""
from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .core import OutputGraph

KINDS = ("spanning_clique", "spanning_star", "cycle_cover", "spanning_line", "partitioned",
         "tm_decided")


@dataclass(frozen=True)
class GraphLanguage:
    kind: str
    expected_order: int | None = None
    params: object = None        # PartitionParams for 'partitioned'
    machine: object = None       # TMDescription for 'tm_decided'
    waste: int = 0               # vertices allowed outside the target structure

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown language {self.kind!r}; known: {', '.join(KINDS)}")
        if self.kind == "partitioned" and self.params is None:
            raise ValueError("partitioned language needs PartitionParams")
        if self.kind == "tm_decided" and self.machine is None:
            raise ValueError("tm_decided language needs a machine")

    def with_order(self, n):
        return replace(self, expected_order=n)


def spanning_clique(n=None):
    return GraphLanguage("spanning_clique", n)


def spanning_star(n=None):
    return GraphLanguage("spanning_star", n)


def cycle_cover(n=None, waste=0):
    return GraphLanguage("cycle_cover", n, waste=waste)


def spanning_line(n=None):
    return GraphLanguage("spanning_line", n)


def partitioned(params, n=None):
    return GraphLanguage("partitioned", n, params=params)


def tm_decided(machine, n=None):
    return GraphLanguage("tm_decided", n, machine=machine)


def language_for(protocol_name, params=None):
    """Target language of a registry protocol (inner language for restarts)."""
    m = re.match(r"^restart-(?:pp|net)(?:\[[^\]]*\])?\((.+)\)$", protocol_name)
    if m:
        protocol_name = m.group(1)
    table = {"clique": "spanning_clique", "ft-star": "spanning_star",
             "ft-cycle-cover": "cycle_cover", "ft-line": "spanning_line",
             "ft-line-literal": "spanning_line"}
    if protocol_name in table:
        return GraphLanguage(table[protocol_name])
    if protocol_name.startswith("supernodes"):
        return GraphLanguage("partitioned", params=params)
    raise ValueError(f"no target language known for {protocol_name!r}")


def _components(graph, adj):
    seen, comps = set(), []
    for s in sorted(graph.vertices):
        if s in seen:
            continue
        comp, stack = {s}, [s]
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in comp:
                    comp.add(y)
                    stack.append(y)
        seen |= comp
        comps.append(comp)
    return comps


def _clique(g, adj):
    vs = sorted(g.vertices)
    for i, u in enumerate(vs):
        for v in vs[i + 1:]:
            if v not in adj[u]:
                return False, {"missing_edge": (u, v)}
    return True, None


def _star(g, adj):
    n = g.order
    if n <= 1:
        return True, None
    if g.size != n - 1:
        return False, {"edges": g.size, "expected_edges": n - 1}
    centers = [v for v in g.vertices if len(adj[v]) == n - 1]
    if not centers:
        return False, {"no_center": True}
    c = min(centers)
    bad = [v for v in g.vertices if v != c and len(adj[v]) != 1]
    if bad:
        return False, {"leaf_degree": {v: len(adj[v]) for v in bad}}
    return True, None


def _cycle_cover(g, adj, waste):
    covered, stray = set(), []
    for comp in _components(g, adj):
        if len(comp) >= 3 and all(len(adj[v]) == 2 for v in comp):
            covered |= comp
        else:
            stray.append(sorted(comp))
    uncovered = g.order - len(covered)
    if uncovered > waste:
        return False, {"not_on_cycle": stray}
    return True, None


def _line(g, adj):
    if g.order == 0:
        return False, {"empty": True}
    deg3 = [v for v in g.vertices if len(adj[v]) > 2]
    if deg3:
        return False, {"degree_gt_2": sorted(deg3)}
    comps = _components(g, adj)
    if len(comps) > 1:
        return False, {"components": [sorted(c) for c in comps]}
    if g.size != g.order - 1:
        return False, {"cycle": True}
    return True, None


def find_partition(g, params):
    """Class assignment {vertex: class} realising L_{D,f} on g, or None.

    Backtracking: a vertex's class must agree with H on every already placed
    vertex, and class sizes must stay within f+1 of each other.
    """
    k, H = params.k, params.H
    spread = (params.f or 0) + 1
    adj = g.adjacency()
    order = []
    seen = set()
    for s in sorted(g.vertices, key=lambda v: (-len(adj[v]), v)):
        if s in seen:
            continue
        queue = [s]
        seen.add(s)
        while queue:
            x = queue.pop(0)
            order.append(x)
            for y in sorted(adj[x]):
                if y not in seen:
                    seen.add(y)
                    queue.append(y)
    n = len(order)
    cls = {}
    sizes = [0] * k
    hi = -(-n // k) + spread  # generous cap, exact test at the leaves

    def consistent(v, c):
        for w, cw in cls.items():
            if ((c, cw) in H) != (w in adj[v]):
                return False
        return True

    def rec(i):
        if i == n:
            return max(sizes) - min(sizes) <= spread
        remaining = n - i
        if max(sizes) - min(sizes) - remaining > spread:
            return False
        v = order[i]
        tried_empty = False
        for c in range(k):
            if sizes[c] == 0:
                # empty classes are interchangeable only if H treats them alike; keep exact
                if tried_empty and _same_role(H, k, c, sizes):
                    continue
                tried_empty = True
            if sizes[c] >= hi or not consistent(v, c):
                continue
            cls[v] = c
            sizes[c] += 1
            if rec(i + 1):
                return True
            sizes[c] -= 1
            del cls[v]
        return False

    return dict(cls) if rec(0) else None


def _same_role(H, k, c, sizes):
    # an empty class c is equivalent to an earlier empty class d when both have
    # the same H-row (including self-loop) and H is symmetric under swapping them
    for d in range(c):
        if sizes[d] == 0 and all(((c, j) in H) == ((d, j) in H) for j in range(k) if j not in (c, d)) \
                and ((c, c) in H) == ((d, d) in H):
            return True
    return False


def _partitioned(g, params):
    part = find_partition(g, params)
    if part is None:
        return False, {"no_partition": True}
    return True, {"partition": part}


def check(graph, lang):
    """(member, witness).  The witness describes the violation, or for
    partitioned languages the class assignment found."""
    if lang.expected_order is not None and graph.order != lang.expected_order:
        return False, {"order": graph.order, "expected_order": lang.expected_order}
    adj = graph.adjacency()
    if lang.kind == "spanning_clique":
        return _clique(graph, adj)
    if lang.kind == "spanning_star":
        return _star(graph, adj)
    if lang.kind == "cycle_cover":
        return _cycle_cover(graph, adj, lang.waste)
    if lang.kind == "spanning_line":
        return _line(graph, adj)
    if lang.kind == "partitioned":
        ok, wit = _partitioned(graph, lang.params)
        return ok, wit if not ok else None
    if lang.kind == "tm_decided":
        from .machine.tm import decide_graph
        verdict = decide_graph(lang.machine, graph)
        return verdict, None if verdict else {"rejected_by": lang.machine.name}
    raise ValueError(lang.kind)


def member(graph, lang):
    return check(graph, lang)[0]


def _shrunk(lang):
    return lang if lang.expected_order is None else lang.with_order(lang.expected_order - 1)


def critical_nodes(graph, lang):
    """All vertices whose deletion takes the graph out of the language."""
    small = _shrunk(lang)
    return [v for v in sorted(graph.vertices) if not member(graph.remove(v), small)]


def is_hereditary_counterexample(graph, lang):
    """A critical node (as a one-element set) or None."""
    small = _shrunk(lang)
    for v in sorted(graph.vertices):
        if not member(graph.remove(v), small):
            return frozenset({v})
    return None


def to_edge_list(graph):
    lines = [f"{u} {v}" for u, v in sorted(graph.edges)]
    touched = {x for e in graph.edges for x in e}
    lines += [str(v) for v in sorted(graph.vertices - touched)]
    return "\n".join(lines) + ("\n" if lines else "")


def from_edge_list(text):
    verts, edges = set(), set()
    for line in text.splitlines():
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if len(parts) == 1:
            verts.add(int(parts[0]))
        elif len(parts) == 2:
            u, v = int(parts[0]), int(parts[1])
            if u == v:
                raise ValueError(f"self-loop {u}")
            edges.add((u, v))
        else:
            raise ValueError(f"bad edge-list line {line!r}")
    return OutputGraph.from_edges(edges, verts)


def to_dot(graph, name="G", labels=None):
    out = [f"graph {name} {{"]
    for v in sorted(graph.vertices):
        if labels and v in labels:
            out.append(f'  {v} [label="{v}:{labels[v]}"];')
        else:
            out.append(f"  {v};")
    out += [f"  {u} -- {v};" for u, v in sorted(graph.edges)]
    out.append("}")
    return "\n".join(out) + "\n"


_DOT_EDGE = re.compile(r"^\s*(\d+)\s*--\s*(\d+)\s*;?")
_DOT_NODE = re.compile(r"^\s*(\d+)\s*(\[.*\])?\s*;?\s*$")


def from_dot(text):
    verts, edges = set(), set()
    for line in text.splitlines():
        m = _DOT_EDGE.match(line)
        if m:
            edges.add((int(m.group(1)), int(m.group(2))))
            continue
        m = _DOT_NODE.match(line)
        if m:
            verts.add(int(m.group(1)))
    return OutputGraph.from_edges(edges, verts)
