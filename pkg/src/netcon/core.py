"""Population state, transition semantics and output extraction.

A protocol is anything exposing ``initial_state``, ``uses_notifications``,
``is_output(q)``, ``outcomes(a, b, e)`` and ``notify(q, flag)``.  The finite
rule-table form is :class:`ProtocolDefinition`; composed protocols with
counters (restart, universal constructor) implement the same surface.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


class ProtocolError(ValueError):
    """Malformed or ambiguous rule table (raised at load time)."""


class UsageError(ValueError):
    """Illegal operation on a configuration (dead node, self-interaction)."""


@dataclass(frozen=True)
class ProtocolDefinition:
    name: str
    states: tuple
    initial_state: object
    delta1: Mapping = field(default_factory=dict)
    delta2: Mapping = field(default_factory=dict)
    output_states: frozenset | None = None
    uses_notifications: bool = False
    node_memory: str = "constant"

    def __post_init__(self):
        states = tuple(self.states)
        object.__setattr__(self, "states", states)
        known = set(states)
        if self.initial_state not in known:
            raise ProtocolError(f"{self.name}: initial state {self.initial_state!r} not in Q")
        out = frozenset(states) if self.output_states is None else frozenset(self.output_states)
        if not out <= known:
            raise ProtocolError(f"{self.name}: output states {sorted(map(str, out - known))} not in Q")
        object.__setattr__(self, "output_states", out)
        object.__setattr__(self, "delta1", dict(self.delta1))
        object.__setattr__(self, "delta2", dict(self.delta2))

        table = {}
        for (a, b, e), (a2, b2, e2) in self.delta1.items():
            for q in (a, b, a2, b2):
                if q not in known:
                    raise ProtocolError(f"{self.name}: rule mentions unknown state {q!r}")
            if e not in (0, 1) or e2 not in (0, 1):
                raise ProtocolError(f"{self.name}: edge bits must be 0/1 in ({a},{b},{e})")
            if a == b:
                outs = ((a2, b2, e2),) if a2 == b2 else ((a2, b2, e2), (b2, a2, e2))
                table[(a, a, e)] = outs
                continue
            mirror = self.delta1.get((b, a, e))
            if mirror is not None and mirror != (b2, a2, e2):
                raise ProtocolError(
                    f"{self.name}: ambiguous rules for ({a},{b},{e}) and ({b},{a},{e})")
            table[(a, b, e)] = ((a2, b2, e2),)
            table[(b, a, e)] = ((b2, a2, e2),)
        for (q, flag), q2 in self.delta2.items():
            if q not in known or q2 not in known:
                raise ProtocolError(f"{self.name}: delta2 mentions unknown state in ({q},{flag})")
            if flag not in (1, 2):
                raise ProtocolError(f"{self.name}: delta2 flag must be 1 or 2")
        object.__setattr__(self, "_table", table)

    def is_output(self, q):
        return q in self.output_states

    def outcomes(self, a, b, e):
        """All successor triples of (a, b, e); empty tuple means no effect."""
        return self._table.get((a, b, e), ())

    def notify(self, q, flag):
        return self.delta2.get((q, flag), q)

    def without_notifications(self, name=None):
        """Same delta1 with delta2 stripped (the plain NET model)."""
        return ProtocolDefinition(
            name=name or f"{self.name}-no-delta2", states=self.states,
            initial_state=self.initial_state, delta1=self.delta1, delta2={},
            output_states=self.output_states, uses_notifications=False,
            node_memory=self.node_memory)

    def to_text(self):
        lines = [f"name: {self.name}",
                 "states: " + " ".join(map(str, self.states)),
                 f"initial: {self.initial_state}",
                 "output: " + " ".join(map(str, (q for q in self.states if q in self.output_states))),
                 f"notifications: {'yes' if self.uses_notifications else 'no'}"]
        lines += [f"{a} {b} {e} -> {a2} {b2} {e2}" for (a, b, e), (a2, b2, e2) in self.delta1.items()]
        lines += [f"{q} {flag} -> {q2}" for (q, flag), q2 in self.delta2.items()]
        return "\n".join(lines) + "\n"


_D1 = re.compile(r"^(\S+)\s+(\S+)\s+([01])\s*->\s*(\S+)\s+(\S+)\s+([01])$")
_D2 = re.compile(r"^(\S+)\s+([12])\s*->\s*(\S+)$")


def parse_rules(text, name="custom"):
    """Parse a plain-text rule table.

    Header lines are ``key: value`` (name, states, initial, output,
    notifications); rules are ``a b e -> a' b' e'`` for pairwise
    interactions and ``q flag -> q'`` for notifications.  ``#`` starts a
    comment.
    """
    header = {}
    d1, d2 = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" in line and "->" not in line:
            key, _, value = line.partition(":")
            header[key.strip().lower()] = value.strip()
            continue
        m = _D1.match(line)
        if m:
            a, b, e, a2, b2, e2 = m.groups()
            key = (a, b, int(e))
            if key in d1 and d1[key] != (a2, b2, int(e2)):
                raise ProtocolError(f"line {lineno}: conflicting rule for {key}")
            d1[key] = (a2, b2, int(e2))
            continue
        m = _D2.match(line)
        if m:
            q, flag, q2 = m.groups()
            d2[(q, int(flag))] = q2
            continue
        raise ProtocolError(f"line {lineno}: cannot parse {raw!r}")
    if "initial" not in header:
        raise ProtocolError("missing 'initial:' header")
    if "states" in header:
        states = tuple(header["states"].split())
    else:
        seen = [header["initial"]]
        for (a, b, _), (a2, b2, _) in d1.items():
            seen += [a, b, a2, b2]
        for (q, _), q2 in d2.items():
            seen += [q, q2]
        states = tuple(dict.fromkeys(seen))
    output = header.get("output")
    notif = header.get("notifications")
    uses = bool(d2) if notif is None else notif.lower() in ("1", "yes", "true")
    return ProtocolDefinition(
        name=header.get("name", name), states=states, initial_state=header["initial"],
        delta1=d1, delta2=d2, output_states=None if output is None else frozenset(output.split()),
        uses_notifications=uses)


class Configuration:
    """Node states, alive mask, fault flags and the symmetric edge matrix.

    Operations below mutate in place and return the same object; call
    :meth:`copy` for a snapshot.
    """

    __slots__ = ("state", "alive", "flag", "edges", "step")

    def __init__(self, state, alive, flag, edges, step=0):
        self.state = state
        self.alive = alive
        self.flag = flag
        self.edges = edges
        self.step = step

    @classmethod
    def initial(cls, n, protocol):
        return cls([protocol.initial_state] * n, [True] * n, [0] * n,
                   np.zeros((n, n), dtype=np.uint8))

    @property
    def n_initial(self):
        return len(self.state)

    def copy(self):
        return Configuration(list(self.state), list(self.alive), list(self.flag),
                             self.edges.copy(), self.step)

    def alive_nodes(self):
        return [u for u, a in enumerate(self.alive) if a]

    def neighbors(self, u):
        return [int(v) for v in np.flatnonzero(self.edges[u])]

    def degree(self, u):
        return int(self.edges[u].sum())

    def edge_list(self):
        us, vs = np.nonzero(np.triu(self.edges, 1))
        return [(int(a), int(b)) for a, b in zip(us, vs)]

    def __eq__(self, other):
        return (isinstance(other, Configuration) and self.state == other.state
                and self.alive == other.alive and self.step == other.step
                and np.array_equal(self.edges, other.edges))

    def __repr__(self):
        live = sum(self.alive)
        return f"Configuration(n={len(self.state)}, alive={live}, edges={len(self.edge_list())}, step={self.step})"


@dataclass(frozen=True)
class OutputGraph:
    vertices: frozenset
    edges: frozenset  # pairs (u, v) with u < v

    @property
    def order(self):
        return len(self.vertices)

    @property
    def size(self):
        return len(self.edges)

    def adjacency(self):
        adj = {v: set() for v in self.vertices}
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def degree(self, v):
        return sum(1 for e in self.edges if v in e)

    def remove(self, v):
        return OutputGraph(self.vertices - {v}, frozenset(e for e in self.edges if v not in e))

    def induced(self, nodes):
        nodes = frozenset(nodes)
        return OutputGraph(nodes, frozenset(e for e in self.edges if e[0] in nodes and e[1] in nodes))

    @classmethod
    def from_edges(cls, edges, vertices=None):
        es = frozenset((min(u, v), max(u, v)) for u, v in edges)
        vs = set(vertices) if vertices is not None else set()
        for u, v in es:
            vs.update((u, v))
        return cls(frozenset(vs), es)


def apply_pairwise(config, u, v, p, rng=None, choice=None):
    """One ordinary transition between u and v.

    With several admissible outcomes (an asymmetric rule on equal states)
    the orientation comes from ``choice`` if given, else from ``rng``.
    """
    if u == v:
        raise UsageError("a node cannot interact with itself")
    if not (config.alive[u] and config.alive[v]):
        raise UsageError(f"interaction with a dead node ({u}, {v})")
    e = int(config.edges[u, v])
    outs = p.outcomes(config.state[u], config.state[v], e)
    if outs:
        if len(outs) == 1:
            a2, b2, e2 = outs[0]
        else:
            if choice is None:
                choice = 0 if rng is None else rng.below(len(outs))
            a2, b2, e2 = outs[choice]
        config.state[u] = a2
        config.state[v] = b2
        if e2 != e:
            config.edges[u, v] = config.edges[v, u] = e2
    config.step += 1
    return config


def crash(config, u, p, rng=None, notify_target=None):
    """Crash u: drop it and its edges, then deliver notifications.

    Former neighbours get flag 1; if u was isolated one other alive node
    gets flag 2 (``notify_target``, else drawn from ``rng``, else the
    lowest id).  delta2 is applied within the same step in ascending id
    order and flags return to 0.
    """
    if not config.alive[u]:
        raise UsageError(f"node {u} is already dead")
    survivors = [w for w in range(len(config.state)) if config.alive[w] and w != u]
    if not survivors:
        raise UsageError("cannot crash the last alive node")
    nbrs = config.neighbors(u)
    config.alive[u] = False
    config.flag[u] = 0
    config.edges[u, :] = 0
    config.edges[:, u] = 0
    if p.uses_notifications:
        if nbrs:
            targets = [(w, 1) for w in nbrs]
        else:
            if notify_target is None:
                notify_target = survivors[rng.below(len(survivors))] if rng is not None else survivors[0]
            elif notify_target not in survivors:
                raise UsageError(f"notification target {notify_target} is not alive")
            targets = [(notify_target, 2)]
        for w, fl in targets:
            config.flag[w] = fl
        for w, fl in targets:
            config.state[w] = p.notify(config.state[w], fl)
            config.flag[w] = 0
    config.step += 1
    return config


def output_graph(config, p):
    verts = frozenset(u for u, a in enumerate(config.alive) if a and p.is_output(config.state[u]))
    us, vs = np.nonzero(np.triu(config.edges, 1))
    edges = frozenset((int(a), int(b)) for a, b in zip(us, vs) if a in verts and b in verts)
    return OutputGraph(verts, edges)
