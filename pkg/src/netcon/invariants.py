"""Per-step safety invariants, usable by both engines.

Edge symmetry and dead-node isolation always apply.  Protocol-specific
checks are expressed as data (required degree per state, a degree ceiling,
forbidden state pairs on an active edge, a state every non-trivial component
must contain) so the jitted loop can enforce them too.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class InvariantSpec:
    need_degree: dict = field(default_factory=dict)
    max_degree: int | None = None
    forbidden: frozenset = frozenset()      # state pairs that may not share an active edge
    black: object = None                    # every component with >= 2 nodes contains this state

    def arrays(self, cp):
        S = len(cp.states)
        need = np.full(S, -1, dtype=np.int64)
        for q, d in self.need_degree.items():
            need[cp.index[q]] = d
        if self.forbidden:
            forbid = np.zeros((S, S), dtype=np.uint8)
            for a, b in self.forbidden:
                forbid[cp.index[a], cp.index[b]] = forbid[cp.index[b], cp.index[a]] = 1
        else:
            forbid = np.zeros((0, 0), dtype=np.uint8)
        black = cp.index[self.black] if self.black is not None else -1
        return need, -1 if self.max_degree is None else self.max_degree, forbid, black

    def check(self, config, event=None):
        """Full check of one configuration; returns a message or None."""
        E = config.edges
        if not np.array_equal(E, E.T):
            return "edge symmetry"
        alive = np.array(config.alive, dtype=bool)
        if E[~alive].any() or E[:, ~alive].any():
            return "dead-node isolation"
        if np.any(np.diag(E)):
            return "self-loop"
        deg = E.sum(axis=1)
        for u in config.alive_nodes():
            q = config.state[u]
            d = self.need_degree.get(q)
            if d is not None and deg[u] != d:
                return f"state/degree mismatch at node {u} ({q}, degree {deg[u]})"
            if self.max_degree is not None and deg[u] > self.max_degree:
                return f"degree bound at node {u}"
        if self.forbidden:
            for u, v in config.edge_list():
                if (config.state[u], config.state[v]) in self.forbidden or \
                        (config.state[v], config.state[u]) in self.forbidden:
                    return f"forbidden edge {u}-{v}"
        if self.black is not None:
            for comp in components(config):
                if len(comp) >= 2 and not any(config.state[w] == self.black for w in comp):
                    return f"component without {self.black}: {sorted(comp)}"
        return None


def components(config):
    seen = set()
    out = []
    for s in config.alive_nodes():
        if s in seen:
            continue
        comp = {s}
        stack = [s]
        while stack:
            x = stack.pop()
            for y in config.neighbors(x):
                if y not in comp:
                    comp.add(y)
                    stack.append(y)
        seen |= comp
        out.append(comp)
    return out


BASIC = InvariantSpec()


def invariants_for(protocol):
    """Safety invariants known for a registry protocol (basic ones otherwise)."""
    name = getattr(protocol, "name", "")
    if name == "clique":
        return InvariantSpec(forbidden=frozenset({("b", "b"), ("b", "r")}))
    if name == "ft-star":
        return InvariantSpec(black="b")
    if name == "ft-cycle-cover":
        return InvariantSpec(need_degree={"q0": 0, "q1": 1, "q2": 2}, max_degree=2)
    if name.startswith("ft-line"):
        return InvariantSpec(need_degree={"q0": 0, "q2": 2, "w": 2, "w1": 2, "w2": 2,
                                          "e1": 1, "e2": 1, "l0": 1, "l1": 1}, max_degree=2)
    return BASIC
