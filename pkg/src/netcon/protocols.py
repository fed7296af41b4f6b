"""Registry of the rule tables and parameterised generators."""
from __future__ import annotations

import re
from dataclasses import dataclass

from .core import ProtocolDefinition, ProtocolError


def clique():
    return ProtocolDefinition(
        name="clique", states=("b", "r"), initial_state="b",
        delta1={("b", "b", 0): ("b", "r", 0),
                ("b", "r", 0): ("r", "r", 0),
                ("r", "r", 0): ("r", "r", 1)})


def ft_star():
    return ProtocolDefinition(
        name="ft-star", states=("b", "r"), initial_state="b", uses_notifications=True,
        delta1={("b", "b", 0): ("b", "r", 1),
                ("b", "b", 1): ("b", "r", 1),
                ("r", "r", 1): ("b", "b", 0),
                ("b", "r", 0): ("b", "r", 1)},
        delta2={("r", 1): "b"})


def ft_cycle_cover():
    return ProtocolDefinition(
        name="ft-cycle-cover", states=("q0", "q1", "q2"), initial_state="q0",
        uses_notifications=True,
        delta1={("q0", "q0", 0): ("q1", "q1", 1),
                ("q1", "q0", 0): ("q2", "q1", 1),
                ("q1", "q1", 0): ("q2", "q2", 1)},
        delta2={("q1", 1): "q0", ("q2", 1): "q1"})


LINE_STATES = ("q0", "q2", "e1", "e2", "l0", "l1", "w", "w1", "w2")
WALKERS = ("w", "w1", "w2")


def ft_line_rules(literal=False, tm_expansion=False):
    """delta1/delta2 of the fault-tolerant spanning line.

    ``literal`` keeps only the published rows (with the undeclared ``l``
    read as ``l0``).  The default adds the two-node-line completions
    ``(l1, e_i, 1) -> (l0, e_i, 1)`` and ``(l1, l1, 1) -> (l0, e1, 1)`` and
    reads ``(w_i, l_i, 1)`` as any walker meeting any leader endpoint;
    without them a split can leave a leaderless two-node line that never
    merges.  ``tm_expansion`` makes an expanding leader hand off to a new
    walker source (``(l0, q0, 0) -> (q2, l1, 1)``).
    """
    d1 = {
        ("q0", "q0", 0): ("e1", "l0", 1),
        ("l0", "q0", 0): ("q2", "l1", 1) if tm_expansion else ("q2", "l0", 1),
        ("l0", "l0", 0): ("q2", "w", 1),
        ("l1", "q2", 1): ("e1", "w1", 1),
        ("w1", "q2", 1): ("q2", "w1", 1),
        ("w2", "q2", 1): ("q2", "w2", 1),
        ("w", "q2", 1): ("q2", "w", 1),
        ("w", "e1", 1): ("w1", "e1", 1),
        ("w", "e2", 1): ("w2", "e2", 1),
        ("w1", "e1", 1): ("w2", "e2", 1),
        ("w2", "e2", 1): ("w1", "e1", 1),
        ("w1", "e2", 1): ("q2", "l0", 1),
        ("w2", "e1", 1): ("q2", "l0", 1),
        ("w", "l0", 1): ("w1", "e1", 1),
        ("w", "l1", 1): ("w1", "e1", 1),
        ("w1", "l1", 1): ("q2", "l0", 1),
        ("w1", "w1", 1): ("w", "q2", 1),
        ("w2", "w2", 1): ("w", "q2", 1),
        ("w1", "w2", 1): ("w", "q2", 1),
        ("w", "w1", 1): ("w", "q2", 1),
        ("w", "w2", 1): ("w", "q2", 1),
    }
    if not literal:
        d1.update({
            ("w2", "l1", 1): ("q2", "l0", 1),
            ("w1", "l0", 1): ("q2", "l0", 1),
            ("w2", "l0", 1): ("q2", "l0", 1),
            ("l1", "e1", 1): ("l0", "e1", 1),
            ("l1", "e2", 1): ("l0", "e2", 1),
            ("l1", "l1", 1): ("l0", "e1", 1),
        })
    d2 = {("e1", 1): "q0", ("e2", 1): "q0", ("l0", 1): "q0", ("l1", 1): "q0",
          ("q2", 1): "l1", ("w", 1): "l1", ("w1", 1): "l1", ("w2", 1): "l1"}
    return d1, d2


def ft_line(literal=False):
    d1, d2 = ft_line_rules(literal=literal)
    return ProtocolDefinition(
        name="ft-line-literal" if literal else "ft-line", states=LINE_STATES,
        initial_state="q0", delta1=d1, delta2=d2, uses_notifications=True)


def three_partition():
    states = ("q0", "qd", "qu", "qu'", "qm", "qm'", "qw", "qw'", "s", "q0'")
    d1 = {
        ("q0", "q0", 0): ("qu'", "qd", 1),
        ("qu'", "q0", 0): ("qu", "qm", 1),
        ("qu'", "qu'", 0): ("qu", "qm'", 1),
        ("qm'", "qd", 1): ("qm", "q0", 0),
        ("qw", "qd", 1): ("q0", "s", 0),
        ("qw", "qu", 1): ("qm", "qu", 1),
        ("qw'", "qd", 1): ("q0'", "s", 0),
        ("qw'", "qm", 1): ("q0'", "s", 0),
        ("qw'", "qm'", 1): ("q0'", "qu'", 0),
    }
    for x in states:
        d1[("s", x, 1)] = ("s", x, 0)
    d2 = {("qu'", 1): "q0", ("qd", 1): "s", ("qm", 1): "s", ("qw", 1): "q0",
          ("qw'", 1): "q0'", ("qm'", 1): "qw", ("qu", 1): "qw'"}
    return ProtocolDefinition(name="3-partition", states=states, initial_state="q0",
                              delta1=d1, delta2=d2, uses_notifications=True)


@dataclass(frozen=True)
class PartitionParams:
    k: int
    H: frozenset
    f: int | None = None

    def __post_init__(self):
        k = self.k
        if k < 1 or k & (k - 1):
            raise ProtocolError(f"k={k} is not a power of two")
        sym = set()
        for i, j in self.H:
            if not (0 <= i < k and 0 <= j < k):
                raise ProtocolError(f"H pair ({i},{j}) outside [k]")
            sym.add((i, j))
            sym.add((j, i))
        object.__setattr__(self, "H", frozenset(sym))
        lonely = [i for i in range(k) if not any(a == i for a, _ in sym)]
        if lonely:
            raise ProtocolError(f"partitions {lonely} have no H-neighbour")
        if self.f is not None and not 0 <= self.f < k:
            raise ProtocolError(f"fault bound f={self.f} must satisfy 0 <= f < k")

    @classmethod
    def complete_multipartite(cls, k, f=None):
        return cls(k, frozenset((i, j) for i in range(k) for j in range(k) if i != j) if k > 1
                   else frozenset({(0, 0)}), f)


def supernode_index(state, k):
    """Final partition index of a supernodes state (internal c_i counts as P_i)."""
    kind, idx = state[0], int(state[1:])
    if kind == "P":
        return idx
    return idx - k + 1 if idx >= k - 1 else idx


def supernodes(params, mode="prose"):
    """Graph of Supernodes for D = ([k], H).

    ``mode="prose"``: an internal c_i behaves as P_i in every formation
    rule, including c-c pairs.  ``mode="literal"``: only the c-P rows of the
    table, evaluated on the raw index i.
    """
    if mode not in ("prose", "literal"):
        raise ProtocolError(f"unknown supernodes mode {mode!r}")
    k, H = params.k, params.H
    cs = [f"c{i}" for i in range(2 * (k - 1) + 1)]
    ps = [f"P{j}" for j in range(k)]
    states = tuple(cs + ps)
    d1 = {}

    def final(i):
        return f"P{i - k + 1}" if i >= k - 1 else f"c{i}"

    # rule 2: a c_i with i >= k-1 turns into its leaf on any interaction
    for i in range(k - 1, 2 * k - 1):
        for x in states:
            for e in (0, 1):
                xi = int(x[1:])
                x2 = final(xi) if x[0] == "c" else x
                key = (f"c{i}", x, e)
                if (x, f"c{i}", e) in d1:
                    continue
                d1[key] = (final(i), x2, e)
    # rule 1: split
    for i in range(k - 1):
        d1[(f"c{i}", f"c{i}", 0)] = (f"c{2 * i + 1}", f"c{2 * i + 2}", 0)
    # rules 3-4
    for i in range(k):
        for j in range(i, k):
            if (i, j) in H:
                d1[(f"P{i}", f"P{j}", 0)] = (f"P{i}", f"P{j}", 1)
            else:
                d1[(f"P{i}", f"P{j}", 1)] = (f"P{i}", f"P{j}", 0)
    # rules 5-6 (internal c_i with a leaf)
    for i in range(k - 1):
        for j in range(k):
            if (i, j) in H:
                d1[(f"c{i}", f"P{j}", 0)] = (f"c{i}", f"P{j}", 1)
            else:
                d1[(f"c{i}", f"P{j}", 1)] = (f"c{i}", f"P{j}", 0)
    if mode == "prose":
        for i in range(k - 1):
            for j in range(i, k - 1):
                if i == j:
                    if (i, i) not in H:
                        d1[(f"c{i}", f"c{i}", 1)] = (f"c{i}", f"c{i}", 0)
                    continue
                if (i, j) in H:
                    d1[(f"c{i}", f"c{j}", 0)] = (f"c{i}", f"c{j}", 1)
                else:
                    d1[(f"c{i}", f"c{j}", 1)] = (f"c{i}", f"c{j}", 0)
    return ProtocolDefinition(name=f"supernodes(k={k})", states=states, initial_state="c0",
                              delta1=d1)


_BUILTIN = {
    "clique": clique,
    "ft-star": ft_star,
    "ft-cycle-cover": ft_cycle_cover,
    "ft-line": ft_line,
    "ft-line-literal": lambda: ft_line(literal=True),
    "3-partition": three_partition,
}

REGISTRY_NAMES = ("clique", "supernodes", "ft-star", "ft-cycle-cover", "ft-line",
                  "ft-line-literal", "3-partition", "restart-pp(<inner>)", "restart-net(<inner>)")

_COMPOSED = re.compile(r"^(restart-pp|restart-net)\((.+)\)$")


def get_protocol(name, params=None, **options):
    """Look up a protocol by registry name.

    ``supernodes`` needs a :class:`PartitionParams` (or a dict with k, H, f);
    ``restart-pp(x)`` / ``restart-net(x)`` wrap inner protocol ``x``.
    """
    name = name.strip()
    m = _COMPOSED.match(name)
    if m:
        from .restart import compose_restart_net, compose_restart_pp
        inner = get_protocol(m.group(2), params)
        if m.group(1) == "restart-pp":
            return compose_restart_pp(inner)
        return compose_restart_net(inner, **options)
    if name == "supernodes":
        if params is None:
            raise ProtocolError("supernodes requires PartitionParams (k, H, f)")
        if isinstance(params, dict):
            H = params.get("H")
            if H is None:
                params = PartitionParams.complete_multipartite(params["k"], params.get("f"))
            else:
                params = PartitionParams(params["k"], frozenset(map(tuple, H)), params.get("f"))
        return supernodes(params, **options)
    try:
        return _BUILTIN[name](**options)
    except KeyError:
        raise ProtocolError(f"unknown protocol {name!r}; known: {', '.join(REGISTRY_NAMES)}") from None
