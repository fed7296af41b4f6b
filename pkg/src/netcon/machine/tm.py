"""Deterministic multi-tape Turing machines that decide graph languages.

A machine has a work tape (one cell per line node), a read-only input tape
holding the upper-triangle adjacency bits of the graph on D in row-major
order, and, for quadratic-space machines, a binary memory tape backed by
the edges of M.  Positions outside the input and memory tapes read ``|``.

The interpreter is written as a generator over a tape backend so the same
code runs directly (:func:`decide_graph`) or inside the line simulation,
where every head move and edge access costs interactions.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field

BLANK = "_"
END = "|"
MOVES = {"L": -1, "R": 1, "S": 0}
TAPES = ("work", "input", "mem")


class SimulationError(RuntimeError):
    """The simulated machine or its host line is in an impossible state."""


@dataclass(frozen=True)
class TMDescription:
    name: str
    tapes: tuple                      # ("work", "input") or ("work", "input", "mem")
    alphabet: tuple                   # work-tape symbols
    start: str
    accept: str
    reject: str
    transitions: dict = field(default_factory=dict)   # (q, reads) -> (q', writes, moves)
    space: str = "linear"

    def __post_init__(self):
        if self.tapes[:2] != ("work", "input") or len(self.tapes) > 3 or \
                (len(self.tapes) == 3 and self.tapes[2] != "mem"):
            raise ValueError(f"tapes must be work,input[,mem], got {self.tapes}")
        if self.space not in ("linear", "quadratic"):
            raise ValueError(f"space must be linear or quadratic, got {self.space!r}")
        if "mem" in self.tapes and self.space != "quadratic":
            raise ValueError("a memory tape needs space: quadratic")
        nt = len(self.tapes)
        for (q, reads), (q2, writes, moves) in self.transitions.items():
            if q in (self.accept, self.reject):
                raise ValueError(f"transition out of halting state {q}")
            if len(reads) != nt or len(writes) != nt or len(moves) != nt:
                raise ValueError(f"transition {q} {reads}: expected {nt} tapes")
            if writes[1] != reads[1]:
                raise ValueError(f"transition {q} {reads} writes the input tape")
            if writes[0] not in self.alphabet or reads[0] not in self.alphabet:
                raise ValueError(f"transition {q} {reads}: symbol outside the work alphabet")
            if nt == 3 and writes[2] not in "01" and not (writes[2] == END == reads[2]):
                raise ValueError(f"transition {q} {reads}: memory holds bits only")
            if any(m not in MOVES for m in moves):
                raise ValueError(f"transition {q} {reads}: bad move {moves}")

    @property
    def states(self):
        qs = {self.start, self.accept, self.reject}
        for (q, _), (q2, _, _) in self.transitions.items():
            qs.update((q, q2))
        return tuple(sorted(qs))

    @property
    def uses_memory(self):
        return "mem" in self.tapes

    def to_text(self):
        out = [f"name: {self.name}", f"tapes: {' '.join(self.tapes)}", f"space: {self.space}",
               f"alphabet: {' '.join(self.alphabet)}", f"start: {self.start}",
               f"accept: {self.accept}", f"reject: {self.reject}"]
        for (q, reads), (q2, writes, moves) in sorted(self.transitions.items()):
            out.append(f"{q} {','.join(reads)} -> {q2} {','.join(writes)} {','.join(moves)}")
        return "\n".join(out) + "\n"


_HEADER = re.compile(r"^(\w+)\s*:\s*(.*)$")


def parse_tm(text):
    """Read the transition-table format written by :meth:`TMDescription.to_text`.

    Rule lines are ``q r1,r2[,r3] -> q' w1,w2[,w3] m1,m2[,m3]``.  A read of
    ``*`` matches any symbol not covered by a more specific rule, and a
    write of ``*`` keeps the symbol read.
    """
    head, rules = {}, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "->" in line:
            left, right = line.split("->")
            lp, rp = left.split(), right.split()
            if len(lp) != 2 or len(rp) != 3:
                raise ValueError(f"line {lineno}: expected 'q reads -> q' writes moves'")
            rules.append((lineno, lp[0], tuple(lp[1].split(",")), rp[0],
                          tuple(rp[1].split(",")), tuple(rp[2].split(","))))
            continue
        m = _HEADER.match(line)
        if not m:
            raise ValueError(f"line {lineno}: cannot parse {raw!r}")
        head[m.group(1)] = m.group(2).strip()
    for key in ("name", "tapes", "alphabet", "start", "accept", "reject"):
        if key not in head:
            raise ValueError(f"missing header field {key!r}")
    tapes = tuple(head["tapes"].split())
    alphabet = tuple(head["alphabet"].split())
    domains = [alphabet, ("0", "1", END), ("0", "1", END)][:len(tapes)]
    table = {}
    # specific rules first so wildcards only fill the gaps
    for lineno, q, reads, q2, writes, moves in sorted(rules, key=lambda r: "*" in r[2]):
        if len(reads) != len(tapes):
            raise ValueError(f"line {lineno}: {len(reads)} reads for {len(tapes)} tapes")
        options = [dom if r == "*" else (r,) for r, dom in zip(reads, domains)]
        for combo in itertools.product(*options):
            key = (q, combo)
            if key in table:
                if "*" not in reads:
                    raise ValueError(f"line {lineno}: duplicate rule for {q} {combo}")
                continue
            w = tuple(c if x == "*" else x for x, c in zip(writes, combo))
            table[key] = (q2, w, moves)
    return TMDescription(head["name"], tapes, alphabet, head["start"], head["accept"],
                         head["reject"], table, head.get("space", "linear"))


def load_tm(path):
    with open(path) as fh:
        return parse_tm(fh.read())


def pair_count(k):
    return k * (k - 1) // 2


def pair_of(p, k):
    """Row-major upper-triangle position p -> (i, j) with i < j < k."""
    i = 0
    row = k - 1
    while p >= row:
        p -= row
        i += 1
        row -= 1
    return i, i + 1 + p


def position_of(i, j, k):
    if i > j:
        i, j = j, i
    return i * k - i * (i + 1) // 2 + (j - i - 1)


def initial_tape(length):
    """End-marked work tape: the first and last cells know they are ends."""
    if length <= 0:
        raise SimulationError("work tape needs at least one cell")
    if length == 1:
        return [END]
    return ["<"] + [BLANK] * (length - 2) + [">"]


class DirectTapes:
    """Backend for running a machine on an explicit graph, no interaction costs."""

    def __init__(self, k, bits, mem_k=None):
        self.k = k
        self.bits = bits
        self.mem_k = k if mem_k is None else mem_k
        self.mem = {}

    def read_input(self, p):
        return self.bits[p]
        yield  # noqa: unreachable, makes this a generator

    def read_mem(self, p):
        i, j = pair_of(p, self.mem_k)
        return self.mem.get((i, j), 0)
        yield

    def write_mem(self, p, b):
        self.mem[pair_of(p, self.mem_k)] = b
        return None
        yield

    def move(self, pos, delta):
        return pos + delta
        yield


def execute(tm, work, tapes, max_steps=10_000_000):
    """Generator running ``tm`` on the work tape list ``work`` (modified in
    place) with input/memory served by ``tapes``.  Returns (accepted, steps)."""
    k = tapes.k
    m_in = pair_count(k)
    m_mem = pair_count(tapes.mem_k) if tm.uses_memory else 0
    q = tm.start
    wpos = xpos = mpos = 0
    xbit = mbit = None
    steps = 0
    while q != tm.accept and q != tm.reject:
        if steps >= max_steps:
            raise SimulationError(f"{tm.name}: no halt within {max_steps} steps")
        if xbit is None:
            xbit = (str((yield from tapes.read_input(xpos))) if 0 <= xpos < m_in else END)
        reads = (work[wpos], xbit)
        if tm.uses_memory:
            if mbit is None:
                mbit = (str((yield from tapes.read_mem(mpos))) if 0 <= mpos < m_mem else END)
            reads += (mbit,)
        rule = tm.transitions.get((q, reads))
        if rule is None:
            raise SimulationError(f"{tm.name}: no transition for {q} on {reads}")
        q, writes, moves = rule
        work[wpos] = writes[0]
        if tm.uses_memory and writes[2] != mbit and writes[2] != END:
            if not 0 <= mpos < m_mem:
                raise SimulationError(f"{tm.name}: memory write outside the memory tape")
            yield from tapes.write_mem(mpos, int(writes[2]))
            mbit = writes[2]
        dw = MOVES[moves[0]]
        if dw:
            if not 0 <= wpos + dw < len(work):
                raise SimulationError(f"{tm.name}: work head left the tape at cell {wpos + dw}")
            wpos = yield from tapes.move(wpos, dw)
        dx = MOVES[moves[1]]
        if dx:
            xpos += dx
            xbit = None
            if not -1 <= xpos <= m_in:
                raise SimulationError(f"{tm.name}: input head beyond the end marker")
        if tm.uses_memory:
            dm = MOVES[moves[2]]
            if dm:
                mpos += dm
                mbit = None
                if not -1 <= mpos <= m_mem:
                    raise SimulationError(f"{tm.name}: memory head beyond the end marker")
        steps += 1
    return q == tm.accept, steps


def _drain(gen):
    try:
        while True:
            next(gen)
    except StopIteration as stop:
        return stop.value


def adjacency_bits(graph):
    """Vertices in sorted order and the row-major upper-triangle bit list."""
    vs = sorted(graph.vertices)
    adj = graph.adjacency()
    bits = [1 if vs[j] in adj[vs[i]] else 0 for i in range(len(vs)) for j in range(i + 1, len(vs))]
    return vs, bits


def decide_graph(tm, graph, max_steps=10_000_000):
    """Run ``tm`` on ``graph`` (vertices taken in sorted order) with a work
    tape of one cell per vertex.  An empty graph is rejected outright."""
    vs, bits = adjacency_bits(graph)
    if not vs:
        return False
    accepted, _ = _drain(execute(tm, initial_tape(len(vs)), DirectTapes(len(vs), bits),
                                 max_steps))
    return accepted


# shipped machines ---------------------------------------------------------

def always_accept():
    return TMDescription("always-accept", ("work", "input"), (BLANK, "<", ">", END),
                         "acc", "acc", "rej", {})


def _scanner(name, on_bit):
    """Single pass over the input; ``on_bit(state, bit)`` gives the next
    state, and at the end marker ``on_bit(state, None)`` gives acc/rej."""
    ends = (BLANK, "<", ">", END)
    states = {"s0", "s1"}
    table = {}
    for q in sorted(states):
        for w in ends:
            for x in ("0", "1"):
                table[(q, (w, x))] = (on_bit(q, x), (w, x), ("S", "R"))
            table[(q, (w, END))] = (on_bit(q, None), (w, END), ("S", "S"))
    return TMDescription(name, ("work", "input"), ends, "s0", "acc", "rej", table)


def even_edges():
    def step(q, x):
        if x is None:
            return "acc" if q == "s0" else "rej"
        return q if x == "0" else ("s1" if q == "s0" else "s0")
    return _scanner("even-edges", step)


def is_clique():
    def step(q, x):
        if x is None:
            return "acc"
        return "s0" if x == "1" else "rej"
    return _scanner("is-clique", step)


def _cells():
    ends = ("<", BLANK, ">", END)
    marks = ["".join(c) for r in range(4) for c in itertools.combinations("CIJ", r)]
    return [e + m for e in ends for m in marks]


def _sym(end, marks):
    return end + "".join(c for c in "CIJ" if c in marks)


def is_star():
    """Accepts iff some vertex c is adjacent to every other vertex and no
    other edge exists.

    Work-tape cells carry an end flag plus marks C (candidate centre), I and
    J (the pair under the input head).  For each candidate the input is
    scanned once; the pair (i, j) must be an edge exactly when c is i or j.
    """
    syms = _cells()
    T = {}
    X3 = ("0", "1", END)

    def add(q, w, x, q2, w2, mw, mx):
        T[(q, (w, x))] = (q2, (w2, x), (mw, mx))

    def split(w):
        return w[0], set(w[1:])

    for w in syms:
        end, mk = split(w)
        for x in X3:
            # a single vertex is a star
            if end == END:
                add("init", w, x, "acc", w, "S", "S")
            elif end == "<":
                add("init", w, x, "setI", _sym(end, mk | {"C"}), "S", "S")
            # place I here, J on the next cell
            if end in ("<",):
                add("setI", w, x, "setJ", _sym(end, mk | {"I"}), "R", "S")
            if end in (BLANK, ">"):
                add("setJ", w, x, "home", _sym(end, mk | {"J"}), "L", "S")
            # walk to the left end, then rewind the input
            if end != "<":
                add("home", w, x, "home", w, "L", "S")
            else:
                add("home", w, x, "rewind", w, "S", "S")
            add("rewind", w, x, "rewind" if x != END else "first", w, "S", "L" if x != END else "R")
            add("first", w, x, "findI", w, "S", "S")
            # scan right for I, remembering whether it is the candidate
            if "I" in mk:
                add("findI", w, x, "findJ1" if "C" in mk else "findJ0", w, "R", "S")
            elif end not in (">", END):
                add("findI", w, x, "findI", w, "R", "S")
            for a in "01":
                q = "findJ" + a
                if "J" not in mk:
                    if end not in (">", END):
                        add(q, w, x, q, w, "R", "S")
                    continue
                expected = "1" if (a == "1" or "C" in mk) else "0"
                if x == END:
                    continue
                if x != expected:
                    add(q, w, x, "fail", w, "S", "S")
                elif end == ">":
                    # J exhausted: drop it and advance I
                    add(q, w, x, "advI", _sym(end, mk - {"J"}), "L", "R")
                else:
                    add(q, w, x, "stepJ", _sym(end, mk - {"J"}), "R", "R")
            if end in (BLANK, ">"):
                add("stepJ", w, x, "back", _sym(end, mk | {"J"}), "S", "S")
            if end != "<":
                add("back", w, x, "back", w, "L", "S")
            else:
                add("back", w, x, "findI", w, "S", "S")
            # advance I by one cell; if it reaches the right end every pair matched
            if "I" in mk:
                add("advI", w, x, "putI", _sym(end, mk - {"I"}), "R", "S")
            elif end != "<":
                add("advI", w, x, "advI", w, "L", "S")
            if end == ">":
                add("putI", w, x, "acc", w, "S", "S")
            elif end == BLANK:
                add("putI", w, x, "putJ", _sym(end, mk | {"I"}), "R", "S")
            if end in (BLANK, ">"):
                add("putJ", w, x, "back", _sym(end, mk | {"J"}), "S", "S")
            # candidate failed: clear I/J, then move C right
            if end != "<":
                add("fail", w, x, "fail", w, "L", "S")
            else:
                add("fail", w, x, "clear", w, "S", "S")
            cleared = _sym(end, mk - {"I", "J"})
            if end == ">":
                add("clear", w, x, "findC", cleared, "S", "S")
            else:
                add("clear", w, x, "clear", cleared, "R", "S")
            if "C" in mk:
                if end == ">":
                    add("findC", w, x, "rej", w, "S", "S")
                else:
                    add("findC", w, x, "moveC", _sym(end, mk - {"C"}), "R", "S")
            else:
                add("findC", w, x, "findC", w, "L", "S")
            if end in (BLANK, ">"):
                add("moveC", w, x, "toI", _sym(end, mk | {"C"}), "L", "S")
            if end != "<":
                add("toI", w, x, "toI", w, "L", "S")
            else:
                add("toI", w, x, "setI", w, "S", "S")
    return TMDescription("is-star", ("work", "input"), tuple(syms), "init", "acc", "rej", T)


def mem_even_edges():
    """Quadratic-space machine: copies the input onto the memory tape, then
    accepts iff the memory holds an even number of ones."""
    ends = (BLANK, "<", ">", END)
    T = {}
    for w in ends:
        for m in ("0", "1", END):
            for x in ("0", "1"):
                if m != END:
                    T[("copy", (w, x, m))] = ("copy", (w, x, x), ("S", "R", "R"))
            T[("copy", (w, END, m))] = ("rew", (w, END, m), ("S", "S", "L"))
            for x in ("0", "1", END):
                if m != END:
                    T[("rew", (w, x, m))] = ("rew", (w, x, m), ("S", "S", "L"))
                    for par in ("e", "o"):
                        nxt = par if m == "0" else ("o" if par == "e" else "e")
                        T[("cnt" + par, (w, x, m))] = ("cnt" + nxt, (w, x, m), ("S", "S", "R"))
                else:
                    T[("rew", (w, x, m))] = ("cnte", (w, x, m), ("S", "S", "R"))
                    T[("cnte", (w, x, m))] = ("acc", (w, x, m), ("S", "S", "S"))
                    T[("cnto", (w, x, m))] = ("rej", (w, x, m), ("S", "S", "S"))
    return TMDescription("mem-even-edges", ("work", "input", "mem"), ends, "copy", "acc", "rej",
                         T, space="quadratic")


SHIPPED = {"always-accept": always_accept, "even-edges": even_edges, "is-clique": is_clique,
           "is-star": is_star, "mem-even-edges": mem_even_edges}


def get_tm(name):
    if name in SHIPPED:
        return SHIPPED[name]()
    raise ValueError(f"unknown machine {name!r}; shipped: {', '.join(sorted(SHIPPED))}")
