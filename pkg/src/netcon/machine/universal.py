"""Universal constructors: a spanning line in U simulates a TM that draws
random graphs on D until it accepts one.

Two layers run side by side:

* the structural protocol (:class:`UniversalProtocol`), an ordinary
  pairwise protocol with notifications: partition into U/D (``half``) or
  U/D/M (``third``), the fault-tolerant spanning line on U, and the fault
  handling that detaches and deactivates nodes;
* the simulation layer, one :class:`LineProcess` per line leader.  It is
  written as a generator that yields the pair whose interaction it waits
  for (head moves, mark placements, coin experiments, edge reads); the
  driver resumes it when the scheduler picks that pair.

When no structural rule is enabled anywhere, only the waited-for pairs can
change anything, so the driver skips the idle steps in between by sampling
geometric gaps.  This gives the same distribution of step counts as
stepping every interaction.
"""
from __future__ import annotations

import math
from typing import NamedTuple

from ..core import Configuration, ProtocolError, crash, output_graph
from ..languages import check, tm_decided
from ..protocols import ft_line_rules
from ..report import ExperimentReport, RunRecord
from ..rng import SplitMix64
from ..scheduling import AdversarySchedule, StopRule, quiescent, resolve_target
from .tm import BLANK, SimulationError, _drain, execute, initial_tape, pair_count, pair_of

VARIANTS = ("half", "third")
LINE_DEGREE = {"q0": 0, "e1": 1, "e2": 1, "l0": 1, "l1": 1, "q2": 2, "w": 2, "w1": 2, "w2": 2}
WALKERS = ("w", "w1", "w2")
NEW_HEAD = "head"
D_SIDE = ("qd", "dw")
M_SIDE = ("qm", "mw", "qm'", "qw")
WAITING = ("dw", "mw", "s")
D_BIT, M_BIT = 1, 2


class SimCell(NamedTuple):
    h: object = None      # control label of the head, None when the head is elsewhere
    c: str = BLANK        # tape symbol (line nodes)
    d: object = None      # 'l' or 'r' relative to the head, None if unknown or the head
    mark: object = None   # r1..r4 on D/M nodes during experiments
    flag: object = None   # edge bit copied by an r4 node


class UState(NamedTuple):
    role: str
    line: object = None   # spanning-line state of a U node
    k: int = 0            # line edges a releasing node still expects to remove
    need: int = 0         # partners a releasing node must still meet (bit mask)
    sim: object = None    # SimCell, None is the initial simulation component

    def __str__(self):
        s = self.role if self.line is None else f"{self.role}/{self.line}"
        if self.role == "ur":
            s += f"/k{self.k}n{self.need}"
        return s


U0 = UState("qu", "q0")


class UniversalProtocol:
    """Structural rules of the universal constructor for ``tm``.

    Notifications are ambiguous: a U node told that a neighbour crashed
    cannot tell its D partner from a line neighbour.  An attached U node
    therefore releases itself from the line (counting the line edges it
    still has to remove, assuming the crash was a line neighbour) and only
    rejoins after meeting its partners again, which proves they are alive.
    A D or M node told of a crash waits the same way; while waiting it drops
    any D-D or M-M edge it meets.
    """

    uses_notifications = True
    node_memory = "constant"

    def __init__(self, tm, variant="half"):
        if variant not in VARIANTS:
            raise ProtocolError(f"variant must be one of {VARIANTS}, got {variant!r}")
        if variant == "half" and tm.space == "quadratic":
            raise ProtocolError(f"{tm.name} needs quadratic space; the half variant offers a "
                                "linear tape only")
        self.tm = tm
        self.variant = variant
        self.name = f"universal-{variant}({tm.name})"
        self.initial_state = UState("q0")
        self.d1, self.d2 = ft_line_rules(tm_expansion=True)
        # a crash can leave a two-node piece l1-l0 with no walker left to
        # reset it; the l1 end takes over as a fresh leader and brings a head
        self.d1[("l1", "l0", 1)] = ("l0", "e1", 1)
        self.partners = D_BIT if variant == "half" else D_BIT | M_BIT

    def is_output(self, q):
        return q.role == "qd"

    # -- helpers ---------------------------------------------------------
    def _rejoined(self, s):
        if s.role == "ur" and s.k == 0 and s.need == 0:
            return U0
        return s

    def _lose_line_neighbour(self, s):
        line = self.d2.get((s.line, 1), s.line)
        return s._replace(line=line, sim=None if line == "q0" else s.sim)

    def _line(self, a, b, e):
        r = self.d1.get((a.line, b.line, e))
        if r is None:
            return None
        x, y, e2 = r
        before = (a.line, b.line)
        reset = (any(s in WALKERS for s in before + (x, y)) or "q0" in before
                 or (x == "l0" and a.line != "l0") or (y == "l0" and b.line != "l0"))
        sa, sb = a.sim, b.sim
        if reset:
            sa = SimCell(h=NEW_HEAD) if x == "l0" else None
            sb = SimCell(h=NEW_HEAD) if y == "l0" else None
        return a._replace(line=x, sim=sa), b._replace(line=y, sim=sb), e2

    def _rule(self, a, b, e):
        ra, rb = a.role, b.role
        if ra == "qu" and rb == "qu":
            return self._line(a, b, e)
        if ra == "q0" and rb == "q0" and e == 0:
            if self.variant == "half":
                return U0, UState("qd"), 1
            return UState("qu'"), UState("qp"), 1
        if ra == "ur" and e == 1:
            if rb == "qu":
                return self._rejoined(a._replace(k=max(a.k - 1, 0))), self._lose_line_neighbour(b), 0
            if rb == "ur":
                return (self._rejoined(a._replace(k=max(a.k - 1, 0))),
                        self._rejoined(b._replace(k=max(b.k - 1, 0))), 0)
            # partners stay in their waiting role until a is back on the line
            if rb in D_SIDE or rb == "qp":
                nb = b if rb == "qp" else b._replace(role="dw")
                return self._rejoined(a._replace(need=a.need & ~D_BIT)), nb, 1
            if rb in M_SIDE:
                nb = b._replace(role="mw") if rb in ("qm", "mw") else b
                return self._rejoined(a._replace(need=a.need & ~M_BIT)), nb, 1
            return None
        if ra == "dw" and e == 1:
            if rb == "qu":
                return a._replace(role="qd"), b, 1
            if rb in D_SIDE:
                return a, b, 0
            return None
        if ra == "mw" and e == 1:
            if rb == "qu":
                return a._replace(role="qm"), b, 1
            if rb in ("qm", "mw"):
                return a, b, 0
            return None
        if self.variant == "third":
            return self._partition(a, b, e)
        return None

    def _partition(self, a, b, e):
        ra, rb = a.role, b.role
        if ra == "qu'" and e == 0:
            if rb == "q0":
                return U0, UState("qm"), 1
            if rb == "qu'":
                return U0, UState("qm'"), 1
        if e != 1:
            return None
        if rb == "qp":
            # the pending D of an unfinished pair joins D once a U node
            # holds it, and goes back to q0 when its pair dissolves
            if ra == "qu":
                return a, b._replace(role="qd"), 1
            if ra == "qm'":
                return UState("qm"), UState("q0"), 0
            if ra in ("qw", "qw'"):
                return UState("q0"), UState("q0"), 0
        if ra == "qm'" and rb in D_SIDE:
            return UState("qm"), UState("q0"), 0
        if ra == "qw":
            if rb in D_SIDE:
                return UState("q0"), UState("s"), 0
            if rb == "qu":
                return UState("qm"), b, 1
        if ra == "qw'":
            if rb in D_SIDE or rb in ("qm", "mw"):
                return UState("q0"), UState("s"), 0
            if rb == "qm'":
                return UState("q0"), UState("qu'"), 0
        if ra == "s":
            return a, b, 0
        return None

    def outcomes(self, a, b, e):
        res = []
        r = self._rule(a, b, e)
        if r is not None:
            res.append(r)
        if a == b or r is None:
            r2 = self._rule(b, a, e)
            if r2 is not None:
                res.append((r2[1], r2[0], r2[2]))
        res = [x for x in dict.fromkeys(res) if x != (a, b, e)]
        return tuple(res)

    def notify(self, q, flag):
        if flag != 1:
            return q
        role = q.role
        if role == "qu":
            if q.line == "q0":
                return UState("q0") if self.variant == "half" else UState("qw'")
            return UState("ur", k=max(LINE_DEGREE[q.line] - 1, 0), need=self.partners)
        if role == "ur":
            return q._replace(k=max(q.k - 1, 0), need=self.partners)
        if role == "qd":
            return q._replace(role="dw")
        if role == "qm":
            return q._replace(role="mw")
        table = {"qu'": "q0", "qw": "q0", "qw'": "q0", "qm'": "qw", "qp": "q0"}
        if role in table:
            return UState(table[role])
        return q

    def __repr__(self):
        return f"UniversalProtocol({self.name})"


def build_universal(tm, variant="half"):
    """Composed protocol for ``tm``; quadratic machines need ``third``."""
    return UniversalProtocol(tm, variant)


# -- simulation layer -----------------------------------------------------

class LineContext:
    """The nodes a line process works on, in order from the head endpoint."""

    def __init__(self, config, line, D, M=None, rng=None):
        self.config = config
        self.line = list(line)
        self.D = list(D)
        self.M = list(M) if M is not None else None
        self.rng = rng if rng is not None else SplitMix64(0)
        self.head = 0
        self.label = NEW_HEAD
        self.draws = 0
        self.tm_steps = 0
        self.log = None

    @property
    def nodes(self):
        return set(self.line) | set(self.D) | set(self.M or ())

    def cell(self, t):
        return self.config.state[self.line[t]].sim or SimCell()

    def set_sim(self, node, **kw):
        _setf(self.config.state, node, *[x for k, v in kw.items() for x in (_FIELD[k], v)])

    def set_cell(self, t, **kw):
        self.set_sim(self.line[t], **kw)

    def set_edge(self, u, v, b):
        self.config.edges[u, v] = self.config.edges[v, u] = b

    def directions(self):
        return ["head" if self.cell(t).h is not None else self.cell(t).d
                for t in range(len(self.line))]

    def tape(self):
        return [self.cell(t).c for t in range(len(self.line))]

    @classmethod
    def from_config(cls, config, head, rng=None):
        """Walk the U-U edges from ``head`` and collect each node's partners."""
        line = [head]
        prev = None
        while True:
            nxt = [w for w in config.neighbors(line[-1])
                   if w != prev and config.state[w].role == "qu"]
            if not nxt:
                break
            if len(nxt) > 1 or nxt[0] in line:
                raise SimulationError(f"U subgraph at {line[-1]} is not a path")
            prev = line[-1]
            line.append(nxt[0])
        D, M = [], []
        for u in line:
            nb = config.neighbors(u)
            ds = [w for w in nb if config.state[w].role in D_SIDE]
            ms = [w for w in nb if config.state[w].role in M_SIDE]
            D.append(ds[0] if len(ds) == 1 else None)
            M.append(ms[0] if len(ms) == 1 else None)
        third = any(config.state[w].role in M_SIDE for u in line for w in config.neighbors(u))
        return cls(config, line, D, M if third else None, rng)


_FIELD = {f: i for i, f in enumerate(SimCell._fields)}
_EMPTY = SimCell()
_new = tuple.__new__


def _setf(state, node, *iv):
    # hot path: rebuild the two tuples directly instead of going through _replace
    s = state[node]
    c = list(s[4] or _EMPTY)
    for k in range(0, len(iv), 2):
        c[iv[k]] = iv[k + 1]
    state[node] = _new(UState, (s[0], s[1], s[2], s[3], _new(SimCell, c)))


def _move(ctx, delta):
    """Head steps to the neighbouring cell, leaving the direction mark that
    points back at it."""
    t = ctx.head
    u = t + delta
    if not 0 <= u < len(ctx.line):
        raise SimulationError(f"head moved off the line at cell {u}")
    a, b = ctx.line[t], ctx.line[u]
    yield (a, b)
    st = ctx.config.state
    _setf(st, a, 0, None, 2, "l" if delta > 0 else "r")
    _setf(st, b, 0, ctx.label, 2, None)
    ctx.head = u


def _goto(ctx, target):
    while ctx.head < target:
        yield from _move(ctx, 1)
    while ctx.head > target:
        yield from _move(ctx, -1)


def _direction(ctx):
    """Sweep to the far endpoint leaving l marks and back leaving r marks;
    the head ends on the leader endpoint with every other node marked r.
    The sweep also writes the end-marked blank tape and overwrites any
    residue an earlier process left on the line."""
    ctx.label = "dir"
    ctx.set_cell(ctx.head, h=ctx.label)
    tape = initial_tape(len(ctx.line))
    ctx.set_cell(0, c=tape[0])
    while ctx.head < len(ctx.line) - 1:
        yield from _move(ctx, 1)
        ctx.set_cell(ctx.head, c=tape[ctx.head])
    yield from _goto(ctx, 0)


def _wipe(ctx):
    """Restore the blank tape before a new attempt."""
    tape = initial_tape(len(ctx.line))
    ctx.set_cell(ctx.head, c=tape[ctx.head])
    yield from _goto(ctx, len(ctx.line) - 1)
    ctx.set_cell(ctx.head, c=tape[ctx.head])
    while ctx.head > 0:
        yield from _move(ctx, -1)
        ctx.set_cell(ctx.head, c=tape[ctx.head])


def _draw(ctx, coin=None):
    """Random graph on D: an r1-marked node runs one coin experiment with
    every r2-marked node to its right, one pair at a time."""
    coin = coin or ctx.rng.coin
    k = len(ctx.line)
    ctx.draws += 1
    if k <= 1:
        return
    D = ctx.D
    ctx.label = "draw"
    yield from _goto(ctx, 0)
    for a in range(k - 1):
        yield (ctx.line[a], D[a])
        ctx.set_sim(D[a], mark="r1")
        for b in range(a + 1, k):
            yield from _move(ctx, 1)
            yield (ctx.line[b], D[b])
            ctx.set_sim(D[b], mark="r2")
            yield (D[a], D[b])
            ctx.set_edge(D[a], D[b], int(coin()))
            ctx.set_sim(D[b], mark=None)
            yield (ctx.line[b], D[b])
        yield from _goto(ctx, a)
        yield (ctx.line[a], D[a])
        ctx.set_sim(D[a], mark=None)
        yield from _move(ctx, 1)
    yield from _goto(ctx, 0)


def _access(ctx, i, j, X, write=None):
    """r3/r4 marking walk on the i-th and j-th node of X (D or M), counting
    positions from the leader endpoint.  Reads the edge or writes ``write``."""
    k = len(X)
    if i == j:
        raise SimulationError(f"edge access needs two distinct nodes, got ({i}, {j})")
    if not (0 <= i < k and 0 <= j < k):
        raise SimulationError(f"edge ({i}, {j}) outside 0..{k - 1}")
    if i > j:
        i, j = j, i
    back = ctx.head
    for pos, mark in ((i, "r3"), (j, "r4")):
        yield from _goto(ctx, 0)
        yield from _goto(ctx, pos)
        yield (ctx.line[pos], X[pos])
        ctx.set_sim(X[pos], mark=mark)
    yield (X[i], X[j])
    if write is not None:
        ctx.set_edge(X[i], X[j], int(write))
    bit = int(ctx.config.edges[X[i], X[j]])
    ctx.set_sim(X[i], mark=None)
    ctx.set_sim(X[j], mark=None, flag=bit)
    yield (ctx.line[j], X[j])
    ctx.set_sim(X[j], flag=None)
    yield from _goto(ctx, back)
    return bit


class _CellTape:
    def __init__(self, ctx):
        self.ctx = ctx

    def __len__(self):
        return len(self.ctx.line)

    def __getitem__(self, t):
        return self.ctx.cell(t).c

    def __setitem__(self, t, sym):
        if self.ctx.cell(t).c != sym:
            self.ctx.set_cell(t, c=sym)


class _LineTapes:
    """Tape backend that costs interactions on the line."""

    def __init__(self, ctx):
        self.ctx = ctx
        self.k = len(ctx.D)
        self.mem_k = len(ctx.M) if ctx.M is not None else 0

    def read_input(self, p):
        i, j = pair_of(p, self.k)
        return (yield from _access(self.ctx, i, j, self.ctx.D))

    def read_mem(self, p):
        i, j = pair_of(p, self.mem_k)
        return (yield from _access(self.ctx, i, j, self.ctx.M))

    def write_mem(self, p, b):
        i, j = pair_of(p, self.mem_k)
        yield from _access(self.ctx, i, j, self.ctx.M, write=b)

    def move(self, pos, delta):
        yield from _move(self.ctx, delta)
        return pos + delta


def _main(ctx, tm, max_tm_steps):
    """Direction pass, then draw / decide until the machine accepts."""
    if len(ctx.line) > 1:
        yield from _direction(ctx)
    while True:
        yield from _draw(ctx)
        ctx.label = "tm"
        accepted, steps = yield from execute(tm, _CellTape(ctx), _LineTapes(ctx), max_tm_steps)
        ctx.tm_steps += steps
        if accepted:
            return True
        yield from _wipe(ctx)


def _run_now(gen):
    return _drain(gen)


def direction_pass(ctx):
    """Run the direction subroutine to completion (no scheduling)."""
    if len(ctx.line) > 1:
        _run_now(_direction(ctx))
    return ctx


def draw_random_graph_on_D(ctx, rng=None):
    """Draw a fresh random graph on D (coins from ``rng`` or the context's
    stream).  Returns the list of D-pairs whose edge is on."""
    coin = rng.coin if rng is not None else None
    _run_now(_draw(ctx, coin))
    D = ctx.D
    return [(i, j) for i in range(len(D)) for j in range(i + 1, len(D))
            if ctx.config.edges[D[i], D[j]]]


def read_edge(ctx, i, j):
    return _run_now(_access(ctx, i, j, ctx.D))


def write_mem_edge(ctx, i, j, b):
    if ctx.M is None:
        raise SimulationError("no memory: the half variant has no M nodes")
    _run_now(_access(ctx, i, j, ctx.M, write=b))


def read_mem_edge(ctx, i, j):
    if ctx.M is None:
        raise SimulationError("no memory: the half variant has no M nodes")
    return _run_now(_access(ctx, i, j, ctx.M))


def make_structure(k, variant="half", tm=None, rng=None):
    """A hand-built stable structure: a k-node U line (leader at node 0 with
    the head), each U node wired to its D (and M) partner, all simulation
    components initial.  Returns (protocol, context)."""
    from .tm import always_accept
    p = UniversalProtocol(tm or always_accept(), variant)
    per = 2 if variant == "half" else 3
    n = per * k
    cfg = Configuration.initial(n, p)
    line = list(range(k))
    D = [k + t for t in range(k)]
    M = [2 * k + t for t in range(k)] if variant == "third" else None
    for t, u in enumerate(line):
        if k == 1:
            ls = "q0"
        elif t == 0:
            ls = "l0"
        elif t == k - 1:
            ls = "e1"
        else:
            ls = "q2"
        cfg.state[u] = UState("qu", ls, sim=SimCell(h=NEW_HEAD) if t == 0 else None)
        cfg.state[D[t]] = UState("qd")
        cfg.edges[u, D[t]] = cfg.edges[D[t], u] = 1
        if M is not None:
            cfg.state[M[t]] = UState("qm")
            cfg.edges[u, M[t]] = cfg.edges[M[t], u] = 1
        if t:
            cfg.edges[u, line[t - 1]] = cfg.edges[line[t - 1], u] = 1
    return p, LineContext(cfg, line, D, M, rng)


class LineProcess:
    def __init__(self, ctx, tm, max_tm_steps):
        self.ctx = ctx
        self.gen = _main(ctx, tm, max_tm_steps)
        self.pending = None
        self.done = False
        self.accepted = None
        self.error = None
        self.events = 0
        self.advance()

    def advance(self):
        self.events += 1
        try:
            self.pending = self.gen.send(None)
        except StopIteration as stop:
            self.pending = None
            self.done = True
            self.accepted = stop.value
        except SimulationError as err:
            self.pending = None
            self.done = True
            self.error = str(err)


def _geometric(rng, p):
    if p >= 1.0:
        return 1
    u = 1.0 - rng.random()
    return 1 + int(math.log(u) / math.log1p(-p))


def structure_report(config, variant):
    """Check the final U/D(/M) layout; returns (ok, counts, problems)."""
    alive = config.alive_nodes()
    role = {u: config.state[u].role for u in alive}
    U = [u for u in alive if role[u] == "qu"]
    D = [u for u in alive if role[u] == "qd"]
    M = [u for u in alive if role[u] == "qm"]
    problems = []
    Uset = set(U)
    for u in U:
        nb = config.neighbors(u)
        nd = sum(role[w] == "qd" for w in nb)
        nm = sum(role[w] == "qm" for w in nb)
        if nd != 1:
            problems.append(f"U node {u} has {nd} D partners")
        if variant == "third" and nm != 1:
            problems.append(f"U node {u} has {nm} M partners")
        if sum(w in Uset for w in nb) > 2:
            problems.append(f"U node {u} has line degree > 2")
    for x in D + M:
        nu = sum(w in Uset for w in config.neighbors(x))
        if nu != 1:
            problems.append(f"{role[x]} node {x} bound to {nu} U nodes")
    for x in D:
        if any(role[w] == "qm" for w in config.neighbors(x)):
            problems.append(f"D node {x} touches M")
    if U:
        line_edges = sum(1 for i, u in enumerate(U) for w in U[i + 1:] if config.edges[u, w])
        comps = _components(U, config)
        if line_edges != len(U) - 1 or comps != 1:
            problems.append(f"U is not a single path ({line_edges} edges, {comps} parts)")
    counts = {"U": len(U), "D": len(D), "M": len(M)}
    return not problems, counts, problems


def _components(nodes, config):
    nodes = set(nodes)
    seen, comps = set(), 0
    for s in nodes:
        if s in seen:
            continue
        comps += 1
        stack = [s]
        seen.add(s)
        while stack:
            x = stack.pop()
            for y in config.neighbors(x):
                if y in nodes and y not in seen:
                    seen.add(y)
                    stack.append(y)
    return comps


class UniversalRun:
    """Driver for one seeded run of a universal constructor."""

    def __init__(self, tm, variant, n, adversary=None, seed=0, stop=None, *,
                 max_tm_steps=1_000_000, checks=True):
        self.protocol = build_universal(tm, variant)
        self.tm = tm
        self.variant = variant
        self.n = n
        self.adv = adversary or AdversarySchedule.none()
        self.adv.validate(n)
        if self.adv.policy == "state_triggered":
            raise ProtocolError("universal runs support none, fixed_steps and random adversaries")
        self.seed = seed
        self.stop = stop or StopRule(max_steps=10**9)
        self.rng = SplitMix64(seed)
        self.config = Configuration.initial(n, self.protocol)
        self.max_tm_steps = max_tm_steps
        self.checks = checks
        self.processes = {}          # head node -> LineProcess
        self.designated = {}         # frozenset pair -> LineProcess
        self.crashes = []
        self.violations = []
        self.dirty_starts = []
        self.waiting_heads = set()
        self.heads_started = 0
        self.quiet = False
        self.next_check = 0
        self.last_change = 0
        self.fixed_ptr = 0
        self.next_crash = None
        self._schedule_crash()

    # -- adversary -------------------------------------------------------
    def _schedule_crash(self):
        adv = self.adv
        self.next_crash = None
        if len(self.crashes) >= adv.fault_budget:
            return
        if adv.policy == "fixed_steps":
            while self.fixed_ptr < len(adv.steps) and adv.steps[self.fixed_ptr] < self.config.step:
                self.fixed_ptr += 1
            if self.fixed_ptr < len(adv.steps):
                self.next_crash = adv.steps[self.fixed_ptr]
        elif adv.policy == "random" and adv.rate > 0:
            self.next_crash = self.config.step + _geometric(self.rng, adv.rate) - 1

    def _crash(self):
        cfg = self.config
        sel = self.adv.selector_at(self.fixed_ptr) if self.adv.policy == "fixed_steps" \
            else self.adv.target_selector
        if self.adv.policy == "fixed_steps":
            self.fixed_ptr += 1
        u = resolve_target(sel, cfg, self.rng) if len(cfg.alive_nodes()) > 1 else None
        if u is None:
            cfg.step += 1
            self._schedule_crash()
            return
        before = list(cfg.state)
        touched = set(cfg.neighbors(u)) | {u}
        crash(cfg, u, self.protocol, self.rng)
        touched |= {w for w in cfg.alive_nodes() if cfg.state[w] != before[w]}
        self.crashes.append((cfg.step - 1, u))
        self._structural_change(touched, before)
        self._schedule_crash()

    # -- bookkeeping -----------------------------------------------------
    def _structural_change(self, touched, before):
        cfg = self.config
        self.quiet = False
        self.next_check = cfg.step + len(cfg.alive_nodes())
        self.last_change = cfg.step
        for h, proc in list(self.processes.items()):
            nodes = proc.ctx.nodes
            for x in touched:
                if x not in nodes:
                    continue
                if not cfg.alive[x]:
                    self._kill(h)
                    break
                s0, s1 = before[x], cfg.state[x]
                if x in proc.ctx.line and (s0.role, s0.line) != (s1.role, s1.line):
                    self._kill(h)
                    break
        for x in sorted(touched | self.waiting_heads):
            s = cfg.state[x]
            if cfg.alive[x] and s.sim is not None and s.sim.h == NEW_HEAD and x not in self.processes:
                self._start(x)
            else:
                self.waiting_heads.discard(x)
        if self.checks:
            self._check_basic()

    def _kill(self, h):
        proc = self.processes.pop(h)
        for pair in [p for p, q in self.designated.items() if q is proc]:
            del self.designated[pair]

    def _start(self, h):
        cfg = self.config
        for hh, proc in list(self.processes.items()):
            if h in proc.ctx.nodes:
                self._kill(hh)
        try:
            ctx = LineContext.from_config(cfg, h, self.rng)
        except SimulationError as err:
            self.violations.append((cfg.step, f"line at {h}: {err}"))
            return
        if None in ctx.D or (ctx.M is not None and None in ctx.M):
            # a line node still lacks its partner: retry on the next change
            self.waiting_heads.add(h)
            return
        self.waiting_heads.discard(h)
        dirty = [u for u in ctx.line if u != h and cfg.state[u].sim is not None]
        if dirty:
            # possible when a crash turns a node behind a walker into l1;
            # the direction sweep cleans the residue
            self.dirty_starts.append((cfg.step, h, dirty))
        self.heads_started += 1
        proc = LineProcess(ctx, self.tm, self.max_tm_steps)
        self.processes[h] = proc
        self._track(proc)

    def _track(self, proc):
        for pair in [p for p, q in self.designated.items() if q is proc]:
            del self.designated[pair]
        if proc.error:
            self.violations.append((self.config.step, f"simulation error: {proc.error}"))
        if proc.pending is not None:
            u, v = proc.pending
            self.designated[frozenset((u, v))] = proc

    def _check_basic(self):
        cfg = self.config
        E = cfg.edges
        for u in range(cfg.n_initial):
            if not cfg.alive[u] and E[u].any():
                self.violations.append((cfg.step, f"dead node {u} keeps edges"))
                return

    def _ready(self, u, v):
        cfg = self.config
        return (cfg.alive[u] and cfg.alive[v] and cfg.state[u].role not in WAITING
                and cfg.state[v].role not in WAITING)

    def _sim_step(self, pair):
        proc = self.designated.get(pair)
        if proc is None:
            return
        u, v = tuple(pair)
        if not self._ready(u, v):
            return
        proc.advance()
        self.last_change = self.config.step
        self._track(proc)

    def _interact(self, u, v):
        cfg = self.config
        a, b, e = cfg.state[u], cfg.state[v], int(cfg.edges[u, v])
        outs = self.protocol.outcomes(a, b, e)
        cfg.step += 1
        if outs:
            a2, b2, e2 = outs[0] if len(outs) == 1 else outs[self.rng.below(len(outs))]
            before = list(cfg.state)
            cfg.state[u], cfg.state[v] = a2, b2
            if e2 != e:
                cfg.edges[u, v] = cfg.edges[v, u] = e2
            self._structural_change({u, v}, before)
        pair = frozenset((u, v))
        if pair in self.designated:
            self._sim_step(pair)

    def _batch(self, proc, m, start):
        """Quiescent structure, one waiting pair: nothing but that pair can
        change anything, so step the process through its interactions back
        to back, adding the geometric idle gaps in between."""
        cfg, rng = self.config, self.rng
        pairs = m * (m - 1) // 2
        logq = math.log1p(-1.0 / pairs) if pairs > 1 else None
        horizon = start + self.stop.max_steps
        if self.next_crash is not None:
            horizon = min(horizon, self.next_crash)
        while proc.pending is not None and self._ready(*proc.pending):
            g = 1 if logq is None else 1 + int(math.log(1.0 - rng.random()) / logq)
            if cfg.step + g > horizon:
                cfg.step = horizon
                break
            cfg.step += g
            proc.advance()
        self.last_change = cfg.step
        self._track(proc)

    # -- main loop -------------------------------------------------------
    def run(self):
        cfg = self.config
        start = cfg.step
        status = "max_steps"
        while cfg.step - start < self.stop.max_steps:
            alive = cfg.alive_nodes()
            m = len(alive)
            if m < 2:
                status = "halt"
                break
            if self.next_crash is not None and cfg.step >= self.next_crash:
                self._crash()
                continue
            if not self.quiet and cfg.step >= self.next_check:
                self.quiet = quiescent(cfg, self.protocol)
                if not self.quiet:
                    self.next_check = cfg.step + m
            if self.quiet:
                if not self.designated:
                    if self.next_crash is None:
                        status = "stable"
                        break
                    cfg.step = self.next_crash
                    continue
                pairs = sorted(tuple(sorted(p)) for p in self.designated)
                if self.next_crash is None and not any(self._ready(*q) for q in pairs):
                    status = "stuck"
                    break
                if len(pairs) == 1:
                    self._batch(self.designated[frozenset(pairs[0])], m, start)
                    continue
                g = _geometric(self.rng, len(pairs) / (m * (m - 1) // 2))
                if self.next_crash is not None and cfg.step + g - 1 >= self.next_crash:
                    cfg.step = self.next_crash
                    continue
                cfg.step += g
                self._sim_step(frozenset(pairs[self.rng.below(len(pairs))]))
                continue
            iu = self.rng.below(m)
            iv = self.rng.below(m - 1)
            if iv >= iu:
                iv += 1
            self._interact(alive[iu], alive[iv])
        return self._record(status)

    def context(self):
        """LineContext of the accepted (or last) line process, if any."""
        for proc in self.processes.values():
            return proc.ctx
        return None

    def _record(self, status):
        cfg = self.config
        ok, counts, problems = structure_report(cfg, self.variant)
        g = output_graph(cfg, self.protocol)
        procs = list(self.processes.values())
        proc = procs[0] if len(procs) == 1 else None
        accepted = proc.accepted if proc is not None else None
        verdict = None
        if status == "stable":
            member = check(g, tm_decided(self.tm, counts["D"]))[0] if counts["D"] else False
            verdict = bool(ok and member and not self.violations)
        extra = {
            "variant": self.variant, "tm": self.tm.name, **counts,
            "structure_ok": ok, "problems": problems, "accepted": accepted,
            "draws": proc.ctx.draws if proc else 0,
            "retries": max(proc.ctx.draws - 1, 0) if proc else 0,
            "tm_steps": proc.ctx.tm_steps if proc else 0,
            "heads_started": self.heads_started, "dirty_starts": len(self.dirty_starts),
            "crashes": self.crashes, "violations": self.violations,
            "edges": sorted(tuple(sorted(e)) for e in g.edges),
        }
        return RunRecord(seed=self.seed, status=status, steps=cfg.step,
                         stabilization_step=self.last_change if status == "stable" else None,
                         faults=len(self.crashes), verdict=verdict, order=g.order, size=g.size,
                         n=self.n, waste=self.n - counts["D"], extra=extra)


def run_universal(tm, variant, n, adversary=None, seed=0, stop=None, **kw):
    """One seeded run; the report's single record carries waste, |U|, |D|,
    |M|, the draw count and the language verdict on the D-graph.  Failure to
    stabilize within the step budget shows up as status ``max_steps``."""
    runner = UniversalRun(tm, variant, n, adversary, seed, stop, **kw)
    rec = runner.run()
    rep = ExperimentReport(name=runner.protocol.name, runs=[rec],
                           config={"variant": variant, "n": n, "seed": seed, "tm": tm.name})
    rep.artifacts.append(runner)
    return rep
