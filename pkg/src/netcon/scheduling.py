"""Event generation (uniform pair scheduler + crash adversary) and the run loop.

Two engines execute the same semantics and draw from the same splitmix64
stream in the same order:

* the reference engine below works for any protocol object and records
  every interaction if asked;
* :mod:`netcon.fastpath` runs rule-table protocols under numba.

Per-step draw order: the random policy first draws a uniform to decide on
a crash; a crash with a random selector draws the victim, and an isolated
victim's flag-2 target is drawn over the survivors; an interaction draws
the initiator index and then the responder index among the remaining alive
nodes, then an orientation index if the rule has several outcomes.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import fastpath as fp
from .core import Configuration, ProtocolDefinition, UsageError, apply_pairwise, crash
from .rng import SplitMix64


class ScheduleError(ValueError):
    """Adversary configuration that violates the fault model."""


class Event(NamedTuple):
    kind: str            # 'interact' | 'crash' | 'halt'
    u: int = -1
    v: int = -1
    choice: int = -1     # orientation index for interactions, flag-2 target for crashes


_SEL = re.compile(r"^\s*(random|max_degree|by_id|unique_state)\s*(?:\(\s*([^)]*?)\s*\))?\s*$")


def parse_selector(spec):
    """'random', 'max_degree', 'by_id(3)', 'unique_state(b)' -> tuple."""
    if isinstance(spec, tuple):
        return spec
    m = _SEL.match(spec)
    if not m:
        raise ScheduleError(f"unknown target selector {spec!r}")
    kind, arg = m.groups()
    if kind == "by_id":
        if arg is None:
            raise ScheduleError("by_id needs a node id")
        return (kind, int(arg))
    if kind == "unique_state":
        if arg is None:
            raise ScheduleError("unique_state needs a state label")
        return (kind, arg)
    return (kind,)


@dataclass
class AdversarySchedule:
    fault_budget: int = 0
    policy: str = "none"                 # none | fixed_steps | state_triggered | random
    steps: tuple = ()                    # fixed_steps: step indices (sorted, distinct)
    selectors: tuple = ()                # one per step, or empty to use target_selector
    target_selector: object = "random"
    rate: float = 0.0                    # random policy: crash probability per step
    trigger: Callable | None = None      # state_triggered: config -> node id or None

    def __post_init__(self):
        if self.policy not in ("none", "fixed_steps", "state_triggered", "random"):
            raise ScheduleError(f"unknown adversary policy {self.policy!r}")
        if self.fault_budget < 0:
            raise ScheduleError("fault budget must be non-negative")
        self.target_selector = parse_selector(self.target_selector)
        self.steps = tuple(int(s) for s in self.steps)
        if len(set(self.steps)) != len(self.steps):
            raise ScheduleError("at most one crash per step")
        if list(self.steps) != sorted(self.steps):
            order = sorted(range(len(self.steps)), key=self.steps.__getitem__)
            self.steps = tuple(self.steps[i] for i in order)
            if self.selectors:
                self.selectors = tuple(self.selectors[i] for i in order)
        self.selectors = tuple(parse_selector(s) for s in self.selectors)
        if self.selectors and len(self.selectors) != len(self.steps):
            raise ScheduleError("selectors must match fixed steps one to one")
        if self.policy == "random" and not 0.0 <= self.rate <= 1.0:
            raise ScheduleError("crash rate must lie in [0, 1]")
        if self.policy == "state_triggered" and self.trigger is None:
            raise ScheduleError("state_triggered policy needs a trigger function")

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def at_steps(cls, steps, selector="random", budget=None):
        steps = tuple(steps)
        return cls(fault_budget=len(steps) if budget is None else budget, policy="fixed_steps",
                   steps=steps, target_selector=selector)

    def validate(self, n):
        # the last alive node can never crash; the usual bound f <= n-2 is
        # enforced on experiment configs
        if self.fault_budget > n - 1:
            raise ScheduleError(f"fault budget {self.fault_budget} exceeds n-1 = {n - 1}")

    def selector_at(self, i):
        return self.selectors[i] if self.selectors else self.target_selector


@dataclass
class SchedulerState:
    seed: int = 0
    rng: SplitMix64 = None
    crashes: int = 0
    fixed_ptr: int = 0
    skipped: list = field(default_factory=list)

    def __post_init__(self):
        if self.rng is None:
            self.rng = SplitMix64(self.seed)


def resolve_target(selector, config, rng):
    """Node id picked by ``selector`` on the pre-crash configuration, or None."""
    alive = config.alive_nodes()
    if not alive:
        return None
    kind = selector[0]
    if kind == "random":
        return alive[rng.below(len(alive))]
    if kind == "by_id":
        n = config.n_initial
        for off in range(n):
            w = (selector[1] + off) % n
            if config.alive[w]:
                return w
        return None
    if kind == "max_degree":
        return max(alive, key=lambda w: (config.degree(w), -w))
    if kind == "unique_state":
        for w in alive:
            if config.state[w] == selector[1] or str(config.state[w]) == selector[1]:
                return w
        return None
    raise ScheduleError(f"unknown selector {selector!r}")


def _pending(sched, adv):
    if sched.crashes >= adv.fault_budget:
        return False
    if adv.policy == "fixed_steps":
        return sched.fixed_ptr < len(adv.steps)
    if adv.policy == "random":
        return adv.rate > 0
    return False


def next_event(sched, adv, config, protocol=None):
    """Draw the next event.  Crash targets are resolved here; orientation and
    flag-2 targets are drawn by :func:`execute` when the event is applied."""
    alive = config.alive_nodes()
    m = len(alive)
    if m < 2:
        return Event("halt")
    step = config.step
    while sched.fixed_ptr < len(adv.steps) and adv.steps[sched.fixed_ptr] < step:
        sched.fixed_ptr += 1
    selector = None
    if sched.crashes < adv.fault_budget:
        if adv.policy == "fixed_steps":
            if sched.fixed_ptr < len(adv.steps) and adv.steps[sched.fixed_ptr] == step:
                selector = adv.selector_at(sched.fixed_ptr)
                sched.fixed_ptr += 1
        elif adv.policy == "random":
            if sched.rng.random() < adv.rate:
                selector = adv.target_selector
        elif adv.policy == "state_triggered":
            t = adv.trigger(config)
            if t is not None:
                selector = ("by_id", int(t)) if not isinstance(t, tuple) else t
    if selector is not None:
        target = resolve_target(selector, config, sched.rng)
        if target is not None:
            return Event("crash", target)
        sched.skipped.append((step, selector))
    rng = sched.rng
    iu = rng.below(m)
    iv = rng.below(m - 1)
    if iv >= iu:
        iv += 1
    return Event("interact", alive[iu], alive[iv])


def execute(event, config, protocol, rng):
    """Apply an event, drawing any remaining randomness; returns the event
    with its choice filled in so it can be replayed."""
    if event.kind == "interact":
        u, v = event.u, event.v
        choice = event.choice
        outs = protocol.outcomes(config.state[u], config.state[v], int(config.edges[u, v]))
        if len(outs) > 1 and choice < 0:
            choice = rng.below(len(outs))
        apply_pairwise(config, u, v, protocol, choice=max(choice, 0))
        return event._replace(choice=choice)
    if event.kind == "crash":
        u = event.u
        target = event.choice
        if protocol.uses_notifications and target < 0 and not config.neighbors(u):
            survivors = [w for w in config.alive_nodes() if w != u]
            if survivors:
                target = survivors[rng.below(len(survivors))]
        crash(config, u, protocol, notify_target=target if target >= 0 else None)
        return event._replace(choice=target)
    raise UsageError(f"cannot execute event {event.kind!r}")


@dataclass
class StopRule:
    max_steps: int = 10**7
    window: int | None = None      # stabilization window W (steps without output change)
    until: str = "window"          # window | silent (also require no enabled rule)

    @classmethod
    def default_window(cls, n, c=20):
        return c * n * n


@dataclass
class Trace:
    protocol: str
    n: int
    seed: int
    crashes: list = field(default_factory=list)          # (step, node, flag-2 target or -1)
    output_changes: list = field(default_factory=list)
    events: list | None = None                           # full event log when recorded
    final: Configuration | None = None
    length: int = 0
    last_output_change: int = 0
    last_state_change: int = 0
    stabilized: bool = False
    halted: bool = False
    status: str = "max_steps"
    violation: str | None = None
    skipped: list = field(default_factory=list)
    changes_truncated: bool = False

    def to_jsonl(self):
        """Line-delimited event records (header, crashes, interactions)."""
        lines = [json.dumps({"type": "header", "protocol": self.protocol, "n": self.n,
                             "seed": self.seed, "length": self.length,
                             "stabilized": self.stabilized, "status": self.status,
                             "last_output_change": self.last_output_change})]
        if self.events is not None:
            for step, ev in self.events:
                lines.append(json.dumps({"type": ev.kind, "step": step, "u": ev.u, "v": ev.v,
                                         "choice": ev.choice}))
        else:
            for step, u, t in self.crashes:
                lines.append(json.dumps({"type": "crash", "step": step, "u": u, "v": -1, "choice": t}))
        return "\n".join(lines) + "\n"


def read_events(text):
    """Parse event lines written by :meth:`Trace.to_jsonl` (header skipped)."""
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec["type"] in ("interact", "crash"):
            out.append(Event(rec["type"], rec["u"], rec.get("v", -1), rec.get("choice", -1)))
    return out


def replay(events, protocol, n, config=None, monitor=None):
    """Apply a recorded event sequence; randomness is fully determined by the
    recorded choices, so no rng is needed."""
    config = Configuration.initial(n, protocol) if config is None else config
    for ev in events:
        if ev.kind == "interact":
            apply_pairwise(config, ev.u, ev.v, protocol, choice=max(ev.choice, 0))
        elif ev.kind == "crash":
            crash(config, ev.u, protocol, notify_target=ev.choice if ev.choice >= 0 else None)
        if monitor is not None:
            monitor(config)
    return config


def _output_changed(p, before_states, after_states, before_e, after_e):
    (a, b), (a2, b2) = before_states, after_states
    if p.is_output(a) != p.is_output(a2) or p.is_output(b) != p.is_output(b2):
        return True
    was = before_e == 1 and p.is_output(a) and p.is_output(b)
    now = after_e == 1 and p.is_output(a2) and p.is_output(b2)
    return was != now


def quiescent(config, protocol):
    """True if no interaction can change anything from this configuration."""
    alive = config.alive_nodes()
    for i, u in enumerate(alive):
        for v in alive[i + 1:]:
            a, b, e = config.state[u], config.state[v], int(config.edges[u, v])
            for a2, b2, e2 in protocol.outcomes(a, b, e):
                if a2 != a or b2 != b or e2 != e:
                    return False
    return True


def fast_path_ok(protocol, adv, record):
    return (isinstance(protocol, ProtocolDefinition) and adv.policy != "state_triggered"
            and not record and all(len(protocol.outcomes(a, b, e)) <= 2
                                   for a in protocol.states for b in protocol.states for e in (0, 1)))


def run(config, protocol, sched, adv, stop, *, record=False, monitor=None, checks=None,
        engine="auto"):
    """Drive the configuration until the stop rule fires.

    ``monitor(config)`` is called after every step (reference engine only);
    ``checks`` is an :class:`~netcon.invariants.InvariantSpec` enforced on
    every step by either engine.  Returns a :class:`Trace`; a violated
    invariant is reported in ``trace.violation`` rather than raised.
    """
    adv.validate(config.n_initial)
    if engine == "auto":
        engine = "fast" if monitor is None and fast_path_ok(protocol, adv, record) else "python"
    if engine == "fast":
        return _run_fast(config, protocol, sched, adv, stop, checks)
    return _run_python(config, protocol, sched, adv, stop, record, monitor, checks)


def _run_python(config, protocol, sched, adv, stop, record, monitor, checks):
    trace = Trace(getattr(protocol, "name", "?"), config.n_initial, sched.seed,
                  events=[] if record else None)
    rng = sched.rng
    start = config.step
    last_change = last_state = config.step
    window = stop.window
    every = max(64, config.n_initial ** 2 // 2)
    while config.step - start < stop.max_steps:
        idle = not _pending(sched, adv) and config.step - last_change >= (window or 0)
        if stop.until == "window":
            if window and idle:
                trace.stabilized = True
                trace.status = "stable"
                break
        elif idle and config.step % every == 0 and quiescent(config, protocol):
            trace.stabilized = True
            trace.status = "silent"
            break
        step = config.step
        ev = next_event(sched, adv, config, protocol)
        if ev.kind == "halt":
            trace.halted = True
            trace.status = "halt"
            break
        if ev.kind == "crash":
            out_before = protocol.is_output(config.state[ev.u])
            old = list(config.state)
            ev = execute(ev, config, protocol, rng)
            sched.crashes += 1
            trace.crashes.append((step, ev.u, ev.choice))
            changed = out_before or any(
                protocol.is_output(x) != protocol.is_output(y) for x, y in zip(old, config.state))
            if old != config.state:
                last_state = config.step
        else:
            u, v = ev.u, ev.v
            a, b, e = config.state[u], config.state[v], int(config.edges[u, v])
            ev = execute(ev, config, protocol, rng)
            a2, b2, e2 = config.state[u], config.state[v], int(config.edges[u, v])
            changed = _output_changed(protocol, (a, b), (a2, b2), e, e2)
            if a2 != a or b2 != b:
                last_state = config.step
        if record:
            trace.events.append((step, ev))
        if changed:
            last_change = config.step
            trace.output_changes.append(config.step)
        if checks is not None:
            bad = checks.check(config, ev)
            if bad:
                trace.violation = bad
                trace.status = "violation"
                break
        if monitor is not None:
            monitor(config)
    trace.final = config
    trace.length = config.step
    trace.last_output_change = last_change
    trace.last_state_change = last_state
    trace.skipped = list(sched.skipped)
    return trace


_SEL_CODE = {"random": fp.SEL_RANDOM, "by_id": fp.SEL_BY_ID, "max_degree": fp.SEL_MAX_DEGREE,
             "unique_state": fp.SEL_UNIQUE_STATE}


def _sel_arrays(sel, cp):
    kind = _SEL_CODE[sel[0]]
    if sel[0] == "by_id":
        return kind, sel[1]
    if sel[0] == "unique_state":
        if sel[1] not in cp.index:
            return kind, -1
        return kind, cp.index[sel[1]]
    return kind, 0


_COMPILED = {}


def compile_protocol(p):
    key = id(p)
    hit = _COMPILED.get(key)
    if hit is None or hit.protocol is not p:
        hit = fp.CompiledProtocol(p)
        _COMPILED[key] = hit
    return hit


def _run_fast(config, protocol, sched, adv, stop, checks):
    cp = compile_protocol(protocol)
    n = config.n_initial
    state = cp.encode(config.state)
    alive = np.array(config.alive, dtype=np.uint8)
    edges = np.ascontiguousarray(config.edges, dtype=np.uint8)
    rs = np.array([sched.rng.state], dtype=np.uint64)
    policy = {"none": fp.POL_NONE, "fixed_steps": fp.POL_FIXED, "random": fp.POL_RANDOM}[adv.policy]
    fixed = np.array(adv.steps, dtype=np.int64)
    fk = np.zeros(len(adv.steps), dtype=np.int64)
    fa = np.zeros(len(adv.steps), dtype=np.int64)
    for i in range(len(adv.steps)):
        fk[i], fa[i] = _sel_arrays(adv.selector_at(i), cp)
    rk, ra = _sel_arrays(adv.target_selector, cp)
    remaining = adv.fault_budget - sched.crashes
    mode = {"window": fp.STOP_WINDOW, "silent": fp.STOP_SILENT}[stop.until]
    check_every = max(64, n * n // 2)
    if checks is not None:
        need, maxd, forbid, black = checks.arrays(cp)
        do = True
    else:
        need = np.full(len(cp.states), -1, dtype=np.int64)
        maxd, forbid, black, do = -1, np.zeros((0, 0), dtype=np.uint8), -1, False
    crash_log = np.full((max(remaining, 0) + 1, 3), -1, dtype=np.int64)
    change_log = np.zeros(1 << 14, dtype=np.int64)
    res = fp.run_kernel(state, alive, edges, rs, np.int64(config.step), np.int64(stop.max_steps),
                        np.int64(stop.window or 0), mode, np.int64(check_every),
                        cp.n_out, cp.out, cp.d2, cp.is_out, cp.notif,
                        policy, np.int64(max(remaining, 0)), float(adv.rate), fixed, fk, fa, rk, ra,
                        need, np.int64(maxd), forbid, np.int64(black), do, crash_log, change_log)
    status, step, last_change, last_state, ncr, nch, vcode, vstep = (int(x) for x in res)
    sched.rng.state = int(rs[0])
    sched.crashes += ncr
    config.state = cp.decode(state)
    config.alive = [bool(x) for x in alive]
    config.flag = [0] * n
    config.edges = edges
    config.step = step
    trace = Trace(protocol.name, n, sched.seed)
    trace.crashes = [tuple(int(x) for x in row) for row in crash_log[:ncr]]
    trace.output_changes = [int(x) for x in change_log[:min(nch, len(change_log))]]
    trace.changes_truncated = nch > len(change_log)
    trace.final = config
    trace.length = step
    trace.last_output_change = last_change
    trace.last_state_change = last_state
    trace.status = {fp.ST_MAX_STEPS: "max_steps", fp.ST_STABLE: "stable", fp.ST_HALT: "halt",
                    fp.ST_SILENT: "silent",
                    fp.ST_VIOLATION: "violation"}[status]
    trace.stabilized = status in (fp.ST_STABLE, fp.ST_SILENT)
    trace.halted = status == fp.ST_HALT
    if status == fp.ST_VIOLATION:
        trace.violation = f"{fp.VIOLATION_NAMES.get(vcode, vcode)} at step {vstep}"
    return trace


def simulate(protocol, n, seed=0, adv=None, stop=None, **kw):
    """Convenience wrapper: fresh initial configuration, one run."""
    adv = adv or AdversarySchedule.none()
    stop = stop or StopRule(max_steps=10**7, window=StopRule.default_window(n))
    config = Configuration.initial(n, protocol)
    return run(config, protocol, SchedulerState(seed), adv, stop, **kw)


def random_crash_steps(f, horizon, seed):
    """f distinct crash steps drawn uniformly from [1, horizon)."""
    rng = SplitMix64(seed ^ 0x5EED)
    steps = set()
    while len(steps) < f:
        steps.add(1 + rng.below(max(horizon - 1, 1)))
    return sorted(steps)
