"""Jitted interaction loop for rule-table protocols.

States are integer-coded and the transition table is flattened into numpy
arrays.  The kernel consumes the splitmix64 stream in exactly the same order
as the Python engine in :mod:`netcon.scheduling`, so for a given seed both
produce the same execution.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .rng import GAMMA, MIX1, MIX2

# selector kinds
SEL_RANDOM, SEL_BY_ID, SEL_MAX_DEGREE, SEL_UNIQUE_STATE = 0, 1, 2, 3
# policies
POL_NONE, POL_FIXED, POL_RANDOM = 0, 1, 2
# stop modes
STOP_WINDOW, STOP_SILENT = 0, 1
# status codes
ST_MAX_STEPS, ST_STABLE, ST_HALT, ST_SILENT, ST_VIOLATION = 0, 1, 2, 3, 5

# violation codes
V_NONE, V_SYMMETRY, V_DEAD_EDGE, V_DEGREE, V_FORBIDDEN_EDGE, V_NO_BLACK, V_MAX_DEGREE = range(7)
VIOLATION_NAMES = {V_SYMMETRY: "edge symmetry", V_DEAD_EDGE: "dead-node isolation",
                   V_DEGREE: "state/degree mismatch", V_FORBIDDEN_EDGE: "forbidden edge",
                   V_NO_BLACK: "component without black node", V_MAX_DEGREE: "degree bound"}

_G = np.uint64(GAMMA)
_M1 = np.uint64(MIX1)
_M2 = np.uint64(MIX2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


class CompiledProtocol:
    """Integer encoding of a :class:`ProtocolDefinition`."""

    def __init__(self, p):
        self.protocol = p
        self.states = list(p.states)
        self.index = {q: i for i, q in enumerate(self.states)}
        S = len(self.states)
        self.n_out = np.zeros((S, S, 2), dtype=np.int8)
        self.out = np.zeros((S, S, 2, 2, 3), dtype=np.int32)
        for a in range(S):
            for b in range(S):
                for e in (0, 1):
                    outs = p.outcomes(self.states[a], self.states[b], e)
                    if len(outs) > 2:
                        raise ValueError("fast path supports at most two outcomes per rule")
                    self.n_out[a, b, e] = len(outs)
                    for k, (a2, b2, e2) in enumerate(outs):
                        self.out[a, b, e, k] = (self.index[a2], self.index[b2], e2)
        self.d2 = np.zeros((S, 3), dtype=np.int32)
        for a in range(S):
            for fl in range(3):
                self.d2[a, fl] = self.index[p.notify(self.states[a], fl)] if fl else a
        self.is_out = np.array([p.is_output(q) for q in self.states], dtype=np.uint8)
        self.notif = bool(p.uses_notifications)

    def encode(self, states):
        return np.array([self.index[q] for q in states], dtype=np.int32)

    def decode(self, codes):
        return [self.states[c] for c in codes]


@njit(cache=True)
def _next(rs):
    s = rs[0] + _G
    rs[0] = s
    z = s
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def _below(rs, n):
    return np.int64(_next(rs) % np.uint64(n))


@njit(cache=True)
def _random(rs):
    return np.float64(_next(rs) >> _S11) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _select(kind, arg, state, alive_list, m, deg, n, rs):
    if m == 0:
        return -1
    if kind == SEL_RANDOM:
        return alive_list[_below(rs, m)]
    if kind == SEL_BY_ID:
        for off in range(n):
            w = (arg + off) % n
            for j in range(m):
                if alive_list[j] == w:
                    return w
        return -1
    if kind == SEL_MAX_DEGREE:
        best = -1
        bd = -1
        for j in range(m):
            w = alive_list[j]
            if deg[w] > bd:
                bd = deg[w]
                best = w
        return best
    for j in range(m):
        w = alive_list[j]
        if state[w] == arg:
            return w
    return -1


@njit(cache=True)
def _component_has_black(start, edges, state, black, n, seen, stack):
    # BFS over the component of ``start``; True if it is a singleton or has a black node
    for i in range(n):
        seen[i] = 0
    top = 0
    stack[top] = start
    top += 1
    seen[start] = 1
    size = 0
    found = False
    while top > 0:
        top -= 1
        x = stack[top]
        size += 1
        if state[x] == black:
            found = True
        for y in range(n):
            if edges[x, y] and not seen[y]:
                seen[y] = 1
                stack[top] = y
                top += 1
    return found or size < 2


@njit(cache=True)
def _check_node(w, state, edges, deg, n, need_deg, max_deg, forbid):
    if need_deg[state[w]] >= 0 and deg[w] != need_deg[state[w]]:
        return V_DEGREE
    if max_deg >= 0 and deg[w] > max_deg:
        return V_MAX_DEGREE
    if forbid.shape[0] > 0:
        for y in range(n):
            if edges[w, y] and forbid[state[w], state[y]]:
                return V_FORBIDDEN_EDGE
    return V_NONE


@njit(cache=True)
def _quiet(state, alive_list, m, edges, n_out, out, S, cls_count, cls_edges):
    """True when no interaction can change anything (a silent configuration)."""
    for a in range(S):
        cls_count[a] = 0
        for b in range(S):
            cls_edges[a, b] = 0
    for j in range(m):
        cls_count[state[alive_list[j]]] += 1
    for j in range(m):
        x = alive_list[j]
        for k in range(j + 1, m):
            y = alive_list[k]
            if edges[x, y]:
                cls_edges[state[x], state[y]] += 1
                if state[x] != state[y]:
                    cls_edges[state[y], state[x]] += 1
    for a in range(S):
        if cls_count[a] == 0:
            continue
        for b in range(a, S):
            if cls_count[b] == 0:
                continue
            if a == b:
                total = cls_count[a] * (cls_count[a] - 1) // 2
            else:
                total = cls_count[a] * cls_count[b]
            if total == 0:
                continue
            ones = cls_edges[a, b]
            for e in range(2):
                avail = ones if e == 1 else total - ones
                if avail <= 0:
                    continue
                for k in range(n_out[a, b, e]):
                    a2 = out[a, b, e, k, 0]
                    b2 = out[a, b, e, k, 1]
                    e2 = out[a, b, e, k, 2]
                    if a2 != a or b2 != b or e2 != e:
                        return False
    return True


@njit(cache=True)
def run_kernel(state, alive, edges, rs, step, max_steps, window, stop_mode, check_every,
               n_out, out, d2, is_out, notif,
               policy, budget, rate, fixed_steps, fixed_kind, fixed_arg, rand_kind, rand_arg,
               need_deg, max_deg, forbid, black, do_checks,
               crash_log, change_log):
    """Advance the configuration in place.

    Returns (status, step, last_output_change, last_state_change, n_crashes,
    n_changes, violation_code, violation_step).
    """
    n = state.shape[0]
    S = n_out.shape[0]
    alive_list = np.empty(n, dtype=np.int64)
    m = 0
    for i in range(n):
        if alive[i]:
            alive_list[m] = i
            m += 1
    deg = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for j in range(n):
            deg[i] += edges[i, j]
    seen = np.zeros(n, dtype=np.uint8)
    stack = np.empty(n, dtype=np.int64)
    nbuf = np.empty(n, dtype=np.int64)
    cls_count = np.zeros(S, dtype=np.int64)
    cls_edges = np.zeros((S, S), dtype=np.int64)
    last_change = step
    last_state = step
    crashes = 0
    n_changes = 0
    fptr = 0
    end = step + max_steps
    while step < end:
        if m < 2:
            return ST_HALT, step, last_change, last_state, crashes, n_changes, V_NONE, -1
        while fptr < fixed_steps.shape[0] and fixed_steps[fptr] < step:
            fptr += 1
        pending = False
        if policy == POL_FIXED:
            pending = fptr < fixed_steps.shape[0] and crashes < budget
        elif policy == POL_RANDOM:
            pending = crashes < budget and rate > 0.0
        if window > 0 and stop_mode == STOP_WINDOW and not pending and step - last_change >= window:
            return ST_STABLE, step, last_change, last_state, crashes, n_changes, V_NONE, -1
        if check_every > 0 and step % check_every == 0:
            if do_checks:
                for i in range(n):
                    for j in range(n):
                        if edges[i, j] != edges[j, i]:
                            return ST_VIOLATION, step, last_change, last_state, crashes, n_changes, V_SYMMETRY, step
                        if edges[i, j] and not (alive[i] and alive[j]):
                            return ST_VIOLATION, step, last_change, last_state, crashes, n_changes, V_DEAD_EDGE, step
            if stop_mode == STOP_SILENT and not pending and step - last_change >= window:
                if _quiet(state, alive_list, m, edges, n_out, out, S, cls_count, cls_edges):
                    return ST_SILENT, step, last_change, last_state, crashes, n_changes, V_NONE, -1

        fire = False
        kind = rand_kind
        arg = rand_arg
        if policy == POL_FIXED and fptr < fixed_steps.shape[0] and fixed_steps[fptr] == step and crashes < budget:
            fire = True
            kind = fixed_kind[fptr]
            arg = fixed_arg[fptr]
            fptr += 1
        elif policy == POL_RANDOM and crashes < budget:
            if _random(rs) < rate:
                fire = True
        target = -1
        if fire:
            # an unresolvable selector skips the crash; the step becomes an interaction
            target = _select(kind, arg, state, alive_list, m, deg, n, rs)
        if target >= 0:
            u = target
            k = 0
            for y in range(n):
                if edges[u, y]:
                    nbuf[k] = y
                    k += 1
            # remove u from alive list
            pos = 0
            for j in range(m):
                if alive_list[j] == u:
                    pos = j
            for j in range(pos, m - 1):
                alive_list[j] = alive_list[j + 1]
            m -= 1
            alive[u] = 0
            changed = is_out[state[u]] == 1
            for j in range(k):
                y = nbuf[j]
                edges[u, y] = 0
                edges[y, u] = 0
                deg[y] -= 1
            deg[u] = 0
            tgt2 = -1
            if notif:
                if k > 0:
                    for j in range(k):
                        y = nbuf[j]
                        q2 = d2[state[y], 1]
                        if q2 != state[y]:
                            last_state = step + 1
                            if is_out[q2] != is_out[state[y]]:
                                changed = True
                            state[y] = q2
                else:
                    tgt2 = alive_list[_below(rs, m)]
                    q2 = d2[state[tgt2], 2]
                    if q2 != state[tgt2]:
                        last_state = step + 1
                        if is_out[q2] != is_out[state[tgt2]]:
                            changed = True
                        state[tgt2] = q2
            crash_log[crashes, 0] = step
            crash_log[crashes, 1] = u
            crash_log[crashes, 2] = tgt2
            crashes += 1
            step += 1
            if changed:
                last_change = step
                if n_changes < change_log.shape[0]:
                    change_log[n_changes] = step
                n_changes += 1
            if do_checks:
                for y in range(n):
                    if edges[u, y] or edges[y, u]:
                        return ST_VIOLATION, step, last_change, last_state, crashes, n_changes, V_DEAD_EDGE, step
                for j in range(k):
                    c = _check_node(nbuf[j], state, edges, deg, n, need_deg, max_deg, forbid)
                    if c != V_NONE:
                        return ST_VIOLATION, step, last_change, last_state, crashes, n_changes, c, step
                    if black >= 0 and not _component_has_black(nbuf[j], edges, state, black, n, seen, stack):
                        return ST_VIOLATION, step, last_change, last_state, crashes, n_changes, V_NO_BLACK, step
                if tgt2 >= 0:
                    c = _check_node(tgt2, state, edges, deg, n, need_deg, max_deg, forbid)
                    if c != V_NONE:
                        return ST_VIOLATION, step, last_change, last_state, crashes, n_changes, c, step
            continue

        iu = _below(rs, m)
        iv = _below(rs, m - 1)
        if iv >= iu:
            iv += 1
        u = alive_list[iu]
        v = alive_list[iv]
        a = state[u]
        b = state[v]
        e = edges[u, v]
        cnt = n_out[a, b, e]
        step += 1
        if cnt == 0:
            continue
        ch = 0
        if cnt > 1:
            ch = _below(rs, cnt)
        a2 = out[a, b, e, ch, 0]
        b2 = out[a, b, e, ch, 1]
        e2 = out[a, b, e, ch, 2]
        changed = False
        if a2 != a or b2 != b:
            last_state = step
            if is_out[a2] != is_out[a] or is_out[b2] != is_out[b]:
                changed = True
        if e2 != e:
            edges[u, v] = e2
            edges[v, u] = e2
            if e2:
                deg[u] += 1
                deg[v] += 1
            else:
                deg[u] -= 1
                deg[v] -= 1
        before = e == 1 and is_out[a] == 1 and is_out[b] == 1
        after = e2 == 1 and is_out[a2] == 1 and is_out[b2] == 1
        if before != after:
            changed = True
        state[u] = a2
        state[v] = b2
        if changed:
            last_change = step
            if n_changes < change_log.shape[0]:
                change_log[n_changes] = step
            n_changes += 1
        if do_checks and (a2 != a or b2 != b or e2 != e):
            if edges[u, v] != edges[v, u]:
                return ST_VIOLATION, step, last_change, last_state, crashes, n_changes, V_SYMMETRY, step
            c = _check_node(u, state, edges, deg, n, need_deg, max_deg, forbid)
            if c == V_NONE:
                c = _check_node(v, state, edges, deg, n, need_deg, max_deg, forbid)
            if c != V_NONE:
                return ST_VIOLATION, step, last_change, last_state, crashes, n_changes, c, step
            if black >= 0:
                if not _component_has_black(u, edges, state, black, n, seen, stack):
                    return ST_VIOLATION, step, last_change, last_state, crashes, n_changes, V_NO_BLACK, step
                if e2 != e and not _component_has_black(v, edges, state, black, n, seen, stack):
                    return ST_VIOLATION, step, last_change, last_state, crashes, n_changes, V_NO_BLACK, step
    return ST_MAX_STEPS, step, last_change, last_state, crashes, n_changes, V_NONE, -1
