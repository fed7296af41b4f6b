"""Restart composition: phase-counter leader election wrapped around a protocol.

Every node carries a :class:`RestartState`.  The C1 part (role, phase and,
for network protocols, the restart bit and degree counter) decides when the
inner protocol is restarted; C2 (``inner``) runs the wrapped protocol.
"""
from __future__ import annotations

from typing import NamedTuple

from .core import ProtocolError


class RestartState(NamedTuple):
    role: str        # 'l' or 'f'
    phase: int
    restart: int     # 1 while in the restarting phase R
    degree: int
    inner: object

    def __str__(self):
        r = "R" if self.restart else ""
        return f"{self.role}{self.phase}{r}/d{self.degree}/{self.inner}"


class RestartComposition:
    """Composed protocol (A, inner) or (B, inner).

    ``net=False`` gives the population-protocol version A: a restart resets
    C2 immediately.  ``net=True`` gives B: a restarting node first removes
    its edges one interaction at a time, tracking its degree, and only
    resets C2 once the counter reaches zero.  ``degree_cap`` replaces the
    counter with a saturating one (constant memory), which is unsound by
    design and exists for the negative control.
    """

    node_memory = "logarithmic"
    uses_notifications = True

    def __init__(self, inner, net, degree_cap=None):
        self.inner = inner
        self.net = net
        self.degree_cap = degree_cap
        kind = "restart-net" if net else "restart-pp"
        cap = f"[cap={degree_cap}]" if degree_cap is not None else ""
        self.name = f"{kind}{cap}({inner.name})"
        self.initial_state = RestartState("l", 0, 0, 0, inner.initial_state)

    def is_output(self, q):
        return self.inner.is_output(q.inner)

    def _deg(self, d, delta):
        d += delta
        if d < 0:
            d = 0
        if self.degree_cap is not None and d > self.degree_cap:
            d = self.degree_cap
        return d

    def _restart(self, s, phase, role=None):
        role = s.role if role is None else role
        if not self.net or s.degree == 0:
            return RestartState(role, phase, 0, s.degree, self.inner.initial_state)
        return RestartState(role, phase, 1, s.degree, s.inner)

    def _c1(self, a, b, a_survives):
        pa, pb = a.phase, b.phase
        if a.role == "l" and b.role == "l":
            p = max(pa, pb) + 1
            ra, rb = ("l", "f") if a_survives else ("f", "l")
            return self._restart(a, p, ra), self._restart(b, p, rb), True
        if pa == pb:
            return a, b, False
        if a.role == "l" or b.role == "l":
            lead_is_a = a.role == "l"
            pl, pf = (pa, pb) if lead_is_a else (pb, pa)
            if pl < pf:
                p = pf + 1
                return self._restart(a, p), self._restart(b, p), True
            if lead_is_a:
                return a, self._restart(b, pa), True
            return self._restart(a, pb), b, True
        if pa > pb:
            return a, self._restart(b, pa), True
        return self._restart(a, pb), b, True

    def _finish(self, s):
        if s.restart and s.degree == 0:
            return s._replace(restart=0, inner=self.inner.initial_state)
        return s

    def outcomes(self, a, b, e):
        results = []
        choices = (True, False) if a.role == "l" and b.role == "l" else (True,)
        for a_survives in choices:
            a1, b1, changed = self._c1(a, b, a_survives)
            if self.net and e == 1 and (a1.restart or b1.restart):
                a1 = self._finish(a1._replace(degree=self._deg(a1.degree, -1)))
                b1 = self._finish(b1._replace(degree=self._deg(b1.degree, -1)))
                results.append((a1, b1, 0))
                continue
            if changed or a1.restart or b1.restart or a1.phase != b1.phase:
                results.append((a1, b1, e))
                continue
            inner_outs = self.inner.outcomes(a1.inner, b1.inner, e)
            if not inner_outs:
                results.append((a1, b1, e))
                continue
            for x, y, e2 in inner_outs:
                dd = e2 - e
                results.append((a1._replace(inner=x, degree=self._deg(a1.degree, dd)),
                                b1._replace(inner=y, degree=self._deg(b1.degree, dd)), e2))
        results = tuple(dict.fromkeys(results))
        if len(results) == 1 and results[0] == (a, b, e):
            return ()
        return results

    def notify(self, q, flag):
        if flag not in (1, 2):
            return q
        if flag == 1 and self.net:
            q = q._replace(degree=self._deg(q.degree, -1))
        return self._restart(q, q.phase + 1, "l")

    def __repr__(self):
        return f"RestartComposition({self.name})"


def _activates_edges(p):
    return any(e == 1 or e2 == 1 for (_, _, e), (_, _, e2) in p.delta1.items())


def compose_restart_pp(pi):
    """Protocol A around a population protocol (one that never uses edges)."""
    if _activates_edges(pi):
        raise ProtocolError(f"{pi.name} activates edges; use compose_restart_net")
    return RestartComposition(pi, net=False)


def compose_restart_net(pi, degree_cap=None):
    """Protocol B around a network constructor."""
    if degree_cap is not None and degree_cap < 1:
        raise ProtocolError("degree_cap must be positive")
    return RestartComposition(pi, net=True, degree_cap=degree_cap)


def max_phase(config):
    return max(s.phase for s, a in zip(config.state, config.alive) if a)


def leaders(config):
    return [u for u, (s, a) in enumerate(zip(config.state, config.alive)) if a and s.role == "l"]


def degree_mismatches(config):
    """Alive nodes whose stored degree differs from their true degree."""
    deg = config.edges.sum(axis=1)
    return [u for u, (s, a) in enumerate(zip(config.state, config.alive))
            if a and s.degree != int(deg[u])]
