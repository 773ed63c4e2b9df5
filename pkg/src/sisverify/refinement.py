"""Explicit-state checks over a controller LTS.

Traces refinement explores the product of implementation states and spec
states breadth-first with successors taken in event order, so the first
failure found at the shallowest level is the lexicographically smallest
shortest counterexample.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Union

from .controller import Lts
from .domain import Event, ResourceError, Tock, trace_key
from .speclang import AlphabetError, SpecAutomaton


@dataclass(frozen=True)
class Pass:
    states_explored: int
    transitions: int

    passed = True


@dataclass(frozen=True)
class Fail:
    counterexample: tuple
    failing_event: Optional[Event] = None
    reason: str = ""
    # determinism failures: the offending state and its two successors
    state: Optional[int] = None
    targets: tuple = ()

    passed = False


Verdict = Union[Pass, Fail]


def _path(parent: dict, node) -> tuple:
    events = []
    while parent[node] is not None:
        node, e = parent[node]
        events.append(e)
    return tuple(reversed(events))


def check_traces_refinement(impl: Lts, spec: SpecAutomaton, max_depth: Optional[int] = None) -> Verdict:
    """Every trace of ``impl`` (up to ``max_depth`` events, if given) is accepted by ``spec``."""
    outside = sorted((e for e in impl.alphabet if e not in spec.alphabet), key=lambda e: e.sort_key())
    if outside:
        raise AlphabetError(outside)

    start = (impl.initial, spec.initial)
    parent: dict = {start: None}
    frontier = [start]
    transitions = 0
    depth = 0
    while frontier and (max_depth is None or depth < max_depth):
        failures = []
        nxt_frontier = []
        for node in frontier:
            i, s = node
            for e, j in impl.successors(i):
                transitions += 1
                t = spec.step(s, e)
                if t is None:
                    failures.append((node, e))
                    continue
                child = (j, t)
                if child not in parent:
                    parent[child] = (node, e)
                    nxt_frontier.append(child)
        if failures:
            cexs = [(_path(parent, node), e) for node, e in failures]
            trace, e = min(cexs, key=lambda c: trace_key(c[0] + (c[1],)))
            return Fail(trace, e, "spec refuses event")
        frontier = nxt_frontier
        depth += 1
    return Pass(len(parent), transitions)


def _bfs_parents(impl: Lts) -> dict:
    parent: dict = {impl.initial: None}
    queue = deque([impl.initial])
    while queue:
        i = queue.popleft()
        for e, j in impl.successors(i):
            if j not in parent:
                parent[j] = (i, e)
                queue.append(j)
    return parent


def check_deadlock_freedom(impl: Lts) -> Verdict:
    parent = _bfs_parents(impl)
    reachable = list(parent)

    # States that reach a Tock through non-Tock steps only; any finite chain
    # of such steps is at most |states| long.
    can_tock = set()
    preds: dict = {}
    for i in reachable:
        for e, j in impl.successors(i):
            if isinstance(e, Tock):
                can_tock.add(i)
            else:
                preds.setdefault(j, []).append(i)
    queue = deque(can_tock)
    while queue:
        j = queue.popleft()
        for i in preds.get(j, ()):
            if i not in can_tock:
                can_tock.add(i)
                queue.append(i)

    transitions = 0
    for i in reachable:  # BFS order, so the first offender has a shortest path
        out = impl.successors(i)
        transitions += len(out)
        if not out:
            return Fail(_path(parent, i), None, "deadlock: no outgoing transition", state=i)
        if i not in can_tock:
            return Fail(_path(parent, i), None, "timelock: no Tock reachable", state=i)
    return Pass(len(reachable), transitions)


def check_determinism(impl: Lts) -> Verdict:
    parent = _bfs_parents(impl)
    transitions = 0
    for i in parent:
        seen: dict = {}
        for e, j in impl.successors(i):
            transitions += 1
            if e in seen and seen[e] != j:
                return Fail(_path(parent, i), e, "nondeterministic choice", state=i,
                            targets=(seen[e], j))
            seen[e] = j
    return Pass(len(parent), transitions)


def enumerate_traces(impl: Lts, depth: int, budget: int = 2_000_000) -> set:
    """All traces of ``impl`` with at most ``depth`` events."""
    traces = {()}
    stack = [(impl.initial, ())]
    while stack:
        i, t = stack.pop()
        if len(t) >= depth:
            continue
        for e, j in impl.successors(i):
            u = t + (e,)
            if u not in traces:
                if len(traces) >= budget:
                    raise ResourceError("trace enumeration budget exceeded", len(traces))
                traces.add(u)
            stack.append((j, u))
    return traces


def verdict_record(name: str, v: Verdict) -> dict:
    rec: dict = {"assertion": name, "result": "pass" if v.passed else "fail"}
    if isinstance(v, Pass):
        rec["states"] = v.states_explored
        rec["transitions"] = v.transitions
    else:
        rec["reason"] = v.reason
        rec["counterexample"] = [str(e) for e in v.counterexample]
        if v.failing_event is not None:
            rec["failing_event"] = str(v.failing_event)
        if v.targets:
            rec["state"] = v.state
            rec["targets"] = list(v.targets)
    return rec
