"""Requirement language and its compilation to a timed safety automaton.

Grammar (one sentence per line, ``#`` starts a comment)::

    REQ <id> : whenever detection ( human = <trained|untrained|any> ,
                                    zone = <green|yellow|red|any> )
               then <action> [ and <action> ]* within <d> ticks

Actions: ``activate_alert``, ``deactivate_alert``, ``turn_uvc_off``,
``turn_uvc_on``, ``stop_robot``, ``set_speed <n>``.

The compiled automaton tracks open obligations as a set of
``(remaining actions, ticks left)`` pairs.  A Tock is refused while any
obligation has zero ticks left and unmet actions, which is how a missed
deadline shows up in the traces model: the violating trace has no extension.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .domain import (
    ALERT_OFF,
    ALERT_ON,
    ALL_DETECTIONS,
    CLASSIFICATIONS,
    STOP,
    UVC_OFF,
    UVC_ON,
    ZONES,
    Action,
    ActionCall,
    Clear,
    DetectionIn,
    Event,
    Requirement,
    ResourceError,
    SetSpeed,
    Tock,
    Trigger,
    sorted_actions,
)

MAX_DEADLINE = 1024


class RequirementSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int, expected: Iterable[str] = ()):
        self.line = line
        self.column = column
        self.expected = tuple(sorted(set(expected)))
        detail = f"line {line}, column {column}: {message}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)


class SpecCompileError(ValueError):
    pass


class AlphabetError(ValueError):
    def __init__(self, events: Sequence[Event]):
        self.events = tuple(events)
        super().__init__("events outside the alphabet: " + ", ".join(str(e) for e in events))


# Parsing -----------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:([A-Za-z_][A-Za-z0-9_\-]*)|(\d+)|([():,=]))")

_HUMANS = {c.text: c for c in CLASSIFICATIONS}
_ZONE_WORDS = {z.text: z for z in ZONES}
_SIMPLE_ACTIONS = {
    "activate_alert": ALERT_ON,
    "deactivate_alert": ALERT_OFF,
    "turn_uvc_off": UVC_OFF,
    "turn_uvc_on": UVC_ON,
    "stop_robot": STOP,
}
ACTION_WORDS = tuple(_SIMPLE_ACTIONS) + ("set_speed",)


@dataclass
class _Tok:
    text: str
    kind: str  # "word", "int", "punct", "end"
    column: int


def _tokenize(line: str, lineno: int) -> list[_Tok]:
    toks = []
    pos = 0
    while True:
        while pos < len(line) and line[pos].isspace():
            pos += 1
        if pos >= len(line):
            break
        m = _TOKEN.match(line, pos)
        if m is None or m.end() == pos:
            raise RequirementSyntaxError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
        word, num, punct = m.groups()
        start = m.start(m.lastindex)
        if word is not None:
            toks.append(_Tok(word, "word", start + 1))
        elif num is not None:
            toks.append(_Tok(num, "int", start + 1))
        else:
            toks.append(_Tok(punct, "punct", start + 1))
        pos = m.end()
    toks.append(_Tok("", "end", len(line) + 1))
    return toks


class _LineParser:
    def __init__(self, line: str, lineno: int):
        self.toks = _tokenize(line, lineno)
        self.i = 0
        self.lineno = lineno

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, expected: Iterable[str], tok: Optional[_Tok] = None) -> RequirementSyntaxError:
        tok = tok or self.peek()
        found = repr(tok.text) if tok.kind != "end" else "end of line"
        return RequirementSyntaxError(f"unexpected {found}", self.lineno, tok.column, expected)

    def expect(self, *texts: str) -> _Tok:
        tok = self.peek()
        if tok.text not in texts:
            raise self.fail(texts)
        self.i += 1
        return tok

    def word(self, what: str) -> _Tok:
        tok = self.peek()
        if tok.kind != "word":
            raise self.fail([what])
        self.i += 1
        return tok

    def integer(self, what: str) -> int:
        tok = self.peek()
        if tok.kind != "int":
            raise self.fail([what])
        self.i += 1
        return int(tok.text)

    def choice(self, table: dict, extra: Sequence[str] = ()):
        tok = self.peek()
        key = tok.text.lower()
        if tok.kind == "word" and (key in table or key in extra):
            self.i += 1
            return table.get(key)
        raise self.fail(list(table) + list(extra))

    def action(self) -> Action:
        tok = self.peek()
        key = tok.text.lower()
        if key == "set_speed":
            self.i += 1
            if self.peek().text == "(":
                self.i += 1
                value = self.integer("<speed>")
                self.expect(")")
            else:
                value = self.integer("<speed>")
            return SetSpeed(value)
        if tok.kind == "word" and key in _SIMPLE_ACTIONS:
            self.i += 1
            return _SIMPLE_ACTIONS[key]
        raise self.fail(ACTION_WORDS)

    def requirement(self) -> tuple[Requirement, int]:
        self.expect("REQ")
        rid_tok = self.word("<id>")
        self.expect(":")
        self.expect("whenever")
        self.expect("detection")
        self.expect("(")
        self.expect("human")
        self.expect("=")
        human = self.choice(_HUMANS, ["any"])
        self.expect(",")
        self.expect("zone")
        self.expect("=")
        zone = self.choice(_ZONE_WORDS, ["any"])
        self.expect(")")
        self.expect("then")
        actions = [self.action()]
        while self.peek().text == "and":
            self.i += 1
            actions.append(self.action())
        self.expect("within")
        deadline = self.integer("<ticks>")
        self.expect("ticks", "tick")
        if self.peek().kind != "end":
            raise self.fail(["end of line"])
        return Requirement(rid_tok.text, Trigger(human, zone), frozenset(actions), deadline), rid_tok.column


def parse_requirements(text: str) -> list[Requirement]:
    reqs: list[Requirement] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        req, col = _LineParser(line, lineno).requirement()
        if req.id in seen:
            raise RequirementSyntaxError(
                f"duplicate requirement id {req.id!r} (first defined on line {seen[req.id]})", lineno, col
            )
        seen[req.id] = lineno
        reqs.append(req)
    return reqs


def _action_source(a: Action) -> str:
    if isinstance(a, SetSpeed):
        return f"set_speed {a.value}"
    for word, value in _SIMPLE_ACTIONS.items():
        if value == a:
            return word
    raise ValueError(a)


def pretty_print(reqs: Sequence[Requirement]) -> str:
    lines = ["# sisverify-requirements v1"]
    for r in reqs:
        human = r.trigger.human.text if r.trigger.human is not None else "any"
        zone = r.trigger.zone.text if r.trigger.zone is not None else "any"
        acts = " and ".join(_action_source(a) for a in sorted_actions(r.responses))
        lines.append(
            f"REQ {r.id} : whenever detection(human={human}, zone={zone}) then {acts} within {r.deadline} ticks"
        )
    return "\n".join(lines) + "\n"


# Compilation --------------------------------------------------------------------

# An obligation is (frozenset of unmet actions, ticks left); a spec state is a
# frozenset of obligations.  Identical obligations behave identically under
# broadcast discharge, so a set is as precise as a multiset here.
SpecState = frozenset

BASE_ACTIONS = (ALERT_ON, ALERT_OFF, UVC_ON, UVC_OFF, STOP)


@dataclass
class SpecAutomaton:
    requirements: tuple
    alphabet: frozenset
    initial: SpecState = frozenset()
    _cache: dict = field(default_factory=dict, repr=False)

    def step(self, state: SpecState, e: Event) -> Optional[SpecState]:
        """Successor of ``state`` on ``e``, or None if the automaton refuses ``e``."""
        key = (state, e)
        try:
            return self._cache[key]
        except KeyError:
            pass
        if e not in self.alphabet:
            raise AlphabetError([e])
        nxt = _spec_step(self.requirements, state, e)
        self._cache[key] = nxt
        return nxt

    def explore(self, max_states: int = 1_000_000) -> tuple[list, list]:
        """Reachable states (initial first) and (src, event, dst) transitions."""
        events = sorted(self.alphabet, key=lambda e: e.sort_key())
        index = {self.initial: 0}
        states = [self.initial]
        trans = []
        queue = deque([self.initial])
        while queue:
            s = queue.popleft()
            for e in events:
                t = self.step(s, e)
                if t is None:
                    continue
                if t not in index:
                    if len(states) >= max_states:
                        raise ResourceError("spec state budget exceeded", len(states))
                    index[t] = len(states)
                    states.append(t)
                    queue.append(t)
                trans.append((index[s], e, index[t]))
        return states, trans


def _spec_step(reqs: Sequence[Requirement], state: SpecState, e: Event) -> Optional[SpecState]:
    if isinstance(e, Tock):
        if any(left == 0 for _, left in state):
            return None
        return frozenset((acts, left - 1) for acts, left in state)
    if isinstance(e, DetectionIn):
        new = set(state)
        for r in reqs:
            if r.trigger.matches(e.detection):
                new.add((r.responses, r.deadline))
        return frozenset(new)
    if isinstance(e, ActionCall):
        new = set()
        for acts, left in state:
            rest = acts - {e.action}
            if rest:
                new.add((rest, left))
        return frozenset(new)
    if isinstance(e, Clear):
        return frozenset()
    raise TypeError(e)


def spec_alphabet(reqs: Sequence[Requirement], extra_actions: Iterable[Action] = ()) -> frozenset:
    actions = set(BASE_ACTIONS) | set(extra_actions)
    for r in reqs:
        actions |= r.responses
    events: set = {Tock(), Clear()}
    events |= {DetectionIn(d) for d in ALL_DETECTIONS}
    events |= {ActionCall(a) for a in actions}
    return frozenset(events)


def compile_spec(reqs: Sequence[Requirement], extra_actions: Iterable[Action] = ()) -> SpecAutomaton:
    """Compile requirements into a deterministic safety automaton.

    ``extra_actions`` widens the alphabet with actions no requirement
    mentions (e.g. the nominal-speed restore command), which the automaton then
    leaves unconstrained.
    """
    by_trigger: dict = {}
    for r in reqs:
        if r.deadline > MAX_DEADLINE:
            raise SpecCompileError(f"{r.id}: deadline {r.deadline} exceeds the clock bound {MAX_DEADLINE}")
        prev = by_trigger.get(r.trigger)
        if prev is not None and (prev.responses, prev.deadline) != (r.responses, r.deadline):
            raise SpecCompileError(f"{r.id} conflicts with {prev.id}: same trigger, different obligation")
        by_trigger.setdefault(r.trigger, r)
    return SpecAutomaton(tuple(by_trigger.values()), spec_alphabet(reqs, extra_actions))


def spec_accepts(spec: SpecAutomaton, trace: Sequence[Event]) -> bool:
    """True iff ``trace`` is a prefix of the specified language."""
    outside = [e for e in dict.fromkeys(trace) if e not in spec.alphabet]
    if outside:
        raise AlphabetError(outside)
    state = spec.initial
    for e in trace:
        state = spec.step(state, e)
        if state is None:
            return False
    return True
