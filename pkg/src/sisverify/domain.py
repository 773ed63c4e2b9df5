"""Shared vocabulary: zones, classifications, detections, actions, events.

Every value here is an immutable, hashable dataclass or enum so it can be
used as a dictionary key in state-space exploration and shared freely
between threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union


class DomainError(ValueError):
    """Raised for malformed domain values or unrecognized text forms."""


class ResourceError(RuntimeError):
    """A state-space or enumeration budget was exhausted."""

    def __init__(self, message: str, count: int):
        super().__init__(f"{message} (reached {count})")
        self.count = count


class Zone(enum.IntEnum):
    GREEN = 0
    YELLOW = 1
    RED = 2

    @property
    def text(self) -> str:
        return self.name.lower()


class Classification(enum.IntEnum):
    TRAINED = 0
    UNTRAINED = 1

    @property
    def text(self) -> str:
        return self.name.lower()


ZONES = tuple(Zone)
CLASSIFICATIONS = tuple(Classification)


@dataclass(frozen=True, order=True)
class Detection:
    human: Classification
    zone: Zone

    def __str__(self) -> str:
        return f"{self.human.text} {self.zone.text}"


ALL_DETECTIONS = tuple(Detection(c, z) for c in CLASSIFICATIONS for z in ZONES)


# Actions ---------------------------------------------------------------------

@dataclass(frozen=True)
class ActivateAlert:
    on: bool

    def sort_key(self) -> tuple:
        return (0, int(not self.on))


@dataclass(frozen=True)
class TurnUvc:
    on: bool

    def sort_key(self) -> tuple:
        return (1, int(not self.on))


@dataclass(frozen=True)
class StopRobot:
    def sort_key(self) -> tuple:
        return (2, 0)


@dataclass(frozen=True)
class SetSpeed:
    value: int

    def __post_init__(self) -> None:
        if isinstance(self.value, bool) or not isinstance(self.value, int):
            raise DomainError(f"speed must be an integer, got {self.value!r}")
        if self.value < 0:
            raise DomainError(f"speed must be nonnegative, got {self.value}")

    def sort_key(self) -> tuple:
        return (3, self.value)


Action = Union[ActivateAlert, TurnUvc, StopRobot, SetSpeed]

ALERT_ON = ActivateAlert(True)
ALERT_OFF = ActivateAlert(False)
UVC_ON = TurnUvc(True)
UVC_OFF = TurnUvc(False)
STOP = StopRobot()

DEFAULT_SLOW_SPEED = 10


def action_text(a: Action) -> str:
    if isinstance(a, ActivateAlert):
        return "alert_on" if a.on else "alert_off"
    if isinstance(a, TurnUvc):
        return "uvc_on" if a.on else "uvc_off"
    if isinstance(a, StopRobot):
        return "stop"
    if isinstance(a, SetSpeed):
        return f"set_speed {a.value}"
    raise DomainError(f"not an action: {a!r}")


def sorted_actions(actions: Iterable[Action]) -> tuple:
    return tuple(sorted(actions, key=lambda a: a.sort_key()))


# Events ----------------------------------------------------------------------

@dataclass(frozen=True)
class Tock:
    def sort_key(self) -> tuple:
        return (0,)

    def __str__(self) -> str:
        return "tock"


@dataclass(frozen=True)
class DetectionIn:
    detection: Detection

    def sort_key(self) -> tuple:
        return (1, self.detection.human, self.detection.zone)

    def __str__(self) -> str:
        return f"detection {self.detection}"


@dataclass(frozen=True)
class ActionCall:
    action: Action

    def sort_key(self) -> tuple:
        return (2,) + self.action.sort_key()

    def __str__(self) -> str:
        return f"action {action_text(self.action)}"


@dataclass(frozen=True)
class Clear:
    def sort_key(self) -> tuple:
        return (3,)

    def __str__(self) -> str:
        return "clear"


Event = Union[Tock, DetectionIn, ActionCall, Clear]
TimedTrace = Sequence[Event]

TOCK = Tock()
CLEAR = Clear()


def detection_event(human: Classification, zone: Zone) -> DetectionIn:
    return DetectionIn(Detection(human, zone))


def event_key(e: Event) -> tuple:
    """Total order on events; Tock sorts first."""
    return e.sort_key()


def trace_key(t: Sequence[Event]) -> tuple:
    return tuple(event_key(e) for e in t)


def event_text(e: Event) -> str:
    return str(e)


_ACTION_WORDS = {
    "alert_on": ALERT_ON,
    "alert_off": ALERT_OFF,
    "uvc_on": UVC_ON,
    "uvc_off": UVC_OFF,
    "stop": STOP,
}


def parse_action(words: Sequence[str]) -> Action:
    if not words:
        raise DomainError("missing action name")
    head, rest = words[0], list(words[1:])
    if head == "set_speed":
        if len(rest) != 1:
            raise DomainError("set_speed takes exactly one integer argument")
        try:
            value = int(rest[0])
        except ValueError:
            raise DomainError(f"invalid speed {rest[0]!r}") from None
        return SetSpeed(value)
    if head not in _ACTION_WORDS:
        raise DomainError(f"unknown action {head!r}")
    if rest:
        raise DomainError(f"unexpected argument after {head!r}")
    return _ACTION_WORDS[head]


def parse_classification(word: str) -> Classification:
    try:
        return Classification[word.upper()]
    except KeyError:
        raise DomainError(f"unknown classification {word!r}") from None


def parse_zone(word: str) -> Zone:
    try:
        return Zone[word.upper()]
    except KeyError:
        raise DomainError(f"unknown zone {word!r}") from None


def parse_event(text: str) -> Event:
    """Parse the canonical text form, e.g. ``detection untrained yellow``."""
    words = text.split()
    if not words:
        raise DomainError("empty event")
    kind, rest = words[0], words[1:]
    if kind == "tock" and not rest:
        return TOCK
    if kind == "clear" and not rest:
        return CLEAR
    if kind == "detection":
        if len(rest) != 2:
            raise DomainError("detection needs a classification and a zone")
        return DetectionIn(Detection(parse_classification(rest[0]), parse_zone(rest[1])))
    if kind == "action":
        return ActionCall(parse_action(rest))
    raise DomainError(f"unrecognized event {text.strip()!r}")


# Requirements ----------------------------------------------------------------

DEFAULT_DEADLINE = 2


@dataclass(frozen=True)
class Trigger:
    """Conjunction of optional classification and zone equalities."""

    human: Optional[Classification] = None
    zone: Optional[Zone] = None

    def matches(self, d: Detection) -> bool:
        return (self.human is None or self.human == d.human) and (
            self.zone is None or self.zone == d.zone
        )


@dataclass(frozen=True)
class Requirement:
    id: str
    trigger: Trigger
    responses: frozenset
    deadline: int = DEFAULT_DEADLINE

    def __post_init__(self) -> None:
        object.__setattr__(self, "responses", frozenset(self.responses))
        if not self.responses:
            raise DomainError(f"requirement {self.id} has an empty response set")
        if self.deadline < 0:
            raise DomainError(f"requirement {self.id} has a negative deadline")


def default_requirements(slow_speed: int = DEFAULT_SLOW_SPEED) -> list[Requirement]:
    """The five rows of the mitigation table, each with a 2-tick deadline."""
    T, U = Classification.TRAINED, Classification.UNTRAINED
    slow = {ALERT_ON, SetSpeed(slow_speed)}
    halt = {UVC_OFF, STOP}
    return [
        Requirement("R1", Trigger(T, Zone.GREEN), frozenset({ALERT_ON})),
        Requirement("R2", Trigger(U, Zone.GREEN), frozenset(slow)),
        Requirement("R3", Trigger(T, Zone.YELLOW), frozenset(slow)),
        Requirement("R4", Trigger(U, Zone.YELLOW), frozenset(halt)),
        Requirement("R5", Trigger(None, Zone.RED), frozenset(halt)),
    ]


def matching_requirement(d: Detection, reqs: Sequence[Requirement]) -> Requirement:
    hits = [r for r in reqs if r.trigger.matches(d)]
    if len(hits) != 1:
        raise DomainError(f"{d} matches {len(hits)} requirements, expected exactly one")
    return hits[0]


def required_actions(d: Detection, slow_speed: int = DEFAULT_SLOW_SPEED) -> frozenset:
    return matching_requirement(d, default_requirements(slow_speed)).responses


def severity_rank(actions: Iterable[Action]) -> int:
    """Escalation level of a mitigation set: alert < slow down < halt."""
    s = frozenset(actions)
    if s == {ALERT_ON}:
        return 0
    if len(s) == 2 and ALERT_ON in s:
        other = next(iter(s - {ALERT_ON}))
        if isinstance(other, SetSpeed):
            return 1
    if s == {UVC_OFF, STOP}:
        return 2
    raise DomainError("unranked mitigation set")
