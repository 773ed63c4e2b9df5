"""Executable safety controller and its explicit-state LTS.

The controller collapses the publisher/uvc/speed/sound machines into one
composite state.  A detection queues its mitigation set as obligations;
obligations are discharged on Tock according to the scheduling latency.
Discharged actions become ``ActionCall`` outputs.

``build_lts`` composes the controller with an environment that never offers
two detections without an intervening Tock, and serializes the outputs of a
step as urgent ``ActionCall`` transitions that must fire before anything
else happens.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, Sequence

from .domain import (
    ALERT_OFF,
    ALL_DETECTIONS,
    CLEAR,
    TOCK,
    UVC_ON,
    Action,
    ActionCall,
    ActivateAlert,
    Clear,
    Detection,
    DetectionIn,
    Event,
    SetSpeed,
    StopRobot,
    Tock,
    TurnUvc,
    default_requirements,
    event_key,
    matching_requirement,
    ResourceError,
    parse_event,
)


class ConfigError(ValueError):
    pass


class UvcMode(enum.Enum):
    ON = "on"
    OFF = "off"


class MotionMode(enum.Enum):
    NOMINAL = "nominal"
    SLOWED = "slowed"
    STOPPED = "stopped"


class AlertMode(enum.Enum):
    SILENT = "silent"
    ALERTING = "alerting"


class Policy(str, enum.Enum):
    FIXED = "fixed"
    # May discharge early or late within the budget; used to exercise the
    # determinism check.
    NONDETERMINISTIC = "nondeterministic"


# mutant name -> (requirement row, action removed from that row's mitigation)
MUTATIONS = {
    "drop-alert-r1": ("R1", "alert"),
    "drop-slow-r2": ("R2", "speed"),
    "drop-slow-r3": ("R3", "speed"),
    "drop-stop-r4": ("R4", "stop"),
    "drop-stop-red": ("R5", "stop"),
}
MUTATION_ALIASES = {"drop-stop-r5": "drop-stop-red"}


@dataclass(frozen=True)
class ControllerConfig:
    nominal_speed: int = 30
    slow_speed: int = 10
    deadline_budget: int = 2
    latency: int = 1
    policy: Policy = Policy.FIXED
    mutation: Optional[str] = None

    def validate(self) -> "ControllerConfig":
        if self.slow_speed < 0 or self.nominal_speed < 0:
            raise ConfigError("speeds must be nonnegative")
        if not self.slow_speed < self.nominal_speed:
            raise ConfigError(
                f"slow_speed ({self.slow_speed}) must be below nominal_speed ({self.nominal_speed})"
            )
        if self.deadline_budget < 1:
            raise ConfigError("deadline_budget must be at least 1 tick")
        if self.latency < 0:
            raise ConfigError("latency must be nonnegative")
        if self.mutation is not None:
            name = MUTATION_ALIASES.get(self.mutation, self.mutation)
            if name not in MUTATIONS:
                raise ConfigError(
                    f"unknown mutation {self.mutation!r}; choose from {', '.join(sorted(MUTATIONS))}"
                )
        return self

    def mutation_row(self) -> Optional[tuple[str, str]]:
        if self.mutation is None:
            return None
        return MUTATIONS[MUTATION_ALIASES.get(self.mutation, self.mutation)]


@dataclass(frozen=True)
class ControllerState:
    uvc_mode: UvcMode = UvcMode.ON
    motion_mode: MotionMode = MotionMode.NOMINAL
    alert_mode: AlertMode = AlertMode.SILENT
    # (action, ticks remaining) in dispatch order
    pending: tuple = ()

    @property
    def modes(self) -> tuple:
        return (self.uvc_mode, self.motion_mode, self.alert_mode)


def init(config: ControllerConfig = ControllerConfig()) -> ControllerState:
    config.validate()
    return ControllerState()


def _action_kind(a: Action) -> str:
    if isinstance(a, ActivateAlert):
        return "alert"
    if isinstance(a, TurnUvc):
        return "uvc"
    if isinstance(a, StopRobot):
        return "stop"
    return "speed"


def mitigation(d: Detection, cfg: ControllerConfig) -> tuple:
    """Actions the controller schedules for ``d``, in dispatch order."""
    row = matching_requirement(d, default_requirements(cfg.slow_speed))
    actions = row.responses
    mut = cfg.mutation_row()
    if mut is not None and mut[0] == row.id:
        actions = frozenset(a for a in actions if _action_kind(a) != mut[1])
    # UVC before motion before alert: the most hazardous effect goes out first.
    order = {"uvc": 0, "stop": 1, "speed": 2, "alert": 3}
    return tuple(sorted(actions, key=lambda a: (order[_action_kind(a)], a.sort_key())))


def _apply(s: ControllerState, a: Action, cfg: ControllerConfig) -> ControllerState:
    # Mode effects are monotone until Clear: nothing but Clear releases a halt
    # or re-enables UVC.
    if isinstance(a, TurnUvc):
        return replace(s, uvc_mode=UvcMode.ON if a.on else UvcMode.OFF)
    if isinstance(a, StopRobot):
        return replace(s, motion_mode=MotionMode.STOPPED)
    if isinstance(a, SetSpeed):
        if s.motion_mode is MotionMode.STOPPED:
            return s
        mode = MotionMode.NOMINAL if a.value >= cfg.nominal_speed else MotionMode.SLOWED
        return replace(s, motion_mode=mode)
    if isinstance(a, ActivateAlert):
        return replace(s, alert_mode=AlertMode.ALERTING if a.on else AlertMode.SILENT)
    raise TypeError(a)


def _discharge(
    s: ControllerState, cfg: ControllerConfig, due: int
) -> tuple[ControllerState, tuple]:
    """Emit every pending obligation with ticks remaining <= ``due``."""
    emitted = tuple(a for a, t in s.pending if t <= due)
    if not emitted:
        return s, ()
    keep = tuple((a, t) for a, t in s.pending if t > due)
    s = replace(s, pending=keep)
    for a in emitted:
        s = _apply(s, a, cfg)
    return s, emitted


def _queue(s: ControllerState, actions: Sequence[Action], budget: int) -> ControllerState:
    pending = dict(s.pending)
    order = [a for a, _ in s.pending]
    for a in actions:
        # An already-pending copy has the earlier deadline; keep it.
        if a not in pending:
            pending[a] = budget
            order.append(a)
    return replace(s, pending=tuple((a, pending[a]) for a in order))


def _restore(s: ControllerState, cfg: ControllerConfig) -> tuple:
    out = []
    if s.uvc_mode is UvcMode.OFF:
        out.append(UVC_ON)
    if s.motion_mode is not MotionMode.NOMINAL:
        out.append(SetSpeed(cfg.nominal_speed))
    if s.alert_mode is AlertMode.ALERTING:
        out.append(ALERT_OFF)
    return tuple(out)


def successors(
    s: ControllerState, e: Event, cfg: ControllerConfig
) -> list[tuple[ControllerState, tuple]]:
    """All (state, emitted) outcomes of input ``e``; one unless the policy is nondeterministic."""
    budget = cfg.deadline_budget
    due = budget - cfg.latency
    if isinstance(e, DetectionIn):
        s = _queue(s, mitigation(e.detection, cfg), budget)
        if cfg.latency == 0:
            return [_discharge(s, cfg, budget)]
        return [(s, ())]
    if isinstance(e, Tock):
        s = replace(s, pending=tuple((a, t - 1) for a, t in s.pending))
        if cfg.policy is Policy.NONDETERMINISTIC:
            outcomes = [_discharge(s, cfg, budget), _discharge(s, cfg, 0)]
            if outcomes[0] == outcomes[1]:
                return outcomes[:1]
            return outcomes
        return [_discharge(s, cfg, due)]
    if isinstance(e, Clear):
        return [(ControllerState(), _restore(s, cfg))]
    raise ConfigError(f"{e} is not a controller input")


def step(s: ControllerState, e: Event, cfg: ControllerConfig) -> tuple[ControllerState, tuple]:
    return successors(s, e, cfg)[0]


# Explicit-state LTS ------------------------------------------------------------

@dataclass
class Lts:
    states: list
    initial: int
    transitions: list  # (source, event, target)
    alphabet: frozenset = frozenset()
    _succ: Optional[list] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        n = len(self.states)
        for src, _, dst in self.transitions:
            if not (0 <= src < n and 0 <= dst < n):
                raise ValueError(f"transition {src}->{dst} out of range for {n} states")
        if not self.alphabet:
            self.alphabet = frozenset(e for _, e, _ in self.transitions)

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, Event, int]], initial: int = 0,
                   n_states: Optional[int] = None) -> "Lts":
        edges = list(edges)
        top = max([initial] + [max(s, t) for s, _, t in edges])
        n = n_states if n_states is not None else top + 1
        return cls(states=list(range(n)), initial=initial, transitions=edges)

    def successors(self, state: int) -> list:
        """Outgoing (event, target) pairs sorted by event."""
        if self._succ is None:
            succ: list = [[] for _ in self.states]
            for src, e, dst in self.transitions:
                succ[src].append((e, dst))
            for lst in succ:
                lst.sort(key=lambda p: (event_key(p[0]), p[1]))
            self._succ = succ
        return self._succ[state]

    def __len__(self) -> int:
        return len(self.states)

    def to_edge_list(self) -> str:
        lines = [f"# initial {self.initial}"]
        lines += [f"{s} {e} {t}" for s, e, t in self.transitions]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edge_list(cls, text: str) -> "Lts":
        initial = 0
        edges = []
        for line in text.splitlines():
            line = line.strip()
            if line.startswith("# initial"):
                initial = int(line.split()[-1])
                continue
            if not line or line.startswith("#"):
                continue
            words = line.split()
            edges.append((int(words[0]), parse_event(" ".join(words[1:-1])), int(words[-1])))
        return cls.from_edges(edges, initial)


@dataclass(frozen=True)
class LtsNode:
    """Controller state plus environment bookkeeping."""

    ctrl: ControllerState
    outbox: tuple = ()          # emitted actions not yet observed
    detection_ready: bool = True  # a Tock has passed since the last detection
    idle: int = 0               # consecutive Tocks since the last non-Tock event


def _node_successors(node: LtsNode, cfg: ControllerConfig, max_idle: int) -> Iterator[tuple[Event, LtsNode]]:
    if node.outbox:
        yield ActionCall(node.outbox[0]), replace(node, outbox=node.outbox[1:], idle=0)
        return
    if node.idle < max_idle:
        for s, out in successors(node.ctrl, TOCK, cfg):
            yield TOCK, LtsNode(s, out, True, node.idle + 1)
    if node.detection_ready:
        for d in ALL_DETECTIONS:
            e = DetectionIn(d)
            for s, out in successors(node.ctrl, e, cfg):
                yield e, LtsNode(s, out, False, 0)
    for s, out in successors(node.ctrl, CLEAR, cfg):
        yield CLEAR, LtsNode(s, out, node.detection_ready, 0)


DEFAULT_MAX_STATES = 1_000_000


def build_lts(cfg: ControllerConfig = ControllerConfig(), max_consecutive_idle_tocks: int = 4,
              max_states: int = DEFAULT_MAX_STATES) -> Lts:
    cfg.validate()
    if max_consecutive_idle_tocks < cfg.deadline_budget:
        raise ConfigError(
            f"max_consecutive_idle_tocks ({max_consecutive_idle_tocks}) must be at least "
            f"deadline_budget ({cfg.deadline_budget})"
        )
    start = LtsNode(init(cfg))
    index = {start: 0}
    states = [start]
    transitions = []
    queue = deque([start])
    while queue:
        node = queue.popleft()
        src = index[node]
        for e, nxt in _node_successors(node, cfg, max_consecutive_idle_tocks):
            dst = index.get(nxt)
            if dst is None:
                if len(states) >= max_states:
                    raise ResourceError("LTS state budget exceeded", len(states))
                dst = index[nxt] = len(states)
                states.append(nxt)
                queue.append(nxt)
            transitions.append((src, e, dst))
    return Lts(states=states, initial=0, transitions=transitions)
