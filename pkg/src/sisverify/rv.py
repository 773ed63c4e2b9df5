"""Online bounded-response monitors.

One monitor per requirement.  Monitors are immutable; ``monitor_step``
returns the next monitor together with the output for that event, so a
monitor can be handed between tasks at any event boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .domain import ActionCall, Clear, DetectionIn, Event, Requirement, Tock, sorted_actions


@dataclass(frozen=True)
class Violation:
    at: int
    requirement: str


@dataclass(frozen=True)
class Monitor:
    requirement: Requirement
    # (unmet actions, ticks remaining); a tuple so the monitor stays hashable
    open_obligations: tuple = ()
    verdict: Optional[Violation] = None  # None means Clean
    position: int = 0  # index of the next event
    near_misses: int = 0

    @property
    def clean(self) -> bool:
        return self.verdict is None


@dataclass(frozen=True)
class MonitorOutput:
    verdict: Optional[Violation]
    triggers: frozenset = frozenset()
    violated_now: bool = False


def synthesize_monitor(r: Requirement) -> Monitor:
    return Monitor(r)


def monitor_step(m: Monitor, e: Event) -> tuple[Monitor, MonitorOutput]:
    idx = m.position
    obligations = m.open_obligations
    verdict = m.verdict
    near = m.near_misses
    triggers: set = set()
    violated_now = False

    if isinstance(e, DetectionIn):
        if m.requirement.trigger.matches(e.detection):
            obligations = obligations + ((m.requirement.responses, m.requirement.deadline),)
    elif isinstance(e, ActionCall):
        kept = []
        for acts, left in obligations:
            rest = acts - {e.action}
            if rest:
                kept.append((rest, left))
            elif left == 0:
                near += 1
        obligations = tuple(kept)
    elif isinstance(e, Tock):
        kept = []
        for acts, left in obligations:
            left -= 1
            if left < 0:
                triggers |= acts
                if verdict is None:
                    verdict = Violation(idx, m.requirement.id)
                    violated_now = True
                continue
            if left == 0:
                triggers |= acts
            kept.append((acts, left))
        obligations = tuple(kept)
    elif isinstance(e, Clear):
        obligations = ()
    else:
        raise TypeError(e)

    nxt = Monitor(m.requirement, obligations, verdict, idx + 1, near)
    return nxt, MonitorOutput(verdict, frozenset(triggers), violated_now)


@dataclass
class RequirementResult:
    requirement: str
    verdict: str
    violation_index: Optional[int]
    near_misses: int


@dataclass
class OfflineReport:
    results: list
    events: int

    @property
    def all_clean(self) -> bool:
        return all(r.violation_index is None for r in self.results)

    def first_violation(self) -> Optional[RequirementResult]:
        bad = [r for r in self.results if r.violation_index is not None]
        if not bad:
            return None
        return min(bad, key=lambda r: (r.violation_index, r.requirement))


def run_stream(monitors: Sequence[Monitor], events: Iterable[Event]):
    """Fold ``monitor_step`` over ``events``; yields (index, event, monitors, outputs)."""
    ms = list(monitors)
    for i, e in enumerate(events):
        outs = []
        for k, m in enumerate(ms):
            ms[k], out = monitor_step(m, e)
            outs.append(out)
        yield i, e, ms, outs


def summarize(monitors: Sequence[Monitor], n_events: int) -> OfflineReport:
    results = [
        RequirementResult(
            m.requirement.id,
            "clean" if m.clean else "violated",
            None if m.clean else m.verdict.at,
            m.near_misses,
        )
        for m in monitors
    ]
    return OfflineReport(results, n_events)


def run_offline(monitors: Sequence[Monitor], trace: Sequence[Event]) -> OfflineReport:
    ms = list(monitors)
    n = 0
    for n, (_, _, ms, _) in enumerate(run_stream(ms, trace), start=1):
        pass
    return summarize(ms, n)


def trigger_actions(out: MonitorOutput) -> tuple:
    return sorted_actions(out.triggers)
