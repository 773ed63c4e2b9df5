"""Trace (.trace), scenario (.scenario) and controller config file formats."""

from __future__ import annotations

import hashlib
from dataclasses import fields, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .controller import ControllerConfig, Policy
from .domain import DomainError, Event, parse_event
from .stochastic import Scenario, ScenarioError

TRACE_HEADER = "# sisverify-trace v1"
SCENARIO_HEADER = "# sisverify-scenario v1"


class TraceFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def iter_trace_lines(lines: Iterable[str]) -> Iterator[tuple[int, Event]]:
    """Yield (line number, event) lazily; usable on a live stream."""
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        try:
            yield lineno, parse_event(text)
        except DomainError as exc:
            raise TraceFormatError(lineno, str(exc)) from None


def parse_trace(text: str) -> list[Event]:
    return [e for _, e in iter_trace_lines(text.splitlines())]


def format_trace(trace: Sequence[Event]) -> str:
    return "\n".join([TRACE_HEADER] + [str(e) for e in trace]) + "\n"


def _key_values(text: str, what: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"{what} line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ScenarioError(f"{what} line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(cls, base, values: dict[str, str], what: str):
    types = {f.name: f.type for f in fields(cls)}
    kwargs = {}
    for key, value in values.items():
        if key not in types:
            raise ScenarioError(f"{what}: unknown key {key!r}")
        current = getattr(base, key)
        try:
            if isinstance(current, bool):
                kwargs[key] = value.lower() in ("1", "true", "yes")
            elif isinstance(current, Policy):
                kwargs[key] = Policy(value)
            elif isinstance(current, int):
                kwargs[key] = int(value)
            elif isinstance(current, float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = None if value in ("", "none") else value
        except ValueError:
            raise ScenarioError(f"{what}: invalid value {value!r} for {key}") from None
    return replace(base, **kwargs)


def parse_scenario(text: str) -> Scenario:
    return _coerce(Scenario, Scenario(), _key_values(text, "scenario"), "scenario").validate()


def format_scenario(sc: Scenario) -> str:
    lines = [SCENARIO_HEADER] + [f"{f.name} = {getattr(sc, f.name)}" for f in fields(Scenario)]
    return "\n".join(lines) + "\n"


def parse_controller_config(text: str) -> ControllerConfig:
    return _coerce(ControllerConfig, ControllerConfig(), _key_values(text, "controller config"),
                   "controller config")


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_text(path: Path) -> str:
    return Path(path).read_text(encoding="utf-8")
