"""Report records.  Field order is fixed so reports diff cleanly."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional

from . import __version__
from .formats import file_digest

TOOL = "sisverify"


class Report:
    def __init__(self, command: str):
        self.command = command
        self.inputs: list[dict] = []
        self.parameters: dict[str, Any] = {}
        self.results: list[dict] = []
        self.timings: Optional[dict[str, float]] = None

    def add_input(self, role: str, path: str) -> None:
        entry: dict[str, Any] = {"role": role, "path": str(path)}
        if path != "-" and Path(path).is_file():
            entry["sha256"] = file_digest(Path(path))
        self.inputs.append(entry)

    def add(self, record: dict) -> dict:
        self.results.append(record)
        return record

    def as_dict(self) -> dict:
        out: dict[str, Any] = {
            "tool": TOOL,
            "version": __version__,
            "command": self.command,
            "inputs": self.inputs,
            "parameters": self.parameters,
            "results": self.results,
        }
        if self.timings is not None:
            out["wall_time_s"] = self.timings
        return out

    def dumps(self) -> str:
        return json.dumps(self.as_dict(), indent=2) + "\n"


def record_line(record: dict) -> str:
    return json.dumps(record, separators=(", ", ": ")) + "\n"
