"""Synchronized robot / human / ODS chain and reachability analysis.

Per tick, in order:

1. the robot phase advances (``treatment_ticks`` of treatment, then
   ``transition_ticks`` of row transition, repeated for ``rows`` rows, then
   the mission is done);
2. an absent human intrudes into the danger zone with ``p_intrusion``
   (Trained with ``p_trained``); a present human leaves with ``p_leave``;
3. the ODS spots a present, not-yet-detected human with ``p_detect``; after
   ``mitigation_latency`` further ticks the mitigation for a red-zone
   detection takes effect.

A state is labelled ``exposure`` when UVC is on, a human is present and the
robot is in the transition phase.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import UVC_OFF, Classification, Detection, ResourceError, Zone, required_actions

EXPOSURE = "exposure"
DONE = "done"


class ScenarioError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"value iteration did not converge: residual {residual:.3e} after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class Scenario:
    """Example configuration; not measured field data."""

    p_intrusion: float = 0.005
    p_detect: float = 0.94
    p_trained: float = 0.5
    transition_ticks: int = 5
    treatment_ticks: int = 20
    mitigation_latency: int = 1
    p_leave: float = 0.2
    rows: int = 10

    def validate(self) -> "Scenario":
        for name in ("p_intrusion", "p_detect", "p_trained", "p_leave"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise ScenarioError(f"{name} must be a probability in [0, 1], got {v!r}")
        for name in ("transition_ticks", "treatment_ticks", "rows"):
            if int(getattr(self, name)) < 1:
                raise ScenarioError(f"{name} must be at least 1")
        if self.mitigation_latency < 0:
            raise ScenarioError("mitigation_latency must be nonnegative")
        return self


# State encoding: (row, pos, human, ods) or DONE.
#   human: None | Classification
#   ods:   "none" (no human), "search", int k > 0 (ticks until mitigation),
#          "off" (UVC switched off), "on" (mitigated without switching UVC off)

Mitigation = Callable[[Detection], frozenset]


def _default_mitigation(d: Detection) -> frozenset:
    return required_actions(d)


@dataclass
class Dtmc:
    states: list
    labels: list  # frozenset of labels per state
    initial: np.ndarray
    matrix: sp.csr_matrix
    target_label: str = EXPOSURE

    @property
    def n(self) -> int:
        return len(self.states)

    def targets(self, label: Optional[str] = None) -> np.ndarray:
        label = label or self.target_label
        return np.array([label in ls for ls in self.labels], dtype=bool)

    @classmethod
    def from_transitions(cls, transitions: Mapping, initial, targets=(), target_label: str = "target") -> "Dtmc":
        """Build from ``{state: {succ: prob}}``; states are ordered by first appearance."""
        order: dict = {}
        for s, row in transitions.items():
            order.setdefault(s, len(order))
            for t in row:
                order.setdefault(t, len(order))
        init = np.zeros(len(order))
        if isinstance(initial, Mapping):
            for s, p in initial.items():
                init[order[s]] = p
        else:
            init[order[initial]] = 1.0
        rows, cols, vals = [], [], []
        for s, i in order.items():
            row = transitions.get(s) or {s: 1.0}
            for t, p in row.items():
                rows.append(i)
                cols.append(order[t])
                vals.append(p)
        m = sp.csr_matrix((vals, (rows, cols)), shape=(len(order), len(order)))
        tset = set(targets)
        labels = [frozenset({target_label}) if s in tset else frozenset() for s in order]
        return cls(list(order), labels, init, m, target_label)

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()


def _is_exposure(s, treatment_ticks: int) -> bool:
    if s == DONE:
        return False
    _, pos, human, ods = s
    return human is not None and pos >= treatment_ticks and ods != "off"


def _ods_after_detect(sc: Scenario, human: Classification, mit: Mitigation):
    if sc.mitigation_latency > 0:
        return sc.mitigation_latency
    return _mitigated(human, mit)


def _mitigated(human: Classification, mit: Mitigation) -> str:
    return "off" if UVC_OFF in mit(Detection(human, Zone.RED)) else "on"


def _successors(s, sc: Scenario, mit: Mitigation) -> dict:
    if s == DONE:
        return {DONE: 1.0}
    row, pos, human, ods = s
    cycle = sc.treatment_ticks + sc.transition_ticks
    pos += 1
    if pos == cycle:
        row, pos = row + 1, 0
        if row == sc.rows:
            return {DONE: 1.0}

    out: dict = {}

    def add(state, p):
        if p > 0.0:
            out[state] = out.get(state, 0.0) + p

    def ods_branch(h, o, p):
        # ODS update for a human present after the movement step.
        if o == "search":
            add((row, pos, h, _ods_after_detect(sc, h, mit)), p * sc.p_detect)
            add((row, pos, h, "search"), p * (1.0 - sc.p_detect))
        elif isinstance(o, int):
            add((row, pos, h, o - 1 if o > 1 else _mitigated(h, mit)), p)
        else:
            add((row, pos, h, o), p)

    if human is None:
        add((row, pos, None, "none"), 1.0 - sc.p_intrusion)
        ods_branch(Classification.TRAINED, "search", sc.p_intrusion * sc.p_trained)
        ods_branch(Classification.UNTRAINED, "search", sc.p_intrusion * (1.0 - sc.p_trained))
    else:
        add((row, pos, None, "none"), sc.p_leave)
        ods_branch(human, ods, 1.0 - sc.p_leave)
    return out


def build_dtmc(sc: Scenario, mitigation: Mitigation = _default_mitigation,
               max_states: int = 1_000_000) -> Dtmc:
    sc.validate()
    start = (0, 0, None, "none")
    index = {start: 0}
    states = [start]
    rows, cols, vals = [], [], []
    queue = deque([start])
    while queue:
        s = queue.popleft()
        i = index[s]
        for t, p in _successors(s, sc, mitigation).items():
            j = index.get(t)
            if j is None:
                if len(states) >= max_states:
                    raise ResourceError("DTMC state budget exceeded", len(states))
                j = index[t] = len(states)
                states.append(t)
                queue.append(t)
            rows.append(i)
            cols.append(j)
            vals.append(p)
    n = len(states)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    labels = []
    for s in states:
        ls = set()
        if _is_exposure(s, sc.treatment_ticks):
            ls.add(EXPOSURE)
        if s == DONE:
            ls.add(DONE)
        labels.append(frozenset(ls))
    init = np.zeros(n)
    init[0] = 1.0
    return Dtmc(states, labels, init, m, EXPOSURE)


def prob_bounded_reach(m: Dtmc, k: int, curve: bool = False):
    """P(reach target within ``k`` steps); with ``curve``, the values for 0..k."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    target = m.targets()
    x = target.astype(float)
    values = [float(m.initial @ x)]
    for _ in range(k):
        x = np.where(target, 1.0, m.matrix @ x)
        values.append(float(m.initial @ x))
    return np.array(values) if curve else values[-1]


def _can_reach(m: Dtmc, target: np.ndarray) -> np.ndarray:
    reach = target.copy()
    back = m.matrix.T.tocsr()
    queue = deque(np.flatnonzero(target).tolist())
    while queue:
        j = queue.popleft()
        for i in back.indices[back.indptr[j]:back.indptr[j + 1]]:
            if not reach[i]:
                reach[i] = True
                queue.append(i)
    return reach


@dataclass(frozen=True)
class ReachResult:
    probability: float
    method: str
    residual: float
    iterations: int = 0


DIRECT_LIMIT = 10_000


def prob_reach(m: Dtmc, method: str = "auto", tol: float = 1e-10, max_iter: int = 1_000_000) -> ReachResult:
    """Least fixed point of the reachability equations."""
    target = m.targets()
    maybe = _can_reach(m, target) & ~target
    idx = np.flatnonzero(maybe)
    if idx.size == 0:
        p = float(m.initial @ target.astype(float))
        return ReachResult(p, "graph", 0.0)
    A = m.matrix[idx][:, idx].tocsr()
    b = np.asarray(m.matrix[idx][:, np.flatnonzero(target)].sum(axis=1)).ravel()
    if method == "auto":
        method = "direct" if idx.size < DIRECT_LIMIT else "iterative"
    iterations = 0
    if method == "direct":
        y = spla.spsolve((sp.identity(idx.size, format="csc") - A.tocsc()), b)
        y = np.atleast_1d(y)
        residual = float(np.max(np.abs(A @ y + b - y)))
    elif method == "iterative":
        y = np.zeros(idx.size)
        residual = math.inf
        while iterations < max_iter:
            y_new = A @ y + b
            residual = float(np.max(np.abs(y_new - y)))
            y = y_new
            iterations += 1
            if residual < tol:
                break
        else:
            raise ConvergenceError(residual, iterations)
    else:
        raise ValueError(f"unknown method {method!r}")
    x = target.astype(float)
    x[idx] = y
    return ReachResult(float(m.initial @ x), method, residual, iterations)


# Monte Carlo ---------------------------------------------------------------------

MC_CHUNK = 10_000


def _simulate_chunk(sc: Scenario, runs: int, horizon: int, seed_seq: np.random.SeedSequence,
                    uvc_off_for: tuple[bool, bool]) -> int:
    """Simulate ``runs`` independent missions; returns how many hit exposure."""
    rng = np.random.default_rng(seed_seq)
    cycle = sc.treatment_ticks + sc.transition_ticks
    row = np.zeros(runs, dtype=np.int64)
    pos = np.zeros(runs, dtype=np.int64)
    done = np.zeros(runs, dtype=bool)
    present = np.zeros(runs, dtype=bool)
    untrained = np.zeros(runs, dtype=bool)
    detected = np.zeros(runs, dtype=bool)
    countdown = np.zeros(runs, dtype=np.int64)
    mitigated = np.zeros(runs, dtype=bool)  # mitigation applied
    hit = np.zeros(runs, dtype=bool)
    off_trained, off_untrained = uvc_off_for

    for _ in range(horizon):
        # draw for everyone to keep the stream layout fixed
        u_move, u_class, u_det = rng.random((3, runs))
        live = ~done
        pos = np.where(live, pos + 1, pos)
        wrap = live & (pos == cycle)
        row = np.where(wrap, row + 1, row)
        pos = np.where(wrap, 0, pos)
        done = done | (wrap & (row == sc.rows))
        live = ~done

        arrive = live & ~present & (u_move < sc.p_intrusion)
        leave = live & present & (u_move < sc.p_leave)
        untrained = np.where(arrive, u_class >= sc.p_trained, untrained)
        present = (present | arrive) & ~leave
        detected &= ~(leave | arrive)
        mitigated &= ~(leave | arrive)
        countdown = np.where(leave | arrive, 0, countdown)

        ticking = live & present & detected & ~mitigated & ~arrive
        countdown = np.where(ticking, countdown - 1, countdown)
        newly = live & present & ~detected & (u_det < sc.p_detect)
        detected |= newly
        countdown = np.where(newly, sc.mitigation_latency, countdown)
        mitigated |= live & present & detected & (countdown == 0)

        uvc_off = mitigated & np.where(untrained, off_untrained, off_trained)
        exposed = live & present & (pos >= sc.treatment_ticks) & ~uvc_off
        hit |= exposed
    return int(hit.sum())


@dataclass(frozen=True)
class McResult:
    estimate: float
    stderr: float
    runs: int
    hits: int
    chunk_runs: tuple = ()
    chunk_hits: tuple = ()


def monte_carlo(sc: Scenario, runs: int, horizon: int, seed: int, jobs: int = 1,
                mitigation: Mitigation = _default_mitigation) -> McResult:
    """Fraction of simulated missions reaching exposure within ``horizon`` ticks.

    Runs are split into fixed-size chunks with spawned seeds, so the result
    depends on ``seed`` only, not on ``jobs``.
    """
    sc.validate()
    if runs < 1:
        raise ValueError("runs must be at least 1")
    uvc = (
        UVC_OFF in mitigation(Detection(Classification.TRAINED, Zone.RED)),
        UVC_OFF in mitigation(Detection(Classification.UNTRAINED, Zone.RED)),
    )
    sizes = [MC_CHUNK] * (runs // MC_CHUNK)
    if runs % MC_CHUNK:
        sizes.append(runs % MC_CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    work = list(zip(sizes, seeds))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_chunk = list(pool.map(lambda w: _simulate_chunk(sc, w[0], horizon, w[1], uvc), work))
    else:
        per_chunk = [_simulate_chunk(sc, n, horizon, s, uvc) for n, s in work]
    hits = sum(per_chunk)
    p = hits / runs
    return McResult(p, math.sqrt(p * (1.0 - p) / runs), runs, hits, tuple(sizes), tuple(per_chunk))


# SIL ------------------------------------------------------------------------------

class SilLevel(enum.IntEnum):
    BELOW_SIL1 = 0
    SIL1 = 1
    SIL2 = 2
    SIL3 = 3
    SIL4 = 4

    @property
    def text(self) -> str:
        return "below SIL1" if self is SilLevel.BELOW_SIL1 else self.name


# Lower PFD bound of SIL1..SIL4 (IEC 61508 low-demand mode).
LOW_DEMAND_BANDS = (1e-2, 1e-3, 1e-4, 1e-5)


def pfd_to_sil(pfd: float, bands: Sequence[float] = LOW_DEMAND_BANDS) -> SilLevel:
    """SIL band of a probability of failure on demand.

    Values below the SIL4 lower bound are reported as SIL4, the best level
    on the scale.
    """
    if not (0.0 <= pfd <= 1.0) or math.isnan(pfd):
        raise ValueError(f"PFD must lie in [0, 1], got {pfd!r}")
    if pfd >= bands[0] * 10:
        return SilLevel.BELOW_SIL1
    for level, lower in enumerate(bands, start=1):
        if pfd >= lower:
            return SilLevel(level)
    return SilLevel.SIL4


def sensor_threshold_check(accuracy: float, threshold: float) -> bool:
    for name, v in (("accuracy", accuracy), ("threshold", threshold)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
    return accuracy >= threshold


def scenario_fields() -> dict:
    return {f.name: f.type for f in fields(Scenario)}
