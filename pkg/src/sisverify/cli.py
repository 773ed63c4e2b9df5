"""``sisverify`` command line: verify, analyze, simulate, monitor.

Exit status: 0 success, 1 verification failure or monitor violation,
2 parse/configuration error, 3 resource budget exceeded or non-convergence.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .controller import ConfigError, ControllerConfig, Policy, build_lts
from .domain import DomainError, ResourceError, SetSpeed, action_text
from .formats import (
    TraceFormatError,
    format_trace,
    iter_trace_lines,
    parse_controller_config,
    parse_scenario,
    read_text,
)
from .refinement import (
    Fail,
    check_deadlock_freedom,
    check_determinism,
    check_traces_refinement,
    enumerate_traces,
    verdict_record,
)
from .report import Report, record_line
from .rv import monitor_step, summarize, synthesize_monitor, trigger_actions
from .speclang import (
    AlphabetError,
    RequirementSyntaxError,
    SpecCompileError,
    compile_spec,
    parse_requirements,
    spec_accepts,
)
from .stochastic import (
    ConvergenceError,
    ScenarioError,
    build_dtmc,
    monte_carlo,
    pfd_to_sil,
    prob_bounded_reach,
    prob_reach,
    sensor_threshold_check,
)

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_RESOURCE = 0, 1, 2, 3
JOBS_ENV = "SISVERIFY_JOBS"
CHECKS = ("refinement", "deadlock", "determinism")


class InputError(Exception):
    pass


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def _load_text(path: str, what: str) -> str:
    try:
        return read_text(Path(path))
    except OSError as exc:
        raise InputError(f"cannot read {what} {path!r}: {exc.strerror or exc}") from None


def _load_requirements(path: Optional[str]):
    if path is None:
        text = resources.files("sisverify").joinpath("data/default.req").read_text(encoding="utf-8")
    else:
        text = _load_text(path, "requirements file")
    try:
        return parse_requirements(text)
    except (RequirementSyntaxError, DomainError) as exc:
        raise InputError(f"{path or 'default.req'}: {exc}") from None


def _controller_config(args) -> ControllerConfig:
    cfg = ControllerConfig()
    if args.config:
        cfg = parse_controller_config(_load_text(args.config, "controller config"))
    overrides = {
        "nominal_speed": args.nominal_speed,
        "slow_speed": args.slow_speed,
        "deadline_budget": args.deadline_budget,
        "latency": args.latency,
        "policy": Policy(args.policy) if args.policy else None,
        "mutation": args.mutate,
    }
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg.validate()


def _write(out, text: str) -> None:
    out.write(text)
    out.flush()


# verify ---------------------------------------------------------------------------

def cmd_verify(args, out, err) -> int:
    reqs = _load_requirements(args.requirements)
    cfg = _controller_config(args)
    checks = CHECKS if args.check == "all" else (args.check,)

    report = Report("verify")
    report.add_input("requirements", args.requirements or "<builtin default.req>")
    if args.config:
        report.add_input("controller-config", args.config)
    report.parameters = {
        "checks": list(checks),
        "max_idle": args.max_idle,
        "depth_oracle": args.depth_oracle,
        "controller": {
            "nominal_speed": cfg.nominal_speed,
            "slow_speed": cfg.slow_speed,
            "deadline_budget": cfg.deadline_budget,
            "latency": cfg.latency,
            "policy": cfg.policy.value,
            "mutation": cfg.mutation,
        },
    }
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    try:
        spec = compile_spec(reqs, extra_actions=[SetSpeed(cfg.nominal_speed), SetSpeed(cfg.slow_speed)])
    except SpecCompileError as exc:
        raise InputError(str(exc)) from None
    lts = build_lts(cfg, args.max_idle)
    timings["build"] = time.perf_counter() - t0
    report.add({"lts": {"states": len(lts), "transitions": len(lts.transitions)}})
    if args.export_lts:
        Path(args.export_lts).write_text(lts.to_edge_list(), encoding="utf-8")

    ok = True
    runners = {
        "refinement": lambda: check_traces_refinement(lts, spec),
        "deadlock": lambda: check_deadlock_freedom(lts),
        "determinism": lambda: check_determinism(lts),
    }
    names = {"refinement": "traces-refinement", "deadlock": "deadlock-freedom", "determinism": "determinism"}
    for check in checks:
        t0 = time.perf_counter()
        v = runners[check]()
        timings[check] = time.perf_counter() - t0
        report.add(verdict_record(names[check], v))
        if isinstance(v, Fail):
            ok = False
            trace = list(v.counterexample) + ([v.failing_event] if v.failing_event is not None else [])
            _write(err, f"# {names[check]} failed: {v.reason}\n" + format_trace(trace))
            if args.counterexample and check == "refinement":
                Path(args.counterexample).write_text(format_trace(trace), encoding="utf-8")

    if args.depth_oracle is not None:
        t0 = time.perf_counter()
        rows = []
        for d in range(args.depth_oracle + 1):
            bounded = check_traces_refinement(lts, spec, max_depth=d)
            traces = enumerate_traces(lts, d)
            rejected = sum(1 for t in traces if not spec_accepts(spec, t))
            rows.append({
                "depth": d,
                "traces": len(traces),
                "rejected": rejected,
                "refinement": "pass" if bounded.passed else "fail",
                "agree": bounded.passed == (rejected == 0),
            })
        timings["depth_oracle"] = time.perf_counter() - t0
        agree = all(r["agree"] for r in rows)
        report.add({"assertion": "depth-oracle", "result": "pass" if agree else "fail", "depths": rows})
        ok = ok and agree

    if args.timings:
        report.timings = {k: round(v, 6) for k, v in timings.items()}
    _write(out, report.dumps())
    return EXIT_OK if ok else EXIT_FAIL


# analyze --------------------------------------------------------------------------

def _load_scenario(path: str):
    try:
        return parse_scenario(_load_text(path, "scenario file"))
    except ScenarioError as exc:
        raise InputError(f"{path}: {exc}") from None


def cmd_analyze(args, out, err) -> int:
    t0 = time.perf_counter()
    sc = _load_scenario(args.scenario)
    report = Report("analyze")
    report.add_input("scenario", args.scenario)
    report.parameters = {
        "query": "bounded" if args.bounded is not None else "unbounded",
        "horizon": args.bounded,
        "method": args.method,
        "sil": args.sil,
        "accuracy_threshold": args.accuracy_threshold,
    }
    m = build_dtmc(sc)
    rec: dict = {"analysis": "exposure", "states": m.n}
    if args.bounded is not None:
        if args.bounded < 0:
            raise InputError("--bounded must be nonnegative")
        curve = prob_bounded_reach(m, args.bounded, curve=True)
        p = float(curve[-1])
        rec.update(query=f"P=? [F<={args.bounded} exposure]", probability=p,
                   method="bounded iteration", residual=0.0)
    else:
        r = prob_reach(m, method=args.method, max_iter=args.max_iter)
        p = r.probability
        rec.update(query="P=? [F exposure]", probability=p, method=r.method, residual=r.residual)
        curve = None
    report.add(rec)

    if args.sil:
        p_clamped = min(1.0, max(0.0, p))
        level = pfd_to_sil(p_clamped)
        sil = {"pfd": p_clamped, "sil": level.text}
        if p_clamped == 0.0:
            sil["note"] = "zero-risk: exposure unreachable; reported as the top band"
        report.add(sil)

    report.add({
        "sensor_check": {
            "accuracy": sc.p_detect,
            "threshold": args.accuracy_threshold,
            "pass": sensor_threshold_check(sc.p_detect, args.accuracy_threshold),
        }
    })

    if args.figures:
        from .plotting import bounded_reach_figure

        if curve is None:
            horizon = (sc.treatment_ticks + sc.transition_ticks) * sc.rows
            curve = prob_bounded_reach(m, horizon, curve=True)
            unbounded = p
        else:
            unbounded = prob_reach(m).probability
        path = bounded_reach_figure(curve, Path(args.figures) / "exposure_vs_horizon.png", unbounded)
        report.add({"figure": str(path)})

    if args.timings:
        report.timings = {"total": round(time.perf_counter() - t0, 6)}
    _write(out, report.dumps())
    return EXIT_OK


# simulate -------------------------------------------------------------------------

def cmd_simulate(args, out, err) -> int:
    t0 = time.perf_counter()
    if args.runs < 1:
        raise InputError("--runs must be at least 1")
    if args.horizon < 0:
        raise InputError("--horizon must be nonnegative")
    sc = _load_scenario(args.scenario)
    report = Report("simulate")
    report.add_input("scenario", args.scenario)
    report.parameters = {"runs": args.runs, "horizon": args.horizon, "seed": args.seed}
    mc = monte_carlo(sc, args.runs, args.horizon, args.seed, jobs=args.jobs)
    rec: dict = {"estimate": mc.estimate, "stderr": mc.stderr, "hits": mc.hits, "runs": mc.runs}
    exact = None
    try:
        m = build_dtmc(sc, max_states=args.max_states)
    except ResourceError:
        rec["agreement"] = "skipped: chain exceeds state budget"
    else:
        exact = prob_bounded_reach(m, args.horizon)
        dev = abs(mc.estimate - exact)
        rec["exact"] = exact
        rec["within_3_stderr"] = dev <= 3 * mc.stderr or (mc.stderr == 0 and dev == 0)
    report.add(rec)
    if args.figures:
        from .plotting import monte_carlo_figure

        path = monte_carlo_figure(mc.chunk_runs, mc.chunk_hits, Path(args.figures) / "monte_carlo.png", exact)
        report.add({"figure": str(path)})
    if args.timings:
        report.timings = {"total": round(time.perf_counter() - t0, 6)}
    _write(out, report.dumps())
    return EXIT_OK


# monitor --------------------------------------------------------------------------

def cmd_monitor(args, out, err, stdin) -> int:
    reqs = _load_requirements(args.requirements)
    monitors = [synthesize_monitor(r) for r in reqs]
    header = Report("monitor")
    header.add_input("requirements", args.requirements)
    header.add_input("trace", args.trace)
    head = header.as_dict()
    _write(out, record_line({"record": "header", **{k: head[k] for k in ("tool", "version", "command", "inputs")}}))

    if args.trace == "-":
        lines = stdin
    else:
        lines = _load_text(args.trace, "trace file").splitlines()
    n = 0
    try:
        for lineno, e in iter_trace_lines(lines):
            idx = n
            for k, m in enumerate(monitors):
                monitors[k], o = monitor_step(m, e)
                if o.triggers:
                    _write(out, record_line({
                        "record": "trigger",
                        "index": idx,
                        "line": lineno,
                        "requirement": m.requirement.id,
                        "kind": "violation" if o.violated_now else "imminent",
                        "actions": [action_text(a) for a in trigger_actions(o)],
                    }))
                if o.violated_now:
                    _write(out, record_line({
                        "record": "verdict",
                        "index": idx,
                        "line": lineno,
                        "requirement": m.requirement.id,
                        "verdict": "violated",
                    }))
            n += 1
    except TraceFormatError as exc:
        raise InputError(f"{args.trace}: {exc}") from None

    rep = summarize(monitors, n)
    results = []
    for r in rep.results:
        row = {"requirement": r.requirement, "verdict": r.verdict, "violation_index": r.violation_index}
        if args.near_miss:
            row["near_misses"] = r.near_misses
        results.append(row)
    summary: dict = {"record": "summary", "events": n, "results": results}
    first = rep.first_violation()
    if first is not None:
        summary["first_violation"] = {"requirement": first.requirement, "index": first.violation_index}
    if args.near_miss:
        summary["near_misses"] = sum(r.near_misses for r in rep.results)
    _write(out, record_line(summary))
    if first is not None:
        _write(err, f"{first.requirement} violated at event {first.violation_index}\n")
        return EXIT_FAIL
    return EXIT_OK


# argument parsing -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sisverify", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="check the controller against a requirement file")
    v.add_argument("requirements", nargs="?", help="requirement file (.req); built-in R1-R5 if omitted")
    v.add_argument("--check", choices=CHECKS + ("all",), default="all")
    v.add_argument("--max-idle", type=int, default=4, help="cap on consecutive idle tocks (default 4)")
    v.add_argument("--depth-oracle", type=int, metavar="N",
                   help="also cross-check against exhaustive trace enumeration up to depth N")
    v.add_argument("--config", help="controller config file (key = value)")
    v.add_argument("--nominal-speed", type=int)
    v.add_argument("--slow-speed", type=int)
    v.add_argument("--deadline-budget", type=int)
    v.add_argument("--latency", type=int, help="ticks from detection to discharge (default 1)")
    v.add_argument("--policy", choices=[x.value for x in Policy])
    v.add_argument("--mutate", help="controller mutant, e.g. drop-stop-red")
    v.add_argument("--export-lts", metavar="FILE", help="write the LTS as an edge list")
    v.add_argument("--counterexample", metavar="FILE", help="write the refinement counterexample as a trace file")
    v.add_argument("--timings", action="store_true", help="include wall times (reports stop being byte-stable)")
    v.add_argument("--jobs", type=int, default=_default_jobs())

    a = sub.add_parser("analyze", help="exact exposure probability of a scenario")
    a.add_argument("scenario")
    q = a.add_mutually_exclusive_group()
    q.add_argument("--bounded", type=int, metavar="K")
    q.add_argument("--unbounded", action="store_true")
    a.add_argument("--sil", action="store_true", help="read the probability as PFD and report the SIL band")
    a.add_argument("--method", choices=("auto", "direct", "iterative"), default="auto")
    a.add_argument("--max-iter", type=int, default=1_000_000)
    a.add_argument("--accuracy-threshold", type=float, default=0.70)
    a.add_argument("--figures", metavar="DIR", help="render figures into DIR")
    a.add_argument("--timings", action="store_true", help="include wall times")
    a.add_argument("--jobs", type=int, default=_default_jobs())

    s = sub.add_parser("simulate", help="Monte Carlo estimate of the exposure probability")
    s.add_argument("scenario")
    s.add_argument("--runs", type=int, default=100_000)
    s.add_argument("--horizon", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-states", type=int, default=1_000_000)
    s.add_argument("--figures", metavar="DIR")
    s.add_argument("--timings", action="store_true", help="include wall times")
    s.add_argument("--jobs", type=int, default=_default_jobs())

    m = sub.add_parser("monitor", help="run requirement monitors over a trace")
    m.add_argument("requirements")
    m.add_argument("trace", nargs="?", default="-", help="trace file, or - for standard input")
    m.add_argument("--near-miss", action="store_true")
    m.add_argument("--jobs", type=int, default=_default_jobs())
    return p


def main(argv: Optional[Sequence[str]] = None, out=None, err=None, stdin=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    stdin = stdin or sys.stdin
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        if args.command == "verify":
            return cmd_verify(args, out, err)
        if args.command == "analyze":
            return cmd_analyze(args, out, err)
        if args.command == "simulate":
            return cmd_simulate(args, out, err)
        return cmd_monitor(args, out, err, stdin)
    except (InputError, ConfigError, ScenarioError, AlphabetError, DomainError) as exc:
        _write(err, f"error: {exc}\n")
        return EXIT_INPUT
    except ResourceError as exc:
        _write(err, f"resource budget exceeded: {exc}\n")
        return EXIT_RESOURCE
    except ConvergenceError as exc:
        _write(err, f"{exc}\n")
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
