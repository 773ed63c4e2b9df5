import math
from dataclasses import replace

import numpy as np
import pytest

from sisverify.domain import ALERT_ON, ResourceError
from sisverify.stochastic import (
    DONE,
    EXPOSURE,
    ConvergenceError,
    Dtmc,
    Scenario,
    ScenarioError,
    SilLevel,
    build_dtmc,
    monte_carlo,
    pfd_to_sil,
    prob_bounded_reach,
    prob_reach,
    sensor_threshold_check,
)

DEFAULT = Scenario()


@pytest.fixture(scope="module")
def default_chain():
    return build_dtmc(DEFAULT)


def three_state_chain():
    # s0 -0.3-> s1 -0.4-> goal, everything else falls into the sink
    return Dtmc.from_transitions(
        {"s0": {"s1": 0.3, "sink": 0.7}, "s1": {"goal": 0.4, "sink": 0.6}},
        initial="s0",
        targets=["goal"],
    )


def test_two_state_chain():
    m = Dtmc.from_transitions({"a": {"goal": 0.5, "sink": 0.5}}, "a", ["goal"])
    assert prob_bounded_reach(m, 1) == pytest.approx(0.5, abs=1e-12)
    assert prob_reach(m).probability == pytest.approx(0.5, abs=1e-12)


def test_three_state_chain_hand_values():
    m = three_state_chain()
    assert prob_bounded_reach(m, 0) == 0.0
    assert prob_bounded_reach(m, 1) == 0.0
    assert prob_bounded_reach(m, 2) == pytest.approx(0.3 * 0.4, abs=1e-9)
    assert prob_bounded_reach(m, 50) == pytest.approx(0.12, abs=1e-9)
    assert prob_reach(m).probability == pytest.approx(0.12, abs=1e-9)


@pytest.mark.parametrize("q, p_exit", [(0.1, 0.1), (0.01, 0.5), (0.3, 0.001), (0.5, 1.0)])
@pytest.mark.parametrize("method", ["direct", "iterative"])
def test_geometric_gadget_closed_form(q, p_exit, method):
    stay = (1 - q) * (1 - p_exit)
    row = {"goal": q, "sink": (1 - q) * p_exit}
    if stay:
        row["s"] = stay
    m = Dtmc.from_transitions({"s": row}, "s", ["goal"])
    exact = q / (q + (1 - q) * p_exit)
    assert prob_reach(m, method=method).probability == pytest.approx(exact, abs=1e-9)


def test_default_chain_shape(default_chain):
    # regression pins for the shipped example scenario
    assert default_chain.n == 1743
    assert np.allclose(default_chain.row_sums(), 1.0, atol=1e-12, rtol=0)
    assert default_chain.targets().sum() > 0
    assert DONE in default_chain.states
    assert EXPOSURE not in default_chain.labels[0]


def test_default_chain_values(default_chain):
    assert prob_bounded_reach(default_chain, 100) == pytest.approx(0.09480730393110309, rel=1e-9)
    assert prob_reach(default_chain).probability == pytest.approx(0.2204315493472903, rel=1e-9)


def test_direct_and_iterative_agree(default_chain):
    a = prob_reach(default_chain, method="direct")
    b = prob_reach(default_chain, method="iterative")
    assert a.probability == pytest.approx(b.probability, abs=1e-9)
    assert b.residual < 1e-10 and b.iterations > 0


def test_bounded_reach_monotone_and_converges(default_chain):
    curve = prob_bounded_reach(default_chain, 400, curve=True)
    assert len(curve) == 401
    assert np.all(np.diff(curve) >= -1e-15)
    # the mission ends after rows * (treatment + transition) ticks; afterwards nothing changes
    assert curve[-1] == pytest.approx(prob_reach(default_chain).probability, abs=1e-12)


def test_more_intrusion_more_exposure():
    ps = [prob_reach(build_dtmc(replace(DEFAULT, p_intrusion=p))).probability for p in (0.001, 0.005, 0.02, 0.1)]
    assert ps == sorted(ps) and ps[0] < ps[-1]


def test_better_detection_less_exposure():
    ps = [prob_reach(build_dtmc(replace(DEFAULT, p_detect=p))).probability for p in (0.5, 0.8, 0.94, 0.99)]
    assert ps == sorted(ps, reverse=True) and ps[0] > ps[-1]


def test_perfect_detection_zero_latency_is_exactly_zero():
    sc = replace(DEFAULT, p_detect=1.0, mitigation_latency=0)
    m = build_dtmc(sc)
    assert not m.targets().any()
    assert prob_reach(m).probability == 0.0
    assert prob_bounded_reach(m, 100) == 0.0
    assert monte_carlo(sc, 20_000, 100, seed=3).hits == 0


def test_no_intrusion_is_exactly_zero():
    assert prob_reach(build_dtmc(replace(DEFAULT, p_intrusion=0.0))).probability == 0.0


def test_mitigation_without_uvc_off_is_worse():
    weak = build_dtmc(DEFAULT, mitigation=lambda d: frozenset({ALERT_ON}))
    assert prob_reach(weak).probability > prob_reach(build_dtmc(DEFAULT)).probability


def test_convergence_error():
    with pytest.raises(ConvergenceError) as exc:
        prob_reach(build_dtmc(DEFAULT), method="iterative", max_iter=3)
    assert exc.value.iterations == 3 and exc.value.residual > 0


def test_state_budget():
    with pytest.raises(ResourceError):
        build_dtmc(DEFAULT, max_states=100)


@pytest.mark.parametrize("bad", [dict(p_detect=1.5), dict(p_intrusion=-0.1), dict(rows=0), dict(mitigation_latency=-1)])
def test_scenario_validation(bad):
    with pytest.raises(ScenarioError):
        replace(DEFAULT, **bad).validate()


# Monte Carlo -------------------------------------------------------------------

def test_monte_carlo_reproducible_and_jobs_independent():
    a = monte_carlo(DEFAULT, 30_000, 100, seed=5)
    b = monte_carlo(DEFAULT, 30_000, 100, seed=5, jobs=3)
    assert a == b
    assert a != monte_carlo(DEFAULT, 30_000, 100, seed=6)
    assert a.chunk_runs == (10_000, 10_000, 10_000) and sum(a.chunk_hits) == a.hits


def test_monte_carlo_close_to_exact(default_chain):
    exact = prob_bounded_reach(default_chain, 100)
    r = monte_carlo(DEFAULT, 100_000, 100, seed=0)
    assert abs(r.estimate - exact) <= 3 * r.stderr
    assert r.stderr == pytest.approx(math.sqrt(r.estimate * (1 - r.estimate) / 1e5))


def test_monte_carlo_matches_exact_on_other_horizons():
    sc = replace(DEFAULT, p_intrusion=0.02, mitigation_latency=2, p_trained=0.3)
    m = build_dtmc(sc)
    for horizon in (10, 60):
        r = monte_carlo(sc, 50_000, horizon, seed=horizon)
        assert abs(r.estimate - prob_bounded_reach(m, horizon)) <= 4 * max(r.stderr, 1e-4)


def test_monte_carlo_rejects_zero_runs():
    with pytest.raises(ValueError):
        monte_carlo(DEFAULT, 0, 100, seed=0)


# SIL ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "pfd, level",
    [(0.05, SilLevel.SIL1), (3e-3, SilLevel.SIL2), (0.5, SilLevel.BELOW_SIL1), (0.1, SilLevel.BELOW_SIL1),
     (1e-2, SilLevel.SIL1), (5e-4, SilLevel.SIL3), (5e-5, SilLevel.SIL4), (1e-5, SilLevel.SIL4), (0.0, SilLevel.SIL4)],
)
def test_pfd_to_sil(pfd, level):
    assert pfd_to_sil(pfd) is level


@pytest.mark.parametrize("bad", [-0.1, 1.5, float("nan")])
def test_pfd_domain_error(bad):
    with pytest.raises(ValueError):
        pfd_to_sil(bad)


def test_sil_monotone():
    grid = np.logspace(-8, 0, 400)
    levels = [pfd_to_sil(p) for p in grid]
    assert all(a >= b for a, b in zip(levels, levels[1:]))


def test_configurable_bands():
    assert pfd_to_sil(3e-3, bands=(1e-1, 1e-2, 1e-3, 1e-4)) is SilLevel.SIL3


def test_sensor_threshold():
    assert sensor_threshold_check(0.94, 0.70)
    assert not sensor_threshold_check(0.6, 0.70)
    with pytest.raises(ValueError):
        sensor_threshold_check(94, 0.7)
