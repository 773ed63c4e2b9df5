import pytest

from oracles import late_responses, walk_paths
from sisverify.controller import (
    AlertMode,
    ConfigError,
    ControllerConfig,
    ControllerState,
    Lts,
    MotionMode,
    Policy,
    UvcMode,
    build_lts,
    init,
    step,
)
from sisverify.domain import (
    ALERT_OFF,
    ALERT_ON,
    CLEAR,
    STOP,
    TOCK,
    UVC_OFF,
    UVC_ON,
    ActionCall,
    Classification,
    Detection,
    DetectionIn,
    ResourceError,
    SetSpeed,
    Tock,
    Zone,
)

T, U = Classification.TRAINED, Classification.UNTRAINED


def run(cfg, events, s=None):
    s = s or init(cfg)
    emitted = []
    for e in events:
        s, out = step(s, e, cfg)
        emitted.extend(out)
    return s, emitted


def test_init_default(default_cfg):
    s = init(default_cfg)
    assert s.modes == (UvcMode.ON, MotionMode.NOMINAL, AlertMode.SILENT)
    assert s.pending == ()


@pytest.mark.parametrize(
    "cfg",
    [
        ControllerConfig(nominal_speed=10, slow_speed=10),
        ControllerConfig(deadline_budget=0),
        ControllerConfig(latency=-1),
        ControllerConfig(mutation="drop-everything"),
    ],
)
def test_init_rejects_invalid_config(cfg):
    with pytest.raises(ConfigError):
        init(cfg)


def test_untrained_yellow_stops_within_two_tocks(default_cfg):
    s, out = run(default_cfg, [DetectionIn(Detection(U, Zone.YELLOW)), TOCK, TOCK])
    assert set(out) == {UVC_OFF, STOP}
    assert s.modes == (UvcMode.OFF, MotionMode.STOPPED, AlertMode.SILENT)
    assert s.pending == ()


def test_trained_green_only_alerts(default_cfg):
    s, out = run(default_cfg, [DetectionIn(Detection(T, Zone.GREEN)), TOCK, TOCK])
    assert out == [ALERT_ON]
    assert s.uvc_mode is UvcMode.ON
    assert s.alert_mode is AlertMode.ALERTING


def test_detection_queues_with_full_budget(default_cfg):
    s, out = step(init(default_cfg), DetectionIn(Detection(U, Zone.GREEN)), default_cfg)
    assert out == ()
    assert sorted(t for _, t in s.pending) == [2, 2]
    assert {a for a, _ in s.pending} == {ALERT_ON, SetSpeed(10)}


def test_clear_restores_from_stopped(default_cfg):
    stopped, _ = run(default_cfg, [DetectionIn(Detection(U, Zone.RED)), TOCK])
    assert stopped.motion_mode is MotionMode.STOPPED
    s, out = step(stopped, CLEAR, default_cfg)
    assert s == ControllerState()
    assert set(out) == {UVC_ON, SetSpeed(default_cfg.nominal_speed)}


def test_clear_turns_alert_off(default_cfg):
    alerting, _ = run(default_cfg, [DetectionIn(Detection(T, Zone.GREEN)), TOCK])
    _, out = step(alerting, CLEAR, default_cfg)
    assert out == (ALERT_OFF,)


def test_lower_rank_detection_does_not_release_halt(default_cfg):
    s, out = run(default_cfg, [DetectionIn(Detection(U, Zone.RED)), TOCK,
                               DetectionIn(Detection(U, Zone.GREEN)), TOCK])
    # the slow-down command still goes out, but the halt holds until Clear
    assert SetSpeed(10) in out
    assert s.motion_mode is MotionMode.STOPPED
    assert s.uvc_mode is UvcMode.OFF


@pytest.mark.parametrize("latency, tocks", [(0, 0), (1, 1), (2, 2), (3, 3)])
def test_latency_controls_discharge_tick(latency, tocks):
    cfg = ControllerConfig(latency=latency)
    s, out = step(init(cfg), DetectionIn(Detection(T, Zone.GREEN)), cfg)
    seen = list(out)
    n = 0
    while not seen:
        s, out = step(s, TOCK, cfg)
        seen += out
        n += 1
    assert n == tocks and seen == [ALERT_ON]


def test_step_is_pure(default_cfg):
    s = init(default_cfg)
    e = DetectionIn(Detection(U, Zone.YELLOW))
    assert step(s, e, default_cfg) == step(s, e, default_cfg)
    assert s == init(default_cfg)


def test_step_rejects_action_inputs(default_cfg):
    with pytest.raises(ConfigError):
        step(init(default_cfg), ActionCall(STOP), default_cfg)


# LTS ---------------------------------------------------------------------------

def test_lts_state_count_regression(default_lts):
    # pinned from exhaustive exploration of the default controller, idle bound 4
    assert len(default_lts) == 62
    assert len(default_lts.transitions) == 248


def test_lts_all_states_reachable_and_in_range(default_lts):
    seen = {default_lts.initial}
    frontier = [default_lts.initial]
    while frontier:
        i = frontier.pop()
        for _, j in default_lts.successors(i):
            assert 0 <= j < len(default_lts)
            if j not in seen:
                seen.add(j)
                frontier.append(j)
    assert len(seen) == len(default_lts)


def test_no_back_to_back_detections(default_lts):
    for path in walk_paths(default_lts, 8):
        last = None
        for e, _ in path:
            if isinstance(e, DetectionIn):
                assert last is None, "two detections without an intervening tock"
                last = e
            elif isinstance(e, Tock):
                last = None


def test_obligations_complete_on_every_path(default_lts):
    for path in walk_paths(default_lts, 9):
        assert late_responses([e for e, _ in path]) == []


def test_mode_consistency_and_red_supremacy(default_lts):
    states = default_lts.states
    for path in walk_paths(default_lts, 9):
        prev = default_lts.initial
        uvc_off_seen = False
        tocks_since_red = None
        for e, j in path:
            if e == CLEAR:
                uvc_off_seen, tocks_since_red = False, None
            if e == ActionCall(UVC_OFF):
                uvc_off_seen = True
            if uvc_off_seen:
                assert states[j].ctrl.uvc_mode is UvcMode.OFF
            if isinstance(e, Tock) and tocks_since_red is not None:
                if tocks_since_red >= 2:
                    # two tocks have passed: the robot must be halted before time moves on
                    assert states[prev].ctrl.motion_mode is MotionMode.STOPPED
                tocks_since_red += 1
            if isinstance(e, DetectionIn) and e.detection.zone is Zone.RED and tocks_since_red is None:
                tocks_since_red = 0
            prev = j


def test_max_idle_must_cover_deadline():
    with pytest.raises(ConfigError):
        build_lts(ControllerConfig(), max_consecutive_idle_tocks=1)


def test_state_budget():
    with pytest.raises(ResourceError) as exc:
        build_lts(ControllerConfig(), 4, max_states=10)
    assert exc.value.count == 10


def test_idle_cap_limits_tock_runs():
    lts = build_lts(ControllerConfig(), 3)
    for path in walk_paths(lts, 6):
        run = 0
        for e, _ in path:
            run = run + 1 if isinstance(e, Tock) else 0
            assert run <= 3


def test_edge_list_round_trip(default_lts):
    text = default_lts.to_edge_list()
    back = Lts.from_edge_list(text)
    assert back.initial == default_lts.initial
    assert back.transitions == default_lts.transitions
    assert text.splitlines()[1].split()[0].isdigit()


def test_nondeterministic_policy_branches_on_tock():
    cfg = ControllerConfig(policy=Policy.NONDETERMINISTIC)
    lts = build_lts(cfg, 4)
    branching = [i for i in range(len(lts))
                 if len([j for e, j in lts.successors(i) if isinstance(e, Tock)]) > 1]
    assert branching
