"""Deterministic schedules: case structure, state evolution, execution."""

import math

import numpy as np
import pytest

import oracles
from mlob import (AdmissibilityError, Block, BoundaryFollow,
                  BoundaryRangeError, PowerLawBook, ValidationError, Wait,
                  acquisition_boundary, acquisition_schedule, execute,
                  optimal_schedule, optimal_schedule_two_sided,
                  power_law_spec, schedule_json, type_a_proceeds,
                  type_a_schedule)


def test_liquidation_empty_position(r1):
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.3, 0.0)
    assert s.segments == ()
    assert s.terminal_time == 0.0


def test_liquidation_sell_all(r1):
    # y - theta >= y0: dumping the whole position is optimal
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.5, 0.2)
    assert len(s.segments) == 1
    assert isinstance(s.segments[0], Block)
    assert s.initial_block == 0.2
    assert s.terminal_time == 0.0


def test_liquidation_block_then_follow(r1):
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.0, 1.0)
    assert [type(seg) for seg in s.segments] == [Block, BoundaryFollow]
    assert s.initial_block == pytest.approx(oracles.R1_BLOCK_0_1, rel=1e-12)
    assert s.terminal_time == pytest.approx(oracles.R1_T_OPT_0_1, rel=1e-12)
    # the block lands exactly on the boundary
    d = s.initial_block
    assert r1.fb.theta_of_y(-d) == pytest.approx(1.0 - d, abs=1e-10)


def test_liquidation_wait_then_follow(r1):
    y_b = r1.fb.y_of_theta(1.0)
    y_init = y_b - 0.3
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, y_init, 1.0)
    assert [type(seg) for seg in s.segments] == [Wait, BoundaryFollow]
    # h(y) = beta y decays exponentially, so the wait is a log ratio
    assert s.wait_time == pytest.approx(math.log(y_init / y_b) / r1.beta,
                                        rel=1e-10)
    assert s.terminal_time == pytest.approx(
        s.wait_time + r1.fb.tau_of_y(y_b), rel=1e-12)


def test_liquidation_start_on_boundary(r1):
    y_b = r1.fb.y_of_theta(1.0)
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, y_b, 1.0)
    assert [type(seg) for seg in s.segments] == [BoundaryFollow]
    assert s.initial_block == 0.0
    assert s.terminal_time == pytest.approx(r1.fb.tau_of_y(y_b), rel=1e-12)


def test_state_evolution(r1):
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.0, 1.0)
    d = s.initial_block
    theta0, y0 = s.state(0.0)
    assert theta0 == pytest.approx(1.0 - d, rel=1e-12)
    assert y0 == pytest.approx(-d, rel=1e-12)
    # along the follow segment the state stays on the curve
    for t in np.linspace(0.1 * s.terminal_time, 0.9 * s.terminal_time, 5):
        theta, y = s.state(float(t))
        assert theta == pytest.approx(r1.fb.theta_of_y(y), abs=1e-9)
    theta_T, y_T = s.state(s.terminal_time)
    assert theta_T == pytest.approx(0.0, abs=1e-12)
    assert y_T == pytest.approx(r1.cp.y0, abs=1e-10)
    with pytest.raises(ValidationError):
        s.state(-0.1)
    with pytest.raises(ValidationError):
        s.state(s.terminal_time + 1.0)


def test_describe_keys(r1):
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.0, 1.0)
    d = s.describe()
    assert d == {"kind": "liquidation",
                 "initial_block": s.initial_block,
                 "wait_time": 0.0,
                 "terminal_time": s.terminal_time}


def test_two_sided_buy_then_liquidate(r1):
    y_init = r1.fb.y_of_theta(0.5) - 0.3
    s = optimal_schedule_two_sided(r1.spec, r1.cp, r1.fb, y_init, 0.2)
    assert s.kind == "two_sided"
    assert s.initial_block == pytest.approx(oracles.R1_TWO_SIDED_BLOCK,
                                            rel=1e-12)
    assert s.terminal_time == pytest.approx(oracles.R1_TWO_SIDED_T, rel=1e-12)
    theta_T, y_T = s.state(s.terminal_time)
    assert theta_T == pytest.approx(0.0, abs=1e-12)
    assert y_T == pytest.approx(r1.cp.y0, abs=1e-10)


def test_two_sided_round_trip_from_flat(r1):
    s = optimal_schedule_two_sided(r1.spec, r1.cp, r1.fb, r1.cp.y0 - 0.4, 0.0)
    assert s.initial_block == pytest.approx(oracles.R1_ROUND_TRIP_BLOCK,
                                            rel=1e-12)
    assert s.state(s.terminal_time)[0] == pytest.approx(0.0, abs=1e-12)


def test_two_sided_right_of_curve_matches_monotone(r1):
    s = optimal_schedule_two_sided(r1.spec, r1.cp, r1.fb, 0.0, 1.0)
    m = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.0, 1.0)
    assert s.kind == "liquidation"
    assert s.initial_block == m.initial_block
    assert s.terminal_time == m.terminal_time


def test_acquisition_cases(r1):
    ab = acquisition_boundary(r1.spec, 0.5, theta_max=6.0)

    # full purchase leaves the impact at or under the foot
    s = acquisition_schedule(r1.spec, ab, -2.0, 2.0)
    assert len(s.segments) == 1
    assert s.initial_block == -2.0
    assert s.terminal_time == 0.0

    s = acquisition_schedule(r1.spec, ab, 0.0, 2.0)
    assert s.initial_block == pytest.approx(oracles.ACQ_BLOCK_0_2, rel=1e-12)
    assert s.terminal_time == pytest.approx(oracles.ACQ_T_0_2, rel=1e-12)
    acquired, y_T = s.state(s.terminal_time)
    assert acquired == pytest.approx(2.0, abs=1e-10)
    assert y_T == pytest.approx(oracles.ACQ_FOOT, abs=1e-10)

    # elevated impact: wait down to the curve, then buy along it
    y_entry = ab.y_of_theta(2.0)
    s = acquisition_schedule(r1.spec, ab, 3.0, 2.0)
    assert [type(seg) for seg in s.segments] == [Wait, BoundaryFollow]
    assert s.wait_time == pytest.approx(math.log(3.0 / y_entry) / r1.beta,
                                        rel=1e-10)

    s = acquisition_schedule(r1.spec, ab, y_entry, 2.0)
    assert [type(seg) for seg in s.segments] == [BoundaryFollow]
    assert s.terminal_time == pytest.approx(ab.tau_of_y(y_entry), rel=1e-12)


def test_acquisition_rejects_bad_targets(r1):
    ab = acquisition_boundary(r1.spec, 0.5, theta_max=6.0)
    with pytest.raises(BoundaryRangeError):
        acquisition_schedule(r1.spec, ab, 0.0, 7.0)
    with pytest.raises(ValidationError):
        acquisition_schedule(r1.spec, ab, 0.0, -1.0)


def test_type_a_reference_schedule():
    spec = power_law_spec(PowerLawBook(1.0, 1.0, 1.0), 0.0)
    s = type_a_schedule(spec, 1.0, 0.0, 1.0)
    assert s.initial_block == pytest.approx(oracles.TYPE_A_BLOCKS[0],
                                            rel=1e-12)
    assert s.final_block == pytest.approx(oracles.TYPE_A_BLOCKS[1], rel=1e-12)
    rates = [seg.rate for seg in s.segments if hasattr(seg, "rate")]
    assert rates == [pytest.approx(oracles.TYPE_A_RATE, rel=1e-12)]
    theta_T, y_T = s.state(s.terminal_time)
    assert theta_T == pytest.approx(0.0, abs=1e-12)
    assert y_T == pytest.approx(oracles.TYPE_A_YSTAR, rel=1e-12)
    assert type_a_proceeds(spec, s) == pytest.approx(oracles.TYPE_A_PROCEEDS,
                                                     rel=1e-12)


def test_type_a_rejections(r1):
    spec = power_law_spec(PowerLawBook(1.0, 1.0, 1.0), 0.0)
    with pytest.raises(ValidationError):
        type_a_schedule(r1.spec, 1.0, 0.0, 1.0)   # delta != 0
    with pytest.raises(AdmissibilityError):
        type_a_schedule(spec, 0.01, 3.0, 0.5)


def test_execute_trajectory_format(r1):
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.0, 1.0)
    traj = execute(r1.spec, s, dt=s.terminal_time / 200)
    assert traj.t[0] == 0.0
    # the initial block shows as a doubled row
    assert traj.t[1] == 0.0
    assert traj.a[0] == 0.0
    assert traj.a[1] == pytest.approx(s.initial_block, rel=1e-12)
    assert traj.theta[0] == 1.0
    assert traj.theta[1] == pytest.approx(1.0 - s.initial_block, rel=1e-12)
    assert traj.a[-1] == pytest.approx(1.0, abs=1e-9)
    assert traj.theta[-1] == pytest.approx(0.0, abs=1e-9)
    assert np.all(np.diff(traj.t) >= 0.0)
    assert np.all(np.diff(traj.a) >= -1e-12)   # liquidation only sells
    # impact and holdings agree with state() at interior sample times
    for i in (10, 50, 150):
        theta, y = s.state(float(traj.t[i]))
        assert traj.theta[i] == pytest.approx(theta, abs=1e-9)
        assert traj.y[i] == pytest.approx(y, abs=1e-9)


def test_trajectory_csv(tmp_path, r1):
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.0, 1.0)
    traj = execute(r1.spec, s, dt=s.terminal_time / 50)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,theta,y,a,rate"
    assert len(lines) == 1 + len(traj.t)


def test_schedule_json_keys(r1):
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.0, 1.0)
    out = schedule_json(r1.spec, s, dt=s.terminal_time / 20)
    assert out["kind"] == "liquidation"
    assert out["initial_block"] == s.initial_block
    assert out["terminal_time"] == s.terminal_time
    row = out["samples"][0]
    assert set(row) == {"t", "theta", "y", "a", "rate"}
