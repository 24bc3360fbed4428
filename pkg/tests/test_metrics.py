from dataclasses import astuple, replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinequad import metrics
from spinequad.gait import in_stance, leg_phase, load_gaits
from spinequad.lie import rot_z
from spinequad.metrics import (
    CostWeights,
    CotCurve,
    MultipleCrossingsError,
    NoCrossingError,
    TooShortError,
    ZeroVelocityError,
    cost_of_transport,
    cost_terms,
    footfall_consistency,
    fixture_curve,
    gait_transition,
    grid_pgm,
    grid_svg,
    hildebrand,
    steady_window,
    strategy_cost,
)
from spinequad.model import GRAVITY, RobotModel
from spinequad.sim import LOG_COLUMNS, SimLog, run_episode

GAITS = load_gaits()
MODEL = RobotModel.default()


@pytest.fixture(scope="module")
def walk6():
    ep = run_episode(MODEL, "walk", strategy="fixed", command=(0.3, 0.0, 0.0), duration=6.0)
    assert ep.stable
    return ep.log


def blank_log(n_rows, dt=0.005):
    """All-zero log with valid time and identity orientation columns."""
    data = np.zeros((n_rows, len(LOG_COLUMNS)))
    data[:, 0] = np.arange(n_rows) * dt
    for d in (0, 1, 2):  # base_R diagonal
        data[:, 4 + 4 * d] = 1.0
    return SimLog(columns=LOG_COLUMNS, data=data)


def col(name):
    return LOG_COLUMNS.index(name)


# ---------------------------------------------------------------------------
# steady-state window


def test_steady_window_skips_ramp_and_settling(walk6):
    win = steady_window(walk6)
    t0 = walk6.column("t")[win][0]
    # 0.3 m/s at 0.5 m/s^2 ramps for 0.6 s, then one second of settling
    assert abs(t0 - 1.6) < 0.02
    assert win.stop == len(walk6.data)


def test_steady_window_too_short():
    with pytest.raises(TooShortError):
        steady_window(blank_log(100))  # 0.5 s of log, 1 s of settling


# ---------------------------------------------------------------------------
# cost of transport


def test_cot_unity_when_power_balances():
    log = blank_log(400)  # 2 s
    v = 0.35
    log.data[:, col("base_vx")] = v
    log.data[:, col("cmd_vx")] = v
    log.data[:, col("power_fl_knee")] = MODEL.total_mass * GRAVITY * v
    assert cost_of_transport(log) == pytest.approx(1.0, abs=1e-12)


def test_cot_hand_value():
    log = blank_log(400)
    log.data[:, col("base_vx")] = 0.3
    log.data[:, col("cmd_vx")] = 0.3
    log.data[:, col("power_fr_pitch")] = 5.0
    got = cost_of_transport(log, mass=4.0)
    assert got == pytest.approx(5.0 / (4.0 * 9.81 * 0.3), abs=1e-12)
    assert got == pytest.approx(0.4248, abs=5e-4)


def test_cot_zero_velocity():
    log = blank_log(400)
    log.data[:, col("power_fl_knee")] = 5.0
    with pytest.raises(ZeroVelocityError):
        cost_of_transport(log)


def test_cot_fixed_spine_flag_is_noop(walk6):
    with_spine = cost_of_transport(walk6)
    without = cost_of_transport(walk6, include_spine=False)
    assert with_spine == without  # locked spine draws exactly no power


def test_cot_spine_exclusion_changes_active_logs():
    log = blank_log(400)
    log.data[:, col("base_vx")] = 0.3
    log.data[:, col("cmd_vx")] = 0.3
    log.data[:, col("power_fy")] = 2.0
    log.data[:, col("power_fl_knee")] = 3.0
    full = cost_of_transport(log)
    legs = cost_of_transport(log, include_spine=False)
    assert legs == pytest.approx(full * 3.0 / 5.0, rel=1e-12)


def test_cot_subsample_invariance(walk6):
    base = cost_of_transport(walk6)
    for k in (2, 3):
        sub = SimLog(columns=walk6.columns, data=walk6.data[::k])
        assert cost_of_transport(sub) == pytest.approx(base, rel=0.01)


# ---------------------------------------------------------------------------
# CoT curves and the walk/trot crossover


def test_cot_curve_validation():
    with pytest.raises(ValueError):
        CotCurve("walk", "fixed", [0.3, 0.2], [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        CotCurve("walk", "fixed", [0.2, 0.3], [1.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        CotCurve("walk", "fixed", [0.2, 0.3], [1.0, 1.0], [1.0])


def test_cot_curve_csv_roundtrip(tmp_path):
    curve = CotCurve("trot", "time_opt", [0.2, 0.3, 0.4], [1.7, 1.5, 1.4], [1.6, 1.4, 1.3])
    path = tmp_path / "curve.csv"
    curve.write_csv(path)
    back = CotCurve.read_csv(path)
    assert (back.gait, back.strategy) == ("trot", "time_opt")
    np.testing.assert_array_equal(back.velocities, curve.velocities)
    np.testing.assert_array_equal(back.cot, curve.cot)
    np.testing.assert_array_equal(back.cot_no_spine, curve.cot_no_spine)


def test_transition_linear_curves():
    walk = CotCurve("walk", "fixed", [0.0, 1.0], [1.0, 2.0], [1.0, 2.0])
    trot = CotCurve("trot", "fixed", [0.0, 1.0], [2.0, 1.0], [2.0, 1.0])
    assert gait_transition(walk, trot) == pytest.approx(0.5, abs=1e-4)


def test_transition_identical_curves():
    c = CotCurve("walk", "fixed", [0.1, 0.2, 0.3], [1.5, 1.4, 1.3], [1.5, 1.4, 1.3])
    d = CotCurve("trot", "fixed", [0.1, 0.2, 0.3], [1.5, 1.4, 1.3], [1.5, 1.4, 1.3])
    with pytest.raises(NoCrossingError):
        gait_transition(c, d)


def test_transition_no_overlap():
    walk = CotCurve("walk", "fixed", [0.1, 0.2], [1.5, 1.4], [1.5, 1.4])
    trot = CotCurve("trot", "fixed", [0.3, 0.4], [1.3, 1.2], [1.3, 1.2])
    with pytest.raises(NoCrossingError):
        gait_transition(walk, trot)


def test_transition_multiple_crossings():
    walk = CotCurve("walk", "fixed", [0.0, 0.5, 1.0], [1.5, 1.5, 1.5], [1.5, 1.5, 1.5])
    trot = CotCurve("trot", "fixed", [0.0, 0.5, 1.0], [1.0, 2.0, 1.0], [1.0, 2.0, 1.0])
    with pytest.raises(MultipleCrossingsError) as err:
        gait_transition(walk, trot)
    assert np.allclose(sorted(err.value.crossings), [0.25, 0.75], atol=1e-4)


def test_transition_fixture_pair():
    walk = fixture_curve("cot_fixed_walk")
    trot = fixture_curve("cot_fixed_trot")
    assert (walk.gait, walk.strategy) == ("walk", "fixed")
    assert gait_transition(walk, trot) == pytest.approx(0.2415, abs=1e-4)


def test_transition_regrid_invariance():
    walk = fixture_curve("cot_fixed_walk")
    trot = fixture_curve("cot_fixed_trot")
    base = gait_transition(walk, trot)
    vv = np.linspace(0.15, 0.40, 251)
    fine_w = CotCurve("walk", "fixed", vv, np.interp(vv, walk.velocities, walk.cot), np.interp(vv, walk.velocities, walk.cot_no_spine))
    fine_t = CotCurve("trot", "fixed", vv, np.interp(vv, trot.velocities, trot.cot), np.interp(vv, trot.velocities, trot.cot_no_spine))
    assert gait_transition(fine_w, fine_t) == pytest.approx(base, abs=1e-3)


# ---------------------------------------------------------------------------
# Hildebrand grids


def commanded_log(schedule, n_cycles, delay=0.0, dt=0.005):
    """Synthetic log whose contact flags follow the commanded pattern,
    optionally delayed by a fraction of the cycle.

    Phase comes from the row index, not from t % t_cycle, so rows sitting
    exactly on phase boundaries get the same flag in every cycle.
    """
    per_cycle = int(round(schedule.t_cycle / dt))
    rows = int(round(n_cycles * per_cycle))
    shift = int(round(delay * per_cycle))
    log = blank_log(rows, dt=dt)
    for k in range(rows):
        phi = ((k - shift) % per_cycle) / per_cycle
        for i, leg in enumerate(("fl", "fr", "rl", "rr")):
            down = in_stance(leg_phase(phi, i, schedule), schedule)
            log.data[k, col(f"contact_{leg}")] = float(down)
    return log


def test_hildebrand_matches_commanded_pattern_bitwise():
    sched = GAITS["walk"]
    grid = hildebrand(commanded_log(sched, 3), 20, sched)
    np.testing.assert_array_equal(grid.values, grid.reference.astype(float))
    assert grid.n_cycles == 3
    assert grid.n_bins == 20
    assert grid.gait == "walk"


def test_hildebrand_constant_contact_row():
    sched = GAITS["walk"]
    log = commanded_log(sched, 3)
    log.data[:, col("contact_fl")] = 1.0
    grid = hildebrand(log, 20, sched)
    assert np.all(grid.values[0] == 1.0)


def test_hildebrand_delayed_contact_is_shifted_reference():
    sched = GAITS["walk"]
    n_bins = 20
    grid = hildebrand(commanded_log(sched, 4, delay=0.1), n_bins, sched)
    shift = round(0.1 * n_bins)
    np.testing.assert_array_equal(grid.values, np.roll(grid.reference, shift, axis=1).astype(float))


def test_hildebrand_too_short():
    sched = GAITS["walk"]
    with pytest.raises(TooShortError):
        hildebrand(commanded_log(sched, 1.5), 20, sched)


def test_hildebrand_bin_limits():
    sched = GAITS["walk"]
    log = commanded_log(sched, 3)
    with pytest.raises(ValueError):
        hildebrand(log, 4, sched)  # fewer than 8 bins
    with pytest.raises(ValueError):
        hildebrand(log, 100, sched)  # finer than the log sampling


def test_hildebrand_real_walk(walk6):
    grid = hildebrand(walk6, 20, GAITS["walk"])
    assert grid.values.min() >= 0.0 and grid.values.max() <= 1.0
    assert footfall_consistency(grid) < 0.1


def test_consistency_identity_and_complement():
    sched = GAITS["walk"]
    ref = hildebrand(commanded_log(sched, 2), 20, sched).reference.astype(float)
    assert footfall_consistency(ref, ref) == 0.0
    assert footfall_consistency(1.0 - ref, ref) == 1.0
    assert footfall_consistency(np.full_like(ref, 0.5), ref) == 0.5


def test_consistency_shape_mismatch():
    with pytest.raises(ValueError):
        footfall_consistency(np.zeros((4, 10)), np.zeros((4, 12)))


def test_grid_pgm_format_and_determinism():
    vals = np.array([[0.0, 1.0], [0.5, 0.25]])
    img = grid_pgm(vals)
    assert img.startswith(b"P5\n2 2\n255\n")
    assert list(img[-4:]) == [255, 0, 128, 191]
    assert grid_pgm(vals) == img
    scaled = grid_pgm(vals, scale=3)
    assert scaled.startswith(b"P5\n6 6\n255\n")


def test_grid_svg_structure(walk6):
    grid = hildebrand(walk6, 20, GAITS["walk"])
    svg = grid_svg(grid)
    assert svg.startswith("<svg") and svg.endswith("</svg>")
    assert ">fl<" in svg and ">rr<" in svg
    assert svg == grid_svg(grid)


# ---------------------------------------------------------------------------
# strategy scoring


def test_weight_presets():
    assert astuple(CostWeights()) == (50.0, 50.0, 50.0, 10.0, 4.0, 4.0, 0.1, 1.0 / 800.0, 10.0, 0.0, 0.002)
    stiff = CostWeights.for_strategy("stiffness")
    assert stiff.spine_error == 0.0
    assert stiff.spine_range == -2.0
    assert replace(stiff, spine_error=10.0, spine_range=0.0) == CostWeights()
    assert CostWeights.for_strategy("time_opt") == CostWeights()


def test_cost_perfect_tracking_reduces_to_power():
    log = blank_log(200)
    log.data[:, col("base_z")] = MODEL.stand_height
    log.data[:, col("power_fy")] = 3.0
    w = CostWeights()
    assert strategy_cost(log, w, entire=True) == pytest.approx(w.power * 3.0, rel=1e-12)


def test_cost_constant_orientation_error():
    log = blank_log(200)
    log.data[:, col("base_z")] = MODEL.stand_height
    R = rot_z(0.1)
    log.data[:, 4:13] = R.reshape(-1)
    only_rot = CostWeights(
        position=0.0, orientation=50.0, velocity=0.0, angular_velocity=0.0,
        force_sigma_fd=0.0, force_sigma_lo=0.0, force_mean=0.0, force_peak=0.0,
        spine_error=0.0, spine_range=0.0, power=0.0,
    )
    assert strategy_cost(log, only_rot, entire=True) == pytest.approx(5.0, abs=1e-9)


def test_cost_spine_targets():
    log = blank_log(200)
    log.data[:, col("base_z")] = MODEL.stand_height
    log.data[:, col("q_fy")] = 0.05
    terms_neutral = cost_terms(log, entire=True)
    assert terms_neutral["spine_error"] == pytest.approx(0.05, abs=1e-12)
    targets = np.zeros((200, 4))
    targets[:, 0] = 0.05
    terms_tracked = cost_terms(log, targets, entire=True)
    assert terms_tracked["spine_error"] == 0.0


def test_cost_stiffness_row_rewards_spine_range():
    still = blank_log(400)
    still.data[:, col("base_z")] = MODEL.stand_height
    moving = blank_log(400)
    moving.data[:, col("base_z")] = MODEL.stand_height
    moving.data[:, col("q_fy")] = 0.1 * np.sin(np.linspace(0.0, 4.0 * np.pi, 400))
    w = CostWeights.for_strategy("stiffness")
    assert strategy_cost(moving, w, entire=True) < strategy_cost(still, w, entire=True)


def test_cost_linear_in_each_weight(walk6):
    terms = cost_terms(walk6)
    base = CostWeights()
    cost = strategy_cost(walk6, base)
    scale = max(abs(cost), 1.0)
    for name, value in terms.items():
        bumped = replace(base, **{name: getattr(base, name) + 1.0})
        got = strategy_cost(walk6, bumped)
        assert abs(got - (cost + value)) < 1e-12 * scale, name


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-10.0, 10.0), min_size=11, max_size=11))
def test_cost_is_dot_product_of_terms(ws):
    log = blank_log(64)
    log.data[:, col("base_z")] = MODEL.stand_height
    log.data[:, col("base_vx")] = 0.2
    log.data[:, col("cmd_vx")] = 0.2
    log.data[:, col("f_fl_z")] = np.linspace(5.0, 12.0, 64)
    log.data[:, col("q_ry")] = 0.02
    log.data[:, col("power_rz")] = 1.5
    names = [f.name for f in CostWeights.__dataclass_fields__.values()]
    w = CostWeights(**dict(zip(names, ws)))
    terms = cost_terms(log, entire=True)
    expect = sum(ws[i] * terms[names[i]] for i in range(11))
    assert strategy_cost(log, w, entire=True) == pytest.approx(expect, rel=1e-12, abs=1e-12)


def test_cost_real_log_term_sanity(walk6):
    terms = cost_terms(walk6)
    # fixed-spine walk: spine terms exactly zero, tracking errors small
    assert terms["spine_error"] == 0.0
    assert terms["spine_range"] == 0.0
    assert terms["power"] == 0.0
    assert terms["position"] < 0.05
    assert terms["velocity"] < 0.05
    assert terms["force_mean"] > 0.0
    assert terms["force_peak"] >= terms["force_mean"]
    assert terms["force_sigma_fd"] == terms["force_sigma_lo"]
