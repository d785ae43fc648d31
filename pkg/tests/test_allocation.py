import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roi_auction import (
    AllocationRule,
    ConstructionError,
    DescriptorError,
    DomainError,
    allocation_from_descriptor,
    make_constant,
    make_piecewise_constant,
    make_power_ramp,
    make_step,
    make_table,
    random_monotone_rule,
    random_nonmonotone_rule,
)
from roi_auction.allocation import Linear, Segment
from oracles import simpson_integral

STEP = make_step(0.4, 1.0)
RAMP = make_power_ramp(0.75, 2.0)  # x = (4/3) v below 0.75, then 1
STAIRS = make_piecewise_constant([0.2, 0.6], [0.0, 0.5, 1.0], 1.0)
TABLE = make_table([(0.0, 0.0), (0.3, 0.2), (0.6, 0.2), (1.0, 1.0)])


def test_step_is_right_continuous():
    assert STEP.evaluate(0.4) == 1.0
    assert STEP.left_value(0.4) == 0.0
    assert STEP.evaluate(0.4 - 1e-9) == 0.0
    assert STEP.jump_points() == ((0.4, 0.0, 1.0),)


def test_prefix_integral_closed_forms():
    assert STEP.prefix_integral(0.7) == pytest.approx(0.3, abs=1e-15)
    assert STEP.prefix_integral(1.0) == pytest.approx(0.6, abs=1e-15)
    assert STEP.prefix_integral(0.4) == pytest.approx(0.0, abs=1e-15)
    # ramp: (4/3) v^2 / 2 below the threshold
    assert RAMP.prefix_integral(0.75) == pytest.approx((4 / 3) * 0.75**2 / 2, abs=1e-15)
    assert RAMP.prefix_integral(0.6) == pytest.approx(0.24, abs=1e-15)
    assert STAIRS.prefix_integral(1.0) == pytest.approx(0.4 * 0.5 + 0.4, abs=1e-15)


def test_ramp_slope_value():
    v = np.asarray([0.15, 0.3, 0.6])
    assert np.allclose(RAMP.evaluate(v), (4 / 3) * v, atol=1e-15)
    assert RAMP.evaluate(0.75) == 1.0
    assert RAMP.evaluate(0.9) == 1.0


@pytest.mark.parametrize("seed", range(25))
def test_prefix_integral_matches_simpson_per_segment(seed):
    rule = random_monotone_rule(seed)
    for seg in rule.segments:
        def f(t, hi=seg.hi):
            return rule.left_value(t) if t == hi else float(rule.evaluate(t))

        want = simpson_integral(f, seg.lo, seg.hi, 801)
        got = float(rule.prefix_integral(seg.hi) - rule.prefix_integral(seg.lo))
        assert got == pytest.approx(want, abs=1e-8)


@pytest.mark.parametrize("seed", range(25))
def test_random_monotone_rules_are_monotone_and_bounded(seed):
    rule = random_monotone_rule(seed)
    report = rule.check_monotone()
    assert report.passed, report.to_dict()
    grid = np.linspace(0.0, rule.vmax, 501)
    x = rule.evaluate(grid)
    assert np.all(x >= 0.0) and np.all(x <= 1.0)


@pytest.mark.parametrize("seed", range(10))
def test_nonmonotone_rules_are_flagged_with_witness(seed):
    rule = random_nonmonotone_rule(seed)
    report = rule.check_monotone()
    assert not report.passed
    assert report.worst_violation > 0.0
    assert 0.0 <= report.at_v <= rule.vmax


@given(st.integers(0, 10_000), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
@settings(max_examples=60, deadline=None)
def test_evaluate_never_decreases(seed, a, b):
    rule = random_monotone_rule(seed % 100)
    lo, hi = min(a, b), max(a, b)
    assert rule.evaluate(lo) <= rule.evaluate(hi) + 1e-12


def test_with_floor_prepends_flat_run():
    floored = RAMP.with_floor(0.1)
    # the ramp reaches 0.1 at v = 0.075
    assert floored.evaluate(0.0) == pytest.approx(0.1)
    assert floored.evaluate(0.05) == pytest.approx(0.1)
    assert floored.evaluate(0.075) == pytest.approx(0.1)
    assert floored.evaluate(0.2) == pytest.approx(RAMP.evaluate(0.2))
    assert floored.check_monotone().passed
    # integral gains exactly the area between floor and ramp head
    area = 0.1 * 0.075 - (4 / 3) * 0.075**2 / 2
    assert floored.prefix_integral(1.0) == pytest.approx(RAMP.prefix_integral(1.0) + area)


def test_with_floor_on_table_rule():
    floored = TABLE.with_floor(0.2)
    assert floored.evaluate(0.0) == pytest.approx(0.2)
    assert floored.evaluate(0.45) == pytest.approx(0.2)
    assert floored.evaluate(0.8) == pytest.approx(TABLE.evaluate(0.8))
    assert floored.check_monotone().passed


def test_with_floor_above_everything_gives_constant():
    flat = STEP.with_floor(1.0)
    assert flat.evaluate(0.1) == 1.0


def test_constructor_guards():
    with pytest.raises(ConstructionError):
        make_step(1.0, 1.0)  # threshold must sit strictly below vmax
    with pytest.raises(ConstructionError):
        make_step(-0.1, 1.0)
    with pytest.raises(ConstructionError):
        make_piecewise_constant([0.5], [0.8, 0.2], 1.0)  # decreasing levels
    with pytest.raises(ConstructionError):
        make_table([(0.0, 0.5), (0.5, 0.2), (1.0, 1.0)])
    with pytest.raises(ConstructionError):
        make_power_ramp(0.5, 1.0)  # ratio must exceed 1
    with pytest.raises(ConstructionError):
        AllocationRule(1.0, (Segment(0.0, 0.4, Linear(1.0, 0.0)),))  # gap before vmax


def test_step_at_zero_is_constant_one():
    rule = make_step(0.0, 1.0)
    assert rule.evaluate(0.0) == 1.0
    assert rule.jump_points() == ()


def test_evaluation_outside_support_fails():
    with pytest.raises(DomainError):
        STEP.evaluate(1.5)
    with pytest.raises(DomainError):
        STEP.prefix_integral(-0.3)


def test_stationary_candidates_for_sub_two_ratios():
    # x = v - 0.4 on [0.4, 1]: g'(z) = 0 at z = -0.4 / (1 * (1.5 - 2)) = 0.8
    rule = AllocationRule(
        1.0,
        (Segment(0.0, 0.4, Linear(0.0, 0.0)), Segment(0.4, 1.0, Linear(1.0, -0.4))),
    )
    assert 0.8 in rule.stationary_candidates(1.5)
    # for ratio 2 the candidate disappears (g is monotone on linear pieces)
    assert all(abs(z - 0.8) > 1e-9 for z in rule.stationary_candidates(2.0))


@pytest.mark.parametrize("rule", [STEP, RAMP, STAIRS, TABLE], ids=["step", "ramp", "stairs", "table"])
def test_descriptor_round_trip(rule):
    again = allocation_from_descriptor(rule.descriptor())
    grid = np.linspace(0.0, rule.vmax, 97)
    assert np.array_equal(again.evaluate(grid), rule.evaluate(grid))
    assert again.descriptor() == rule.descriptor()


def test_descriptor_rejects_malformed():
    good = STEP.descriptor()
    with pytest.raises(DescriptorError):
        allocation_from_descriptor({**good, "extra": 1})
    with pytest.raises(DescriptorError):
        allocation_from_descriptor({"vmax": 1.0})
    bad_shape = {
        "vmax": 1.0,
        "segments": [{"lo": 0.0, "hi": 1.0, "shape": {"type": "wiggle"}}],
    }
    with pytest.raises(DescriptorError):
        allocation_from_descriptor(bad_shape)


def test_descriptor_rejects_bad_tiling():
    desc = {
        "vmax": 1.0,
        "segments": [
            {"lo": 0.0, "hi": 0.5, "shape": {"type": "constant", "level": 0.0}},
            {"lo": 0.6, "hi": 1.0, "shape": {"type": "constant", "level": 1.0}},
        ],
    }
    with pytest.raises(ConstructionError):
        allocation_from_descriptor(desc)


def test_knots_cover_segment_joins_and_table_vertices():
    assert set(STAIRS.knots()) == {0.0, 0.2, 0.6, 1.0}
    assert set(TABLE.knots()) == {0.0, 0.3, 0.6, 1.0}
