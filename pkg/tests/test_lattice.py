"""Grid, rectangle, prefix-table and enumeration tests.

Frozen values are either asserted from the definitions directly or
recomputed here by brute force (itertools / plain python sums) so the
numpy paths have an independent check.
"""

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strongmax import (
    DomainError,
    GridSpec,
    InvariantViolation,
    PrefixTable,
    Rectangle,
    RectangleFamily,
    ScalarField,
    box_sum,
    count_rectangles,
    enumerate_intervals,
    enumerate_rectangles,
    grid_from_config,
    grid_to_config,
    lebesgue_volume,
    load_grid_config,
    random_rectangle,
    weighted_volume,
)
from strongmax.weights import make_power_weight


# ---------------------------------------------------------------------------
# intervals


def test_interval_enumeration_three_cells():
    # hand enumeration of the closed subintervals of [0, 2]
    assert list(enumerate_intervals(0, 2)) == [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


def test_interval_enumeration_containing_marked_cell():
    # of the six, exactly the four meeting cell 1
    assert list(enumerate_intervals(0, 2, containing=1)) == [(0, 1), (0, 2), (1, 1), (1, 2)]


def test_interval_enumeration_dyadic():
    # lengths restricted to 1, 2, 4 inside [0, 3]
    got = list(enumerate_intervals(0, 3, dyadic_only=True))
    assert got == [(0, 0), (0, 1), (0, 3), (1, 1), (1, 2), (2, 2), (2, 3), (3, 3)]


def test_interval_enumeration_rejects_bad_inputs():
    with pytest.raises(DomainError):
        list(enumerate_intervals(2, 1))
    with pytest.raises(DomainError):
        list(enumerate_intervals(0, 2, containing=5))


@given(lo=st.integers(-20, 20), width=st.integers(1, 30))
def test_interval_count_closed_form(lo, width):
    hi = lo + width - 1
    got = list(enumerate_intervals(lo, hi))
    assert len(got) == width * (width + 1) // 2
    assert len(set(got)) == len(got)
    assert got == sorted(got, key=lambda ab: (ab[0], ab[1] - ab[0]))
    assert all(lo <= a <= b <= hi for a, b in got)


@given(lo=st.integers(-10, 10), width=st.integers(1, 20), data=st.data())
def test_interval_containing_is_membership_filter(lo, width, data):
    hi = lo + width - 1
    c = data.draw(st.integers(lo, hi))
    expect = [(a, b) for a, b in enumerate_intervals(lo, hi) if a <= c <= b]
    assert list(enumerate_intervals(lo, hi, containing=c)) == expect


# ---------------------------------------------------------------------------
# grids


def test_cube_grid_shape():
    g = GridSpec.cube(1, 3)
    assert g.d == 3
    assert g.extents == ((0, 2), (0, 2), (0, 2))
    assert g.factors == (1, 1)
    assert g.mu == 1
    assert g.shape == (3, 3, 3)
    assert g.cell_count == 27
    assert g.t_axis == 2


def test_grid_factor_bookkeeping():
    g = GridSpec(n=2, extents=((0, 3), (0, 3), (0, 2), (0, 2), (-1, 1)), factors=(2, 2), mu=2)
    assert g.factor_starts == (0, 2)
    assert list(g.factor_axes(0)) == [0, 1]
    assert list(g.factor_axes(1)) == [2, 3]
    assert g.factor_of_axis == (0, 0, 1, 1)
    # cube cap is the tightest extent width within the factor
    assert g.cube_cap(0) == 4
    assert g.cube_cap(1) == 3
    assert g.spatial_shape == (4, 4, 3, 3)
    assert g.t_len == 3


def test_grid_validation():
    with pytest.raises(DomainError):
        GridSpec(n=0, extents=((0, 1),), factors=(), mu=1)
    with pytest.raises(DomainError):
        GridSpec(n=1, extents=((0, 1), (1, 0), (0, 1)), factors=(1, 1), mu=1)
    with pytest.raises(DomainError):
        GridSpec(n=1, extents=((0, 1),) * 3, factors=(1,), mu=1)  # factors must sum to 2n
    with pytest.raises(DomainError):
        GridSpec.cube(1, 2**31)  # shear offsets would leave the exact-integer range


def test_grid_contains():
    g = GridSpec.cube(1, 3)
    assert g.contains((0, 0, 0)) and g.contains((2, 2, 2))
    assert not g.contains((3, 0, 0))
    assert not g.contains((0, -1, 0))


def test_grid_config_round_trip(tmp_path):
    g = GridSpec(n=2, extents=((0, 3), (0, 3), (0, 2), (0, 2), (-1, 1)), factors=(2, 2), mu=3)
    assert grid_from_config(grid_to_config(g)) == g
    p = tmp_path / "grid.json"
    p.write_text(json.dumps(grid_to_config(g)))
    assert load_grid_config(p) == g
    # integer extents shorthand: cube of that size
    assert grid_from_config({"n": 1, "extents": 3, "mu": 1}) == GridSpec.cube(1, 3)


# ---------------------------------------------------------------------------
# rectangles


def test_rectangle_volume_and_bounds():
    r = Rectangle.from_bounds([(1, 2), (0, 1), (4, 6)], (1, 1))
    assert r.sides == (2, 2)
    assert r.t_len == 3
    assert r.volume == 12
    assert lebesgue_volume(r) == 12
    assert r.bounds == ((1, 2), (0, 1), (4, 6))


def test_rectangle_cube_condition():
    # axes of one factor must share their side
    with pytest.raises(DomainError):
        Rectangle.from_bounds([(0, 1), (0, 2), (0, 0)], (2,))
    r = Rectangle.from_bounds([(0, 1), (2, 3), (0, 0)], (2,))
    assert r.cubes == (((0, 2), 2),)
    assert r.spatial_cells == 4


def test_rectangle_membership_and_slices():
    g = GridSpec.cube(1, 4)
    r = Rectangle.from_bounds([(1, 2), (0, 3), (2, 3)], (1, 1))
    assert r.within(g)
    assert r.contains((1, 0, 2)) and not r.contains((0, 0, 2))
    assert r.slices(g) == (slice(1, 3), slice(0, 4), slice(2, 4))
    shifted = Rectangle.from_bounds([(3, 4), (0, 1), (0, 1)], (1, 1))
    assert not shifted.within(g)
    with pytest.raises(DomainError):
        shifted.slices(g)
    assert shifted.clipped_slices(g) == (slice(3, 4), slice(0, 2), slice(0, 2))
    far = Rectangle.from_bounds([(7, 8), (0, 1), (0, 1)], (1, 1))
    assert far.clipped_slices(g) is None


def test_rectangle_rejects_empty_intervals():
    with pytest.raises(DomainError):
        Rectangle.from_bounds([(1, 0), (0, 0), (0, 0)], (1, 1))
    with pytest.raises(DomainError):
        Rectangle.from_bounds([(0, 0), (0, 0), (3, 1)], (1, 1))


# ---------------------------------------------------------------------------
# enumeration and counting


def test_rectangle_count_three_cube():
    # three independent axes, six intervals each
    g = GridSpec.cube(1, 3)
    rects = list(enumerate_rectangles(g))
    assert len(rects) == 216
    assert count_rectangles(g) == 216
    assert len(set(rects)) == 216
    assert all(r.within(g) for r in rects)


def test_rectangle_count_matches_enumeration_on_mixed_grids():
    for g in [
        GridSpec.cube(1, 4),
        GridSpec(n=1, extents=((0, 2), (0, 3), (-1, 2)), factors=(1, 1), mu=1),
        GridSpec(n=2, extents=((0, 2), (0, 2), (0, 1), (0, 1), (0, 1)), factors=(2, 2), mu=1),
    ]:
        assert count_rectangles(g) == len(list(enumerate_rectangles(g)))
        assert count_rectangles(g, dyadic_only=True) == len(
            list(enumerate_rectangles(g, dyadic_only=True))
        )


def test_enumeration_containing_filter():
    g = GridSpec(n=1, extents=((0, 2), (0, 3), (-1, 1)), factors=(1, 1), mu=1)
    x = (1, 2, 0)
    whole = list(enumerate_rectangles(g))
    holding = list(enumerate_rectangles(g, containing=x))
    assert holding == [r for r in whole if r.contains(x)]
    with pytest.raises(DomainError):
        list(enumerate_rectangles(g, containing=(9, 9, 9)))


def test_enumeration_cube_condition_on_two_factor_axes():
    g = GridSpec(n=2, extents=((0, 2), (0, 2), (0, 1), (0, 1), (0, 0)), factors=(2, 2), mu=1)
    for r in enumerate_rectangles(g):
        (b0, s0), (b1, s1) = r.cubes
        assert len(b0) == 2 and len(b1) == 2
        widths0 = {hi - lo + 1 for lo, hi in r.bounds[:2]}
        widths1 = {hi - lo + 1 for lo, hi in r.bounds[2:4]}
        assert widths0 == {s0} and widths1 == {s1}


# ---------------------------------------------------------------------------
# prefix tables


def _brute_box_sum(vals, grid, r):
    s = r.slices(grid)
    total = 0.0
    for idx in itertools.product(*[range(sl.start, sl.stop) for sl in s]):
        total += float(vals[idx])
    return total


def test_box_sum_against_plain_loops():
    rng = np.random.default_rng(71)
    g = GridSpec(n=1, extents=((0, 3), (-2, 1), (0, 2)), factors=(1, 1), mu=1)
    vals = rng.integers(-5, 6, size=g.shape).astype(np.float64)
    table = PrefixTable(g, vals)
    for _ in range(50):
        r = random_rectangle(g, rng)
        assert box_sum(table, r) == _brute_box_sum(vals, g, r)


def test_box_sum_of_field():
    g = GridSpec.cube(1, 3)
    f = ScalarField.point_mass(g, (1, 1, 1), height=2.0)
    table = PrefixTable.of_field(f)
    whole = Rectangle.from_bounds([(0, 2)] * 3, (1, 1))
    assert box_sum(table, whole) == 2.0
    corner = Rectangle.from_bounds([(0, 0), (0, 0), (0, 0)], (1, 1))
    assert box_sum(table, corner) == 0.0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_box_sum_random_grids(seed):
    rng = np.random.default_rng(seed)
    widths = rng.integers(2, 5, size=3)
    lows = rng.integers(-3, 3, size=3)
    g = GridSpec(
        n=1,
        extents=tuple((int(lo), int(lo + wdt - 1)) for lo, wdt in zip(lows, widths)),
        factors=(1, 1),
        mu=1,
    )
    vals = rng.integers(0, 9, size=g.shape).astype(np.float64)
    table = PrefixTable(g, vals)
    r = random_rectangle(g, rng)
    assert box_sum(table, r) == _brute_box_sum(vals, g, r)


# ---------------------------------------------------------------------------
# fields


def test_scalar_field_sampling():
    g = GridSpec.cube(1, 3)
    f = ScalarField.point_mass(g, (1, 2, 0), height=3.5)
    assert f.sample((1, 2, 0)) == 3.5
    assert f.sample((0, 0, 0)) == 0.0
    assert f.sample((5, 5, 5)) == 0.0  # zero off the extents
    coords = np.array([[1, 2, 0], [5, 5, 5], [-1, 0, 0], [2, 2, 2]])
    np.testing.assert_array_equal(f.sample_many(coords), [3.5, 0.0, 0.0, 0.0])


def test_scalar_field_shape_check():
    g = GridSpec.cube(1, 3)
    with pytest.raises(DomainError):
        ScalarField(g, np.zeros((2, 2, 2)))


def test_scalar_field_values_are_read_only():
    g = GridSpec.cube(1, 3)
    f = ScalarField.zeros(g)
    with pytest.raises(ValueError):
        f.values[0, 0, 0] = 1.0


def test_weighted_volume():
    g = GridSpec(n=1, extents=((0, 3), (0, 0), (0, 0)), factors=(1, 1), mu=1)
    w = make_power_weight(g, (1.0, 0.0))
    r = Rectangle.from_bounds([(0, 3), (0, 0), (0, 0)], (1, 1))
    # u profile is |c + 1/2|: 0.5 + 1.5 + 2.5 + 3.5
    assert weighted_volume(w, r) == 8.0

    class _Degenerate:
        def rectangle_cell_weights(self, r):
            return np.zeros(r.volume)

    with pytest.raises(InvariantViolation):
        weighted_volume(_Degenerate(), r)


# ---------------------------------------------------------------------------
# families


def test_family_caps_and_margins():
    g = GridSpec.cube(1, 3)
    fam = RectangleFamily(g)
    assert fam.max_sides == (3, 3)
    assert fam.max_t_len == 3
    assert fam.margins() == (2, 2)
    assert fam.side_choices(0) == [1, 2, 3]
    assert fam.t_len_choices() == [1, 2, 3]


def test_family_membership_count_three_cube():
    # anchored members per axis: sum of side choices 1 + 2 + 3 = 6
    g = GridSpec.cube(1, 3)
    fam = RectangleFamily(g)
    assert fam.count_containing() == 216
    rects = list(fam.rectangles_containing((0, 0, 0)))
    assert len(rects) == 216
    assert len(set(rects)) == 216
    assert all(r.contains((0, 0, 0)) for r in rects)
    # translation invariance: the anchored count is position-free
    assert len(list(fam.rectangles_containing((2, 1, 0)))) == 216


def test_family_dyadic_count():
    g = GridSpec.cube(1, 5)
    fam = RectangleFamily(g, dyadic_only=True)
    assert fam.side_choices(0) == [1, 2, 4]
    # 1 + 2 + 4 anchored positions per axis
    assert fam.count_containing() == 343


def test_family_members_may_overhang():
    g = GridSpec.cube(1, 3)
    fam = RectangleFamily(g)
    rects = list(fam.rectangles_containing((0, 0, 0)))
    assert any(not r.within(g) for r in rects)
    assert any(min(lo for lo, _ in r.bounds) < 0 for r in rects)


def test_family_side_cap_override():
    g = GridSpec.cube(1, 5)
    fam = RectangleFamily(g, max_sides=(2, 3), max_t_len=1)
    assert fam.max_sides == (2, 3)
    assert fam.max_t_len == 1
    assert fam.count_containing() == (1 + 2) * (1 + 2 + 3) * 1
    with pytest.raises(DomainError):
        RectangleFamily(g, max_sides=(2,))


def test_random_rectangle_respects_grid():
    rng = np.random.default_rng(5)
    g = GridSpec(n=1, extents=((0, 4), (-2, 2), (0, 3)), factors=(1, 1), mu=1)
    for _ in range(100):
        r = random_rectangle(g, rng)
        assert r.within(g)
    for _ in range(100):
        r = random_rectangle(g, rng, max_sides=(2, 2), max_t_len=1)
        assert max(r.sides) <= 2 and r.t_len == 1
