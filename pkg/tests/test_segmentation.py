import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cirsharp import segmentation as sg
from cirsharp.errors import DataError, UnsegmentableError
from cirsharp.segmentation import ChangePointSet, Segmentation


def brute_force_contrast(x, k, min_len):
    """Minimal sum of len * log(var) over every split into k segments."""
    n = len(x)
    best, best_cuts = np.inf, None
    for cuts in itertools.combinations(range(min_len, n - min_len + 1), k - 1):
        edges = (0, *cuts, n)
        if any(b - a < min_len for a, b in zip(edges, edges[1:])):
            continue
        total = sum((b - a) * np.log(np.var(x[a:b])) for a, b in zip(edges, edges[1:]))
        if total < best:
            best, best_cuts = total, cuts
    return best, best_cuts


def check_partition(seg, n):
    assert seg.boundaries[0][0] == 1
    assert seg.boundaries[-1][1] == n
    for (_, e0), (s1, _) in zip(seg.boundaries, seg.boundaries[1:]):
        assert s1 == e0 + 1


# ---------------------------------------------------------------- fixed / merge


def test_fixed_partition_68_by_8():
    seg = sg.fixed_partition(68, 8)
    assert seg.boundaries == ((1, 8), (9, 16), (17, 24), (25, 32), (33, 40),
                              (41, 48), (49, 56), (57, 68))
    assert seg.sizes[-1] == 12


def test_fixed_partition_small():
    assert sg.fixed_partition(16, 8).boundaries == ((1, 8), (9, 16))
    assert sg.fixed_partition(9, 8).boundaries == ((1, 9),)
    with pytest.raises(DataError):
        sg.fixed_partition(7, 8)


@given(st.integers(2, 300), st.integers(2, 40))
def test_fixed_partition_property(n, m):
    if m > n:
        return
    seg = sg.fixed_partition(n, m)
    check_partition(seg, n)
    assert all(s == m for s in seg.sizes[:-1])
    assert m <= seg.sizes[-1] <= 2 * m - 1


def test_merge_groups_four_group_layout():
    seg = sg.merge_groups(sg.fixed_partition(68, 8), [(3, 4, 5, 6, 7)])
    assert seg.boundaries == ((1, 8), (9, 16), (17, 56), (57, 68))
    assert seg.source == "anova_merged"


def test_merge_groups_identity_and_errors():
    seg = sg.fixed_partition(68, 8)
    assert sg.merge_groups(seg, []) == seg
    with pytest.raises(ValueError):
        sg.merge_groups(seg, [(1, 3)])
    with pytest.raises(ValueError):
        sg.merge_groups(seg, [(8, 9)])


def test_auto_merge_joins_equal_means(rng):
    x = np.concatenate([rng.normal(1, 0.1, 16), rng.normal(3, 0.1, 16)])
    seg = sg.auto_merge(x, sg.fixed_partition(32, 8))
    assert seg.boundaries == ((1, 16), (17, 32))


def test_segmentation_validation():
    with pytest.raises(ValueError):
        Segmentation(((2, 5),))
    with pytest.raises(ValueError):
        Segmentation(((1, 4), (6, 8)))
    with pytest.raises(ValueError):
        ChangePointSet((5, 5))


# ---------------------------------------------------------------- change points


@pytest.mark.parametrize("seed", range(5))
def test_dp_matches_brute_force(seed):
    x = np.random.default_rng(seed).standard_normal(22) * np.repeat([1, 3, 0.5], [8, 7, 7])
    contrasts, ends = sg.optimal_segmentations(x, 3, 4)
    for k in (1, 2, 3):
        best, cuts = brute_force_contrast(x, k, 4)
        assert contrasts[k - 1] == pytest.approx(best, rel=1e-10, abs=1e-10)
        assert ends[k - 1] == cuts


def test_planted_break_at_only_feasible_split():
    rng = np.random.default_rng(3)
    x = np.concatenate([rng.standard_normal(7), 10 * rng.standard_normal(7)])
    assert sg.detect_change_points(x, 2, 7).points == (7,)


def test_k_max_one_gives_no_points(rng):
    assert sg.detect_change_points(rng.standard_normal(40), 1, 7).points == ()


def test_short_series_rejected():
    with pytest.raises(DataError):
        sg.detect_change_points(np.arange(10.0), 3, 7)


@given(st.integers(0, 10_000), st.floats(-50, 50))
def test_change_points_shift_invariant(seed, c):
    x = np.random.default_rng(seed).standard_normal(40) * np.repeat([1, 4], 20)
    a = sg.detect_change_points(x, 4, 7).points
    b = sg.detect_change_points(x + c, 4, 7).points
    assert a == b


@given(st.integers(0, 10_000), st.integers(2, 10))
def test_change_point_invariants(seed, min_len):
    x = np.random.default_rng(seed).standard_normal(60)
    cps = sg.detect_change_points(x, 6, min_len)
    assert all(min_len <= p <= 60 - min_len for p in cps.points)
    seg = cps.segmentation(60)
    check_partition(seg, 60)
    assert min(seg.sizes) >= min_len


# ---------------------------------------------------------------- adjustment


def test_adjust_always_accept():
    pts = ChangePointSet((10, 20))
    seg = sg.adjust_change_points(np.zeros(30), pts, lambda s, e: True)
    assert seg.boundaries == ((1, 10), (11, 20), (21, 30))


def test_adjust_rejects_last_index_of_first_segment():
    pts = ChangePointSet((10, 20))
    hook = lambda s, e: not (s == 1 and e == 10)
    seg = sg.adjust_change_points(np.zeros(30), pts, hook)
    # first boundary moves left by one; the next group starts right after it
    assert seg.boundaries == ((1, 9), (10, 20), (21, 30))


def test_adjust_floor_advances_to_next_point():
    pts = ChangePointSet((10, 20, 30))
    calls = []

    def hook(s, e):
        calls.append((s, e))
        return not (s == 11 and e <= 20)  # middle segment fails at every length

    seg = sg.adjust_change_points(np.zeros(40), pts, hook)
    assert seg.boundaries == ((1, 10), (11, 30), (31, 40))
    assert (11, 17) in calls and (11, 16) not in calls  # floor at min length 7


def test_adjust_unsegmentable():
    with pytest.raises(UnsegmentableError, match="starting at 1"):
        sg.adjust_change_points(np.zeros(30), ChangePointSet((10,)), lambda s, e: False)


@given(st.lists(st.integers(7, 53), unique=True, max_size=5), st.integers(0, 2 ** 32))
def test_adjust_never_shorter_than_min(points, salt):
    pts = ChangePointSet(tuple(sorted(points)))
    hook = lambda s, e: hash((s, e, salt)) % 3 != 0
    try:
        seg = sg.adjust_change_points(np.zeros(60), pts, hook, 7)
    except UnsegmentableError:
        return
    check_partition(seg, 60)
    assert min(seg.sizes) >= 7
