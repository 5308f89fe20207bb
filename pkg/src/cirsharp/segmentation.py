"""Partitioning a series into contiguous groups.

Indices in `Segmentation.boundaries` and `ChangePointSet.points` are 1-based
and inclusive, matching how groups are reported ("1-8", "9-16", ...).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, UnsegmentableError
from .stats import one_way_anova

log = logging.getLogger(__name__)

DEFAULT_MIN_SEGMENT_LEN = 7
DEFAULT_K_MAX = 10
SLOPE_THRESHOLD = 0.75
SCHWARZ_PER_SEGMENT = 3.0

SOURCES = ("fixed", "anova_merged", "change_point")


@dataclass(frozen=True)
class Segmentation:
    boundaries: tuple[tuple[int, int], ...]
    source: str = "fixed"

    def __post_init__(self):
        b = tuple((int(s), int(e)) for s, e in self.boundaries)
        object.__setattr__(self, "boundaries", b)
        if self.source not in SOURCES:
            raise ValueError(f"unknown segmentation source {self.source!r}")
        if not b or b[0][0] != 1:
            raise ValueError("segmentation must start at index 1")
        for (s0, e0), (s1, e1) in zip(b, b[1:]):
            if s1 != e0 + 1:
                raise ValueError(f"groups {s0}-{e0} and {s1}-{e1} not contiguous")
        if any(e < s for s, e in b):
            raise ValueError("empty group in segmentation")

    @property
    def n(self) -> int:
        return self.boundaries[-1][1]

    @property
    def sizes(self) -> list[int]:
        return [e - s + 1 for s, e in self.boundaries]

    def __len__(self):
        return len(self.boundaries)

    def groups(self, values) -> list[np.ndarray]:
        values = np.asarray(values)
        if len(values) != self.n:
            raise ValueError(
                f"segmentation covers {self.n} points, series has {len(values)}")
        return [values[s - 1:e] for s, e in self.boundaries]

    def labels(self) -> list[str]:
        return [f"{s}-{e}" for s, e in self.boundaries]

    def check_min_len(self, min_len: int) -> None:
        short = [f"{s}-{e}" for s, e in self.boundaries if e - s + 1 < min_len]
        if short:
            raise ValueError(f"groups shorter than {min_len}: {', '.join(short)}")

    @classmethod
    def from_ends(cls, ends: Sequence[int], n: int, source: str = "fixed"):
        """Build from the last index of every group but the final one."""
        edges = [0, *ends, n]
        return cls(tuple((a + 1, b) for a, b in zip(edges, edges[1:])), source)


@dataclass(frozen=True)
class ChangePointSet:
    points: tuple[int, ...]
    penalty_used: float = 0.0

    def __post_init__(self):
        pts = tuple(int(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("change points must be strictly increasing")

    def segmentation(self, n: int) -> Segmentation:
        return Segmentation.from_ends(self.points, n, "change_point")


def fixed_partition(n: int, m: int) -> Segmentation:
    """Consecutive groups of size m; the last group absorbs the remainder."""
    if m < 2:
        raise ValueError("group size must be >= 2")
    if m > n:
        raise DataError(f"group size {m} exceeds series length {n}")
    count = n // m
    ends = [m * (j + 1) for j in range(count - 1)]
    return Segmentation.from_ends(ends, n, "fixed")


def merge_groups(seg: Segmentation, merges: Sequence[Sequence[int]]) -> Segmentation:
    """Merge runs of adjacent groups.

    Each entry of `merges` lists 1-based group numbers that must be
    consecutive, e.g. ``[(3, 4, 5, 6, 7)]``; a pair ``(a, b)`` with b > a + 1
    is *not* expanded and fails the adjacency check.
    """
    if not merges:
        return seg
    owner = list(range(len(seg)))
    for run in merges:
        run = sorted(int(g) for g in run)
        if not run or run[0] < 1 or run[-1] > len(seg):
            raise ValueError(f"merge {run} references unknown groups")
        if any(b != a + 1 for a, b in zip(run, run[1:])):
            raise ValueError(f"merge {run} is not a run of adjacent groups")
        for g in run[1:]:
            owner[g - 1] = owner[run[0] - 1]
    bounds = []
    for j, (s, e) in enumerate(seg.boundaries):
        if bounds and owner[j] == owner[j - 1]:
            bounds[-1] = (bounds[-1][0], e)
        else:
            bounds.append((s, e))
    return Segmentation(tuple(bounds), "anova_merged")


def auto_merge(values, seg: Segmentation, alpha: float = 0.05) -> Segmentation:
    """Greedily merge adjacent groups whose pairwise ANOVA p-value exceeds alpha.

    The pair with the largest p-value is merged first; stops when every
    adjacent pair differs significantly.
    """
    values = np.asarray(values, dtype=float)
    bounds = list(seg.boundaries)
    while len(bounds) > 1:
        best, best_p = None, alpha
        for j in range(len(bounds) - 1):
            (s0, e0), (s1, e1) = bounds[j], bounds[j + 1]
            try:
                p = one_way_anova([values[s0 - 1:e0], values[s1 - 1:e1]]).p_value
            except ArithmeticError:
                p = 1.0  # identical constant groups
            if p > best_p:
                best, best_p = j, p
        if best is None:
            break
        bounds[best:best + 2] = [(bounds[best][0], bounds[best + 1][1])]
    return Segmentation(tuple(bounds), "anova_merged")


def _segment_costs(x: np.ndarray, min_len: int) -> np.ndarray:
    """cost[i, j] = len * log(var) of x[i:j] (0-based half-open), inf if short."""
    n = len(x)
    c1 = np.concatenate([[0.0], np.cumsum(x)])
    c2 = np.concatenate([[0.0], np.cumsum(x * x)])
    floor = 1e-12 * max(np.var(x), 1e-300)
    cost = np.full((n + 1, n + 1), np.inf)
    for i in range(n):
        j = np.arange(i + min_len, n + 1)
        if j.size == 0:
            continue
        length = j - i
        s1 = c1[j] - c1[i]
        s2 = c2[j] - c2[i]
        var = np.maximum(s2 / length - (s1 / length) ** 2, floor)
        cost[i, j] = length * np.log(var)
    return cost


def optimal_segmentations(x, k_max: int, min_len: int):
    """Exact least-contrast segmentations for 1..k_max segments.

    Returns (contrasts, ends) where contrasts[K-1] is the minimal total cost
    with K segments and ends[K-1] the 1-based last indices of its first K-1
    segments (inf / None when K segments do not fit).
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    cost = _segment_costs(x, min_len)
    best = np.full((k_max + 1, n + 1), np.inf)
    arg = np.zeros((k_max + 1, n + 1), dtype=int)
    best[1] = cost[0]
    for k in range(2, k_max + 1):
        for j in range(k * min_len, n + 1):
            cand = best[k - 1, :j] + cost[:j, j]
            i = int(np.argmin(cand))
            best[k, j] = cand[i]
            arg[k, j] = i
    contrasts, ends = [], []
    for k in range(1, k_max + 1):
        if not np.isfinite(best[k, n]):
            contrasts.append(np.inf)
            ends.append(None)
            continue
        cuts, j = [], n
        for kk in range(k, 1, -1):
            j = arg[kk, j]
            cuts.append(j)
        contrasts.append(float(best[k, n]))
        ends.append(tuple(sorted(cuts)))
    return np.array(contrasts), ends


def select_segment_count(contrasts: np.ndarray, n: int,
                         threshold: float = SLOPE_THRESHOLD) -> int:
    """Lavielle's second-difference rule on the normalised contrast curve.

    The contrasts J_1..J_Kmax are rescaled so that J~_1 = Kmax and
    J~_Kmax = 1; the chosen K is the largest one whose second difference
    J~_{K-1} - 2 J~_K + J~_{K+1} exceeds the threshold (K = 1 if none does).
    The normalisation stretches even a pure-noise curve to full height, so
    the slope choice is then capped by a Schwarz penalty: K segments must
    lower the contrast below J_1 by more than 3 log(n) per extra segment.
    A curve with only two points has no second difference; there the
    penalty alone decides.
    """
    finite = contrasts[np.isfinite(contrasts)]
    k_max = len(finite)
    if k_max < 2 or not finite[-1] < finite[0]:
        return 1
    if k_max == 2:
        chosen = 2
    else:
        jt = (finite[-1] - finite) / (finite[-1] - finite[0]) * (k_max - 1) + 1
        chosen = 1
        for k in range(2, k_max):
            d = jt[k - 2] - 2 * jt[k - 1] + jt[k]
            if d > threshold:
                chosen = k
    pen = SCHWARZ_PER_SEGMENT * np.log(n)
    while chosen > 1 and finite[0] - finite[chosen - 1] <= pen * (chosen - 1):
        chosen -= 1
    return chosen


def detect_change_points(series, k_max: int = DEFAULT_K_MAX,
                         min_len: int = DEFAULT_MIN_SEGMENT_LEN,
                         threshold: float = SLOPE_THRESHOLD) -> ChangePointSet:
    """Changes in variance by penalised least contrast (Lavielle's method).

    The contrast is the Gaussian one, sum over segments of len * log(var),
    minimised exactly for each segment count by dynamic programming.
    """
    x = np.asarray(getattr(series, "values", series), dtype=float)
    n = len(x)
    if n < 2 * min_len:
        raise DataError(f"series of length {n} too short for min_len {min_len}")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    k_max = min(k_max, n // min_len)
    if k_max == 1:
        return ChangePointSet((), threshold)
    contrasts, ends = optimal_segmentations(x, k_max, min_len)
    k = select_segment_count(contrasts, n, threshold)
    return ChangePointSet(ends[k - 1], threshold)


GroupHook = Callable[[int, int], bool]


def adjust_change_points(series, points: ChangePointSet, hook: GroupHook,
                         min_len: int = DEFAULT_MIN_SEGMENT_LEN) -> Segmentation:
    """Move detected change points left until each group passes `hook`.

    Walks the groups left to right. For the group [start, l] ending at a
    detected point, ``hook(start, l)`` (1-based inclusive) is asked whether
    the group can be fitted; on refusal the right edge moves left one index
    at a time. If no admissible length down to `min_len` passes, the group is
    extended to the next detected point and the search restarts from there.
    The final group always ends at the series end and is not rescaled.
    """
    n = len(getattr(series, "values", series))
    targets = [p for p in points.points if min_len <= p <= n - min_len]
    ex = []
    start = 1
    idx = 0
    while idx < len(targets):
        l = targets[idx]
        floor = start + min_len - 1
        accepted = None
        while l >= floor:
            if n - l >= min_len and hook(start, l):
                accepted = l
                break
            l -= 1
        if accepted is None:
            if idx + 1 >= len(targets):
                raise UnsegmentableError(
                    f"group starting at {start} (detected end {targets[idx]}) "
                    "fails at every admissible length")
            log.info("group %d-%d unfittable; extending to next change point",
                     start, targets[idx])
            idx += 1
            continue
        ex.append(accepted)
        start = accepted + 1
        idx += 1
        while idx < len(targets) and targets[idx] < start + min_len - 1:
            idx += 1
    return Segmentation.from_ends(ex, n, "change_point")
