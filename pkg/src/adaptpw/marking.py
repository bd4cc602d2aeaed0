"""Bulk (Doerfler) marking over symmetric frequency pairs.

Marking operates on +-pairs as atoms so the refined set stays closed
under negation by construction. Greedily taking pairs in descending
contribution order until the accumulated squared estimator mass reaches
theta^2 times the total yields a marked set of minimal cardinality: any
set reaching the threshold with fewer pairs would have to beat the
largest available contributions, which is impossible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .frequency import IndexSet


class MarkingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MarkResult:
    """Outcome of one marking step.

    `marked` is symmetric and disjoint from the current index set (the
    caller only offers off-set candidates); `achieved_fraction` is
    eta(marked)/eta(total) and is >= theta on success.
    """

    marked: IndexSet
    achieved_fraction: float
    pairs_considered: int

    @property
    def pairs_marked(self) -> int:
        reps = {max(g, tuple(-x for x in g)) for g in self.marked.to_list()}
        return len(reps)


def dorfler_mark(
    contribs: Mapping[tuple[int, ...], float],
    theta: float,
    total_sq: float,
    dim: int,
) -> MarkResult:
    """Smallest set of pairs whose contribution reaches theta^2 * total_sq.

    `contribs` maps pair representatives to the pair's total squared
    estimator contribution. Ties are broken toward smaller |G|^2, then
    lexicographically, so marking is deterministic.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must be in (0, 1), got {theta}")
    if total_sq < 0.0:
        raise ValueError(f"total_sq must be >= 0, got {total_sq}")
    if total_sq == 0.0:
        return MarkResult(IndexSet(dim), 1.0, len(contribs))
    if not contribs:
        raise MarkingError("estimator is positive but no candidate pairs were offered")

    def sort_key(item):
        rep, c = item
        return (-c, sum(x * x for x in rep), rep)

    target = theta * theta * total_sq
    accumulated = 0.0
    chosen: list[tuple[int, ...]] = []
    for rep, c in sorted(contribs.items(), key=sort_key):
        chosen.append(rep)
        accumulated += c
        if accumulated >= target:
            break
    else:
        raise MarkingError(
            f"candidates reach fraction {math.sqrt(accumulated / total_sq):.6f} "
            f"< theta = {theta}"
        )

    points = []
    for rep in chosen:
        points.append(rep)
        neg = tuple(-x for x in rep)
        if neg != rep:
            points.append(neg)
    return MarkResult(
        marked=IndexSet(dim, points),
        achieved_fraction=math.sqrt(accumulated / total_sq),
        pairs_considered=len(contribs),
    )
