"""Finite symmetric frequency index sets on the integer lattice Z^d.

An index set plays the role a mesh plays in finite elements: it selects
which planewave modes span the discretization space. Refinement unions
new frequency pairs into the current set, so sets are immutable values
with a fixed canonical ordering (ascending squared Euclidean norm,
ties broken lexicographically by components). The canonical ordering
makes matrix assembly, eigenvector layout and file output reproducible.
"""

from __future__ import annotations

import math

import numpy as np


def _canonical(arr: np.ndarray) -> np.ndarray:
    """Deduplicate and sort rows by (|G|^2, lexicographic components)."""
    if arr.size == 0:
        return arr
    arr = np.unique(arr, axis=0)
    norms = np.sum(arr * arr, axis=1)
    keys = tuple(arr[:, k] for k in reversed(range(arr.shape[1]))) + (norms,)
    return arr[np.lexsort(keys)]


class IndexSet:
    """Immutable, canonically ordered set of integer frequencies in Z^d.

    Entries are stored as an (n, d) int64 array. Sets used as
    discretization spaces are closed under negation; `validate_symmetric`
    checks that property, construction does not enforce it.
    """

    __slots__ = ("dim", "entries", "_pos", "_neg")

    def __init__(self, dim: int, entries=None) -> None:
        if not 1 <= dim <= 3:
            raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
        if entries is None:
            arr = np.empty((0, dim), dtype=np.int64)
        else:
            arr = np.asarray(entries, dtype=np.int64).reshape(-1, dim)
        arr = _canonical(arr)
        arr.setflags(write=False)
        self.dim = dim
        self.entries = arr
        self._pos: dict | None = None
        self._neg: np.ndarray | None = None

    # -- basic container behaviour -------------------------------------

    def __len__(self) -> int:
        return self.entries.shape[0]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, IndexSet)
            and self.dim == other.dim
            and self.entries.shape == other.entries.shape
            and bool(np.array_equal(self.entries, other.entries))
        )

    __hash__ = None  # mutable ndarray payload; not hashable

    def __contains__(self, g) -> bool:
        return tuple(int(x) for x in g) in self._position_map

    def __repr__(self) -> str:
        return f"IndexSet(dim={self.dim}, size={len(self)})"

    def to_list(self) -> list[tuple[int, ...]]:
        return [tuple(int(x) for x in row) for row in self.entries]

    # -- lookups ---------------------------------------------------------

    @property
    def _position_map(self) -> dict:
        if self._pos is None:
            self._pos = {
                tuple(int(x) for x in row): i for i, row in enumerate(self.entries)
            }
        return self._pos

    def positions(self, points) -> np.ndarray:
        """Positions of `points` rows in this set, -1 where absent."""
        pos = self._position_map
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.dim)
        out = np.fromiter(
            (pos.get(tuple(int(x) for x in p), -1) for p in pts),
            dtype=np.int64,
            count=pts.shape[0],
        )
        return out

    def index_of(self, g) -> int:
        i = self._position_map.get(tuple(int(x) for x in g), -1)
        if i < 0:
            raise KeyError(f"{g} not in index set")
        return i

    def negation_permutation(self) -> np.ndarray:
        """Permutation p with entries[p[i]] == -entries[i]; requires symmetry."""
        if self._neg is None:
            perm = self.positions(-self.entries)
            if np.any(perm < 0):
                raise ValueError("index set is not closed under negation")
            perm.setflags(write=False)
            self._neg = perm
        return self._neg

    # -- geometry ---------------------------------------------------------

    @property
    def norms_sq(self) -> np.ndarray:
        return np.sum(self.entries * self.entries, axis=1)

    def max_norm_sq(self) -> int:
        return int(self.norms_sq.max()) if len(self) else 0

    def max_radius(self) -> float:
        return math.sqrt(self.max_norm_sq())


def ball(radius: int, dim: int) -> IndexSet:
    """All lattice points G in Z^d with |G| <= radius, canonically ordered."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if not 1 <= dim <= 3:
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    rng = np.arange(-radius, radius + 1, dtype=np.int64)
    grids = np.meshgrid(*([rng] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    keep = np.sum(pts * pts, axis=1) <= radius * radius
    return IndexSet(dim, pts[keep])


def union(a: IndexSet, b: IndexSet) -> IndexSet:
    """Set union with canonical order restored."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if len(a) == 0:
        return b
    if len(b) == 0:
        return a
    return IndexSet(a.dim, np.concatenate([a.entries, b.entries], axis=0))


def complement_candidates(s: IndexSet, within: IndexSet) -> IndexSet:
    """Entries of `within` not contained in `s`."""
    if s.dim != within.dim:
        raise ValueError(f"dimension mismatch: {s.dim} vs {within.dim}")
    if len(within) == 0:
        return within
    mask = s.positions(within.entries) < 0
    return IndexSet(within.dim, within.entries[mask])


def validate_symmetric(s: IndexSet) -> bool:
    """True iff every entry's negation is present (duplicates cannot occur)."""
    if len(s) == 0:
        return True
    return bool(np.all(s.positions(-s.entries) >= 0))
