"""Jobs, the compatibility relation, and per-site level requirements.

A job maps every resource to a level in ``0..K``.  Two jobs are
compatible when, for every resource, their levels add up to at most K.
With K=1 this is plain exclusive access; with K=2 level 1 is read access
and level 2 is write access.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence


class Job:
    """Immutable, sparse job.  Resources absent from the job have level 0."""

    __slots__ = ("items", "_levels", "_hash")

    def __init__(self, levels: Mapping[int, int] | Iterable[Sequence[int]] = ()):
        pairs = levels.items() if isinstance(levels, Mapping) else levels
        d: dict[int, int] = {}
        for pair in pairs:
            c, lvl = pair
            c, lvl = int(c), int(lvl)
            if c < 0 or lvl < 0:
                raise ValueError(f"bad job entry ({c}, {lvl})")
            if c in d:
                raise ValueError(f"resource {c} listed twice")
            if lvl:
                d[c] = lvl
        self.items: tuple[tuple[int, int], ...] = tuple(sorted(d.items()))
        self._levels = d
        self._hash = hash(self.items)

    def __getitem__(self, c: int) -> int:
        return self._levels.get(c, 0)

    def level(self, c: int) -> int:
        return self._levels.get(c, 0)

    def support(self) -> frozenset[int]:
        return frozenset(self._levels)

    def max_level(self) -> int:
        return max(self._levels.values(), default=0)

    def pairs(self) -> list[list[int]]:
        return [[c, lvl] for c, lvl in self.items]

    def __bool__(self) -> bool:
        return bool(self.items)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Job):
            return NotImplemented
        return self.items == other.items

    def __hash__(self) -> int:
        return self._hash

    def __lt__(self, other: Job) -> bool:
        return self.items < other.items

    def __repr__(self) -> str:
        if not self.items:
            return "none"
        return "{" + ", ".join(f"c{c}:{lvl}" for c, lvl in self.items) + "}"


NONE = Job()


def compatible(u: Job, v: Job, K: int) -> bool:
    for c, lvl in u.items:
        if lvl + v._levels.get(c, 0) > K:
            return False
    return True


def conflict(q: int, r: int, state) -> bool:
    """True iff the current jobs of processes q and r are incompatible.

    Holds for ``q == r`` whenever the job of q is not compatible with
    itself; callers that mean distinct processes must check ``q != r``.
    """
    procs = state.procs
    return not compatible(procs[q].job, procs[r].job, state.model.K)


def level_requirement(u: Job, s: int, loc: Sequence[int]) -> int:
    """Highest level u needs among the resources located at site s (0 if none)."""
    return max((lvl for c, lvl in u.items if loc[c] == s), default=0)


def level_fn_leq(f: Sequence[int], g: Sequence[int]) -> bool:
    return all(a <= b for a, b in zip(f, g, strict=True))


@dataclass(frozen=True)
class JobModel:
    K: int
    resource_count: int
    site_count: int
    loc: tuple[int, ...]
    _levels_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if len(self.loc) != self.resource_count:
            raise ValueError("loc must map every resource to a site")
        if any(not 0 <= s < self.site_count for s in self.loc):
            raise ValueError("loc maps a resource to an unknown site")
        object.__setattr__(self, "loc", tuple(self.loc))

    def site_levels(self, job: Job) -> tuple[int, ...]:
        """L(job) as a tuple indexed by site."""
        cached = self._levels_cache.get(job)
        if cached is None:
            out = [0] * self.site_count
            for c, lvl in job.items:
                s = self.loc[c]
                if lvl > out[s]:
                    out[s] = lvl
            cached = tuple(out)
            self._levels_cache[job] = cached
        return cached

    def check_job(self, job: Job) -> None:
        for c, lvl in job.items:
            if c >= self.resource_count:
                raise ValueError(f"job {job!r} names unknown resource {c}")
            if lvl > self.K:
                raise ValueError(f"job {job!r} exceeds level bound K={self.K}")
