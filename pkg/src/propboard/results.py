"""Analysis results, solver tasks, and exchangeable scheduler policies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

from .entities import EntityId
from .lattice import ObservedDependee, PropertyKind, PropertyState

ContinuationFunction = Callable[[PropertyState], "AnalysisResult"]


class AnalysisResult:
    """Base class of everything an activation may return to the store."""


@dataclass(frozen=True)
class FinalResult(AnalysisResult):
    entity: EntityId
    kind: PropertyKind
    value: Any


@dataclass(frozen=True)
class InterimResult(AnalysisResult):
    """A refinable value plus the dependencies that may still change it.

    An interim result without dependees is a contradiction: nothing could
    ever refine it, so it must be reported final instead.
    """

    entity: EntityId
    kind: PropertyKind
    value: Any
    dependees: tuple[ObservedDependee, ...]
    continuation: ContinuationFunction = field(compare=False)

    def __post_init__(self):
        if not self.dependees:
            raise ValueError(
                f"interim result for ({self.entity}, {self.kind.name}) has no "
                "dependees; report a FinalResult instead"
            )


@dataclass(frozen=True)
class PartialResult(AnalysisResult):
    """An update function merging one activation's contribution.

    Only collaborative kinds may be targeted.  The function receives the
    current state and returns the new value, or None for "no change".
    """

    entity: EntityId
    kind: PropertyKind
    update: Callable[[PropertyState], Optional[Any]] = field(compare=False)


@dataclass(frozen=True)
class MultiResult(AnalysisResult):
    results: tuple[FinalResult, ...]


@dataclass(frozen=True)
class Results(AnalysisResult):
    results: tuple[AnalysisResult, ...]


@dataclass(frozen=True)
class WithFollowups(AnalysisResult):
    """Wraps a result with computations to schedule once it is reported."""

    inner: AnalysisResult
    followups: tuple[tuple[str, EntityId], ...]


# --- tasks ----------------------------------------------------------------


class Task:
    """One pending activation; ``key`` serializes work per (entity, kind)."""

    __slots__ = ("seq", "key", "spec_name")

    kind_label = "task"

    def __init__(self, seq, key, spec_name):
        self.seq = seq
        self.key = key
        self.spec_name = spec_name


class InitialActivation(Task):
    __slots__ = ("entity",)

    kind_label = "initial"

    def __init__(self, seq, key, spec_name, entity):
        super().__init__(seq, key, spec_name)
        self.entity = entity


class ContinuationActivation(Task):
    __slots__ = ("epoch", "continuation", "delivered")

    kind_label = "continuation"

    def __init__(self, seq, key, spec_name, epoch, continuation, delivered):
        super().__init__(seq, key, spec_name)
        self.epoch = epoch
        self.continuation = continuation
        self.delivered = delivered


class Finalize(Task):
    """Finalization of one key during a quiescence phase; executed inline."""

    __slots__ = ("reason",)

    kind_label = "finalize"

    def __init__(self, seq, key, reason):
        super().__init__(seq, key, None)
        self.reason = reason


# --- scheduler policies ----------------------------------------------------


class SchedulerPolicy:
    """Picks the next task from the pending pool; must not starve any task."""

    name = "policy"

    def pick(self, tasks: Sequence[Task], store) -> Task:
        raise NotImplementedError


class FifoPolicy(SchedulerPolicy):
    name = "fifo"

    def pick(self, tasks, store):
        return min(tasks, key=lambda t: t.seq)


class LifoPolicy(SchedulerPolicy):
    name = "lifo"

    def pick(self, tasks, store):
        return max(tasks, key=lambda t: t.seq)


class DependersFirstPolicy(SchedulerPolicy):
    """Prefers tasks whose key has the most registered dependents, ties FIFO."""

    name = "dependers-first"

    def pick(self, tasks, store):
        return min(tasks, key=lambda t: (-store.depender_count(t.key), t.seq))


class RandomPolicy(SchedulerPolicy):
    """Seeded random order; used to fuzz scheduling independence."""

    def __init__(self, seed: int):
        import random

        self._rng = random.Random(seed)
        self.name = f"random({seed})"

    def pick(self, tasks, store):
        return tasks[self._rng.randrange(len(tasks))]


POLICIES = {
    "fifo": FifoPolicy,
    "lifo": LifoPolicy,
    "dependers-first": DependersFirstPolicy,
}


def make_policy(name: str) -> SchedulerPolicy:
    try:
        return POLICIES[name]()
    except KeyError:
        raise ValueError(
            f"unknown scheduler {name!r}; expected one of {sorted(POLICIES)}"
        ) from None
