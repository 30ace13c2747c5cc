"""Declarative analysis specifications and configuration validation.

Before anything runs, the chosen set of analyses is validated as a whole:
conflicting derivers, direction clashes on collaborative kinds, and cycles
through suppressed dependencies are rejected.  Validation also computes the
suppression edges (consumer kind, producer kind) whose interim updates are
withheld, and the commit order in which collaborative kinds are finalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .entities import EntityId
from .lattice import Direction, PropertyKind


class ValidationError(Exception):
    """Base class for configuration rejections."""

    constraint = "Validation"

    def __str__(self):
        return f"{self.constraint}: {super().__str__()}"


class ConflictingDerivers(ValidationError):
    constraint = "ConflictingDerivers"


class DirectionMismatch(ValidationError):
    constraint = "DirectionMismatch"


class SuppressedCycle(ValidationError):
    constraint = "SuppressedCycle"


class UnknownKind(ValidationError):
    constraint = "UnknownKind"


class RegistrationError(ValidationError):
    constraint = "Registration"


# --- activation modes -----------------------------------------------------


class ActivationMode:
    """How the store starts an analysis: eagerly, lazily, or on a trigger."""


@dataclass(frozen=True)
class Eager(ActivationMode):
    """Run for a predefined entity set; the selector must be pure in the program."""

    selector: Callable[[object], list]


@dataclass(frozen=True)
class Lazy(ActivationMode):
    """Run only for entities whose property is actually queried."""


@dataclass(frozen=True)
class Triggered(ActivationMode):
    """Run for every entity that obtains a record of the trigger kind."""

    trigger_kind: PropertyKind


@dataclass(frozen=True)
class TransformerOnly(ActivationMode):
    """Reserved; no activation semantics are defined for it."""


# --- declarations ---------------------------------------------------------


class Acceptance(Enum):
    """Which producer states a consumer is willing to observe."""

    INTERIM_OPTIMISTIC = "interim-optimistic"
    INTERIM_PESSIMISTIC = "interim-pessimistic"
    FINAL_ONLY = "final-only"

    def interim_direction(self) -> Optional[Direction]:
        if self is Acceptance.INTERIM_OPTIMISTIC:
            return Direction.OPTIMISTIC
        if self is Acceptance.INTERIM_PESSIMISTIC:
            return Direction.PESSIMISTIC
        return None


@dataclass(frozen=True)
class UseDeclaration:
    kind: PropertyKind
    acceptance: Acceptance


@dataclass(frozen=True)
class DerivedKind:
    kind: PropertyKind
    direction: Direction
    collaborative: bool = False


@dataclass(frozen=True)
class AnalysisSpecification:
    """Everything the store needs to know about one analysis.

    The declaration is complete: the solver rejects queries for any kind not
    listed in ``uses`` (kinds in ``derives`` are implicitly queryable).  The
    register hook may preset store values and must hand the initial analysis
    function to the store.
    """

    name: str
    derives: tuple[DerivedKind, ...]
    mode: ActivationMode
    uses: frozenset[UseDeclaration]
    register_hook: Callable[[object], None] = field(compare=False)

    def __post_init__(self):
        if not self.derives:
            raise ValueError(f"analysis {self.name!r} must derive at least one kind")

    @property
    def primary_kind(self) -> PropertyKind:
        return self.derives[0].kind

    def derived_kinds(self) -> frozenset[PropertyKind]:
        return frozenset(d.kind for d in self.derives)

    def queryable_kinds(self) -> frozenset[PropertyKind]:
        return self.derived_kinds() | frozenset(u.kind for u in self.uses)


@dataclass(frozen=True)
class Schedule:
    """A validated configuration.

    ``commit_order`` is a topological layering over collaborative kinds:
    kinds reachable only through suppression-free paths share a level, and
    every suppressed producer's level precedes its consumers' levels.
    """

    specs: tuple[AnalysisSpecification, ...]
    suppression_edges: frozenset[tuple[PropertyKind, PropertyKind]]
    commit_order: tuple[frozenset[PropertyKind], ...]
    fallback_kinds: frozenset[PropertyKind]
    preset_kinds: frozenset[PropertyKind]

    def __eq__(self, other):
        if not isinstance(other, Schedule):
            return NotImplemented
        return (
            [s.name for s in self.specs] == [s.name for s in other.specs]
            and self.suppression_edges == other.suppression_edges
            and self.commit_order == other.commit_order
            and self.fallback_kinds == other.fallback_kinds
        )

    __hash__ = None

    def spec(self, name: str) -> AnalysisSpecification:
        for s in self.specs:
            if s.name == name:
                return s
        raise KeyError(name)

    def deriver_of(self, kind: PropertyKind) -> tuple[AnalysisSpecification, ...]:
        return tuple(s for s in self.specs if kind in s.derived_kinds())

    def direction_of(self, kind: PropertyKind) -> Optional[Direction]:
        for s in self.specs:
            for d in s.derives:
                if d.kind == kind:
                    return d.direction
        return None

    def is_collaborative(self, kind: PropertyKind) -> bool:
        return any(
            d.kind == kind and d.collaborative for s in self.specs for d in s.derives
        )


def validate(specs, preset_kinds=frozenset()) -> Schedule:
    """Check that the given analyses may run together; compute the Schedule.

    Rejects: a kind with several derivers unless all mark it collaborative;
    collaborative kinds with mixed directions; cycles in the kind-level
    dependency graph that contain a suppressed edge; triggers on kinds
    nobody derives or presets; reserved activation modes.
    """
    specs = tuple(sorted(specs, key=lambda s: s.name))
    preset_kinds = frozenset(preset_kinds)
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise RegistrationError(f"duplicate analysis names in {names}")

    derivers: dict[PropertyKind, list[AnalysisSpecification]] = {}
    for s in specs:
        if isinstance(s.mode, TransformerOnly):
            raise RegistrationError(
                f"analysis {s.name!r} uses the reserved TransformerOnly mode"
            )
        for d in s.derives:
            derivers.setdefault(d.kind, []).append(s)

    # (a) single deriver unless collaborative everywhere; (b) agreed direction
    directions: dict[PropertyKind, Direction] = {}
    for kind, ds in sorted(derivers.items(), key=lambda kv: kv[0].name):
        decls = [d for s in ds for d in s.derives if d.kind == kind]
        if len(decls) > 1 and not all(d.collaborative for d in decls):
            raise ConflictingDerivers(
                f"kind {kind.name} derived by {[s.name for s in ds]} "
                "without all marking it collaborative"
            )
        if len({d.direction for d in decls}) > 1:
            raise DirectionMismatch(
                f"collaborative kind {kind.name} derived with mixed directions"
            )
        directions[kind] = decls[0].direction

    # triggers must name a derived or preset kind
    for s in specs:
        if isinstance(s.mode, Triggered):
            k = s.mode.trigger_kind
            if k not in derivers and k not in preset_kinds:
                raise UnknownKind(
                    f"analysis {s.name!r} triggers on {k.name}, which is neither "
                    "derived nor preset"
                )

    # (c) used kinds: derived, preset, or served by the descriptor fallback
    fallback_kinds = frozenset(
        u.kind
        for s in specs
        for u in s.uses
        if u.kind not in derivers and u.kind not in preset_kinds
    )

    # (d) suppression: final-only uses, and interim uses whose direction does
    # not match the producer's (auto-downgraded rather than rejected)
    dep_edges: set[tuple[PropertyKind, PropertyKind]] = set()
    suppressed: set[tuple[PropertyKind, PropertyKind]] = set()
    for s in specs:
        for u in s.uses:
            producer_dir = directions.get(u.kind)
            withheld = u.acceptance is Acceptance.FINAL_ONLY or (
                producer_dir is not None
                and u.acceptance.interim_direction() != producer_dir
            )
            for d in s.derives:
                dep_edges.add((d.kind, u.kind))
                if withheld and u.kind in derivers:
                    suppressed.add((d.kind, u.kind))

    # (e) no cycle may contain a suppressed edge: for edge c -> p the cycle
    # closes iff p reaches c through any dependency edges
    for consumer, producer in sorted(
        suppressed, key=lambda e: (e[0].name, e[1].name)
    ):
        if _reaches(dep_edges, producer, consumer):
            raise SuppressedCycle(
                f"suppressed dependency {consumer.name} -> {producer.name} "
                "lies on a dependency cycle"
            )

    # (f) commit order over collaborative kinds: a producer reached through a
    # path containing at least one suppressed edge is finalized earlier
    collaborative = sorted(
        (k for k in derivers if any(
            d.collaborative for s in derivers[k] for d in s.derives if d.kind == k
        )),
        key=lambda k: k.name,
    )
    commit_order = _layer_commit_order(collaborative, dep_edges, suppressed)

    return Schedule(
        specs=specs,
        suppression_edges=frozenset(suppressed),
        commit_order=commit_order,
        fallback_kinds=fallback_kinds,
        preset_kinds=preset_kinds,
    )


def _reaches(edges, start, goal) -> bool:
    adjacency: dict[PropertyKind, set[PropertyKind]] = {}
    for a, b in edges:
        adjacency.setdefault(a, set()).add(b)
    seen = {start}
    stack = [start]
    while stack:
        cur = stack.pop()
        if cur == goal:
            return True
        for nxt in adjacency.get(cur, ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return False


def _layer_commit_order(collaborative, dep_edges, suppressed):
    if not collaborative:
        return ()
    adjacency: dict[PropertyKind, set[PropertyKind]] = {}
    for a, b in dep_edges:
        adjacency.setdefault(a, set()).add(b)

    def suppressed_producers(consumer):
        """Collaborative kinds reachable from consumer via >=1 suppressed edge."""
        out = set()
        # walk (node, seen-suppressed) states
        seen = {(consumer, False)}
        stack = [(consumer, False)]
        while stack:
            node, tainted = stack.pop()
            for nxt in adjacency.get(node, ()):
                t = tainted or (node, nxt) in suppressed
                if (nxt, t) not in seen:
                    seen.add((nxt, t))
                    stack.append((nxt, t))
                if t and nxt in collab_set and nxt != consumer:
                    out.add(nxt)
        return out

    collab_set = set(collaborative)
    preds = {k: suppressed_producers(k) for k in collaborative}
    levels: dict[PropertyKind, int] = {}

    def level_of(kind, trail=()):
        if kind in levels:
            return levels[kind]
        if kind in trail:
            # cycles through suppression were rejected earlier
            raise SuppressedCycle(f"commit order cycle at {kind.name}")
        lvl = 0
        for p in preds[kind]:
            lvl = max(lvl, level_of(p, trail + (kind,)) + 1)
        levels[kind] = lvl
        return lvl

    for k in collaborative:
        level_of(k)
    depth = max(levels.values()) + 1
    return tuple(
        frozenset(k for k in collaborative if levels[k] == i) for i in range(depth)
    )


def register_all(schedule: Schedule, store, program) -> None:
    """Run every register hook, then let the store arm eager and triggered modes.

    Hooks run in deterministic (name-sorted) order.  A hook that queries the
    store for values is rejected by the store itself with a
    RegistrationPhaseViolation.
    """
    for spec in schedule.specs:
        spec.register_hook(store)
    store.finish_registration(program)
