"""Lattice kernel: property kinds, lattice descriptors, and property states.

A property kind names one lattice of values.  A ``LatticeDescriptor`` reifies
that lattice (order, join, bounds, height) together with the providers for
fallback values (used when no analysis derives the kind at all) and default
values (inserted at quiescence for entities the deriving analysis never
visited).  Values themselves are plain immutable Python objects; the store
never interprets them beyond what the descriptor exposes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

from .entities import EntityId


class Direction(Enum):
    """How an analysis refines its approximations.

    Optimistic analyses start at the lattice bottom (best value) and move
    upward toward soundness; pessimistic analyses start at the top (sound
    over-approximation) and move downward toward precision.
    """

    OPTIMISTIC = "optimistic"
    PESSIMISTIC = "pessimistic"


@dataclass(frozen=True)
class PropertyKind:
    """A registered property kind: dense numeric id plus a unique name."""

    index: int
    name: str

    def __str__(self):
        return self.name


class KindMismatchError(TypeError):
    """A lattice operation received a value of a foreign kind."""


class LatticeDescriptor:
    """One property kind's value universe and its lattice structure.

    ``fallback_provider`` must be computable from locally available
    information (declared types and the like); it must not query the store.
    ``default_provider`` is optional; absent means the fallback is used.
    """

    def __init__(
        self,
        kind: PropertyKind,
        *,
        leq: Callable[[Any, Any], bool],
        join: Callable[[Any, Any], Any],
        bottom: Any,
        top: Any,
        height: int,
        fallback: Callable[[EntityId], Any],
        default: Optional[Callable[[EntityId], Any]] = None,
        member: Optional[Callable[[Any], bool]] = None,
    ):
        if height < 1:
            raise ValueError(f"lattice height must be positive, got {height}")
        self.kind = kind
        self._leq = leq
        self._join = join
        self.bottom = bottom
        self.top = top
        self.height = height
        self._fallback = fallback
        self._default = default
        self._member = member

    def _check_member(self, value):
        if self._member is not None and not self._member(value):
            raise KindMismatchError(
                f"value {value!r} does not belong to kind {self.kind.name}"
            )

    def leq(self, a, b) -> bool:
        """Whether ``a`` is below-or-equal ``b`` in the lattice order."""
        self._check_member(a)
        self._check_member(b)
        return self._leq(a, b)

    def join(self, a, b):
        """Least upper bound of ``a`` and ``b``."""
        self._check_member(a)
        self._check_member(b)
        return self._join(a, b)

    def fallback_for(self, entity: EntityId):
        return self._fallback(entity)

    def default_for(self, entity: EntityId):
        """The declared default, or None when no default is declared."""
        if self._default is None:
            return None
        return self._default(entity)

    def default_or_fallback(self, entity: EntityId):
        value = self.default_for(entity)
        return self.fallback_for(entity) if value is None else value

    def __repr__(self):
        return f"LatticeDescriptor({self.kind.name})"


class KindRegistry:
    """Assigns dense kind ids and holds the descriptor for each kind."""

    def __init__(self):
        self._by_name: dict[str, LatticeDescriptor] = {}
        self._order: list[LatticeDescriptor] = []

    def declare(self, name: str, **lattice_kwargs) -> LatticeDescriptor:
        if name in self._by_name:
            raise ValueError(f"property kind {name!r} already registered")
        kind = PropertyKind(index=len(self._order), name=name)
        desc = LatticeDescriptor(kind, **lattice_kwargs)
        self._by_name[name] = desc
        self._order.append(desc)
        return desc

    def descriptor(self, kind: PropertyKind) -> LatticeDescriptor:
        desc = self._by_name.get(kind.name)
        if desc is None or desc.kind != kind:
            raise KeyError(f"unknown property kind {kind!r}")
        return desc

    def by_name(self, name: str) -> LatticeDescriptor:
        return self._by_name[name]

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __iter__(self):
        return iter(self._order)


class _Phase(Enum):
    NO_VALUE = "none"
    INTERIM = "interim"
    FINAL = "final"


@dataclass(frozen=True)
class PropertyState:
    """What the store knows about one (entity, kind) pair.

    ``pending_final`` marks the NoValue returned for a suppressed query: a
    value exists but interim values are withheld, so the requestor should
    register a final-only dependency.
    """

    entity: Optional[EntityId]
    kind: Optional[PropertyKind]
    phase: _Phase
    value: Any = None
    direction: Optional[Direction] = None
    pending_final: bool = False

    @staticmethod
    def no_value(entity=None, kind=None, *, pending_final=False) -> "PropertyState":
        return PropertyState(entity, kind, _Phase.NO_VALUE, pending_final=pending_final)

    @staticmethod
    def interim(value, direction: Direction, entity=None, kind=None) -> "PropertyState":
        return PropertyState(entity, kind, _Phase.INTERIM, value, direction)

    @staticmethod
    def final(value, entity=None, kind=None) -> "PropertyState":
        return PropertyState(entity, kind, _Phase.FINAL, value)

    @property
    def is_final(self) -> bool:
        return self.phase is _Phase.FINAL

    @property
    def is_interim(self) -> bool:
        return self.phase is _Phase.INTERIM

    @property
    def has_value(self) -> bool:
        return self.phase is not _Phase.NO_VALUE

    def at(self, entity, kind) -> "PropertyState":
        """The same state observed through the store at a concrete key."""
        return PropertyState(
            entity, kind, self.phase, self.value, self.direction, self.pending_final
        )

    def __str__(self):
        if self.phase is _Phase.NO_VALUE:
            return "NoValue(pending)" if self.pending_final else "NoValue"
        tag = "Final" if self.is_final else "Interim"
        return f"{tag}({self.value})"


@dataclass(frozen=True)
class ObservedDependee:
    """A dependency as seen by the querying activation.

    The observed state is never final: final dependees must not be
    registered, they are already fully known.
    """

    entity: EntityId
    kind: PropertyKind
    observed: PropertyState

    def __post_init__(self):
        if self.observed.is_final:
            raise ValueError(
                f"final state of ({self.entity}, {self.kind.name}) "
                "cannot be registered as a dependency"
            )

    @staticmethod
    def of(state: PropertyState) -> "ObservedDependee":
        return ObservedDependee(state.entity, state.kind, state)

    @property
    def key(self):
        return (self.entity, self.kind)


class MonotonicityViolation(Exception):
    """A state update moved against the declared refinement direction."""

    def __init__(self, entity, kind, direction, old, new):
        self.entity = entity
        self.kind = kind
        self.direction = direction
        self.old = old
        self.new = new
        super().__init__(
            f"non-monotone update of ({entity}, {kind}) [{direction.value}]: "
            f"{old} -> {new}"
        )


def check_monotone(
    desc: LatticeDescriptor,
    direction: Direction,
    old: PropertyState,
    new: PropertyState,
) -> Optional[MonotonicityViolation]:
    """Check one state transition; returns a report or None when legal.

    Legal transitions: anything from NoValue; upward moves for optimistic
    and downward moves for pessimistic kinds; no transition at all out of a
    final state (re-asserting the identical final value is tolerated).
    """
    if not old.has_value:
        return None
    violation = MonotonicityViolation(old.entity, old.kind, direction, old, new)
    if old.is_final:
        if new.is_final and new.value == old.value:
            return None
        return violation
    if not new.has_value:
        return violation
    if direction is Direction.OPTIMISTIC:
        ok = desc.leq(old.value, new.value)
    else:
        ok = desc.leq(new.value, old.value)
    return None if ok else violation
