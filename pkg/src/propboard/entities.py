"""Entity identifiers: the things properties can be computed for.

Every entity is a small frozen value with structural equality and a total
deterministic ordering, so that result files and worklist tie-breaks are
reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class ClassRef:
    name: str

    def sort_key(self):
        return (0, self.name, "", 0)

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class FieldRef:
    class_name: str
    field_name: str

    def sort_key(self):
        return (1, self.class_name, self.field_name, 0)

    def __str__(self):
        return f"{self.class_name}.{self.field_name}"


@dataclass(frozen=True)
class MethodRef:
    class_name: str
    method_name: str

    def sort_key(self):
        return (2, self.class_name, self.method_name, 0)

    def __str__(self):
        return f"{self.class_name}.{self.method_name}"


@dataclass(frozen=True)
class CallSiteRef:
    """A call site: the invoking method plus the statement index within it."""

    method: MethodRef
    stmt_index: int

    def sort_key(self):
        return (3, self.method.class_name, self.method.method_name, self.stmt_index)

    def __str__(self):
        return f"{self.method}@{self.stmt_index}"


@dataclass(frozen=True)
class OpaqueRef:
    """Synthetic entity for tests and whole-program properties (e.g. "project")."""

    key: str

    def sort_key(self):
        return (4, self.key, "", 0)

    def __str__(self):
        return self.key


EntityId = Union[ClassRef, FieldRef, MethodRef, CallSiteRef, OpaqueRef]


def entity_sort_key(entity: EntityId):
    """Total order over all entity variants; used for canonical output."""
    return entity.sort_key()
