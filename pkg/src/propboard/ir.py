"""Miniature class/method IR with a JSON parser and hierarchy queries.

Programs are straight-line: a class hierarchy rooted at ``Object``, instance
fields, and methods whose bodies are flat statement lists (no control flow).
Locals are single-assignment; the parser tracks a declared type per local so
that field and method references can be resolved statically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

from .entities import CallSiteRef, FieldRef, MethodRef

ROOT_CLASS = "Object"
INIT_NAME = "<init>"


class ProgramError(Exception):
    """Base class for program construction errors."""


class ProgramSyntaxError(ProgramError):
    """Malformed JSON or a structurally invalid document."""


class ResolutionError(ProgramError):
    """A class, field, method, or local reference does not resolve."""


class HierarchyCycleError(ProgramError):
    """The superclass relation contains a cycle."""


class MissingRootError(ProgramError):
    """There is no root class named Object (or it has a superclass)."""


# --- statements -----------------------------------------------------------


@dataclass(frozen=True)
class New:
    local: str
    class_name: str


@dataclass(frozen=True)
class Const:
    local: str


@dataclass(frozen=True)
class GetField:
    local: str
    receiver: str
    field_name: str


@dataclass(frozen=True)
class PutField:
    receiver: str
    field_name: str
    source: str


@dataclass(frozen=True)
class InvokeVirtual:
    result: Optional[str]
    receiver: str
    method_name: str


@dataclass(frozen=True)
class InvokeStatic:
    result: Optional[str]
    class_name: str
    method_name: str


@dataclass(frozen=True)
class Return:
    value: Optional[str] = None


Statement = Union[New, Const, GetField, PutField, InvokeVirtual, InvokeStatic, Return]


# --- declarations ---------------------------------------------------------


@dataclass(frozen=True)
class FieldDecl:
    name: str
    declared_type: str
    final: bool = False


@dataclass(frozen=True)
class MethodDecl:
    name: str
    params: tuple[tuple[str, str], ...]
    body: tuple[Statement, ...]

    @property
    def is_init(self) -> bool:
        return self.name == INIT_NAME


@dataclass(frozen=True)
class ClassDecl:
    name: str
    super_name: Optional[str]
    fields: tuple[FieldDecl, ...]
    methods: tuple[MethodDecl, ...]


@dataclass
class Program:
    classes: tuple[ClassDecl, ...]
    entry_points: tuple[MethodRef, ...]
    _by_name: dict = field(init=False, compare=False, repr=False)
    _children: dict = field(init=False, compare=False, repr=False)
    _local_types: dict = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        self._by_name = {c.name: c for c in self.classes}
        self._children = {c.name: [] for c in self.classes}
        for c in self.classes:
            if c.super_name is not None:
                self._children[c.super_name].append(c.name)
        self._local_types = {}

    # lookups

    def class_decl(self, name: str) -> ClassDecl:
        try:
            return self._by_name[name]
        except KeyError:
            raise ResolutionError(f"unknown class {name!r}") from None

    def has_class(self, name: str) -> bool:
        return name in self._by_name

    def direct_subclasses(self, name: str) -> tuple[str, ...]:
        self.class_decl(name)
        return tuple(sorted(self._children[name]))

    def method_decl(self, ref: MethodRef) -> MethodDecl:
        cls = self.class_decl(ref.class_name)
        for m in cls.methods:
            if m.name == ref.method_name:
                return m
        raise ResolutionError(f"unknown method {ref}")

    def field_decl(self, ref: FieldRef) -> FieldDecl:
        cls = self.class_decl(ref.class_name)
        for f in cls.fields:
            if f.name == ref.field_name:
                return f
        raise ResolutionError(f"unknown field {ref}")

    def all_methods(self) -> tuple[MethodRef, ...]:
        return tuple(
            MethodRef(c.name, m.name) for c in self.classes for m in c.methods
        )

    def all_fields(self) -> tuple[FieldRef, ...]:
        return tuple(FieldRef(c.name, f.name) for c in self.classes for f in c.fields)

    def methods_named(self, name: str) -> tuple[MethodRef, ...]:
        return tuple(m for m in self.all_methods() if m.method_name == name)

    def call_sites(self, ref: MethodRef) -> tuple[CallSiteRef, ...]:
        body = self.method_decl(ref).body
        return tuple(
            CallSiteRef(ref, i)
            for i, st in enumerate(body)
            if isinstance(st, (InvokeVirtual, InvokeStatic))
        )

    def resolve_field(self, class_name: str, field_name: str) -> FieldRef:
        """Most-derived declaration of ``field_name`` at or above ``class_name``."""
        cur = class_name
        while cur is not None:
            decl = self.class_decl(cur)
            if any(f.name == field_name for f in decl.fields):
                return FieldRef(cur, field_name)
            cur = decl.super_name
        raise ResolutionError(f"field {field_name!r} not found on {class_name!r}")

    def resolve_method_above(self, class_name: str, method_name: str) -> MethodRef:
        """Most-derived declaration of ``method_name`` at or above ``class_name``."""
        cur = class_name
        while cur is not None:
            decl = self.class_decl(cur)
            if any(m.name == method_name for m in decl.methods):
                return MethodRef(cur, method_name)
            cur = decl.super_name
        raise ResolutionError(f"method {method_name!r} not found on {class_name!r}")

    def local_types(self, ref: MethodRef) -> dict[str, Optional[str]]:
        """Declared type per local; None for opaque values (const, call results)."""
        if ref not in self._local_types:
            self._local_types[ref] = _compute_local_types(
                self, ref.class_name, self.method_decl(ref)
            )
        return self._local_types[ref]


def _compute_local_types(program, class_name, method):
    types: dict[str, Optional[str]] = {"this": class_name}
    for pname, ptype in method.params:
        types[pname] = ptype
    for st in method.body:
        if isinstance(st, New):
            types[st.local] = st.class_name
        elif isinstance(st, Const):
            types[st.local] = None
        elif isinstance(st, GetField):
            recv_type = types[st.receiver]
            fref = program.resolve_field(recv_type, st.field_name)
            types[st.local] = program.field_decl(fref).declared_type
        elif isinstance(st, (InvokeVirtual, InvokeStatic)) and st.result is not None:
            types[st.result] = None
    return types


# --- hierarchy queries ----------------------------------------------------


def subtypes_of(program: Program, class_name: str) -> tuple[str, ...]:
    """The class plus all transitive subclasses, lexicographically ordered."""
    program.class_decl(class_name)
    out = []
    stack = [class_name]
    while stack:
        cur = stack.pop()
        out.append(cur)
        stack.extend(program.direct_subclasses(cur))
    return tuple(sorted(out))


def resolve_virtual(
    program: Program,
    declared_receiver_type: str,
    method_name: str,
    instantiated_types,
) -> frozenset[MethodRef]:
    """Dispatch a virtual call against the set of instantiated types.

    For each instantiated type below the declared receiver type, the target
    is the most-derived declaration of the method at or above that type.
    """
    program.resolve_method_above(declared_receiver_type, method_name)
    candidates = set(instantiated_types) & set(subtypes_of(program, declared_receiver_type))
    return frozenset(
        program.resolve_method_above(t, method_name) for t in candidates
    )


# --- parsing --------------------------------------------------------------


def parse_program(text: str) -> Program:
    """Parse and structurally validate a JSON program document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProgramSyntaxError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProgramSyntaxError("top level must be an object")

    classes = _parse_classes(doc.get("classes", None))
    program = Program(classes=classes, entry_points=())
    _validate_hierarchy(program)
    _validate_bodies(program)
    entry_points = _parse_entry_points(program, doc.get("entryPoints", None))
    return Program(classes=classes, entry_points=entry_points)


def _parse_classes(raw) -> tuple[ClassDecl, ...]:
    if not isinstance(raw, list):
        raise ProgramSyntaxError('"classes" must be a list')
    classes = []
    seen = set()
    for cdoc in raw:
        if not isinstance(cdoc, dict) or not isinstance(cdoc.get("name"), str):
            raise ProgramSyntaxError("class entries need a string name")
        name = cdoc["name"]
        if name in seen:
            raise ResolutionError(f"class {name!r} declared twice")
        seen.add(name)
        super_name = cdoc.get("super")
        if super_name is not None and not isinstance(super_name, str):
            raise ProgramSyntaxError(f'class {name!r}: "super" must be a string')
        classes.append(
            ClassDecl(
                name=name,
                super_name=super_name,
                fields=_parse_fields(name, cdoc.get("fields", [])),
                methods=_parse_methods(name, cdoc.get("methods", [])),
            )
        )
    return tuple(classes)


def _parse_fields(class_name, raw) -> tuple[FieldDecl, ...]:
    if not isinstance(raw, list):
        raise ProgramSyntaxError(f'class {class_name!r}: "fields" must be a list')
    fields = []
    seen = set()
    for fdoc in raw:
        if (
            not isinstance(fdoc, dict)
            or not isinstance(fdoc.get("name"), str)
            or not isinstance(fdoc.get("type"), str)
        ):
            raise ProgramSyntaxError(
                f"class {class_name!r}: field entries need string name and type"
            )
        if fdoc["name"] in seen:
            raise ResolutionError(
                f"field {fdoc['name']!r} declared twice in {class_name!r}"
            )
        seen.add(fdoc["name"])
        fields.append(
            FieldDecl(fdoc["name"], fdoc["type"], bool(fdoc.get("final", False)))
        )
    return tuple(fields)


def _parse_methods(class_name, raw) -> tuple[MethodDecl, ...]:
    if not isinstance(raw, list):
        raise ProgramSyntaxError(f'class {class_name!r}: "methods" must be a list')
    methods = []
    seen = set()
    for mdoc in raw:
        if not isinstance(mdoc, dict) or not isinstance(mdoc.get("name"), str):
            raise ProgramSyntaxError(
                f"class {class_name!r}: method entries need a string name"
            )
        name = mdoc["name"]
        if name in seen:
            raise ResolutionError(f"method {name!r} declared twice in {class_name!r}")
        seen.add(name)
        params = []
        for pdoc in mdoc.get("params", []):
            if (
                not isinstance(pdoc, dict)
                or not isinstance(pdoc.get("name"), str)
                or not isinstance(pdoc.get("type"), str)
            ):
                raise ProgramSyntaxError(
                    f"method {class_name}.{name}: params need string name and type"
                )
            params.append((pdoc["name"], pdoc["type"]))
        body = tuple(
            _parse_statement(class_name, name, sdoc) for sdoc in mdoc.get("body", [])
        )
        methods.append(MethodDecl(name, tuple(params), body))
    return tuple(methods)


_ARITY = {
    "new": (3, 3),
    "const": (2, 2),
    "getfield": (4, 4),
    "putfield": (4, 4),
    "invokevirtual": (3, 4),
    "invokestatic": (3, 4),
    "return": (1, 2),
}


def _parse_statement(class_name, method_name, sdoc) -> Statement:
    where = f"{class_name}.{method_name}"
    if not isinstance(sdoc, list) or not sdoc or not isinstance(sdoc[0], str):
        raise ProgramSyntaxError(f"{where}: statements must be op-name arrays")
    op = sdoc[0]
    if op not in _ARITY:
        raise ProgramSyntaxError(f"{where}: unknown statement {op!r}")
    lo, hi = _ARITY[op]
    if not lo <= len(sdoc) <= hi:
        raise ProgramSyntaxError(f"{where}: bad arity for {op!r}: {sdoc!r}")
    args = sdoc[1:]
    if op == "new":
        return New(args[0], args[1])
    if op == "const":
        return Const(args[0])
    if op == "getfield":
        return GetField(args[0], args[1], args[2])
    if op == "putfield":
        return PutField(args[0], args[1], args[2])
    if op in ("invokevirtual", "invokestatic"):
        if len(args) == 2:
            result, rest = None, args
        else:
            result, rest = args[0], args[1:]
        if op == "invokevirtual":
            return InvokeVirtual(result, rest[0], rest[1])
        return InvokeStatic(result, rest[0], rest[1])
    return Return(args[0] if args else None)


def _validate_hierarchy(program: Program):
    roots = [c for c in program.classes if c.super_name is None]
    if not any(c.name == ROOT_CLASS for c in roots) or not program.has_class(ROOT_CLASS):
        raise MissingRootError(f"program needs a root class named {ROOT_CLASS!r}")
    if len(roots) != 1:
        extra = sorted(c.name for c in roots if c.name != ROOT_CLASS)
        raise MissingRootError(f"classes without a superclass besides the root: {extra}")
    for c in program.classes:
        if c.super_name is not None and not program.has_class(c.super_name):
            raise ResolutionError(
                f"class {c.name!r} extends unknown class {c.super_name!r}"
            )
    for c in program.classes:
        seen = set()
        cur = c.name
        while cur is not None:
            if cur in seen:
                raise HierarchyCycleError(f"inheritance cycle through {cur!r}")
            seen.add(cur)
            cur = program.class_decl(cur).super_name
    for c in program.classes:
        for f in c.fields:
            if not program.has_class(f.declared_type):
                raise ResolutionError(
                    f"field {c.name}.{f.name} has unknown type {f.declared_type!r}"
                )
        for m in c.methods:
            for pname, ptype in m.params:
                if not program.has_class(ptype):
                    raise ResolutionError(
                        f"param {pname!r} of {c.name}.{m.name} has unknown type {ptype!r}"
                    )


def _validate_bodies(program: Program):
    for c in program.classes:
        for m in c.methods:
            _validate_body(program, c.name, m)


def _validate_body(program: Program, class_name: str, method: MethodDecl):
    where = f"{class_name}.{method.name}"
    types: dict[str, Optional[str]] = {"this": class_name}
    for pname, ptype in method.params:
        if pname in types:
            raise ResolutionError(f"{where}: duplicate param {pname!r}")
        types[pname] = ptype
    params_and_this = set(types)
    returns = 0

    def require_defined(local):
        if local not in types:
            raise ResolutionError(f"{where}: use of undefined local {local!r}")

    def require_typed(local):
        require_defined(local)
        if types[local] is None:
            raise ResolutionError(
                f"{where}: local {local!r} has no declared type and cannot be a receiver"
            )
        return types[local]

    def define(local, type_name):
        if local in params_and_this:
            raise ResolutionError(f"{where}: cannot assign to {local!r}")
        if local in types:
            raise ResolutionError(f"{where}: local {local!r} assigned twice")
        types[local] = type_name

    for st in method.body:
        if isinstance(st, New):
            if not program.has_class(st.class_name):
                raise ResolutionError(f"{where}: new of unknown class {st.class_name!r}")
            define(st.local, st.class_name)
        elif isinstance(st, Const):
            define(st.local, None)
        elif isinstance(st, GetField):
            recv_type = require_typed(st.receiver)
            fref = _resolve_field_checked(program, recv_type, st.field_name, where)
            define(st.local, program.field_decl(fref).declared_type)
        elif isinstance(st, PutField):
            recv_type = require_typed(st.receiver)
            _resolve_field_checked(program, recv_type, st.field_name, where)
            require_defined(st.source)
        elif isinstance(st, InvokeVirtual):
            recv_type = require_typed(st.receiver)
            try:
                program.resolve_method_above(recv_type, st.method_name)
            except ResolutionError:
                raise ResolutionError(
                    f"{where}: method {st.method_name!r} not found on {recv_type!r}"
                ) from None
            if st.result is not None:
                define(st.result, None)
        elif isinstance(st, InvokeStatic):
            cls = program.class_decl(st.class_name)
            if not any(m.name == st.method_name for m in cls.methods):
                raise ResolutionError(
                    f"{where}: static method {st.class_name}.{st.method_name} not declared"
                )
            if st.result is not None:
                define(st.result, None)
        elif isinstance(st, Return):
            if st.value is not None:
                require_defined(st.value)
            returns += 1
            if returns > 1:
                raise ResolutionError(f"{where}: more than one return")


def _resolve_field_checked(program, recv_type, field_name, where):
    try:
        return program.resolve_field(recv_type, field_name)
    except ResolutionError:
        raise ResolutionError(
            f"{where}: field {field_name!r} not found on {recv_type!r}"
        ) from None


def _parse_entry_points(program: Program, raw) -> tuple[MethodRef, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ProgramSyntaxError('"entryPoints" must be a list')
    entries = []
    for item in raw:
        if not isinstance(item, str) or item.count(".") != 1:
            raise ProgramSyntaxError(f"entry point {item!r} must look like Class.method")
        cls, meth = item.split(".")
        ref = MethodRef(cls, meth)
        program.method_decl(ref)
        entries.append(ref)
    return tuple(entries)


# --- canonical printer ----------------------------------------------------


def _statement_doc(st: Statement):
    if isinstance(st, New):
        return ["new", st.local, st.class_name]
    if isinstance(st, Const):
        return ["const", st.local]
    if isinstance(st, GetField):
        return ["getfield", st.local, st.receiver, st.field_name]
    if isinstance(st, PutField):
        return ["putfield", st.receiver, st.field_name, st.source]
    if isinstance(st, InvokeVirtual):
        head = ["invokevirtual"]
        if st.result is not None:
            head.append(st.result)
        return head + [st.receiver, st.method_name]
    if isinstance(st, InvokeStatic):
        head = ["invokestatic"]
        if st.result is not None:
            head.append(st.result)
        return head + [st.class_name, st.method_name]
    return ["return"] if st.value is None else ["return", st.value]


def print_program(program: Program) -> str:
    """Canonical JSON rendering; parse(print_program(p)) == p."""
    doc = {
        "classes": [
            {
                "name": c.name,
                **({"super": c.super_name} if c.super_name is not None else {}),
                "fields": [
                    {"name": f.name, "type": f.declared_type, "final": f.final}
                    for f in c.fields
                ],
                "methods": [
                    {
                        "name": m.name,
                        "params": [{"name": n, "type": t} for n, t in m.params],
                        "body": [_statement_doc(st) for st in m.body],
                    }
                    for m in c.methods
                ],
            }
            for c in program.classes
        ],
        "entryPoints": [str(e) for e in program.entry_points],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
