"""Demo analyses: mutability, purity, RTA call graph, and field types.

Each builder returns an ``AnalysisSpecification`` whose closures capture the
program.  Query behavior is kept syntactic (which keys get queried depends
only on the program text and on reachability, never on scheduling), so the
set of recorded keys is identical across schedulers and worker counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from . import ir
from .entities import CallSiteRef, ClassRef, EntityId, FieldRef, MethodRef, OpaqueRef
from .lattice import (
    Direction,
    KindRegistry,
    ObservedDependee,
    PropertyState,
)
from .registry import (
    Acceptance,
    AnalysisSpecification,
    DerivedKind,
    Eager,
    Lazy,
    Triggered,
    UseDeclaration,
    validate,
)
from .results import (
    FinalResult,
    InterimResult,
    PartialResult,
    Results,
    WithFollowups,
)

FIELD_MUTABILITY = "FieldMutability"
CLASS_MUTABILITY = "ClassMutability"
PURITY = "Purity"
CALLERS = "Callers"
CALLEES = "Callees"
INSTANTIATED_TYPES = "InstantiatedTypes"
FIELD_TYPES = "FieldTypes"

PROJECT = OpaqueRef("project")


# --- value universes --------------------------------------------------------


class FieldMutability(Enum):
    IMMUTABLE = "ImmutableField"
    MUTABLE = "MutableField"


class ClassMutability(Enum):
    IMMUTABLE = "ImmutableClass"
    MUTABLE = "MutableClass"


class Purity(Enum):
    """Total order Pure < SideEffectFree < Impure."""

    PURE = "Pure"
    SIDE_EFFECT_FREE = "SideEffectFree"
    IMPURE = "Impure"


_PURITY_RANK = {Purity.PURE: 0, Purity.SIDE_EFFECT_FREE: 1, Purity.IMPURE: 2}


def purity_join(a: Purity, b: Purity) -> Purity:
    return a if _PURITY_RANK[a] >= _PURITY_RANK[b] else b


@dataclass(frozen=True)
class CallersValue:
    """Callers of a method: call sites plus an entry-point mark.

    The empty, non-entry value means the method is dead (``NoCallers``).
    """

    entry_point: bool
    callers: frozenset  # of CallSiteRef

    @property
    def is_dead(self) -> bool:
        return not self.entry_point and not self.callers


NO_CALLERS = CallersValue(False, frozenset())
ENTRY_POINT = CallersValue(True, frozenset())


def _two_point(kinds, name, enum_cls, fallback_value):
    return kinds.declare(
        name,
        leq=lambda a, b: a is enum_cls.IMMUTABLE or a is b,
        join=lambda a, b: enum_cls.MUTABLE if enum_cls.MUTABLE in (a, b) else a,
        bottom=enum_cls.IMMUTABLE,
        top=enum_cls.MUTABLE,
        height=2,
        fallback=lambda e: fallback_value,
        member=lambda v: isinstance(v, enum_cls),
    )


def declare_demo_kinds(kinds: KindRegistry, program: ir.Program) -> None:
    """Register the descriptors of all demo property kinds.

    Fallback providers may use locally available program information
    (declared types, name matching) but never the store.
    """
    class_names = frozenset(c.name for c in program.classes)
    all_sites = tuple(
        site for m in program.all_methods() for site in program.call_sites(m)
    )
    all_methods = program.all_methods()

    _two_point(kinds, FIELD_MUTABILITY, FieldMutability, FieldMutability.MUTABLE)
    _two_point(kinds, CLASS_MUTABILITY, ClassMutability, ClassMutability.MUTABLE)

    kinds.declare(
        PURITY,
        leq=lambda a, b: _PURITY_RANK[a] <= _PURITY_RANK[b],
        join=purity_join,
        bottom=Purity.PURE,
        top=Purity.IMPURE,
        height=3,
        fallback=lambda e: Purity.IMPURE,
        member=lambda v: isinstance(v, Purity),
    )

    kinds.declare(
        CALLERS,
        leq=lambda a, b: (not a.entry_point or b.entry_point)
        and a.callers <= b.callers,
        join=lambda a, b: CallersValue(
            a.entry_point or b.entry_point, a.callers | b.callers
        ),
        bottom=NO_CALLERS,
        top=CallersValue(True, frozenset(all_sites)),
        height=len(all_sites) + 2,
        fallback=lambda e: CallersValue(True, frozenset(all_sites)),
        default=lambda e: NO_CALLERS,
        member=lambda v: isinstance(v, CallersValue),
    )

    kinds.declare(
        CALLEES,
        leq=lambda a, b: a <= b,
        join=lambda a, b: a | b,
        bottom=frozenset(),
        top=frozenset((s, m) for s in all_sites for m in all_methods),
        height=len(all_sites) * max(len(all_methods), 1) + 1,
        fallback=lambda e: _callees_fallback(program, e),
        default=lambda e: frozenset(),
        member=lambda v: isinstance(v, frozenset),
    )

    kinds.declare(
        INSTANTIATED_TYPES,
        leq=lambda a, b: a <= b,
        join=lambda a, b: a | b,
        bottom=frozenset(),
        top=class_names,
        height=len(class_names) + 1,
        fallback=lambda e: class_names,
        default=lambda e: frozenset(),
        member=lambda v: isinstance(v, frozenset),
    )

    kinds.declare(
        FIELD_TYPES,
        leq=lambda a, b: a <= b,
        join=lambda a, b: a | b,
        bottom=frozenset(),
        top=class_names,
        height=len(class_names) + 1,
        fallback=lambda e: _field_types_top(program, e),
        member=lambda v: isinstance(v, frozenset),
    )


def _callees_fallback(program: ir.Program, entity: EntityId) -> frozenset:
    """Sound callee map without the store: exact targets for static calls,
    name-matching methods program-wide for virtual ones."""
    if not isinstance(entity, MethodRef):
        return frozenset()
    edges = set()
    body = program.method_decl(entity).body
    for i, st in enumerate(body):
        site = CallSiteRef(entity, i)
        if isinstance(st, ir.InvokeStatic):
            edges.add((site, MethodRef(st.class_name, st.method_name)))
        elif isinstance(st, ir.InvokeVirtual):
            for target in program.methods_named(st.method_name):
                edges.add((site, target))
    return frozenset(edges)


def _field_types_top(program: ir.Program, entity: EntityId) -> frozenset:
    """All subtypes of the field's declared type, the sound starting point."""
    if not isinstance(entity, FieldRef):
        return frozenset(c.name for c in program.classes)
    decl = program.field_decl(entity)
    return frozenset(ir.subtypes_of(program, decl.declared_type))


# --- field mutability --------------------------------------------------------


def _mutable_written_fields(program: ir.Program) -> frozenset:
    """Fields with at least one write outside their declaring class's <init>."""
    written = set()
    for c in program.classes:
        for m in c.methods:
            mref = MethodRef(c.name, m.name)
            for st in m.body:
                if not isinstance(st, ir.PutField):
                    continue
                recv_type = program.local_types(mref)[st.receiver]
                fref = program.resolve_field(recv_type, st.field_name)
                if not (m.is_init and c.name == fref.class_name):
                    written.add(fref)
    return frozenset(written)


def make_field_mutability(program: ir.Program, kinds: KindRegistry):
    fm = kinds.by_name(FIELD_MUTABILITY).kind
    dirty = _mutable_written_fields(program)

    def analyze(ctx, entity: FieldRef):
        decl = program.field_decl(entity)
        if not decl.final and entity in dirty:
            return FinalResult(entity, fm, FieldMutability.MUTABLE)
        return FinalResult(entity, fm, FieldMutability.IMMUTABLE)

    def hook(store):
        store.install_analysis(spec, analyze)

    spec = AnalysisSpecification(
        name="field-mutability",
        derives=(DerivedKind(fm, Direction.OPTIMISTIC),),
        mode=Lazy(),
        uses=frozenset(),
        register_hook=hook,
    )
    return spec


# --- class mutability --------------------------------------------------------


def _is_mutable_value(value) -> bool:
    return value is ClassMutability.MUTABLE or value is FieldMutability.MUTABLE


def _class_mutability_result(cm, entity, mutable, deps, make_cont):
    if mutable:
        return FinalResult(entity, cm, ClassMutability.MUTABLE)
    if not deps:
        return FinalResult(entity, cm, ClassMutability.IMMUTABLE)
    return InterimResult(
        entity, cm, ClassMutability.IMMUTABLE, tuple(deps.values()), make_cont(deps)
    )


def _make_class_mutability(program, kinds, name, mode_factory, followups):
    cm = kinds.by_name(CLASS_MUTABILITY).kind
    fm = kinds.by_name(FIELD_MUTABILITY).kind

    def make_cont(deps):
        def cont(updated: PropertyState):
            entity = next(iter(deps.values())).entity if False else cont_entity
            remaining = dict(deps)
            key = (updated.entity, updated.kind)
            if updated.is_final:
                remaining.pop(key, None)
            else:
                remaining[key] = ObservedDependee.of(updated)
            mutable = updated.has_value and _is_mutable_value(updated.value)
            return _class_mutability_result(
                cm, cont_entity, mutable, remaining, make_cont
            )

        cont_entity = deps["__entity__"]
        deps = {k: v for k, v in deps.items() if k != "__entity__"}
        return cont

    def analyze(ctx, entity: ClassRef):
        decl = program.class_decl(entity.name)
        mutable = False
        deps = {}
        if decl.super_name is not None:
            state = ctx.query(ClassRef(decl.super_name), cm)
            if state.has_value and _is_mutable_value(state.value):
                mutable = True
            if not state.is_final:
                deps[(state.entity, state.kind)] = ObservedDependee.of(state)
        for f in decl.fields:
            state = ctx.query(FieldRef(entity.name, f.name), fm)
            if state.has_value and _is_mutable_value(state.value):
                mutable = True
            if not state.is_final:
                deps[(state.entity, state.kind)] = ObservedDependee.of(state)
        deps["__entity__"] = entity
        result = _class_mutability_result(
            cm, entity, mutable, {k: v for k, v in deps.items() if k != "__entity__"},
            lambda d: make_cont({**d, "__entity__": entity}),
        )
        if followups:
            subs = program.direct_subclasses(entity.name)
            if subs:
                result = WithFollowups(
                    result, tuple((name, ClassRef(s)) for s in subs)
                )
        return result

    def hook(store):
        store.preset_final(
            ClassRef(ir.ROOT_CLASS), cm, ClassMutability.IMMUTABLE
        )
        store.install_analysis(spec, analyze)

    spec = AnalysisSpecification(
        name=name,
        derives=(DerivedKind(cm, Direction.OPTIMISTIC),),
        mode=mode_factory(),
        uses=frozenset({UseDeclaration(fm, Acceptance.INTERIM_OPTIMISTIC)}),
        register_hook=hook,
    )
    return spec


def make_class_mutability(program, kinds):
    return _make_class_mutability(
        program, kinds, "class-mutability", Lazy, followups=False
    )


def make_class_mutability_eager(program, kinds):
    """Eager variant seeded at the hierarchy top; followups walk downward so
    every superclass is activated before its subclasses."""

    def selector(prog):
        return [ClassRef(n) for n in prog.direct_subclasses(ir.ROOT_CLASS)]

    return _make_class_mutability(
        program, kinds, "class-mutability-eager",
        lambda: Eager(selector), followups=True,
    )


# --- purity -------------------------------------------------------------------


def make_purity(program: ir.Program, kinds: KindRegistry):
    pu = kinds.by_name(PURITY).kind
    fm = kinds.by_name(FIELD_MUTABILITY).kind
    ce = kinds.by_name(CALLEES).kind

    def finish(entity, level, deps, edges):
        if level is Purity.IMPURE:
            return FinalResult(entity, pu, Purity.IMPURE)
        if not deps:
            return FinalResult(entity, pu, level)
        return InterimResult(
            entity, pu, level, tuple(deps.values()),
            make_cont(entity, level, deps, edges),
        )

    def make_cont(entity, level, deps, edges):
        def cont(updated: PropertyState):
            new_level = level
            remaining = dict(deps)
            new_edges = edges
            key = (updated.entity, updated.kind)
            if updated.kind == fm:
                if updated.has_value and updated.value is FieldMutability.MUTABLE:
                    new_level = purity_join(new_level, Purity.SIDE_EFFECT_FREE)
            elif updated.kind == pu:
                if updated.has_value:
                    new_level = purity_join(new_level, updated.value)
            elif updated.kind == ce:
                delivered = updated.value if updated.has_value else frozenset()
                old_targets = {t for _, t in new_edges}
                for target in sorted(
                    {t for _, t in delivered} - old_targets,
                    key=lambda m: m.sort_key(),
                ):
                    # continuations cannot query; register the new callee's
                    # purity as an unobserved dependee and let the store
                    # deliver its current state
                    remaining[(target, pu)] = ObservedDependee(
                        target, pu, PropertyState.no_value(target, pu)
                    )
                new_edges = delivered
            if updated.is_final:
                remaining.pop(key, None)
            elif key in remaining or updated.kind == ce:
                remaining[key] = ObservedDependee.of(updated)
            return finish(entity, new_level, remaining, new_edges)

        return cont

    def analyze(ctx, entity: MethodRef):
        body = program.method_decl(entity).body
        level = Purity.PURE
        deps = {}
        saw_invoke = False
        for st in body:
            if isinstance(st, ir.PutField):
                return FinalResult(entity, pu, Purity.IMPURE)
            if isinstance(st, ir.GetField):
                recv_type = program.local_types(entity)[st.receiver]
                fref = program.resolve_field(recv_type, st.field_name)
                state = ctx.query(fref, fm)
                if state.has_value and state.value is FieldMutability.MUTABLE:
                    level = purity_join(level, Purity.SIDE_EFFECT_FREE)
                if not state.is_final:
                    deps[(fref, fm)] = ObservedDependee.of(state)
            elif isinstance(st, (ir.InvokeVirtual, ir.InvokeStatic)):
                saw_invoke = True
        edges = frozenset()
        if saw_invoke:
            state = ctx.query(entity, ce)
            edges = state.value if state.has_value else frozenset()
            if not state.is_final:
                deps[(entity, ce)] = ObservedDependee.of(state)
            for target in sorted({t for _, t in edges}, key=lambda m: m.sort_key()):
                pstate = ctx.query(target, pu)
                if pstate.has_value:
                    level = purity_join(level, pstate.value)
                if not pstate.is_final:
                    deps[(target, pu)] = ObservedDependee.of(pstate)
        return finish(entity, level, deps, edges)

    def selector(prog):
        return list(prog.all_methods())

    def hook(store):
        store.install_analysis(spec, analyze)

    spec = AnalysisSpecification(
        name="purity",
        derives=(DerivedKind(pu, Direction.OPTIMISTIC),),
        mode=Eager(selector),
        uses=frozenset(
            {
                UseDeclaration(fm, Acceptance.INTERIM_OPTIMISTIC),
                UseDeclaration(ce, Acceptance.INTERIM_OPTIMISTIC),
                UseDeclaration(pu, Acceptance.INTERIM_OPTIMISTIC),
            }
        ),
        register_hook=hook,
    )
    return spec


# --- RTA call graph -------------------------------------------------------------


@dataclass(frozen=True)
class _StaticSite:
    site: CallSiteRef
    target: MethodRef


@dataclass(frozen=True)
class _VirtualSite:
    site: CallSiteRef
    declared_type: str
    method_name: str


@dataclass(frozen=True)
class _FieldSite:
    """Virtual call whose receiver was loaded from a field; the receiver's
    possible types come from that field's FieldTypes value, final-only."""

    site: CallSiteRef
    field: FieldRef
    method_name: str


def _call_model(program: ir.Program, mref: MethodRef):
    body = program.method_decl(mref).body
    types = program.local_types(mref)
    defs = {}
    for st in body:
        if isinstance(st, ir.New):
            defs[st.local] = st
        elif isinstance(st, ir.GetField):
            defs[st.local] = st
    sites = []
    new_types = set()
    for i, st in enumerate(body):
        if isinstance(st, ir.New):
            new_types.add(st.class_name)
        elif isinstance(st, ir.InvokeStatic):
            sites.append(
                _StaticSite(CallSiteRef(mref, i), MethodRef(st.class_name, st.method_name))
            )
        elif isinstance(st, ir.InvokeVirtual):
            site = CallSiteRef(mref, i)
            defining = defs.get(st.receiver)
            if isinstance(defining, ir.GetField):
                recv_type = types[defining.receiver]
                fref = program.resolve_field(recv_type, defining.field_name)
                sites.append(_FieldSite(site, fref, st.method_name))
            else:
                sites.append(_VirtualSite(site, types[st.receiver], st.method_name))
    return tuple(sites), frozenset(new_types)


def make_callgraph_rta(program: ir.Program, kinds: KindRegistry):
    ce = kinds.by_name(CALLEES).kind
    cr = kinds.by_name(CALLERS).kind
    it = kinds.by_name(INSTANTIATED_TYPES).kind
    ft = kinds.by_name(FIELD_TYPES).kind

    def resolve_edges(sites, inst, field_types):
        edges = set()
        for s in sites:
            if isinstance(s, _StaticSite):
                edges.add((s.site, s.target))
            elif isinstance(s, _VirtualSite):
                for t in inst & set(ir.subtypes_of(program, s.declared_type)):
                    edges.add((s.site, program.resolve_method_above(t, s.method_name)))
            else:
                known = field_types.get(s.field)
                if known is None:
                    continue  # withheld until the field's types are final
                candidates = set()
                for t in known:
                    candidates |= set(ir.subtypes_of(program, t))
                for t in inst & candidates:
                    edges.add((s.site, program.resolve_method_above(t, s.method_name)))
        return frozenset(edges)

    def add_instantiated(types):
        def update(state):
            current = state.value if state.has_value else frozenset()
            merged = current | types
            return None if merged == current else merged

        return update

    def add_caller(site):
        def update(state):
            current = state.value if state.has_value else NO_CALLERS
            merged = CallersValue(current.entry_point, current.callers | {site})
            return None if merged == current else merged

        return update

    def assemble(entity, edges, contributed, deps, field_types, inst, sites,
                 include_new_types=None):
        results = []
        if include_new_types:
            results.append(PartialResult(PROJECT, it, add_instantiated(include_new_types)))
        for site, target in sorted(
            edges - contributed, key=lambda p: (p[0].sort_key(), p[1].sort_key())
        ):
            results.append(PartialResult(target, cr, add_caller(site)))
        if deps:
            results.append(
                InterimResult(
                    entity, ce, edges, tuple(deps.values()),
                    make_cont(entity, sites, edges, deps, field_types, inst),
                )
            )
        else:
            results.append(FinalResult(entity, ce, edges))
        return results[0] if len(results) == 1 else Results(tuple(results))

    def make_cont(entity, sites, contributed, deps, field_types, inst):
        def cont(updated: PropertyState):
            new_inst = inst
            new_ft = dict(field_types)
            remaining = dict(deps)
            key = (updated.entity, updated.kind)
            if updated.kind == it:
                new_inst = updated.value if updated.has_value else frozenset()
            elif updated.kind == ft:
                # suppressed edge: the store only ever delivers final states
                new_ft[updated.entity] = updated.value
            if updated.is_final:
                remaining.pop(key, None)
            else:
                remaining[key] = ObservedDependee.of(updated)
            edges = resolve_edges(sites, set(new_inst), new_ft)
            return assemble(
                entity, edges, contributed, remaining, new_ft, new_inst, sites
            )

        return cont

    def analyze(ctx, entity: MethodRef):
        sites, new_types = _call_model(program, entity)
        deps = {}
        inst = frozenset()
        field_types = {}
        if any(not isinstance(s, _StaticSite) for s in sites):
            state = ctx.query(PROJECT, it)
            inst = state.value if state.has_value else frozenset()
            if not state.is_final:
                deps[(PROJECT, it)] = ObservedDependee.of(state)
        for s in sites:
            if isinstance(s, _FieldSite) and s.field not in field_types:
                state = ctx.query(s.field, ft)
                if state.is_final:
                    field_types[s.field] = state.value
                else:
                    deps[(s.field, ft)] = ObservedDependee.of(state)
        edges = resolve_edges(sites, set(inst), field_types)
        return assemble(
            entity, edges, frozenset(), deps, field_types, inst, sites,
            include_new_types=new_types,
        )

    def hook(store):
        for entry in program.entry_points:
            store.preset_final(entry, cr, ENTRY_POINT)
        store.install_analysis(spec, analyze)

    spec = AnalysisSpecification(
        name="callgraph-rta",
        derives=(
            DerivedKind(ce, Direction.OPTIMISTIC, collaborative=True),
            DerivedKind(cr, Direction.OPTIMISTIC, collaborative=True),
            DerivedKind(it, Direction.OPTIMISTIC, collaborative=True),
        ),
        mode=Triggered(cr),
        uses=frozenset(
            {
                UseDeclaration(it, Acceptance.INTERIM_OPTIMISTIC),
                UseDeclaration(ft, Acceptance.FINAL_ONLY),
            }
        ),
        register_hook=hook,
    )
    return spec


# --- field types ------------------------------------------------------------------


def _field_write_model(program: ir.Program):
    """Per field: statically known stored types plus copied-from fields.

    Write sources: a New contributes its class, a Const contributes nothing,
    a field-to-field copy contributes the source field's types, parameters
    and ``this`` contribute their declared type's subtypes, and sources with
    no declared type contribute the target field's whole universe.
    """
    static: dict[FieldRef, set] = {}
    copies: dict[FieldRef, set] = {}
    for c in program.classes:
        for m in c.methods:
            mref = MethodRef(c.name, m.name)
            types = program.local_types(mref)
            defs = {}
            for st in m.body:
                if isinstance(st, (ir.New, ir.Const, ir.GetField)):
                    defs[st.local] = st
                elif isinstance(st, (ir.InvokeVirtual, ir.InvokeStatic)):
                    if st.result is not None:
                        defs[st.result] = st
            params = {"this", *(p for p, _ in m.params)}
            for st in m.body:
                if not isinstance(st, ir.PutField):
                    continue
                recv_type = types[st.receiver]
                fref = program.resolve_field(recv_type, st.field_name)
                top_f = set(_field_types_top(program, fref))
                defining = defs.get(st.source)
                contrib = static.setdefault(fref, set())
                copies.setdefault(fref, set())
                if isinstance(defining, ir.New):
                    contrib |= {defining.class_name} & top_f
                elif isinstance(defining, ir.Const):
                    pass
                elif isinstance(defining, ir.GetField):
                    src_type = types[defining.receiver]
                    copies[fref].add(
                        program.resolve_field(src_type, defining.field_name)
                    )
                elif st.source in params and types[st.source] is not None:
                    contrib |= set(ir.subtypes_of(program, types[st.source])) & top_f
                else:
                    contrib |= top_f  # opaque source: assume the whole universe
    return static, copies


def make_field_types(program: ir.Program, kinds: KindRegistry):
    ft = kinds.by_name(FIELD_TYPES).kind
    static, copies = _field_write_model(program)

    def finish(entity, top_f, fixed, contributions, deps):
        value = frozenset(fixed)
        for contrib in contributions.values():
            value |= contrib
        if not deps:
            return FinalResult(entity, ft, value)
        return InterimResult(
            entity, ft, value, tuple(deps.values()),
            make_cont(entity, top_f, fixed, contributions, deps),
        )

    def make_cont(entity, top_f, fixed, contributions, deps):
        def cont(updated: PropertyState):
            remaining = dict(deps)
            new_contrib = dict(contributions)
            key = (updated.entity, updated.kind)
            if updated.has_value:
                new_contrib[updated.entity] = updated.value & top_f
            if updated.is_final:
                remaining.pop(key, None)
            else:
                remaining[key] = ObservedDependee.of(updated)
            return finish(entity, top_f, fixed, new_contrib, remaining)

        return cont

    def analyze(ctx, entity: FieldRef):
        top_f = frozenset(_field_types_top(program, entity))
        fixed = frozenset(static.get(entity, ())) & top_f
        contributions = {}
        deps = {}
        for g in sorted(copies.get(entity, ()), key=lambda f: f.sort_key()):
            state = ctx.query(g, ft)
            if state.has_value:
                contributions[g] = state.value & top_f
            else:
                # pessimistic start: an unresolved copy source contributes
                # its own whole universe until a narrower value arrives
                contributions[g] = frozenset(_field_types_top(program, g)) & top_f
            if not state.is_final:
                deps[(g, ft)] = ObservedDependee.of(state)
        return finish(entity, top_f, fixed, contributions, deps)

    def hook(store):
        store.install_analysis(spec, analyze)

    spec = AnalysisSpecification(
        name="field-types",
        derives=(DerivedKind(ft, Direction.PESSIMISTIC),),
        mode=Lazy(),
        uses=frozenset({UseDeclaration(ft, Acceptance.INTERIM_PESSIMISTIC)}),
        register_hook=hook,
    )
    return spec


# --- catalogue and driver -----------------------------------------------------------


CATALOG = {
    "field-mutability": make_field_mutability,
    "class-mutability": make_class_mutability,
    "class-mutability-eager": make_class_mutability_eager,
    "purity": make_purity,
    "callgraph-rta": make_callgraph_rta,
    "field-types": make_field_types,
}


def interest_keys(analysis_names, program: ir.Program, kinds: KindRegistry):
    """The end-user result keys for the selected analyses: every entity the
    derived kinds apply to.  This is what a run reports on."""
    keys = set()
    for name in analysis_names:
        if name == "field-mutability":
            k = kinds.by_name(FIELD_MUTABILITY).kind
            keys |= {(f, k) for f in program.all_fields()}
        elif name in ("class-mutability", "class-mutability-eager"):
            k = kinds.by_name(CLASS_MUTABILITY).kind
            keys |= {(ClassRef(c.name), k) for c in program.classes}
        elif name == "purity":
            k = kinds.by_name(PURITY).kind
            keys |= {(m, k) for m in program.all_methods()}
        elif name == "callgraph-rta":
            cr = kinds.by_name(CALLERS).kind
            ce = kinds.by_name(CALLEES).kind
            it = kinds.by_name(INSTANTIATED_TYPES).kind
            keys |= {(m, cr) for m in program.all_methods()}
            keys |= {(m, ce) for m in program.all_methods()}
            keys.add((PROJECT, it))
        elif name == "field-types":
            k = kinds.by_name(FIELD_TYPES).kind
            keys |= {(f, k) for f in program.all_fields()}
        else:
            raise ValueError(f"unknown analysis {name!r}")
    return sorted(keys, key=lambda kv: (kv[0].sort_key(), kv[1].name))


def build_configuration(program: ir.Program, analysis_names):
    """Declare kinds, build the selected specifications, and validate them."""
    kinds = KindRegistry()
    declare_demo_kinds(kinds, program)
    unknown = [n for n in analysis_names if n not in CATALOG]
    if unknown:
        raise ValueError(
            f"unknown analyses {unknown}; known: {sorted(CATALOG)}"
        )
    specs = [CATALOG[name](program, kinds) for name in analysis_names]
    return kinds, validate(specs)


# --- canonical rendering ------------------------------------------------------------


def render_value(kind_name: str, value):
    """Stable JSON value for one property; used by results files and diffs."""
    if kind_name in (FIELD_MUTABILITY, CLASS_MUTABILITY, PURITY):
        return value.value
    if kind_name == CALLERS:
        if value.is_dead:
            return "NoCallers"
        return {
            "entryPoint": value.entry_point,
            "callers": sorted(str(site) for site in value.callers),
        }
    if kind_name == CALLEES:
        grouped: dict[str, list] = {}
        for site, target in value:
            grouped.setdefault(str(site), []).append(str(target))
        return {site: sorted(targets) for site, targets in sorted(grouped.items())}
    if kind_name in (INSTANTIATED_TYPES, FIELD_TYPES):
        return sorted(value)
    if isinstance(value, frozenset):
        return sorted(str(v) for v in value)
    if isinstance(value, Enum):
        return value.value
    return str(value)


def result_rows(items):
    """Sorted, fixed-field-order rows for the results file."""
    rows = [
        {
            "entity": str(entity),
            "kind": kind.name,
            "value": render_value(kind.name, value),
            "final": True,
        }
        for entity, kind, value in items
    ]
    rows.sort(key=lambda r: (r["entity"], r["kind"]))
    return rows
