"""The blackboard: property states, activation dispatch, and the solver.

The store keeps one state per (entity, kind) pair, tracks which activations
depend on which states, and drives initial analysis functions and
continuations through an exchangeable scheduler until quiescence.  At
quiescence it applies the three resolution phases in order: default values
for entities the deriving analysis never visited, finalization of closed
strongly connected components of interim dependencies, and commit-order
finalization of collaboratively computed kinds.

Concurrency contract: all mutations of one (entity, kind) are serialized;
activations for distinct keys may run on up to ``workers`` threads; the
resolution phases run exclusively with all workers drained.  Single-worker
mode is the reference behavior.

Scheduling robustness: every submitted interim result advances its key's
epoch, and continuation tasks carry the epoch of the registration that
created them.  A task whose epoch is stale (a newer activation of the same
key re-registered its dependencies, re-observing their current states) is
dropped; conversely, a dependee that advanced between being observed and the
registration being recorded gets its continuation re-enqueued immediately
with the newest state.  Together these keep results independent of task
ordering.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .entities import EntityId, entity_sort_key
from .lattice import (
    Direction,
    KindRegistry,
    MonotonicityViolation,
    ObservedDependee,
    PropertyKind,
    PropertyState,
    check_monotone,
)
from .registry import (
    AnalysisSpecification,
    Eager,
    Lazy,
    RegistrationError,
    Schedule,
    Triggered,
)
from .results import (
    AnalysisResult,
    ContinuationActivation,
    Finalize,
    FinalResult,
    InitialActivation,
    InterimResult,
    MultiResult,
    PartialResult,
    Results,
    SchedulerPolicy,
    Task,
    WithFollowups,
)

log = logging.getLogger(__name__)


class StoreError(Exception):
    """Base class for blackboard protocol violations."""


class AlreadySet(StoreError):
    pass


class PhaseViolation(StoreError):
    pass


class RegistrationPhaseViolation(StoreError):
    pass


class UndeclaredUse(StoreError):
    pass


class FinalOverwrite(StoreError):
    pass


class ForeignKind(StoreError):
    pass


class NonTermination(StoreError):
    pass


_Key = tuple[EntityId, PropertyKind]


def _key_sort(key: _Key):
    entity, kind = key
    return (entity_sort_key(entity), kind.name)


@dataclass
class _DependerLink:
    """One registered dependency edge, stored on the dependee's entry."""

    depender_key: _Key
    spec_name: str
    continuation: Callable[[PropertyState], AnalysisResult]
    epoch: int
    suppressed: bool


@dataclass
class _Entry:
    state: PropertyState
    epoch: int = 0
    dependers: dict = field(default_factory=dict)   # depender key -> _DependerLink
    dependees: frozenset = frozenset()              # keys this key depends on


@dataclass(frozen=True)
class ActivationContext:
    """Handed to initial analysis functions; the only query surface they get."""

    store: "PropertyStore"
    spec: AnalysisSpecification
    entity: EntityId

    def query(self, entity: EntityId, kind: PropertyKind) -> PropertyState:
        return self.store._query(self.spec, entity, kind)


class SolvedStore:
    """Read-only view of the fully resolved store; every state is final."""

    def __init__(self, values: dict):
        self._values = values

    def items(self):
        return [
            (entity, kind, self._values[(entity, kind)])
            for entity, kind in sorted(self._values, key=_key_sort)
        ]

    def value(self, entity: EntityId, kind: PropertyKind):
        return self._values[(entity, kind)]

    def get(self, entity: EntityId, kind: PropertyKind, default=None):
        return self._values.get((entity, kind), default)

    def __len__(self):
        return len(self._values)

    def __contains__(self, key):
        return key in self._values


_RESULT_LABELS = {
    FinalResult: "final",
    InterimResult: "interim",
    PartialResult: "partial",
    MultiResult: "multi",
    Results: "results",
    WithFollowups: "followups",
}


class PropertyStore:
    """Blackboard holding property states and coordinating analyses."""

    def __init__(
        self,
        kinds: KindRegistry,
        schedule: Schedule,
        *,
        check_monotonicity: bool = True,
        activation_budget: int = 10_000_000,
        keep_trace: bool = False,
    ):
        self._kinds = kinds
        self._schedule = schedule
        self._check = check_monotonicity
        self._budget = activation_budget

        self._spec_by_name = {s.name: s for s in schedule.specs}
        self._iafs: dict[str, Callable] = {}
        self._derivers: dict[PropertyKind, list[AnalysisSpecification]] = {}
        self._lazy_deriver: dict[PropertyKind, AnalysisSpecification] = {}
        self._direction: dict[PropertyKind, Direction] = {}
        self._collaborative: set[PropertyKind] = set()
        self._triggers: dict[PropertyKind, list[AnalysisSpecification]] = {}
        self._suppressed_for: dict[str, frozenset[PropertyKind]] = {}
        for s in schedule.specs:
            for d in s.derives:
                self._derivers.setdefault(d.kind, []).append(s)
                self._direction[d.kind] = d.direction
                if d.collaborative:
                    self._collaborative.add(d.kind)
                if isinstance(s.mode, Lazy):
                    self._lazy_deriver[d.kind] = s
            if isinstance(s.mode, Triggered):
                self._triggers.setdefault(s.mode.trigger_kind, []).append(s)
            self._suppressed_for[s.name] = frozenset(
                p
                for c, p in schedule.suppression_edges
                if c in s.derived_kinds()
            )

        self._entries: dict[_Key, _Entry] = {}
        self._pool: dict[int, Task] = {}
        self._seq = 0
        self._started: set[tuple[str, EntityId]] = set()
        self._requested: set[_Key] = set()
        self._presets: list[_Key] = []
        self._phase = "registration"
        self._commit_level = 0
        self._activations = 0
        self._fatal: Optional[BaseException] = None
        self._running_keys: set[_Key] = set()
        self._cond = threading.Condition(threading.RLock())

        self.trace_lines: Optional[list[str]] = [] if keep_trace else None
        self.monotonicity_reports: list[MonotonicityViolation] = []
        # instrumentation hooks (tests): called outside the store lock
        self.on_delivery: Optional[Callable[[str, PropertyState], None]] = None
        self.on_task_start: Optional[Callable[[Task], None]] = None
        self.on_task_end: Optional[Callable[[Task], None]] = None
        self.stats = {
            "activations": 0,
            "tasks_enqueued": 0,
            "tasks_dropped": 0,
            "quiescence_rounds": 0,
            "default_insertions": 0,
            "scc_finalizations": 0,
            "commit_finalizations": 0,
            "fallback_records": 0,
            "seconds_quiescence": 0.0,
            "seconds_phases": 0.0,
        }

    # --- registration phase ------------------------------------------------

    def preset_final(self, entity: EntityId, kind: PropertyKind, value) -> None:
        """Record a precomputed value; only allowed before solving starts."""
        with self._cond:
            if self._phase != "registration":
                raise PhaseViolation("presets are only allowed during registration")
            key = (entity, kind)
            if key in self._entries:
                raise AlreadySet(f"({entity}, {kind.name}) already has a state")
            entry = self._entry(key)
            self._set_state(entry, PropertyState.final(value, entity, kind), "preset")
            self._presets.append(key)
            self._requested.add(key)

    def install_analysis(self, spec: AnalysisSpecification, initial_fn) -> None:
        """Hand an analysis's initial function to the store (from its hook)."""
        with self._cond:
            if self._phase != "registration":
                raise PhaseViolation("analyses must be installed during registration")
            if spec.name not in self._spec_by_name:
                raise RegistrationError(f"analysis {spec.name!r} is not in the schedule")
            if spec.name in self._iafs:
                raise RegistrationError(f"analysis {spec.name!r} installed twice")
            self._iafs[spec.name] = initial_fn

    def finish_registration(self, program) -> None:
        """Arm eager selections and triggered subscriptions; close registration."""
        with self._cond:
            if self._phase != "registration":
                raise PhaseViolation("registration already finished")
            missing = [s.name for s in self._schedule.specs if s.name not in self._iafs]
            if missing:
                raise RegistrationError(
                    f"register hooks did not install an analysis function for {missing}"
                )
            self._phase = "ready"
            for spec in self._schedule.specs:
                if isinstance(spec.mode, Eager):
                    for entity in spec.mode.selector(program):
                        self._enqueue_initial(spec, entity)

    # --- lookup surface ------------------------------------------------------

    def request(self, entity: EntityId, kind: PropertyKind) -> PropertyState:
        """End-user interest in a property; may start a lazy computation."""
        with self._cond:
            if self._phase == "registration":
                raise RegistrationPhaseViolation(
                    "the store cannot be queried during registration"
                )
            return self._lookup(entity, kind)

    def _query(self, spec, entity, kind) -> PropertyState:
        with self._cond:
            if self._phase == "registration":
                raise RegistrationPhaseViolation(
                    "the store cannot be queried during registration"
                )
            if kind not in spec.queryable_kinds():
                raise UndeclaredUse(
                    f"analysis {spec.name!r} queried undeclared kind {kind.name}"
                )
            state = self._lookup(entity, kind)
            if state.is_interim and kind in self._suppressed_for[spec.name]:
                # interim values on this edge are withheld; the requestor
                # must register a final-only dependency
                return PropertyState.no_value(entity, kind, pending_final=True)
            return state

    def _lookup(self, entity, kind) -> PropertyState:
        key = (entity, kind)
        self._requested.add(key)
        entry = self._entries.get(key)
        if entry is not None:
            return entry.state
        if kind not in self._derivers:
            return self._record_fallback(key)
        lazy = self._lazy_deriver.get(kind)
        if lazy is not None and self._phase in ("ready", "solving"):
            self._enqueue_initial(lazy, entity)
        return PropertyState.no_value(entity, kind)

    def _record_fallback(self, key) -> PropertyState:
        entity, kind = key
        desc = self._kinds.descriptor(kind)
        entry = self._entry(key)
        state = PropertyState.final(desc.fallback_for(entity), entity, kind)
        self._set_state(entry, state, "fallback")
        self.stats["fallback_records"] += 1
        return state

    def state_of(self, entity: EntityId, kind: PropertyKind) -> PropertyState:
        with self._cond:
            entry = self._entries.get((entity, kind))
            return entry.state if entry else PropertyState.no_value(entity, kind)

    def depender_count(self, key: _Key) -> int:
        entry = self._entries.get(key)
        return len(entry.dependers) if entry else 0

    # --- result submission ---------------------------------------------------

    def submit(self, spec: AnalysisSpecification, result: AnalysisResult) -> None:
        """Apply an activation's result; enqueues all consequent work."""
        with self._cond:
            if self._phase not in ("ready", "solving"):
                raise PhaseViolation(f"cannot submit results in phase {self._phase!r}")
            self._submit(spec, result)

    def _submit(self, spec, result):
        if isinstance(result, WithFollowups):
            self._submit(spec, result.inner)
            for name, entity in result.followups:
                target = self._spec_by_name.get(name)
                if target is None:
                    raise RegistrationError(f"followup names unknown analysis {name!r}")
                self._enqueue_initial(target, entity)
        elif isinstance(result, Results):
            for r in result.results:
                self._submit(spec, r)
        elif isinstance(result, MultiResult):
            for r in result.results:
                self._apply_final(spec, r.entity, r.kind, r.value)
        elif isinstance(result, FinalResult):
            self._apply_final(spec, result.entity, result.kind, result.value)
        elif isinstance(result, InterimResult):
            self._apply_interim(spec, result)
        elif isinstance(result, PartialResult):
            self._apply_partial(spec, result)
        else:
            raise TypeError(f"not an analysis result: {result!r}")

    def _require_derives(self, spec, kind):
        if kind not in spec.derived_kinds():
            raise ForeignKind(
                f"analysis {spec.name!r} submitted a result for {kind.name}, "
                "which it does not derive"
            )

    def _monocheck(self, kind, old, new):
        if not old.has_value:
            return
        report = check_monotone(
            self._kinds.descriptor(kind), self._direction[kind], old, new
        )
        if report is not None:
            self.monotonicity_reports.append(report)
            if self._check:
                raise report
            log.warning("monotonicity violation (continuing unchecked): %s", report)

    def _apply_final(self, spec, entity, kind, value):
        self._require_derives(spec, kind)
        key = (entity, kind)
        entry = self._entry(key)
        old = entry.state
        if old.is_final:
            if old.value == value:
                return
            raise FinalOverwrite(
                f"({entity}, {kind.name}) is final as {old.value!r}; "
                f"rejecting {value!r}"
            )
        new = PropertyState.final(value, entity, kind)
        self._monocheck(kind, old, new)
        self._set_state(entry, new, "analysis")
        self._finalized(key, entry)

    def _apply_interim(self, spec, result: InterimResult):
        self._require_derives(spec, result.kind)
        key = (result.entity, result.kind)
        entry = self._entry(key)
        old = entry.state
        if old.is_final:
            raise FinalOverwrite(
                f"interim result for already-final ({result.entity}, {result.kind.name})"
            )
        new = PropertyState.interim(
            result.value, self._direction[result.kind], result.entity, result.kind
        )
        self._monocheck(result.kind, old, new)
        self._set_state(entry, new, "analysis")
        changed = not (old.is_interim and old.value == result.value)
        self._replace_dependees(key, entry, spec, result.dependees, result.continuation)
        if changed:
            self._notify(key, entry)

    def _apply_partial(self, spec, result: PartialResult):
        self._require_derives(spec, result.kind)
        if result.kind not in self._collaborative:
            raise StoreError(
                f"partial result targets non-collaborative kind {result.kind.name}"
            )
        key = (result.entity, result.kind)
        entry = self._entry(key)
        old = entry.state
        new_value = result.update(old.at(result.entity, result.kind))
        if new_value is None or (old.has_value and new_value == old.value):
            return
        if old.is_final:
            raise FinalOverwrite(
                f"update function changed final ({result.entity}, {result.kind.name})"
            )
        new = PropertyState.interim(
            new_value, self._direction[result.kind], result.entity, result.kind
        )
        self._monocheck(result.kind, old, new)
        self._set_state(entry, new, "analysis")
        self._notify(key, entry)

    # --- state plumbing --------------------------------------------------------

    def _entry(self, key) -> _Entry:
        entry = self._entries.get(key)
        if entry is None:
            entity, kind = key
            entry = _Entry(PropertyState.no_value(entity, kind))
            self._entries[key] = entry
        return entry

    def _set_state(self, entry: _Entry, new: PropertyState, source: str):
        created = not entry.state.has_value and new.has_value
        entry.state = new
        # triggered analyses start on preset values (fired in solve's prologue)
        # and on analysis-produced records, never on fallbacks or defaults
        if created and source == "analysis" and self._phase == "solving":
            for spec in self._triggers.get(new.kind, ()):
                self._enqueue_initial(spec, new.entity)

    def _replace_dependees(self, key, entry, spec, dependees, continuation):
        entry.epoch += 1
        for old_dep in entry.dependees:
            old_entry = self._entries.get(old_dep)
            if old_entry is not None:
                old_entry.dependers.pop(key, None)
        entry.dependees = frozenset(d.key for d in dependees)
        suppressed_kinds = self._suppressed_for[spec.name]
        for dep in dependees:
            if dep.kind not in spec.queryable_kinds():
                raise UndeclaredUse(
                    f"analysis {spec.name!r} registered a dependency on undeclared "
                    f"kind {dep.kind.name}"
                )
            dep_key = dep.key
            dep_entry = self._entries.get(dep_key)
            if dep_entry is None:
                # a dependency is a query: record interest, start lazy work,
                # or materialize the fallback for underived kinds
                self._requested.add(dep_key)
                if dep.kind not in self._derivers:
                    self._record_fallback(dep_key)
                    dep_entry = self._entries[dep_key]
                else:
                    lazy = self._lazy_deriver.get(dep.kind)
                    if lazy is not None:
                        self._enqueue_initial(lazy, dep.entity)
                    dep_entry = self._entry(dep_key)
            else:
                self._requested.add(dep_key)
            suppressed = dep.kind in suppressed_kinds
            dep_entry.dependers[key] = _DependerLink(
                depender_key=key,
                spec_name=spec.name,
                continuation=continuation,
                epoch=entry.epoch,
                suppressed=suppressed,
            )
            # stale-read repair: the dependee may have advanced between the
            # observation and this registration
            current = dep_entry.state
            if self._observably_different(dep.observed, current, suppressed):
                self._enqueue_continuation(
                    key, spec.name, entry.epoch, continuation,
                    current.at(dep.entity, dep.kind),
                )

    @staticmethod
    def _observably_different(observed, current, suppressed) -> bool:
        if suppressed and not current.is_final:
            return False
        return (
            observed.phase is not current.phase or observed.value != current.value
        )

    def _notify(self, key, entry):
        """Enqueue continuations of everything depending on an updated key."""
        state = entry.state
        for dep_key, link in list(entry.dependers.items()):
            if link.suppressed and not state.is_final:
                continue
            depender = self._entries.get(dep_key)
            if depender is None or depender.state.is_final:
                continue
            self._enqueue_continuation(
                dep_key, link.spec_name, link.epoch, link.continuation,
                state.at(key[0], key[1]),
            )
        if state.is_final:
            entry.dependers.clear()

    def _finalized(self, key, entry):
        """Bookkeeping shared by every road to a final state."""
        entry.epoch += 1  # invalidates pending continuations of this key
        for dep in entry.dependees:
            dep_entry = self._entries.get(dep)
            if dep_entry is not None:
                dep_entry.dependers.pop(key, None)
        entry.dependees = frozenset()
        self._notify(key, entry)

    # --- task machinery -----------------------------------------------------

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _enqueue_initial(self, spec, entity):
        if (spec.name, entity) in self._started:
            return
        self._started.add((spec.name, entity))
        task = InitialActivation(
            self._next_seq(), (entity, spec.primary_kind), spec.name, entity
        )
        self._pool[task.seq] = task
        self.stats["tasks_enqueued"] += 1
        self._cond.notify_all()

    def _enqueue_continuation(self, key, spec_name, epoch, continuation, delivered):
        task = ContinuationActivation(
            self._next_seq(), key, spec_name, epoch, continuation, delivered
        )
        self._pool[task.seq] = task
        self.stats["tasks_enqueued"] += 1
        self._cond.notify_all()

    def _trace(self, task: Task, result_label: str):
        if self.trace_lines is None:
            return
        entity, kind = task.key
        self.trace_lines.append(
            f"{task.seq}\t{task.kind_label}\t{entity}\t{kind.name}\t{result_label}"
        )

    def _result_label(self, result) -> str:
        return _RESULT_LABELS.get(type(result), "unknown")

    def _execute(self, task: Task):
        self._activations += 1
        self.stats["activations"] += 1
        if self._activations > self._budget:
            raise NonTermination(
                f"activation budget of {self._budget} exceeded "
                f"({len(self._pool)} tasks still pending); the configuration "
                "probably violates monotonicity or the chain condition"
            )
        if isinstance(task, ContinuationActivation):
            with self._cond:
                entry = self._entries.get(task.key)
                stale = (
                    entry is None
                    or entry.state.is_final
                    or entry.epoch != task.epoch
                )
            if stale:
                self.stats["tasks_dropped"] += 1
                self._trace(task, "dropped")
                return
        if self.on_task_start is not None:
            self.on_task_start(task)
        try:
            if isinstance(task, InitialActivation):
                spec = self._spec_by_name[task.spec_name]
                ctx = ActivationContext(self, spec, task.entity)
                result = self._iafs[task.spec_name](ctx, task.entity)
            else:
                if self.on_delivery is not None:
                    self.on_delivery(task.spec_name, task.delivered)
                spec = self._spec_by_name[task.spec_name]
                result = task.continuation(task.delivered)
            self.submit(spec, result)
            self._trace(task, self._result_label(result))
        finally:
            if self.on_task_end is not None:
                self.on_task_end(task)

    # --- quiescence ------------------------------------------------------------

    def run_to_quiescence(self, policy: SchedulerPolicy, workers: int = 1) -> None:
        """Execute tasks until the pool is empty and all workers are idle."""
        if self._phase == "ready":
            self._phase = "solving"
        if self._phase != "solving":
            raise PhaseViolation(f"cannot run in phase {self._phase!r}")
        self.stats["quiescence_rounds"] += 1
        started = time.perf_counter()
        try:
            if workers <= 1:
                self._run_single(policy)
            else:
                self._run_parallel(policy, workers)
        finally:
            self.stats["seconds_quiescence"] += time.perf_counter() - started

    def _run_single(self, policy):
        pool = self._pool
        fast = policy.name if policy.name in ("fifo", "lifo") else None
        while pool:
            if fast == "fifo":
                task = next(iter(pool.values()))
            elif fast == "lifo":
                task = next(reversed(pool.values()))
            else:
                task = policy.pick(list(pool.values()), self)
            del pool[task.seq]
            self._execute(task)

    def _claim(self, policy):
        """Pick a claimable task (key not running); caller holds the lock."""
        pool = self._pool
        if policy.name == "fifo":
            for task in pool.values():
                if task.key not in self._running_keys:
                    return task
            return None
        if policy.name == "lifo":
            for task in reversed(pool.values()):
                if task.key not in self._running_keys:
                    return task
            return None
        candidates = [t for t in pool.values() if t.key not in self._running_keys]
        return policy.pick(candidates, self) if candidates else None

    def _run_parallel(self, policy, workers):
        self._fatal = None
        threads = [
            threading.Thread(
                target=self._worker_loop, args=(policy,), daemon=True,
                name=f"propboard-worker-{i}",
            )
            for i in range(workers)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if self._fatal is not None:
            raise self._fatal

    def _worker_loop(self, policy):
        while True:
            with self._cond:
                task = None
                while True:
                    if self._fatal is not None:
                        return
                    if not self._pool and not self._running_keys:
                        self._cond.notify_all()
                        return
                    task = self._claim(policy)
                    if task is not None:
                        break
                    self._cond.wait()
                del self._pool[task.seq]
                self._running_keys.add(task.key)
            try:
                self._execute(task)
            except BaseException as exc:
                with self._cond:
                    if self._fatal is None:
                        self._fatal = exc
                    self._running_keys.discard(task.key)
                    self._cond.notify_all()
                return
            with self._cond:
                self._running_keys.discard(task.key)
                self._cond.notify_all()

    # --- resolution phases -------------------------------------------------------

    def _finalize_key(self, key, reason):
        entry = self._entries[key]
        entity, kind = key
        entry.state = PropertyState.final(entry.state.value, entity, kind)
        self._finalized(key, entry)
        task = Finalize(self._next_seq(), key, reason)
        self._trace(task, reason)

    def insert_defaults(self) -> bool:
        """Give every requested-but-never-computed key its default value."""
        changed = False
        with self._cond:
            for key in sorted(self._requested, key=_key_sort):
                entry = self._entries.get(key)
                if entry is not None and entry.state.has_value:
                    continue
                entity, kind = key
                desc = self._kinds.descriptor(kind)
                entry = self._entry(key)
                entry.state = PropertyState.interim(
                    desc.default_or_fallback(entity),
                    self._direction.get(kind, Direction.OPTIMISTIC),
                    entity,
                    kind,
                )
                self._finalize_key(key, "default")
                self.stats["default_insertions"] += 1
                changed = True
        return changed

    def _interim_dependency_graph(self):
        nodes = {
            key
            for key, entry in self._entries.items()
            if entry.state.is_interim and key[1] not in self._collaborative
        }
        edges = {}
        blocked = set()
        for key in nodes:
            outs = []
            for dep in self._entries[key].dependees:
                dep_entry = self._entries.get(dep)
                if dep_entry is not None and dep_entry.state.is_final:
                    continue  # satisfied; kept only until the owner re-registers
                if dep in nodes:
                    outs.append(dep)
                else:
                    blocked.add(key)  # waits on something outside the graph
            edges[key] = outs
        return nodes, edges, blocked

    def resolve_closed_sccs(self) -> bool:
        """Finalize strongly connected interim components with no way out."""
        changed = False
        with self._cond:
            nodes, edges, blocked = self._interim_dependency_graph()
            for scc in _tarjan(sorted(nodes, key=_key_sort), edges):
                members = set(scc)
                closed = not any(
                    key in blocked or any(d not in members for d in edges[key])
                    for key in members
                )
                if not closed:
                    continue
                # drop intra-component dependency records first so members do
                # not observe each other's finalization
                for key in members:
                    entry = self._entries[key]
                    for dep in entry.dependees:
                        dep_entry = self._entries.get(dep)
                        if dep_entry is not None and dep in members:
                            dep_entry.dependers.pop(key, None)
                    entry.dependees = frozenset(
                        d for d in entry.dependees if d not in members
                    )
                for key in sorted(members, key=_key_sort):
                    self._finalize_key(key, "scc")
                    self.stats["scc_finalizations"] += 1
                changed = True
        return changed

    def finalize_next_commit_level(self) -> bool:
        """Finalize all states of the earliest unfinalized commit level."""
        with self._cond:
            order = self._schedule.commit_order
            if self._commit_level >= len(order):
                return False
            kinds = order[self._commit_level]
            self._commit_level += 1
            for key in sorted(self._entries, key=_key_sort):
                if key[1] in kinds and self._entries[key].state.is_interim:
                    self._finalize_key(key, "commit")
                    self.stats["commit_finalizations"] += 1
        return True

    # --- the fixed-point loop ------------------------------------------------------

    def solve(self, policy: SchedulerPolicy, workers: int = 1) -> SolvedStore:
        """Run to the global fixed point and return the fully final view."""
        with self._cond:
            if self._phase != "ready":
                raise PhaseViolation(
                    f"solve requires completed registration, store is {self._phase!r}"
                )
            # triggered analyses fire for preset records once solving starts
            for entity, kind in self._presets:
                for spec in self._triggers.get(kind, ()):
                    self._enqueue_initial(spec, entity)
        while True:
            self.run_to_quiescence(policy, workers)
            started = time.perf_counter()
            try:
                if self.insert_defaults():
                    continue
                if self.resolve_closed_sccs():
                    continue
                if self.finalize_next_commit_level():
                    continue
            finally:
                self.stats["seconds_phases"] += time.perf_counter() - started
            break
        with self._cond:
            self._phase = "done"
            values = {}
            for key, entry in self._entries.items():
                if not entry.state.is_final:
                    raise StoreError(
                        f"internal error: ({key[0]}, {key[1].name}) is not final "
                        "after solving"
                    )
                values[key] = entry.state.value
            return SolvedStore(values)


def _tarjan(nodes, edges):
    """Iterative Tarjan; yields strongly connected components."""
    index = {}
    low = {}
    on_stack = set()
    stack = []
    counter = [0]
    sccs = []

    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(edges.get(root, ())))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter[0]
                    counter[0] += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(edges.get(nxt, ()))))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                scc = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    scc.append(member)
                    if member == node:
                        break
                sccs.append(scc)
    return sccs
