"""Predicate automata compiled from goal programs.

Each automaton state carries outgoing edges guarded by boolean predicate
formulas over the MDP state (no temporal operators; those are absorbed by
the transition structure). Acceptance states may keep a self loop and
outgoing edges, so an episode can dwell in acceptance and keep optimizing;
a run is accepted when it reaches an acceptance state with no edges out, or
when it ends (time limit) while sitting in an acceptance state. Trap states
have no exits and reject immediately.

Construction is template based: one small automaton per goal operator,
composed with synchronous products for and/or, sequential chaining for
then, and a dedicated three-state template for until over atomic goals.

Transition rule used by runs and by the reward engine: at most one outgoing
guard is strictly true for any state (guards partition by construction); if
a non-self-loop guard is true the run moves along it, otherwise it stays
put. Guard truth is strictly positive robustness, so a state exactly on a
region boundary enables no guard and the run holds position for that step.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .errors import PredicateOverlapError, UnsupportedOperandError
from .lang import (
    GoalAnd,
    GoalAtom,
    GoalNode,
    GoalOp,
    GoalOr,
    GoalProgram,
    GoalThen,
    GoalUntil,
    Range,
    RangeKind,
)
from .logic import (
    And,
    Formula,
    Not,
    Or,
    Pred,
    TrueFormula,
    atom_predicate,
    formula_robustness,
    to_sexpr,
)

logger = logging.getLogger(__name__)

TRUE = TrueFormula()


# ---------------------------------------------------------------------------
# Guard algebra


def _flatten(formula: Formula, node_type) -> list[Formula]:
    if isinstance(formula, node_type):
        return _flatten(formula.left, node_type) + _flatten(formula.right, node_type)
    return [formula]


def _literal(formula: Formula) -> Optional[tuple[Pred, bool]]:
    if isinstance(formula, Pred):
        return formula, True
    if isinstance(formula, Not) and isinstance(formula.operand, Pred):
        return formula.operand, False
    return None


def conjoin(a: Formula, b: Formula) -> Optional[Formula]:
    """Conjunction of two guards, simplified.

    Returns None when the conjunction is statically unsatisfiable (it
    contains a predicate together with its negation).
    """
    operands: list[Formula] = []
    seen: list[Formula] = []
    literals: dict[Pred, bool] = {}
    for part in _flatten(a, And) + _flatten(b, And):
        if isinstance(part, TrueFormula):
            continue
        lit = _literal(part)
        if lit is not None:
            pred, polarity = lit
            if pred in literals:
                if literals[pred] != polarity:
                    return None
                continue
            literals[pred] = polarity
        if part in seen:
            continue
        seen.append(part)
        operands.append(part)
    if not operands:
        return TRUE
    operands.sort(key=to_sexpr)
    out = operands[0]
    for part in operands[1:]:
        out = And(out, part)
    return out


def disjoin(a: Formula, b: Formula) -> Formula:
    """Disjunction of two guards, simplified and canonically ordered."""
    operands: list[Formula] = []
    for part in _flatten(a, Or) + _flatten(b, Or):
        if isinstance(part, TrueFormula):
            return TRUE
        if part not in operands:
            operands.append(part)
    operands.sort(key=to_sexpr)
    out = operands[0]
    for part in operands[1:]:
        out = Or(out, part)
    return out


def negate(formula: Formula) -> Formula:
    if isinstance(formula, Not):
        return formula.operand
    return Not(formula)


def guard_true(guard: Formula, state: dict[str, float]) -> bool:
    return formula_robustness(guard, state, validate=False) > 0.0


def pretty_guard(guard: Formula) -> str:
    if isinstance(guard, TrueFormula):
        return "true"
    if isinstance(guard, Pred):
        value = guard.expr.pretty()
        region = guard.region
        if region.kind is RangeKind.CLOSED:
            return f"{value} in [{region.lower:g}, {region.upper:g}]"
        if region.kind is RangeKind.ABOVE:
            return f"{value} > {region.lower:g}"
        return f"{value} < {region.upper:g}"
    if isinstance(guard, Not):
        return f"not ({pretty_guard(guard.operand)})"
    if isinstance(guard, And):
        return " and ".join(f"({pretty_guard(p)})" for p in _flatten(guard, And))
    if isinstance(guard, Or):
        return " or ".join(f"({pretty_guard(p)})" for p in _flatten(guard, Or))
    raise TypeError(f"not a guard: {guard!r}")


# ---------------------------------------------------------------------------
# Automaton data model


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    guard: Formula

    @property
    def is_self_loop(self) -> bool:
        return self.source == self.target


@dataclass(frozen=True)
class State:
    id: str
    accepting: bool = False
    trap: bool = False
    label: str = ""


@dataclass
class AutomatonRun:
    """Single episode cursor over an automaton."""

    current: str
    history: list[tuple[int, str, str]] = field(default_factory=list)


class PredicateAutomaton:
    """Immutable predicate automaton with deterministic stepping."""

    def __init__(self, states: Iterable[State], edges: Iterable[Edge], initial: str):
        self.states: dict[str, State] = {}
        for st in states:
            if st.id in self.states:
                raise ValueError(f"duplicate state id {st.id!r}")
            self.states[st.id] = st
        self.edges: tuple[Edge, ...] = tuple(edges)
        if initial not in self.states:
            raise ValueError(f"initial state {initial!r} not among states")
        self.initial = initial
        self._outgoing: dict[str, list[Edge]] = {sid: [] for sid in self.states}
        for edge in self.edges:
            if edge.source not in self.states or edge.target not in self.states:
                raise ValueError(f"edge {edge} references unknown state")
            self._outgoing[edge.source].append(edge)
        for sid, st in self.states.items():
            if st.trap and self._outgoing[sid]:
                raise ValueError(f"trap state {sid!r} must have no outgoing edges")

    # -- basic queries

    def outgoing(self, state_id: str) -> list[Edge]:
        return self._outgoing[state_id]

    def self_loop(self, state_id: str) -> Optional[Edge]:
        for edge in self._outgoing[state_id]:
            if edge.is_self_loop:
                return edge
        return None

    @property
    def accepting_ids(self) -> list[str]:
        return [sid for sid, st in self.states.items() if st.accepting]

    @property
    def trap_ids(self) -> list[str]:
        return [sid for sid, st in self.states.items() if st.trap]

    def is_terminal_accept(self, state_id: str) -> bool:
        st = self.states[state_id]
        return st.accepting and not self._outgoing[state_id]

    def state_order(self) -> list[str]:
        return list(self.states)

    # -- stepping

    def transition(self, state_id: str, mdp_state: dict[str, float]) -> tuple[str, Optional[Edge]]:
        """One deterministic step: the strictly-true guard wins, else stay.

        Guards are mutually exclusive by construction; if that is ever
        violated the earliest declared edge wins and a warning is logged.
        """
        true_edges = [e for e in self._outgoing[state_id] if guard_true(e.guard, mdp_state)]
        if len(true_edges) > 1:
            non_self = [e for e in true_edges if not e.is_self_loop]
            logger.warning(
                "overlapping guards at %s; breaking tie by declaration order", state_id
            )
            chosen = non_self[0] if non_self else true_edges[0]
            return chosen.target, chosen
        if true_edges:
            edge = true_edges[0]
            return edge.target, edge
        return state_id, None

    def start(self) -> AutomatonRun:
        return AutomatonRun(current=self.initial, history=[(0, self.initial, "init")])

    def check_exclusive(self, mdp_state: dict[str, float]) -> None:
        """Raise if any state has two strictly-true outgoing guards at once."""
        for sid in self.states:
            true_edges = [e for e in self._outgoing[sid] if guard_true(e.guard, mdp_state)]
            if len(true_edges) > 1:
                raise PredicateOverlapError(
                    f"state {sid} has {len(true_edges)} simultaneously true guards"
                )

    def accepts(self, trace: list[dict[str, float]]) -> bool:
        """Run the trace and report acceptance.

        Accepts on reaching an acceptance state with no edges out, or on
        finishing the trace in an acceptance state; rejects on entering a
        trap or finishing elsewhere.
        """
        current = self.initial
        for state in trace:
            if self.is_terminal_accept(current):
                return True
            current, _ = self.transition(current, state)
            if self.states[current].trap:
                return False
        return self.states[current].accepting

    # -- structural validation

    def validate_structure(self) -> None:
        """Check the structural rules every compiled automaton must obey.

        Non-trap states either carry a self loop or are terminal acceptance
        states (no edges out); traps have no edges out; the initial state is
        not a trap.
        """
        for sid, st in self.states.items():
            out = self._outgoing[sid]
            if st.trap:
                if out:
                    raise ValueError(f"trap {sid} has outgoing edges")
                continue
            if not out:
                if not st.accepting:
                    raise ValueError(f"dead end {sid}: no outgoing edges and not accepting")
                continue
            if self.self_loop(sid) is None:
                raise ValueError(f"state {sid} has outgoing edges but no self loop")
        if self.states[self.initial].trap:
            raise ValueError("initial state is a trap")

    # -- serialization

    def to_json_dict(self) -> dict:
        return {
            "format": "goalforge-automaton",
            "version": 1,
            "initial": self.initial,
            "states": [
                {
                    "id": st.id,
                    "accepting": st.accepting,
                    "trap": st.trap,
                    "label": st.label,
                }
                for st in self.states.values()
            ],
            "edges": [
                {
                    "source": e.source,
                    "target": e.target,
                    "self_loop": e.is_self_loop,
                    "guard": to_sexpr(e.guard),
                }
                for e in self.edges
            ],
        }

    def to_json(self, indent: Optional[int] = None) -> str:
        return json.dumps(self.to_json_dict(), indent=indent, sort_keys=True)

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def to_dot(self) -> str:
        lines = ["digraph goal_automaton {", "  rankdir=LR;", '  __start [shape=point label=""];']
        for st in self.states.values():
            attrs = []
            if st.trap:
                attrs.append('shape=circle style=filled fillcolor="gray70"')
            elif st.accepting:
                attrs.append("shape=doublecircle")
            else:
                attrs.append("shape=circle")
            title = st.id if not st.label else f"{st.id}\\n{st.label}"
            attrs.append(f'label="{title}"')
            lines.append(f"  {st.id} [{' '.join(attrs)}];")
        lines.append(f"  __start -> {self.initial};")
        for e in self.edges:
            label = pretty_guard(e.guard).replace('"', '\\"')
            lines.append(f'  {e.source} -> {e.target} [label="{label}"];')
        lines.append("}")
        return "\n".join(lines)

    def __repr__(self) -> str:
        return (
            f"PredicateAutomaton(states={len(self.states)}, edges={len(self.edges)}, "
            f"initial={self.initial!r})"
        )


# ---------------------------------------------------------------------------
# Construction helpers


class _Builder:
    """Mutable scratch graph used while composing automata."""

    def __init__(self):
        self.accepting: set = set()
        self.traps: set = set()
        self.labels: dict = {}
        self.edges: dict[tuple, Formula] = {}  # (src, tgt) -> guard
        self.initial = None
        self.order: list = []

    def add_state(self, key, *, accepting=False, trap=False, label=""):
        if key not in self.order:
            self.order.append(key)
        if accepting:
            self.accepting.add(key)
        if trap:
            self.traps.add(key)
        if label:
            self.labels[key] = label

    def add_edge(self, src, tgt, guard: Formula):
        key = (src, tgt)
        if key in self.edges:
            self.edges[key] = disjoin(self.edges[key], guard)
        else:
            self.edges[key] = guard

    def outgoing_keys(self, src):
        return [(s, t) for (s, t) in self.edges if s == src]

    def finalize(self) -> PredicateAutomaton:
        """Prune unreachable states, relabel canonically, and freeze.

        States are renamed q0, q1, ... in breadth-first discovery order from
        the initial state so structurally equal compositions serialize (and
        hash) identically.
        """
        reachable = [self.initial]
        seen = {self.initial}
        i = 0
        while i < len(reachable):
            src = reachable[i]
            i += 1
            for (s, t), _ in sorted(
                ((k, g) for k, g in self.edges.items() if k[0] == src),
                key=lambda item: (self.order.index(item[0][1])),
            ):
                if t not in seen:
                    seen.add(t)
                    reachable.append(t)
        names = {key: f"q{idx}" for idx, key in enumerate(reachable)}
        states = [
            State(
                id=names[key],
                accepting=key in self.accepting,
                trap=key in self.traps,
                label=self.labels.get(key, ""),
            )
            for key in reachable
        ]
        edges = [
            Edge(source=names[s], target=names[t], guard=g)
            for (s, t), g in sorted(
                self.edges.items(),
                key=lambda item: (reachable.index(item[0][0]), reachable.index(item[0][1])),
            )
            if s in seen and t in seen
        ]
        return PredicateAutomaton(states, edges, names[self.initial])


def _terminalize_closed_acceptance(builder: _Builder) -> None:
    """Drop outgoing edges of acceptance states that can never be left
    unsatisfied: if every state reachable from an acceptance state is also
    accepting, the goal is locked in, so the state becomes terminal
    acceptance and the episode can end there."""
    adjacency: dict = {}
    for (s, t) in builder.edges:
        adjacency.setdefault(s, []).append(t)
    for key in list(builder.order):
        if key not in builder.accepting:
            continue
        stack, seen = [key], {key}
        closed = True
        while stack:
            node = stack.pop()
            if node not in builder.accepting:
                closed = False
                break
            for nxt in adjacency.get(node, []):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        if closed:
            for edge_key in builder.outgoing_keys(key):
                del builder.edges[edge_key]


# ---------------------------------------------------------------------------
# Templates


def build_template(atom: GoalAtom) -> PredicateAutomaton:
    """Two-state automaton for a single goal atom."""
    pred = atom_predicate(atom)
    b = _Builder()
    if atom.op is GoalOp.REACH:
        b.add_state("q0", label=f"seek:{atom.name}")
        b.add_state("qF", accepting=True, label=f"done:{atom.name}")
        b.initial = "q0"
        b.add_edge("q0", "q0", negate(pred))
        b.add_edge("q0", "qF", pred)
        return b.finalize()
    if atom.op is GoalOp.AVOID:
        b.add_state("q0", accepting=True, label=f"safe:{atom.name}")
        b.add_state("trap", trap=True, label="trap")
        b.initial = "q0"
        b.add_edge("q0", "q0", negate(pred))
        b.add_edge("q0", "trap", pred)
        return b.finalize()
    # drive / minimize / maximize: reach the region, then dwell; falling out
    # returns to the seeking state.
    b.add_state("q0", label=f"seek:{atom.name}")
    b.add_state("qF", accepting=True, label=f"hold:{atom.name}")
    b.initial = "q0"
    b.add_edge("q0", "q0", negate(pred))
    b.add_edge("q0", "qF", pred)
    b.add_edge("qF", "qF", pred)
    b.add_edge("qF", "q0", negate(pred))
    return b.finalize()


def build_until(hold: GoalAtom, target: GoalAtom) -> PredicateAutomaton:
    """Three-state template for ``hold until target`` over atomic goals."""
    p_hold = atom_predicate(hold)
    p_target = atom_predicate(target)
    b = _Builder()
    b.add_state("q0", label=f"hold:{hold.name}")
    b.add_state("qF", accepting=True, label=f"done:{target.name}")
    b.add_state("trap", trap=True, label="trap")
    b.initial = "q0"
    b.add_edge("q0", "q0", conjoin(p_hold, negate(p_target)))
    b.add_edge("q0", "qF", p_target)
    b.add_edge("q0", "trap", conjoin(negate(p_hold), negate(p_target)))
    return b.finalize()


def trivial_accepting() -> PredicateAutomaton:
    """Single always-accepting state; identity element for products."""
    return PredicateAutomaton(
        [State(id="q0", accepting=True, label="accept")],
        [Edge(source="q0", target="q0", guard=TRUE)],
        "q0",
    )


# ---------------------------------------------------------------------------
# Composition


def _effective_edges(aut: PredicateAutomaton, state_id: str) -> list[tuple[str, Formula]]:
    """Outgoing moves for product stepping.

    Terminal acceptance states and traps are absorbing, so they contribute
    an implicit always-true self loop.
    """
    out = aut.outgoing(state_id)
    if out:
        return [(e.target, e.guard) for e in out]
    return [(state_id, TRUE)]


def product(a: PredicateAutomaton, b: PredicateAutomaton, mode: str) -> PredicateAutomaton:
    """Synchronous product for 'and' / 'or' composition.

    Acceptance is conjunctive or disjunctive per mode; a pair is a trap when
    either component is trapped (and-mode) or both are (or-mode). All trap
    pairs collapse into a single trap state. Acceptance states from which
    only acceptance states are reachable lose their outgoing edges and
    become terminal.
    """
    if mode not in ("and", "or"):
        raise ValueError(f"mode must be 'and' or 'or', got {mode!r}")
    builder = _Builder()
    trap_key = "trap"
    start = (a.initial, b.initial)
    builder.initial = start
    pending = [start]
    visited = {start}

    def is_pair_trap(qa: str, qb: str) -> bool:
        ta, tb = a.states[qa].trap, b.states[qb].trap
        return (ta or tb) if mode == "and" else (ta and tb)

    def is_pair_accepting(qa: str, qb: str) -> bool:
        fa, fb = a.states[qa].accepting, b.states[qb].accepting
        return (fa and fb) if mode == "and" else (fa or fb)

    def pair_label(qa: str, qb: str) -> str:
        la = a.states[qa].label or qa
        lb = b.states[qb].label or qb
        return f"{la}|{lb}"

    while pending:
        qa, qb = pending.pop(0)
        builder.add_state(
            (qa, qb), accepting=is_pair_accepting(qa, qb), label=pair_label(qa, qb)
        )
        for ta, ga in _effective_edges(a, qa):
            for tb, gb in _effective_edges(b, qb):
                guard = conjoin(ga, gb)
                if guard is None:
                    continue
                if is_pair_trap(ta, tb):
                    builder.add_state(trap_key, trap=True, label="trap")
                    builder.add_edge((qa, qb), trap_key, guard)
                    continue
                builder.add_edge((qa, qb), (ta, tb), guard)
                if (ta, tb) not in visited:
                    visited.add((ta, tb))
                    pending.append((ta, tb))

    _terminalize_closed_acceptance(builder)
    return builder.finalize()


def chain_then(a: PredicateAutomaton, b: PredicateAutomaton) -> PredicateAutomaton:
    """Sequential composition: run ``a`` until it first reaches acceptance,
    then hand the episode to ``b`` starting at its initial state.

    Edges entering an acceptance state of ``a`` are redirected to ``b``'s
    initial state, so the handoff happens on the step after ``a`` first
    accepts. If ``a`` starts accepting already (pure safety goals), the
    handoff happens at initialization and the chain is just ``b``. The
    result accepts exactly when ``b`` does; traps of either phase remain
    traps.
    """
    if a.states[a.initial].accepting:
        return _copy(b)
    builder = _Builder()
    trap_key = "trap"
    a_accept = {sid for sid in a.states if a.states[sid].accepting}

    def a_key(sid: str):
        return ("a", sid)

    def b_key(sid: str):
        return ("b", sid)

    builder.initial = a_key(a.initial)
    for sid, st in a.states.items():
        if sid in a_accept:
            continue  # entering edges are redirected; the phase-a acceptance
            # states themselves are never dwelled in
        if st.trap:
            builder.add_state(trap_key, trap=True, label="trap")
        else:
            builder.add_state(a_key(sid), label=st.label)
    for sid, st in b.states.items():
        if st.trap:
            builder.add_state(trap_key, trap=True, label="trap")
        else:
            builder.add_state(b_key(sid), accepting=st.accepting, label=st.label)

    def map_a(sid: str):
        if sid in a_accept:
            return b_key(b.initial)
        if a.states[sid].trap:
            return trap_key
        return a_key(sid)

    def map_b(sid: str):
        if b.states[sid].trap:
            return trap_key
        return b_key(sid)

    for e in a.edges:
        if e.source in a_accept:
            continue
        builder.add_edge(a_key(e.source), map_a(e.target), e.guard)
    for e in b.edges:
        builder.add_edge(b_key(e.source), map_b(e.target), e.guard)
    return builder.finalize()


def _copy(aut: PredicateAutomaton) -> PredicateAutomaton:
    return PredicateAutomaton(list(aut.states.values()), list(aut.edges), aut.initial)


# ---------------------------------------------------------------------------
# Program compilation


def build_automaton(program_or_node) -> PredicateAutomaton:
    """Compile a goal program (or a bare goal node) into an automaton."""
    node: GoalNode = (
        program_or_node.root if isinstance(program_or_node, GoalProgram) else program_or_node
    )
    return _build_node(node)


def _build_node(node: GoalNode) -> PredicateAutomaton:
    if isinstance(node, GoalAtom):
        return build_template(node)
    if isinstance(node, GoalAnd):
        return product(_build_node(node.left), _build_node(node.right), "and")
    if isinstance(node, GoalOr):
        return product(_build_node(node.left), _build_node(node.right), "or")
    if isinstance(node, GoalThen):
        return chain_then(_build_node(node.first), _build_node(node.second))
    if isinstance(node, GoalUntil):
        if not isinstance(node.hold, GoalAtom) or not isinstance(node.target, GoalAtom):
            raise UnsupportedOperandError(
                "'until' supports atomic goals only; parenthesized combinations "
                "are not compilable"
            )
        return build_until(node.hold, node.target)
    raise TypeError(f"unknown goal node {node!r}")
