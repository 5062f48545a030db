"""Polyvariant mixed computation.

Starting from an initial state of the positive dynamic functions, the
specializer symbolically executes the program once per reachable positive
state. Rules over positive information are decided and executed internally;
rules over negative information become residual decision trees whose leaves
carry residual updates plus an assignment to the control function K. The
result is a program over the negative signature plus K.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .bta import Division, RESERVED_CONTROL
from .core import (
    Apply,
    Atom,
    Block,
    Cond,
    DYNAMIC,
    EalError,
    EvalError,
    Lit,
    Program,
    State,
    TRUE,
    Term,
    UNDEF,
    Update,
    apply_builtin,
    args_sort_key,
    block_fnames,
    infer_kinds,
    is_builtin,
    is_literal,
    render_location,
    render_value,
)
from .syntax import ParseError, parse_program, print_rule_lines, print_term

SPECIALIZE_POLICIES = ("error", "first-in-rule-order")
DEFAULT_MAX_STATES = 10000


class SpecializeError(EalError):
    pass


class ResidualFormatError(EalError):
    pass


# ---------------------------------------------------------------------------
# Positive states and labels


def canonical_entries(table: dict) -> tuple:
    """Sorted (fname, args, value) triples of a positive-state mapping."""
    return tuple(
        (fname, args, table[(fname, args)])
        for fname, args in sorted(table, key=lambda k: (k[0], args_sort_key(k[1])))
    )


def render_pos_state(entries: tuple) -> str:
    if not entries:
        return "(empty)"
    return ", ".join(f"{render_location(f, a)} = {render_value(v)}" for f, a, v in entries)


class LabelAllocator:
    """First-seen canonical states get fresh labels s0, s1, ... in discovery
    order; equal states always map to the same label."""

    def __init__(self) -> None:
        self._labels: dict = {}
        self.queue: list = []

    def label_for(self, entries: tuple) -> Atom:
        label = self._labels.get(entries)
        if label is None:
            label = Atom(f"s{len(self._labels)}")
            self._labels[entries] = label
            self.queue.append(entries)
        return label

    def count(self) -> int:
        return len(self._labels)

    def known(self) -> list:
        return list(self._labels.items())


# ---------------------------------------------------------------------------
# Decision trees


@dataclass(frozen=True)
class Leaf:
    updates: tuple  # residual Update rules over negative names
    successor: Atom


@dataclass(frozen=True)
class Branch:
    guard: Term  # residual guard, mentions at least one negative name
    then_tree: object
    else_tree: object


@dataclass
class KRule:
    label: Atom
    body: object  # Leaf or Branch
    note: str = ""


@dataclass
class ResidualProgram:
    initial_label: Atom
    krules: list
    negative_names: tuple = ()
    optimized: bool = False

    def labels(self) -> list:
        return [r.label for r in self.krules]


# ---------------------------------------------------------------------------
# Expression folding


def fold_term(term: Term, pos: dict, division: Division, static_tables: State) -> Term:
    """Substitute known positive values bottom-up, computing built-ins over
    literal arguments. Subterms mentioning a negative name stay residual;
    the result is a literal exactly when no negative name occurs."""
    if is_literal(term):
        return term
    folded = tuple(fold_term(a, pos, division, static_tables) for a in term.args)
    fname = term.fname
    if division.is_negative(fname):
        return Apply(fname, folded)
    if all(is_literal(a) for a in folded):
        values = tuple(a.value for a in folded)
        if is_builtin(fname):
            try:
                return Lit(apply_builtin(fname, values))
            except EvalError as exc:
                raise SpecializeError(
                    f"{exc} while folding {render_location(fname, values)}"
                ) from None
        if (fname, values) in pos:
            return Lit(pos[(fname, values)])
        if fname in static_tables.fnames():
            return Lit(static_tables.lookup(fname, values))
        # positive dynamic location absent from the positive state: undef
        return Lit(UNDEF)
    if is_builtin(fname):
        return Apply(fname, folded)
    raise SpecializeError(
        f"positive function {fname} applied to unknown arguments; "
        "binding-time analysis should have demoted it"
    )


# ---------------------------------------------------------------------------
# Rule specialization

K_NAME = RESERVED_CONTROL


@dataclass(frozen=True)
class _Pending:
    """Per-path result before the successor is known: internally executed
    positive triples plus residual negative updates, both in rule order."""

    pos_updates: tuple = ()
    neg_updates: tuple = ()


def _combine(first: object, second: object) -> object:
    """Distribute one rule's tree over another's; guards are pre-state, so
    concatenating the per-path effects is sound."""
    if isinstance(first, _Pending):
        if isinstance(second, _Pending):
            return _Pending(
                first.pos_updates + second.pos_updates,
                first.neg_updates + second.neg_updates,
            )
        return Branch(
            second.guard,
            _combine(first, second.then_tree),
            _combine(first, second.else_tree),
        )
    return Branch(
        first.guard,
        _combine(first.then_tree, second),
        _combine(first.else_tree, second),
    )


def _elseif_free(rule: Cond) -> Cond:
    """Rewrite an elseif chain into nested two-way conditionals."""
    branches = list(rule.branches)
    guard, body = branches[0]
    if len(branches) == 1:
        return Cond(((guard, body),), rule.else_body)
    inner = _elseif_free(Cond(tuple(branches[1:]), rule.else_body))
    return Cond(((guard, body),), (inner,))


class _BlockSpecializer:
    def __init__(self, division: Division, static_tables: State, kinds: dict) -> None:
        self.division = division
        self.static_tables = static_tables
        self.kinds = kinds

    def spec_rules(self, rules: tuple, pos: dict) -> object:
        tree: object = _Pending()
        for rule in reversed(rules):
            tree = _combine(self.spec_rule(rule, pos), tree)
        return tree

    def spec_rule(self, rule, pos: dict) -> object:
        if isinstance(rule, Update):
            return self.spec_update(rule, pos)
        cond = _elseif_free(rule)
        (guard, body), = cond.branches
        folded = fold_term(guard, pos, self.division, self.static_tables)
        if is_literal(folded):
            # decided now; any non-true value takes the else side
            taken = body if folded.value is TRUE else cond.else_body
            return self.spec_rules(taken, pos)
        return Branch(
            folded,
            self.spec_rules(body, pos),
            self.spec_rules(cond.else_body, pos),
        )

    def spec_update(self, rule: Update, pos: dict) -> _Pending:
        args = tuple(fold_term(t, pos, self.division, self.static_tables) for t in rule.arg_terms)
        rhs = fold_term(rule.rhs, pos, self.division, self.static_tables)
        fname = rule.head
        if self.division.is_positive(fname):
            if not all(is_literal(a) for a in args) or not is_literal(rhs):
                raise SpecializeError(
                    f"update to positive {fname} does not fold to literals; "
                    "binding-time analysis should have demoted it"
                )
            triple = (fname, tuple(a.value for a in args), rhs.value)
            return _Pending(pos_updates=(triple,))
        return _Pending(neg_updates=(Update(fname, args, rhs),))


def specialize_block(
    block: Block,
    pos_state: dict,
    division: Division,
    static_tables: State,
    allocator: LabelAllocator,
    policy: str = "error",
    kinds: Optional[dict] = None,
) -> object:
    """Specialize the whole rule set against one positive state, producing a
    decision tree whose leaves carry residual updates and a successor label."""
    if kinds is None:
        kinds = {}
    spec = _BlockSpecializer(division, static_tables, kinds)
    raw = spec.spec_rules(tuple(block), pos_state)
    return _finalize(raw, pos_state, allocator, policy, path=())


def _finalize(tree: object, pos_state: dict, allocator: LabelAllocator, policy: str, path: tuple):
    if isinstance(tree, Branch):
        return Branch(
            tree.guard,
            _finalize(tree.then_tree, pos_state, allocator, policy, path + ((tree.guard, True),)),
            _finalize(tree.else_tree, pos_state, allocator, policy, path + ((tree.guard, False),)),
        )
    assert isinstance(tree, _Pending)
    chosen: dict = {}
    order: list = []
    for fname, args, value in tree.pos_updates:
        loc = (fname, args)
        if loc not in chosen:
            chosen[loc] = value
            order.append(loc)
        elif chosen[loc] != value:
            if policy == "error":
                where = _render_path(path)
                raise SpecializeError(
                    f"conflicting updates to positive {render_location(fname, args)} "
                    f"at leaf [{where}]; use first-in-rule-order to take the first"
                )
            # first-in-rule-order keeps the earlier value
    successor_table = dict(pos_state)
    for loc in order:
        fname, args = loc
        value = chosen[loc]
        if value is UNDEF:
            successor_table.pop(loc, None)
        else:
            successor_table[loc] = value
    label = allocator.label_for(canonical_entries(successor_table))
    seen = set()
    updates = []
    for upd in tree.neg_updates:
        if upd not in seen:
            seen.add(upd)
            updates.append(upd)
    return Leaf(tuple(updates), label)


def _render_path(path: tuple) -> str:
    parts = []
    for guard, taken in path:
        text = print_term(guard)
        parts.append(text if taken else f"not-true({text})")
    return " and ".join(parts) if parts else "top"


# ---------------------------------------------------------------------------
# Whole-program specialization


def split_initial_state(initial_state: State, division: Division, kinds: dict) -> tuple:
    """Split a positive .est state into the dynamic positive-state table and
    the static tables used for folding; negative entries are rejected."""
    pos: dict = {}
    static_tables = State()
    for fname, args, value in initial_state.sorted_entries():
        info = kinds.get(fname)
        if division.is_negative(fname):
            raise SpecializeError(
                f"initial positive state contains negative function {fname}"
            )
        if info is not None and info.kind == DYNAMIC:
            pos[(fname, args)] = value
        else:
            static_tables.set(fname, args, value)
    return pos, static_tables


def specialize_program(
    program: Program,
    initial_state: State,
    division: Division,
    max_states: int = DEFAULT_MAX_STATES,
    policy: str = "error",
) -> ResidualProgram:
    """Worklist closure over reachable positive states, one K-rule each."""
    if policy not in SPECIALIZE_POLICIES:
        raise ValueError(f"unknown specialization policy: {policy}")
    if K_NAME in block_fnames(program.rules) or K_NAME in program.externals:
        raise SpecializeError(f"{K_NAME} is reserved for residual programs")
    kinds = infer_kinds(program, initial_state)
    pos0, static_tables = split_initial_state(initial_state, division, kinds)
    allocator = LabelAllocator()
    allocator.label_for(canonical_entries(pos0))
    krules: list = []
    processed = 0
    while processed < len(allocator.queue):
        if allocator.count() > max_states:
            recent = [render_pos_state(e) for e in allocator.queue[-3:]]
            raise SpecializeError(
                f"more than {max_states} positive states; most recent: "
                + " | ".join(recent)
                + ". A positive function is probably growing without bound; "
                "reclassify it as negative or drop its bounded mark."
            )
        entries = allocator.queue[processed]
        processed += 1
        label = allocator.label_for(entries)
        table = {(f, a): v for f, a, v in entries}
        body = specialize_block(
            program.rules, table, division, static_tables, allocator, policy, kinds
        )
        krules.append(KRule(label, body, note=render_pos_state(entries)))
    negative = tuple(
        sorted(
            n
            for n in division.negatives()
            if n in kinds and not is_builtin(n)
        )
    )
    return ResidualProgram(Atom("s0"), krules, negative)


# ---------------------------------------------------------------------------
# Residual programs as ordinary .eal programs


def tree_to_block(tree: object) -> tuple:
    if isinstance(tree, Leaf):
        return tree.updates + (Update(K_NAME, (), Lit(tree.successor)),)
    return (
        Cond(
            ((tree.guard, tree_to_block(tree.then_tree)),),
            tree_to_block(tree.else_tree),
        ),
    )


def block_to_tree(block: tuple) -> object:
    if len(block) == 1 and isinstance(block[0], Cond):
        cond = block[0]
        if len(cond.branches) != 1:
            raise ResidualFormatError("residual conditionals must be two-way")
        guard, body = cond.branches[0]
        return Branch(guard, block_to_tree(body), block_to_tree(cond.else_body))
    updates = []
    successor = None
    for rule in block:
        if not isinstance(rule, Update):
            raise ResidualFormatError("residual leaves may not mix updates and conditionals")
        if rule.head == K_NAME:
            if successor is not None:
                raise ResidualFormatError("two assignments to K on one path")
            if rule.arg_terms or not isinstance(rule.rhs, Lit) or not isinstance(rule.rhs.value, Atom):
                raise ResidualFormatError("K must be assigned a literal label")
            successor = rule.rhs.value
        else:
            updates.append(rule)
    if successor is None:
        raise ResidualFormatError("a residual path does not assign K")
    return Leaf(tuple(updates), successor)


def residual_to_program(residual: ResidualProgram) -> Program:
    rules = []
    for krule in residual.krules:
        guard = Apply("=", (Apply(K_NAME, ()), Lit(krule.label)))
        rules.append(Cond(((guard, tree_to_block(krule.body)),), ()))
    return Program(tuple(rules), {})


def emit_residual(residual: ResidualProgram) -> str:
    """Deterministic .eal text with a machine-readable header."""
    lines = [
        "-- residual program over the negative signature plus K",
        f"-- initial-K: {residual.initial_label.name}",
        f"-- optimized: {'yes' if residual.optimized else 'no'}",
    ]
    if residual.negative_names:
        lines.append("-- negative: " + ", ".join(residual.negative_names))
    for krule in residual.krules:
        if krule.note:
            lines.append(f"-- {krule.label.name}: {krule.note}")
        guard = Apply("=", (Apply(K_NAME, ()), Lit(krule.label)))
        cond = Cond(((guard, tree_to_block(krule.body)),), ())
        lines.extend(print_rule_lines(cond))
    return "\n".join(lines) + "\n"


_INITIAL_K = re.compile(r"^--\s*initial-K:\s*(\S+)\s*$", re.MULTILINE)
_OPTIMIZED = re.compile(r"^--\s*optimized:\s*(yes|no)\s*$", re.MULTILINE)
_NEGATIVE = re.compile(r"^--\s*negative:\s*(.+?)\s*$", re.MULTILINE)


def load_residual(text: str) -> ResidualProgram:
    """Parse residual .eal text back into K-rule form."""
    m = _INITIAL_K.search(text)
    if not m:
        raise ResidualFormatError("missing '-- initial-K:' header")
    initial = Atom(m.group(1))
    opt = _OPTIMIZED.search(text)
    optimized = bool(opt and opt.group(1) == "yes")
    neg_match = _NEGATIVE.search(text)
    negative = ()
    if neg_match:
        negative = tuple(n.strip() for n in neg_match.group(1).split(",") if n.strip())
    try:
        program = parse_program(text)
    except ParseError as exc:
        raise ResidualFormatError(f"residual does not parse: {exc}") from None
    krules = []
    seen = set()
    for rule in program.rules:
        label = _krule_label(rule)
        if label in seen:
            raise ResidualFormatError(f"duplicate K-rule label {label.name}")
        seen.add(label)
        (guard, body), = rule.branches
        krules.append(KRule(label, block_to_tree(body)))
    if initial not in seen:
        raise ResidualFormatError(f"initial label {initial.name} has no K-rule")
    return ResidualProgram(initial, krules, negative, optimized)


def _krule_label(rule) -> Atom:
    if (
        isinstance(rule, Cond)
        and len(rule.branches) == 1
        and not rule.else_body
        and isinstance(rule.branches[0][0], Apply)
        and rule.branches[0][0].fname == "="
        and len(rule.branches[0][0].args) == 2
        and rule.branches[0][0].args[0] == Apply(K_NAME, ())
        and isinstance(rule.branches[0][0].args[1], Lit)
        and isinstance(rule.branches[0][0].args[1].value, Atom)
    ):
        return rule.branches[0][0].args[1].value
    raise ResidualFormatError("every top-level rule must have the shape 'if K = label then ... endif'")


def residual_leaves(tree: object):
    if isinstance(tree, Leaf):
        yield tree
    else:
        yield from residual_leaves(tree.then_tree)
        yield from residual_leaves(tree.else_tree)


def residual_guards(tree: object):
    if isinstance(tree, Branch):
        yield tree.guard
        yield from residual_guards(tree.then_tree)
        yield from residual_guards(tree.else_tree)
