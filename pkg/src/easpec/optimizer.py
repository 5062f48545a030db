"""Post-processing passes over residual programs: alias elimination,
identical-body merging, consecutive-rule combining, and unreachable-rule
removal, iterated to a fixpoint under a pass budget. All passes preserve
behavior on the negative functions; combining may halve move counts."""
from __future__ import annotations

from dataclasses import dataclass, field

from .core import Atom, term_fnames
from .specializer import (
    Branch,
    K_NAME,
    KRule,
    Leaf,
    ResidualProgram,
    residual_leaves,
)
from .syntax import print_term


@dataclass
class KGraph:
    """Label-level transition graph of a residual program."""

    entry: Atom
    succs: dict = field(default_factory=dict)  # label -> sorted successor labels
    preds: dict = field(default_factory=dict)  # label -> set of predecessor labels


def build_kgraph(residual: ResidualProgram) -> KGraph:
    graph = KGraph(residual.initial_label)
    for krule in residual.krules:
        graph.succs.setdefault(krule.label, [])
        graph.preds.setdefault(krule.label, set())
    for krule in residual.krules:
        targets = []
        for leaf in residual_leaves(krule.body):
            if leaf.successor not in targets:
                targets.append(leaf.successor)
        graph.succs[krule.label] = targets
        for t in targets:
            graph.preds.setdefault(t, set()).add(krule.label)
    return graph


def reachable_labels(residual: ResidualProgram) -> set:
    graph = build_kgraph(residual)
    seen = {residual.initial_label}
    frontier = [residual.initial_label]
    while frontier:
        label = frontier.pop()
        for succ in graph.succs.get(label, ()):
            if succ not in seen:
                seen.add(succ)
                frontier.append(succ)
    return seen


def _substitute(tree, mapping: dict):
    if isinstance(tree, Leaf):
        return Leaf(tree.updates, mapping.get(tree.successor, tree.successor))
    return Branch(
        tree.guard,
        _substitute(tree.then_tree, mapping),
        _substitute(tree.else_tree, mapping),
    )


def _rewrite(residual: ResidualProgram, mapping: dict, drop: set) -> ResidualProgram:
    krules = [
        KRule(r.label, _substitute(r.body, mapping), r.note)
        for r in residual.krules
        if r.label not in drop
    ]
    initial = mapping.get(residual.initial_label, residual.initial_label)
    return ResidualProgram(initial, krules, residual.negative_names, residual.optimized)


def eliminate_aliases(residual: ResidualProgram) -> ResidualProgram:
    """Remove rules whose body only redirects K; rewrite references to their
    targets. Pure alias cycles collapse to one quiescent self-loop."""
    while True:
        alias = {}
        for krule in residual.krules:
            body = krule.body
            if isinstance(body, Leaf) and not body.updates and body.successor != krule.label:
                alias[krule.label] = body.successor
        if not alias:
            return residual
        order = {r.label: i for i, r in enumerate(residual.krules)}
        target: dict = {}
        cycle_reps: set = set()
        for start in alias:
            if start in target:
                continue
            chain = [start]
            seen_at = {start: 0}
            cur = alias[start]
            while cur in alias and cur not in target and cur not in seen_at:
                seen_at[cur] = len(chain)
                chain.append(cur)
                cur = alias[cur]
            if cur in target:
                final = target[cur]
            elif cur in seen_at:
                cycle = chain[seen_at[cur] :]
                final = min(cycle, key=lambda l: order[l])
                cycle_reps.add(final)
            else:
                final = cur
            for member in chain:
                target[member] = final
        drop = {l for l in alias if not (l in cycle_reps and target[l] == l)}
        mapping = {l: t for l, t in target.items() if l != t}
        # a kept cycle representative's successor is rewritten onto itself by
        # the substitution, leaving a quiescent self-loop
        residual = _rewrite(residual, mapping, drop)


def _canonical_body_key(body) -> str:
    if isinstance(body, Leaf):
        updates = sorted(
            f"{u.head}({', '.join(print_term(a) for a in u.arg_terms)}) := {print_term(u.rhs)}"
            for u in body.updates
        )
        return "leaf[" + "; ".join(updates) + " -> " + body.successor.name + "]"
    return (
        "branch["
        + print_term(body.guard)
        + " ? "
        + _canonical_body_key(body.then_tree)
        + " : "
        + _canonical_body_key(body.else_tree)
        + "]"
    )


def merge_identical_bodies(residual: ResidualProgram) -> ResidualProgram:
    """Substitute later labels by the earliest label with the same normalized
    body; repeated because merging can equalize further bodies."""
    while True:
        survivors: dict = {}
        mapping: dict = {}
        for krule in residual.krules:
            key = _canonical_body_key(krule.body)
            if key in survivors:
                mapping[krule.label] = survivors[key]
            else:
                survivors[key] = krule.label
        if not mapping:
            return residual
        residual = _rewrite(residual, mapping, set(mapping))


def _update_reads(updates: tuple) -> set:
    names: set = set()
    for upd in updates:
        for term in upd.arg_terms + (upd.rhs,):
            names.update(term_fnames(term))
    return names


def _update_writes(updates: tuple) -> set:
    return {u.head for u in updates}


def combine_consecutive(residual: ResidualProgram) -> ResidualProgram:
    """Fuse a straight-line rule into its unique successor when their updates
    are independent at function-name granularity."""
    while True:
        graph = build_kgraph(residual)
        by_label = {r.label: r for r in residual.krules}
        combined = False
        for a_rule in residual.krules:
            a_body = a_rule.body
            if not isinstance(a_body, Leaf):
                continue
            b_label = a_body.successor
            if b_label == a_rule.label or b_label == residual.initial_label:
                continue
            if graph.preds.get(b_label) != {a_rule.label}:
                continue
            b_rule = by_label.get(b_label)
            if b_rule is None or not isinstance(b_rule.body, Leaf):
                continue
            c_label = b_rule.body.successor
            if c_label == a_rule.label or c_label == b_label:
                continue
            writes_a = _update_writes(a_body.updates)
            writes_b = _update_writes(b_rule.body.updates)
            reads_a = _update_reads(a_body.updates)
            reads_b = _update_reads(b_rule.body.updates)
            if writes_a & reads_b or writes_b & reads_a or writes_a & writes_b:
                continue
            # the fused rule applies both update sets in one move, so the
            # second set must not read the control function either
            if K_NAME in reads_b:
                continue
            fused = Leaf(a_body.updates + b_rule.body.updates, c_label)
            krules = []
            for r in residual.krules:
                if r.label == a_rule.label:
                    krules.append(KRule(r.label, fused, r.note))
                elif r.label == b_label:
                    continue
                else:
                    krules.append(r)
            residual = ResidualProgram(
                residual.initial_label, krules, residual.negative_names, residual.optimized
            )
            combined = True
            break
        if not combined:
            return residual


def eliminate_unreachable(residual: ResidualProgram) -> ResidualProgram:
    reachable = reachable_labels(residual)
    krules = [r for r in residual.krules if r.label in reachable]
    return ResidualProgram(
        residual.initial_label, krules, residual.negative_names, residual.optimized
    )


PASSES = (
    ("eliminateUnreachable", eliminate_unreachable),
    ("eliminateAliases", eliminate_aliases),
    ("mergeIdenticalBodies", merge_identical_bodies),
    ("combineConsecutive", combine_consecutive),
)


def optimize(
    residual: ResidualProgram,
    pass_budget: int = 100,
    report: list | None = None,
) -> ResidualProgram:
    """Run the four passes in order until nothing changes or the budget runs
    out. Appends 'round N pass: before -> after' lines to report if given."""
    for round_no in range(1, pass_budget + 1):
        changed = False
        for name, pass_fn in PASSES:
            before = len(residual.krules)
            result = pass_fn(residual)
            after = len(result.krules)
            if report is not None:
                report.append(f"round {round_no} {name}: {before} -> {after}")
            if _fingerprint(result) != _fingerprint(residual):
                changed = True
            residual = result
        if not changed:
            break
    return residual


def _fingerprint(residual: ResidualProgram) -> tuple:
    return (
        residual.initial_label,
        tuple((r.label, _canonical_body_key(r.body)) for r in residual.krules),
    )
