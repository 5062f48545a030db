"""Demon semantics: evaluate all terms in the pre-state, fire every rule,
resolve contradictory updates by policy, apply the survivors simultaneously."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .core import (
    Apply,
    Block,
    Cond,
    EalError,
    EvalError,
    Lit,
    Program,
    State,
    TRUE,
    Term,
    UNDEF,
    Update,
    Value,
    apply_builtin,
    dedup_updates,
    find_conflicts,
    infer_kinds,
    is_builtin,
    render_location,
    render_update_triple,
    render_value,
    triple_sort_key,
    value_sort_key,
    EXTERNAL,
)

POLICIES = ("seeded-random", "first-in-rule-order", "error")


class ConflictError(EalError):
    """Contradictory updates under the error policy."""


@dataclass
class OracleTrace:
    """Finite answers of the external functions: (step, fname, args) -> value."""

    values: dict = field(default_factory=dict)

    def lookup(self, step: int, fname: str, args: tuple) -> Value:
        return self.values.get((step, fname, args), UNDEF)


EMPTY_ORACLE = OracleTrace()


@dataclass
class TraceStep:
    step: int
    pre_state: State
    applied: list


@dataclass
class RunTrace:
    steps: list
    final_state: State
    quiescent: bool


def eval_term(
    term: Term,
    state: State,
    step: int = 0,
    oracle: Optional[OracleTrace] = None,
    externals: frozenset = frozenset(),
) -> Value:
    if isinstance(term, Lit):
        return term.value
    args = tuple(eval_term(a, state, step, oracle, externals) for a in term.args)
    fname = term.fname
    if is_builtin(fname):
        try:
            return apply_builtin(fname, args)
        except EvalError as exc:
            raise EvalError(f"{exc} while evaluating {render_location(fname, args)}") from None
    if fname in externals:
        return (oracle or EMPTY_ORACLE).lookup(step, fname, args)
    return state.lookup(fname, args)


def collect_updates(
    block: Block,
    state: State,
    step: int = 0,
    oracle: Optional[OracleTrace] = None,
    externals: frozenset = frozenset(),
) -> list:
    """Union of the updates fired by every rule, all evaluated in the pre-state."""
    triples: list = []

    def fire(rule) -> None:
        if isinstance(rule, Update):
            args = tuple(eval_term(t, state, step, oracle, externals) for t in rule.arg_terms)
            value = eval_term(rule.rhs, state, step, oracle, externals)
            triples.append((rule.head, args, value))
            return
        for guard, body in rule.branches:
            if eval_term(guard, state, step, oracle, externals) is TRUE:
                for sub in body:
                    fire(sub)
                return
        for sub in rule.else_body:
            fire(sub)

    for rule in block:
        fire(rule)
    return dedup_updates(triples)


def resolve_conflicts(
    updates: list,
    seed: int = 0,
    policy: str = "seeded-random",
    step: int = 0,
) -> list:
    """Keep exactly one update per conflicting location, chosen by policy.

    The seeded-random choice depends only on (seed, step, location, sorted
    candidates), so two programs firing the same conflicting triples make
    the same choice.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy: {policy}")
    conflicts = find_conflicts(updates)
    if not conflicts:
        return list(updates)
    if policy == "error":
        parts = []
        for (fname, args), vals in sorted(conflicts.items(), key=lambda kv: (kv[0][0],)):
            rendered = ", ".join(render_value(v) for v in sorted(vals, key=value_sort_key))
            parts.append(f"{render_location(fname, args)} <- {{{rendered}}}")
        raise ConflictError("conflicting updates: " + "; ".join(parts))
    chosen: dict = {}
    for (fname, args), vals in conflicts.items():
        if policy == "first-in-rule-order":
            chosen[(fname, args)] = vals[0]
        else:
            cands = sorted(vals, key=value_sort_key)
            key = f"{seed}:{step}:{fname}:" + ",".join(render_value(a) for a in args)
            rng = random.Random(key)
            chosen[(fname, args)] = cands[rng.randrange(len(cands))]
    out = []
    emitted = set()
    for fname, args, value in updates:
        loc = (fname, args)
        if loc not in conflicts:
            out.append((fname, args, value))
        elif loc not in emitted:
            emitted.add(loc)
            out.append((fname, args, chosen[loc]))
    return out


def apply_updates(state: State, updates: list) -> State:
    """Simultaneous assignment; undef values delete their locations."""
    fresh = state.copy()
    for fname, args, value in updates:
        fresh.set(fname, args, value)
    return fresh


def _effective(state: State, updates: list) -> bool:
    return any(state.lookup(f, a) != v for f, a, v in updates)


def run(
    program: Program,
    initial_state: State,
    max_steps: int,
    seed: int = 0,
    policy: str = "seeded-random",
    oracle: Optional[OracleTrace] = None,
) -> RunTrace:
    """Iterate collect/resolve/apply until quiescence or the step bound."""
    externals = frozenset(program.externals)
    state = initial_state.copy()
    steps: list = []
    quiescent = False
    for step in range(max_steps):
        try:
            fired = collect_updates(program.rules, state, step, oracle, externals)
            resolved = resolve_conflicts(fired, seed, policy, step)
        except EvalError as exc:
            raise EvalError(f"step {step}: {exc}") from None
        except ConflictError as exc:
            raise ConflictError(f"step {step}: {exc}") from None
        if not _effective(state, resolved):
            quiescent = True
            break
        new_state = apply_updates(state, resolved)
        steps.append(TraceStep(step, state, resolved))
        state = new_state
    return RunTrace(steps, state, quiescent)


def dump_trace(trace: RunTrace) -> str:
    """One line per step with the applied updates in canonical order."""
    lines = []
    for entry in trace.steps:
        rendered = ", ".join(
            render_update_triple(t) for t in sorted(entry.applied, key=triple_sort_key)
        )
        lines.append(f"step {entry.step}: {rendered}")
    return "\n".join(lines)


def run_externals(program: Program) -> frozenset:
    """External names of a validated program (oracle-backed during a run)."""
    kinds = infer_kinds(program)
    return frozenset(n for n, info in kinds.items() if info.kind == EXTERNAL)
