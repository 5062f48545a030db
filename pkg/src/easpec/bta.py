"""Binding-time analysis: completes a user division of the function names
into positive (known ahead of time) and negative (known only at run time).

The fixpoint applies four demotion/promotion rules until stable, defaults
whatever is left to negative, then re-runs once more for consistency:

  * an update whose arguments or right side reference a negative name makes
    the updated function negative, even over a user's positive mark;
  * a function all of whose updates reference only positive names becomes
    positive unless already negative;
  * self-referential functions go negative unless a bounded mark is present
    and every update has the accepted nullary shape;
  * a positive function applied to an argument that mentions a negative
    name is demoted, since residual programs cannot read positive tables
    at unknown points.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .core import (
    Apply,
    Block,
    Cond,
    DYNAMIC,
    EXTERNAL,
    EalError,
    Program,
    Rule,
    STATIC,
    Update,
    infer_kinds,
    is_builtin,
    iter_block_rules,
    iter_rule_terms,
    iter_updates,
    term_fnames,
)

POSITIVE = "positive"
NEGATIVE = "negative"
UNCLASSIFIED = "unclassified"

RESERVED_CONTROL = "K"


class DivisionError(EalError):
    """Contradictory or reserved user marks."""


@dataclass
class Division:
    classification: dict = field(default_factory=dict)
    bounded: set = field(default_factory=set)
    provenance: dict = field(default_factory=dict)

    def of(self, name: str) -> str:
        return self.classification.get(name, UNCLASSIFIED)

    def is_positive(self, name: str) -> bool:
        return self.classification.get(name) == POSITIVE

    def is_negative(self, name: str) -> bool:
        return self.classification.get(name) == NEGATIVE

    def mark(self, name: str, cls: str, reason: str) -> None:
        self.classification[name] = cls
        self.provenance[name] = reason

    def copy(self) -> "Division":
        return Division(dict(self.classification), set(self.bounded), dict(self.provenance))

    def positives(self) -> set:
        return {n for n, c in self.classification.items() if c == POSITIVE}

    def negatives(self) -> set:
        return {n for n, c in self.classification.items() if c == NEGATIVE}


def initial_division(user_marks: Division, program: Program) -> Division:
    """Seed the analysis: user marks for known names, externals forced
    negative, static names and built-ins defaulting to positive, dynamic
    names left unclassified."""
    if user_marks.of(RESERVED_CONTROL) != UNCLASSIFIED or RESERVED_CONTROL in user_marks.bounded:
        raise DivisionError(f"{RESERVED_CONTROL} is a reserved name and cannot be marked")
    kinds = infer_kinds(program)
    div = Division()
    for name in sorted(kinds):
        info = kinds[name]
        mark = user_marks.of(name)
        if info.kind == EXTERNAL:
            div.mark(name, NEGATIVE, "external function")
        elif info.kind == STATIC:
            if mark == NEGATIVE:
                div.mark(name, NEGATIVE, "user mark")
            elif mark == POSITIVE:
                div.mark(name, POSITIVE, "user mark")
            else:
                div.mark(name, POSITIVE, "static default")
        else:
            if mark != UNCLASSIFIED:
                div.mark(name, mark, "user mark")
            else:
                div.mark(name, UNCLASSIFIED, "unmarked")
    div.bounded = {n for n in user_marks.bounded if n in kinds}
    return div


def _updates_by_head(program: Program) -> dict:
    by_head: dict = {}
    for upd in iter_updates(program.rules):
        by_head.setdefault(upd.head, []).append(upd)
    return by_head


def _update_refs(upd: Update) -> list:
    names = []
    for term in upd.arg_terms + (upd.rhs,):
        for f in term_fnames(term):
            if f not in names:
                names.append(f)
    return names


def _bounded_shape_ok(fname: str, updates: list, div: Division, kinds: dict) -> bool:
    """Accepted bounded shape: every update is a bare `f := rhs` whose rhs
    mentions no dynamic name other than f and only positive non-dynamic names."""
    for upd in updates:
        if upd.arg_terms:
            return False
        for ref in term_fnames(upd.rhs):
            info = kinds.get(ref)
            if info is not None and info.kind == DYNAMIC:
                if ref != fname:
                    return False
            elif not div.is_positive(ref):
                return False
    return True


def self_ref_rule(program: Program, division: Division, bounded: set) -> Division:
    """Demote self-referential dynamic functions, unless bounded-marked with
    the accepted update shape."""
    div = division.copy()
    kinds = infer_kinds(program)
    by_head = _updates_by_head(program)
    for fname in sorted(by_head):
        if div.is_negative(fname):
            continue
        self_ref = any(fname in _update_refs(u) for u in by_head[fname])
        if not self_ref:
            continue
        if fname in bounded:
            if _bounded_shape_ok(fname, by_head[fname], div, kinds):
                continue
            div.mark(fname, NEGATIVE, "bounded mark rejected")
        else:
            div.mark(fname, NEGATIVE, "self-referential without bounded mark")
    return div


def use_site_demotion(program: Program, division: Division) -> Division:
    """Demote positive non-built-in functions that are applied to argument
    terms mentioning a negative name (read at an unknown point)."""
    div = division.copy()
    demoted = []
    for rule in iter_block_rules(program.rules):
        terms = list(iter_rule_terms(rule))
        for term in terms:
            for app in _iter_applies(term):
                if not app.args or is_builtin(app.fname):
                    continue
                if not div.is_positive(app.fname):
                    continue
                if any(div.is_negative(f) for a in app.args for f in term_fnames(a)):
                    demoted.append(app.fname)
    for fname in sorted(set(demoted)):
        div.mark(fname, NEGATIVE, "read at unknown point")
    return div


def _iter_applies(term):
    if isinstance(term, Apply):
        yield term
        for a in term.args:
            yield from _iter_applies(a)


def bta_fixpoint(program: Program, division: Division) -> Division:
    """Run the classification rules to a total, stable division."""
    div = division.copy()
    by_head = _updates_by_head(program)

    def sweep(current: Division) -> Division:
        while True:
            nxt = current.copy()
            # demotion: any update referencing a negative name
            for fname in sorted(by_head):
                if nxt.is_negative(fname):
                    continue
                for upd in by_head[fname]:
                    bad = [r for r in _update_refs(upd) if nxt.is_negative(r)]
                    if bad:
                        nxt.mark(fname, NEGATIVE, f"references {sorted(bad)[0]}")
                        break
            # promotion: all updates reference only positive names
            for fname in sorted(by_head):
                if nxt.of(fname) != UNCLASSIFIED:
                    continue
                if all(all(nxt.is_positive(r) for r in _update_refs(u)) for u in by_head[fname]):
                    nxt.mark(fname, POSITIVE, "all update references positive")
            nxt = self_ref_rule(program, nxt, nxt.bounded)
            nxt = use_site_demotion(program, nxt)
            if nxt.classification == current.classification:
                return nxt
            current = nxt

    div = sweep(div)
    for fname in sorted(div.classification):
        if div.of(fname) == UNCLASSIFIED:
            div.mark(fname, NEGATIVE, "defaulted negative")
    return sweep(div)


def emit_division(division: Division) -> str:
    """The .div interchange text, with provenance comments per name.

    Built-ins at their default positive classification are left implicit.
    """
    shown = []
    for name in sorted(division.classification):
        if is_builtin(name) and division.is_positive(name):
            continue
        shown.append(name)
    lines = []
    for cls, label in ((POSITIVE, "positive"), (NEGATIVE, "negative")):
        names = [n for n in shown if division.of(n) == cls]
        if names:
            lines.append(f"{label}: " + ", ".join(names))
    bounded = sorted(n for n in division.bounded if n in division.classification)
    if bounded:
        lines.append("bounded: " + ", ".join(bounded))
    for name in shown:
        reason = division.provenance.get(name)
        if reason:
            lines.append(f"-- {name}: {division.of(name)} ({reason})")
    return "\n".join(lines) + "\n"
