"""Core model for sequential evolving algebras.

Values, closed terms, rules, programs, states and update sets, plus the
signature-level checks shared by the analyzer, specializer and interpreter.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1


class EalError(Exception):
    """Base class for all toolkit errors."""


class EvalError(EalError):
    """Term evaluation failure, e.g. 64-bit overflow in a built-in."""


# ---------------------------------------------------------------------------
# Values


class Logical:
    """One of the logical constants true, false, undef.

    Singletons compared by identity; distinct from every int, string and
    atom. Python bools are banned from the value domain (a bool would
    compare equal to 0/1 and corrupt table keys).
    """

    __slots__ = ("name",)

    def __init__(self, name: str) -> None:
        self.name = name

    def __repr__(self) -> str:
        return self.name

    def __copy__(self) -> "Logical":
        return self

    def __deepcopy__(self, memo) -> "Logical":
        return self


TRUE = Logical("true")
FALSE = Logical("false")
UNDEF = Logical("undef")


@dataclass(frozen=True)
class Atom:
    """Interned symbolic constant (control labels, user symbols)."""

    name: str

    def __repr__(self) -> str:
        return "'" + self.name


Value = Union[int, str, Atom, Logical]

_LOGICAL_ORDER = {id(UNDEF): 0, id(FALSE): 1, id(TRUE): 2}


def is_value(v: object) -> bool:
    if isinstance(v, bool):
        return False
    return isinstance(v, (int, str, Atom, Logical))


def value_sort_key(v: Value) -> tuple:
    """Total deterministic order over values, used for canonical forms."""
    if isinstance(v, Logical):
        return (0, _LOGICAL_ORDER[id(v)], "")
    if isinstance(v, bool):
        raise TypeError("python bool is not a value")
    if isinstance(v, int):
        return (1, v, "")
    if isinstance(v, str):
        return (2, 0, v)
    if isinstance(v, Atom):
        return (3, 0, v.name)
    raise TypeError(f"not a value: {v!r}")


def args_sort_key(args: tuple) -> tuple:
    return tuple(value_sort_key(a) for a in args)


_BARE_ATOM = re.compile(r"[a-z][A-Za-z0-9_]*(?:-[A-Za-z][A-Za-z0-9_]*)*\Z")
_ATOM_CHARS = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_-]*\Z")

KEYWORDS = frozenset(
    {"if", "then", "elseif", "else", "endif", "external", "macro", "true", "false", "undef"}
)


def render_value(v: Value) -> str:
    """Literal syntax for a value, as used in programs and state files."""
    if v is TRUE:
        return "true"
    if v is FALSE:
        return "false"
    if v is UNDEF:
        return "undef"
    if isinstance(v, bool):
        raise TypeError("python bool is not a value")
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        body = v.replace("\\", "\\\\").replace('"', '\\"')
        body = body.replace("\n", "\\n").replace("\t", "\\t")
        return '"' + body + '"'
    if isinstance(v, Atom):
        if _BARE_ATOM.fullmatch(v.name) and v.name not in KEYWORDS:
            return v.name
        if _ATOM_CHARS.fullmatch(v.name):
            return "'" + v.name
        raise ValueError(f"atom name not renderable: {v.name!r}")
    raise TypeError(f"not a value: {v!r}")


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Lit:
    value: Value


@dataclass(frozen=True)
class Apply:
    fname: str
    args: tuple = ()


Term = Union[Lit, Apply]


def is_literal(term: Term) -> bool:
    return isinstance(term, Lit)


def term_fnames(term: Term) -> Iterator[str]:
    """All function names occurring anywhere in the term."""
    if isinstance(term, Apply):
        yield term.fname
        for a in term.args:
            yield from term_fnames(a)


def mentions_any(term: Term, names) -> bool:
    return any(f in names for f in term_fnames(term))


# ---------------------------------------------------------------------------
# Rules and programs


@dataclass(frozen=True)
class Update:
    """Basic transition content: head(arg_terms) := rhs."""

    head: str
    arg_terms: tuple = ()
    rhs: Term = Lit(UNDEF)


@dataclass(frozen=True)
class Cond:
    """Guarded rule: ordered branches of (guard, body) plus an else body."""

    branches: tuple = ()
    else_body: tuple = ()


Rule = Union[Update, Cond]
Block = tuple  # tuple of Rule; parallel set semantics


@dataclass(frozen=True)
class MacroDef:
    name: str
    params: Optional[tuple]  # None means parameterless
    body: str


@dataclass
class Program:
    rules: Block = ()
    externals: dict = field(default_factory=dict)  # name -> arity
    macros: dict = field(default_factory=dict, compare=False)


def iter_block_rules(block: Block) -> Iterator[Rule]:
    """Every rule in the block, including rules nested inside conditionals."""
    for rule in block:
        yield rule
        if isinstance(rule, Cond):
            for _, body in rule.branches:
                yield from iter_block_rules(body)
            yield from iter_block_rules(rule.else_body)


def iter_updates(block: Block) -> Iterator[Update]:
    for rule in iter_block_rules(block):
        if isinstance(rule, Update):
            yield rule


def iter_rule_terms(rule: Rule) -> Iterator[Term]:
    """The rule's own terms: guards for a conditional, args and rhs for an update."""
    if isinstance(rule, Update):
        yield from rule.arg_terms
        yield rule.rhs
    else:
        for guard, _ in rule.branches:
            yield guard


def block_fnames(block: Block) -> set:
    names: set = set()
    for rule in iter_block_rules(block):
        if isinstance(rule, Update):
            names.add(rule.head)
        for term in iter_rule_terms(rule):
            names.update(term_fnames(term))
    return names


# ---------------------------------------------------------------------------
# Built-in static functions

BUILTIN_ARITY = {
    "+": 2,
    "-": 2,
    "*": 2,
    "<": 2,
    "<=": 2,
    ">": 2,
    ">=": 2,
    "=": 2,
    "!=": 2,
    "and": 2,
    "or": 2,
    "not": 1,
    "not-true": 1,
}


def is_builtin(name: str) -> bool:
    return name in BUILTIN_ARITY


def _check_int_range(n: int, op: str) -> int:
    if n < INT_MIN or n > INT_MAX:
        raise EvalError(f"integer overflow in built-in '{op}'")
    return n


def _is_int(v: Value) -> bool:
    return type(v) is int


def apply_builtin(fname: str, args: tuple) -> Value:
    """Compute a built-in. Equality and not-true are total; the rest are
    strict in undef and yield undef outside their domain."""
    if fname == "=":
        return TRUE if args[0] == args[1] else FALSE
    if fname == "!=":
        return TRUE if args[0] != args[1] else FALSE
    if fname == "not-true":
        return FALSE if args[0] is TRUE else TRUE
    if any(a is UNDEF for a in args):
        return UNDEF
    if fname in ("+", "-", "*"):
        a, b = args
        if not (_is_int(a) and _is_int(b)):
            return UNDEF
        if fname == "+":
            return _check_int_range(a + b, fname)
        if fname == "-":
            return _check_int_range(a - b, fname)
        return _check_int_range(a * b, fname)
    if fname in ("<", "<=", ">", ">="):
        a, b = args
        if not (_is_int(a) and _is_int(b)):
            return UNDEF
        if fname == "<":
            return TRUE if a < b else FALSE
        if fname == "<=":
            return TRUE if a <= b else FALSE
        if fname == ">":
            return TRUE if a > b else FALSE
        return TRUE if a >= b else FALSE
    if fname == "and":
        a, b = args
        if a in (TRUE, FALSE) and b in (TRUE, FALSE):
            return TRUE if (a is TRUE and b is TRUE) else FALSE
        return UNDEF
    if fname == "or":
        a, b = args
        if a in (TRUE, FALSE) and b in (TRUE, FALSE):
            return TRUE if (a is TRUE or b is TRUE) else FALSE
        return UNDEF
    if fname == "not":
        a = args[0]
        if a is TRUE:
            return FALSE
        if a is FALSE:
            return TRUE
        return UNDEF
    raise EvalError(f"unknown built-in: {fname}")


# ---------------------------------------------------------------------------
# States


_EMPTY: dict = {}


class State:
    """Finite interpretation tables for basic functions.

    Locations absent from a table read as undef; assigning undef deletes
    the entry, so absence is the only representation of undef.
    """

    __slots__ = ("tables",)

    def __init__(self, entries: Iterable = ()) -> None:
        self.tables: dict = {}
        for fname, args, value in entries:
            self.set(fname, tuple(args), value)

    def lookup(self, fname: str, args: tuple = ()) -> Value:
        return self.tables.get(fname, _EMPTY).get(args, UNDEF)

    def set(self, fname: str, args: tuple, value: Value) -> None:
        if value is UNDEF:
            table = self.tables.get(fname)
            if table is not None:
                table.pop(args, None)
                if not table:
                    del self.tables[fname]
            return
        if not is_value(value) or not all(is_value(a) for a in args):
            raise TypeError(f"bad state entry: {fname}{args!r} = {value!r}")
        self.tables.setdefault(fname, {})[args] = value

    def copy(self) -> "State":
        fresh = State()
        fresh.tables = {f: dict(t) for f, t in self.tables.items()}
        return fresh

    def fnames(self) -> set:
        return set(self.tables)

    def restrict(self, names) -> "State":
        fresh = State()
        fresh.tables = {f: dict(t) for f, t in self.tables.items() if f in names}
        return fresh

    def sorted_entries(self) -> list:
        out = []
        for fname in sorted(self.tables):
            for args in sorted(self.tables[fname], key=args_sort_key):
                out.append((fname, args, self.tables[fname][args]))
        return out

    def __eq__(self, other: object) -> bool:
        return isinstance(other, State) and self.tables == other.tables

    def __repr__(self) -> str:
        parts = [render_location(f, a) + " = " + render_value(v) for f, a, v in self.sorted_entries()]
        return "State(" + ", ".join(parts) + ")"


def render_location(fname: str, args: tuple) -> str:
    if not args:
        return fname
    return fname + "(" + ", ".join(render_value(a) for a in args) + ")"


def state_lines(state: State) -> list:
    """Canonical state-file lines, sorted."""
    return [render_location(f, a) + " = " + render_value(v) for f, a, v in state.sorted_entries()]


# ---------------------------------------------------------------------------
# Update sets

# An update triple is (fname, args, value); update sets are kept as lists in
# firing order with duplicates removed, so "first in rule order" is meaningful.
UpdateTriple = tuple


def dedup_updates(updates: Iterable) -> list:
    seen = set()
    out = []
    for triple in updates:
        if triple not in seen:
            seen.add(triple)
            out.append(triple)
    return out


def find_conflicts(updates: Iterable) -> dict:
    """Map (fname, args) -> list of distinct values, for conflicting locations only."""
    values: dict = {}
    for fname, args, value in updates:
        values.setdefault((fname, args), [])
        if value not in values[(fname, args)]:
            values[(fname, args)].append(value)
    return {loc: vals for loc, vals in values.items() if len(vals) > 1}


def is_consistent(updates: Iterable) -> bool:
    return not find_conflicts(updates)


def render_update_triple(triple: UpdateTriple) -> str:
    fname, args, value = triple
    return render_location(fname, args) + " := " + render_value(value)


def triple_sort_key(triple: UpdateTriple) -> tuple:
    fname, args, value = triple
    return (fname, args_sort_key(args), value_sort_key(value))


# ---------------------------------------------------------------------------
# Function kinds and validation

DYNAMIC = "dynamic"
STATIC = "static"
EXTERNAL = "external"


@dataclass(frozen=True)
class FunctionInfo:
    name: str
    arity: int
    kind: str


@dataclass(frozen=True)
class Diagnostic:
    message: str
    fname: str
    rule: Optional[Rule] = None


def validate_program(program: Program) -> list:
    """Arity consistency plus the no-update-to-external/built-in checks.

    Returns an empty list when the program is well formed; diagnostics name
    the offending function and rule otherwise.
    """
    diags: list = []
    arities: dict = {name: arity for name, arity in BUILTIN_ARITY.items()}
    origin: dict = {name: "built-in" for name in BUILTIN_ARITY}

    def note_use(name: str, arity: int, rule: Optional[Rule]) -> None:
        if name in arities:
            if arities[name] != arity:
                diags.append(
                    Diagnostic(
                        f"arity mismatch: {name} used with arity {arity} "
                        f"but {origin[name]} has arity {arities[name]}",
                        name,
                        rule,
                    )
                )
        else:
            arities[name] = arity
            origin[name] = "earlier use"

    for name, arity in sorted(program.externals.items()):
        note_use(name, arity, None)
        origin[name] = "declaration"

    for rule in iter_block_rules(program.rules):
        if isinstance(rule, Update):
            if rule.head in program.externals:
                diags.append(Diagnostic("external function updated", rule.head, rule))
            if is_builtin(rule.head):
                diags.append(Diagnostic("built-in function updated", rule.head, rule))
            note_use(rule.head, len(rule.arg_terms), rule)
        for term in iter_rule_terms(rule):
            for sub in _iter_applies(term):
                note_use(sub.fname, len(sub.args), rule)
    return diags


def _iter_applies(term: Term) -> Iterator[Apply]:
    if isinstance(term, Apply):
        yield term
        for a in term.args:
            yield from _iter_applies(a)


def infer_kinds(program: Program, state: Optional[State] = None) -> dict:
    """Classify every mentioned name as dynamic, static or external."""
    arities: dict = dict(BUILTIN_ARITY)
    dynamic: set = set()

    def note(name: str, arity: int) -> None:
        arities.setdefault(name, arity)

    for name, arity in program.externals.items():
        note(name, arity)
    for rule in iter_block_rules(program.rules):
        if isinstance(rule, Update):
            dynamic.add(rule.head)
            note(rule.head, len(rule.arg_terms))
        for term in iter_rule_terms(rule):
            for sub in _iter_applies(term):
                note(sub.fname, len(sub.args))
    if state is not None:
        for fname, args, _ in state.sorted_entries():
            note(fname, len(args))

    kinds: dict = {}
    for name, arity in arities.items():
        if name in dynamic:
            kind = DYNAMIC
        elif name in program.externals:
            kind = EXTERNAL
        else:
            kind = STATIC
        kinds[name] = FunctionInfo(name, arity, kind)
    return kinds


# ---------------------------------------------------------------------------
# Flattening to basic rules


def flatten_to_basic_rules(program: Program) -> list:
    """Rewrite the program as a flat list of singly guarded updates.

    Each result is a one-branch conditional around one update. Else branches
    are guarded with not-true so they fire exactly when the guard is not
    true (false and undef both fall to the else side).
    """
    out: list = []

    def conj(ctx: Optional[Term], guard: Term) -> Term:
        return guard if ctx is None else Apply("and", (ctx, guard))

    def walk(rule: Rule, ctx: Optional[Term]) -> None:
        if isinstance(rule, Update):
            guard = Lit(TRUE) if ctx is None else ctx
            out.append(Cond(((guard, (rule,)),), ()))
            return
        acc = ctx
        for guard, body in rule.branches:
            taken = conj(acc, guard)
            for sub in body:
                walk(sub, taken)
            acc = conj(acc, Apply("not-true", (guard,)))
        for sub in rule.else_body:
            walk(sub, acc)

    for rule in program.rules:
        walk(rule, None)
    return out
