"""Toolkit for sequential evolving algebras: parsing, execution, binding-time
analysis, polyvariant specialization, and residual-program optimization."""

from .core import (
    Apply,
    Atom,
    Cond,
    Diagnostic,
    EalError,
    EvalError,
    FALSE,
    Lit,
    Program,
    State,
    TRUE,
    UNDEF,
    Update,
    flatten_to_basic_rules,
    infer_kinds,
    validate_program,
)
from .interp import (
    ConflictError,
    OracleTrace,
    RunTrace,
    apply_updates,
    collect_updates,
    dump_trace,
    eval_term,
    resolve_conflicts,
    run,
)
from .syntax import (
    MacroError,
    ParseError,
    expand_macros,
    parse_division,
    parse_oracle,
    parse_program,
    parse_state,
    pretty_print,
)
from .bta import Division, DivisionError, bta_fixpoint, emit_division, initial_division
from .specializer import (
    ResidualProgram,
    SpecializeError,
    emit_residual,
    fold_term,
    load_residual,
    residual_to_program,
    specialize_program,
)
from .optimizer import optimize

__all__ = [
    "Apply",
    "Atom",
    "Cond",
    "ConflictError",
    "Diagnostic",
    "Division",
    "DivisionError",
    "EalError",
    "EvalError",
    "FALSE",
    "Lit",
    "MacroError",
    "OracleTrace",
    "ParseError",
    "Program",
    "ResidualProgram",
    "RunTrace",
    "SpecializeError",
    "State",
    "TRUE",
    "UNDEF",
    "Update",
    "apply_updates",
    "bta_fixpoint",
    "collect_updates",
    "dump_trace",
    "emit_division",
    "emit_residual",
    "eval_term",
    "expand_macros",
    "flatten_to_basic_rules",
    "fold_term",
    "infer_kinds",
    "initial_division",
    "load_residual",
    "optimize",
    "parse_division",
    "parse_oracle",
    "parse_program",
    "parse_state",
    "pretty_print",
    "residual_to_program",
    "resolve_conflicts",
    "run",
    "specialize_program",
    "validate_program",
]
