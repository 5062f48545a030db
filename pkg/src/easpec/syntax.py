"""Concrete syntax for programs (.eal), states (.est), divisions (.div) and
oracle traces (.orc), with deterministic pretty-printing.

Grammar sketch for programs:

    external NAME/ARITY
    macro NAME = text            macro NAME(p1, p2) = text
    term := term                 (update)
    if t then BLOCK {elseif t then BLOCK} [else BLOCK] endif
    rules inside a block are separated by newlines or commas
    literals: integers, "strings", atoms (lowercase or 'quoted)
    infix built-ins: + - * < <= > >= = !=          comments: -- to end of line

Identifiers starting with an upper-case letter are function names; bare
lower-case identifiers are atoms, and a lower-case identifier followed by
a parenthesis is a function application (used for the built-ins and, or,
not, not-true). Hyphens join identifier parts only when followed by a
letter, so Num-1 still lexes as a subtraction.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .bta import Division, DivisionError, NEGATIVE, POSITIVE
from .core import (
    Apply,
    Atom,
    Cond,
    EalError,
    FALSE,
    KEYWORDS,
    Lit,
    MacroDef,
    Program,
    Rule,
    State,
    TRUE,
    Term,
    UNDEF,
    Update,
    Value,
    is_builtin,
    render_value,
    state_lines,
)
from .interp import OracleTrace


class ParseError(EalError):
    def __init__(self, message: str, line: int = 0, col: int = 0) -> None:
        where = f"line {line}, col {col}: " if line else ""
        super().__init__(where + message)
        self.line = line
        self.col = col


class MacroError(EalError):
    pass


class StateFormatError(EalError):
    pass


class OracleFormatError(EalError):
    pass


# ---------------------------------------------------------------------------
# Lexer


@dataclass
class Token:
    kind: str
    value: object
    line: int
    col: int


_PUNCT = {
    ":=": "ASSIGN",
    "!=": "NE",
    "<=": "LE",
    ">=": "GE",
    "<": "LT",
    ">": "GT",
    "=": "EQ",
    "+": "PLUS",
    "-": "MINUS",
    "*": "STAR",
    "(": "LPAREN",
    ")": "RPAREN",
    ",": "COMMA",
    "/": "SLASH",
    ":": "COLON",
}

_IDENT_START = re.compile(r"[A-Za-z]")
_IDENT_CHAR = re.compile(r"[A-Za-z0-9_]")


def tokenize(text: str) -> list:
    tokens: list = []
    i = 0
    line = 1
    col = 1
    n = len(text)

    def push(kind: str, value: object, l: int, c: int) -> None:
        tokens.append(Token(kind, value, l, c))

    while i < n:
        ch = text[i]
        if ch == "\n":
            push("NEWLINE", "\n", line, col)
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "-" and i + 1 < n and text[i + 1] == "-":
            while i < n and text[i] != "\n":
                i += 1
                col += 1
            continue
        if ch == '"':
            l0, c0 = line, col
            i += 1
            col += 1
            buf = []
            while True:
                if i >= n or text[i] == "\n":
                    raise ParseError("unterminated string", l0, c0)
                c = text[i]
                if c == '"':
                    i += 1
                    col += 1
                    break
                if c == "\\":
                    if i + 1 >= n:
                        raise ParseError("unterminated escape", line, col)
                    esc = text[i + 1]
                    mapped = {"\\": "\\", '"': '"', "n": "\n", "t": "\t"}.get(esc)
                    if mapped is None:
                        raise ParseError(f"bad escape \\{esc}", line, col)
                    buf.append(mapped)
                    i += 2
                    col += 2
                    continue
                buf.append(c)
                i += 1
                col += 1
            push("STRING", "".join(buf), l0, c0)
            continue
        if ch.isdigit():
            l0, c0 = line, col
            j = i
            while j < n and text[j].isdigit():
                j += 1
            push("INT", int(text[i:j]), l0, c0)
            col += j - i
            i = j
            continue
        if ch == "'":
            l0, c0 = line, col
            j = i + 1
            start = j
            while j < n and (_IDENT_CHAR.match(text[j]) or text[j] == "-"):
                j += 1
            if j == start:
                raise ParseError("empty quoted atom", l0, c0)
            push("QATOM", text[start:j], l0, c0)
            col += j - i
            i = j
            continue
        if _IDENT_START.match(ch):
            l0, c0 = line, col
            j = i + 1
            while j < n:
                if _IDENT_CHAR.match(text[j]):
                    j += 1
                elif text[j] == "-" and j + 1 < n and text[j + 1].isalpha():
                    j += 2
                else:
                    break
            name = text[i:j]
            kind = "UIDENT" if name[0].isupper() else "LIDENT"
            push(kind, name, l0, c0)
            col += j - i
            i = j
            continue
        two = text[i : i + 2]
        if two in _PUNCT:
            push(_PUNCT[two], two, line, col)
            i += 2
            col += 2
            continue
        if ch in _PUNCT:
            push(_PUNCT[ch], ch, line, col)
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", line, col)
    push("EOF", None, line, col)
    return tokens


# ---------------------------------------------------------------------------
# Macro expansion (textual, before parsing proper)

_MACRO_DEF = re.compile(
    r"^\s*macro\s+([A-Za-z][A-Za-z0-9_]*(?:-[A-Za-z][A-Za-z0-9_]*)*)"
    r"\s*(\(([^)]*)\))?\s*=\s*(.*)$"
)
_STRING_SEGMENT = re.compile(r'"(?:[^"\\\n]|\\.)*"')
_EXPANSION_DEPTH_LIMIT = 200


def _strip_comment(line: str) -> str:
    out = []
    i = 0
    in_string = False
    while i < len(line):
        c = line[i]
        if in_string:
            if c == "\\":
                out.append(line[i : i + 2])
                i += 2
                continue
            if c == '"':
                in_string = False
            out.append(c)
            i += 1
            continue
        if c == '"':
            in_string = True
            out.append(c)
            i += 1
            continue
        if c == "-" and line[i : i + 2] == "--":
            break
        out.append(c)
        i += 1
    return "".join(out)


def collect_macros(text: str) -> tuple:
    """Split macro definitions from the remaining source lines."""
    defs: dict = {}
    kept = []
    for raw in text.splitlines():
        stripped = _strip_comment(raw)
        m = _MACRO_DEF.match(stripped)
        if m and stripped.lstrip().startswith("macro"):
            name, has_params, params_text, body = m.group(1), m.group(2), m.group(3), m.group(4)
            params = None
            if has_params is not None:
                params = tuple(p.strip() for p in params_text.split(",") if p.strip())
            if name in defs:
                raise MacroError(f"macro {name} defined twice")
            defs[name] = MacroDef(name, params, body.strip())
            kept.append("")
        else:
            kept.append(raw)
    return defs, "\n".join(kept)


_IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*(?:-[A-Za-z][A-Za-z0-9_]*)*")


def _split_strings(line: str) -> list:
    """Alternating (is_string, text) segments; macro names inside strings stay put."""
    parts = []
    pos = 0
    for m in _STRING_SEGMENT.finditer(line):
        if m.start() > pos:
            parts.append((False, line[pos : m.start()]))
        parts.append((True, m.group(0)))
        pos = m.end()
    if pos < len(line):
        parts.append((False, line[pos:]))
    return parts


def _scan_args(text: str, start: int) -> tuple:
    """Parse a balanced parenthesized argument list starting at text[start] == '('."""
    depth = 0
    args = []
    buf = []
    i = start
    while i < len(text):
        c = text[i]
        if c == '"':
            m = _STRING_SEGMENT.match(text, i)
            if not m:
                raise MacroError("unterminated string in macro arguments")
            buf.append(m.group(0))
            i = m.end()
            continue
        if c == "(":
            depth += 1
            if depth > 1:
                buf.append(c)
            i += 1
            continue
        if c == ")":
            depth -= 1
            if depth == 0:
                args.append("".join(buf).strip())
                return args, i + 1
            buf.append(c)
            i += 1
            continue
        if c == "," and depth == 1:
            args.append("".join(buf).strip())
            buf = []
            i += 1
            continue
        buf.append(c)
        i += 1
    raise MacroError("unbalanced parentheses in macro arguments")


def _expand_segment(segment: str, defs: dict, stack: tuple) -> str:
    if len(stack) > _EXPANSION_DEPTH_LIMIT:
        raise MacroError("macro expansion too deep: " + " -> ".join(stack))
    out = []
    i = 0
    while i < len(segment):
        m = _IDENT_RE.search(segment, i)
        if not m:
            out.append(segment[i:])
            break
        out.append(segment[i : m.start()])
        name = m.group(0)
        rest = m.end()
        if name not in defs:
            out.append(name)
            i = rest
            continue
        if name in stack:
            cycle = list(stack[stack.index(name) :]) + [name]
            raise MacroError("cyclic macro reference: " + " -> ".join(cycle))
        macro = defs[name]
        if macro.params is None:
            replacement = macro.body
        else:
            k = rest
            while k < len(segment) and segment[k] in " \t":
                k += 1
            if k >= len(segment) or segment[k] != "(":
                raise MacroError(f"macro {name} requires {len(macro.params)} argument(s)")
            args, rest = _scan_args(segment, k)
            if len(args) != len(macro.params):
                raise MacroError(
                    f"macro {name} expects {len(macro.params)} argument(s), got {len(args)}"
                )
            replacement = macro.body
            for param, arg in zip(macro.params, args):
                replacement = _substitute_ident(replacement, param, arg)
        out.append(_expand_line(replacement, defs, stack + (name,)))
        i = rest
    return "".join(out)


def _substitute_ident(text: str, name: str, arg: str) -> str:
    pieces = []
    for is_string, seg in _split_strings(text):
        if is_string:
            pieces.append(seg)
            continue
        pattern = re.compile(
            r"(?<![A-Za-z0-9_])" + re.escape(name) + r"(?![A-Za-z0-9_])"
        )
        pieces.append(pattern.sub(lambda _: arg, seg))
    return "".join(pieces)


def _expand_line(line: str, defs: dict, stack: tuple = ()) -> str:
    pieces = []
    for is_string, seg in _split_strings(line):
        pieces.append(seg if is_string else _expand_segment(seg, defs, stack))
    return "".join(pieces)


def expand_macros(text: str) -> str:
    """Strip macro definitions and substitute every occurrence."""
    defs, body = collect_macros(text)
    return "\n".join(_expand_line(line, defs) for line in body.splitlines())


# ---------------------------------------------------------------------------
# Program parser


class _Parser:
    def __init__(self, tokens: list) -> None:
        self.toks = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def at_word(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "LIDENT" and tok.value == word

    def expect_word(self, word: str) -> Token:
        if not self.at_word(word):
            tok = self.peek()
            raise ParseError(f"expected '{word}'", tok.line, tok.col)
        return self.next()

    def expect(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"expected {what}", tok.line, tok.col)
        return self.next()

    def skip_newlines(self) -> None:
        while self.peek().kind == "NEWLINE":
            self.next()

    def skip_separators(self) -> None:
        while self.peek().kind in ("NEWLINE", "COMMA"):
            self.next()

    # --- terms ---

    def parse_term(self) -> Term:
        left = self.parse_additive()
        tok = self.peek()
        if tok.kind in ("EQ", "NE", "LT", "LE", "GT", "GE"):
            op = self.next().value
            right = self.parse_additive()
            return Apply(str(op), (left, right))
        return left

    def parse_additive(self) -> Term:
        left = self.parse_multiplicative()
        while self.peek().kind in ("PLUS", "MINUS"):
            op = self.next().value
            right = self.parse_multiplicative()
            left = Apply(str(op), (left, right))
        return left

    def parse_multiplicative(self) -> Term:
        left = self.parse_primary()
        while self.peek().kind == "STAR":
            self.next()
            right = self.parse_primary()
            left = Apply("*", (left, right))
        return left

    def parse_primary(self) -> Term:
        tok = self.peek()
        if tok.kind == "MINUS":
            self.next()
            num = self.expect("INT", "integer after unary minus")
            return Lit(-num.value)
        if tok.kind == "INT":
            self.next()
            return Lit(tok.value)
        if tok.kind == "STRING":
            self.next()
            return Lit(str(tok.value))
        if tok.kind == "QATOM":
            self.next()
            return Lit(Atom(str(tok.value)))
        if tok.kind == "LPAREN":
            self.next()
            term = self.parse_term()
            self.expect("RPAREN", "')'")
            return term
        if tok.kind == "UIDENT":
            self.next()
            if self.peek().kind == "LPAREN":
                return Apply(str(tok.value), self.parse_args())
            return Apply(str(tok.value), ())
        if tok.kind == "LIDENT":
            name = str(tok.value)
            if name == "true":
                self.next()
                return Lit(TRUE)
            if name == "false":
                self.next()
                return Lit(FALSE)
            if name == "undef":
                self.next()
                return Lit(UNDEF)
            if name in KEYWORDS:
                raise ParseError(f"unexpected keyword '{name}'", tok.line, tok.col)
            self.next()
            if self.peek().kind == "LPAREN":
                return Apply(name, self.parse_args())
            return Lit(Atom(name))
        raise ParseError("expected a term", tok.line, tok.col)

    def parse_args(self) -> tuple:
        self.expect("LPAREN", "'('")
        args = []
        if self.peek().kind != "RPAREN":
            args.append(self.parse_term())
            while self.peek().kind == "COMMA":
                self.next()
                args.append(self.parse_term())
        self.expect("RPAREN", "')'")
        return tuple(args)

    # --- rules ---

    def parse_rule(self) -> Rule:
        if self.at_word("if"):
            return self.parse_cond()
        tok = self.peek()
        lhs = self.parse_term()
        self.expect("ASSIGN", "':='")
        rhs = self.parse_term()
        if not isinstance(lhs, Apply):
            raise ParseError("left side of := must be a function application", tok.line, tok.col)
        return Update(lhs.fname, lhs.args, rhs)

    def parse_cond(self) -> Cond:
        self.expect_word("if")
        branches = []
        guard = self.parse_term()
        self.expect_word("then")
        body = self.parse_block(("elseif", "else", "endif"))
        branches.append((guard, body))
        while self.at_word("elseif"):
            self.next()
            guard = self.parse_term()
            self.expect_word("then")
            branches.append((guard, self.parse_block(("elseif", "else", "endif"))))
        else_body: tuple = ()
        if self.at_word("else"):
            self.next()
            else_body = self.parse_block(("endif",))
        self.expect_word("endif")
        return Cond(tuple(branches), else_body)

    def parse_block(self, stop_words: tuple) -> tuple:
        rules = []
        self.skip_separators()
        while True:
            tok = self.peek()
            if tok.kind == "EOF":
                raise ParseError("unterminated block (missing endif?)", tok.line, tok.col)
            if tok.kind == "LIDENT" and tok.value in stop_words:
                break
            rules.append(self.parse_rule())
            self.skip_separators()
        return tuple(rules)

    # --- top level ---

    def parse_program(self) -> Program:
        externals: dict = {}
        rules = []
        self.skip_separators()
        while self.peek().kind != "EOF":
            if self.at_word("external"):
                self.next()
                name_tok = self.peek()
                if name_tok.kind not in ("UIDENT", "LIDENT"):
                    raise ParseError("expected function name", name_tok.line, name_tok.col)
                self.next()
                self.expect("SLASH", "'/'")
                arity = self.expect("INT", "arity").value
                if name_tok.value in externals:
                    raise ParseError(
                        f"external {name_tok.value} declared twice", name_tok.line, name_tok.col
                    )
                externals[str(name_tok.value)] = int(arity)
            else:
                rules.append(self.parse_rule())
            self.skip_separators()
        return Program(tuple(rules), externals)


def parse_program(text: str) -> Program:
    defs, body = collect_macros(text)
    expanded = "\n".join(_expand_line(line, defs) for line in body.splitlines())
    program = _Parser(tokenize(expanded)).parse_program()
    program.macros = defs
    return program


def parse_term_text(text: str) -> Term:
    parser = _Parser(tokenize(text))
    term = parser.parse_term()
    parser.skip_separators()
    parser.expect("EOF", "end of input")
    return term


def parse_literal(text: str) -> Value:
    term = parse_term_text(text)
    if not isinstance(term, Lit):
        raise ParseError(f"expected a literal: {text!r}")
    return term.value


# ---------------------------------------------------------------------------
# Pretty-printing

_INFIX_LEVEL = {"=": 1, "!=": 1, "<": 1, "<=": 1, ">": 1, ">=": 1, "+": 2, "-": 2, "*": 3}


def print_term(term: Term, prec: int = 0) -> str:
    if isinstance(term, Lit):
        return render_value(term.value)
    level = _INFIX_LEVEL.get(term.fname)
    if level is not None and len(term.args) == 2:
        left = print_term(term.args[0], level if level > 1 else level + 1)
        right = print_term(term.args[1], level + 1)
        text = f"{left} {term.fname} {right}"
        return f"({text})" if prec > level else text
    if not term.args:
        return term.fname
    return term.fname + "(" + ", ".join(print_term(a) for a in term.args) + ")"


def print_rule_lines(rule: Rule, indent: int = 0) -> list:
    pad = "  " * indent
    if isinstance(rule, Update):
        lhs = rule.head
        if rule.arg_terms:
            lhs += "(" + ", ".join(print_term(a) for a in rule.arg_terms) + ")"
        return [f"{pad}{lhs} := {print_term(rule.rhs)}"]
    lines = []
    first = True
    for guard, body in rule.branches:
        word = "if" if first else "elseif"
        first = False
        lines.append(f"{pad}{word} {print_term(guard)} then")
        for sub in body:
            lines.extend(print_rule_lines(sub, indent + 1))
    if rule.else_body:
        lines.append(f"{pad}else")
        for sub in rule.else_body:
            lines.extend(print_rule_lines(sub, indent + 1))
    lines.append(f"{pad}endif")
    return lines


def print_program(program: Program) -> str:
    lines = []
    for name in sorted(program.externals):
        lines.append(f"external {name}/{program.externals[name]}")
    for rule in program.rules:
        lines.extend(print_rule_lines(rule))
    return "\n".join(lines) + "\n"


pretty_print = print_program


# ---------------------------------------------------------------------------
# State files (.est)


def parse_state(text: str) -> State:
    state = State()
    seen: dict = {}
    arities: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = _strip_comment(raw).strip()
        if not stripped:
            continue
        try:
            toks = tokenize(stripped)
            parser = _Parser(toks)
            name_tok = parser.peek()
            if name_tok.kind != "UIDENT":
                raise ParseError("expected a function name", name_tok.line, name_tok.col)
            parser.next()
            args: tuple = ()
            if parser.peek().kind == "LPAREN":
                arg_terms = parser.parse_args()
                values = []
                for t in arg_terms:
                    if not isinstance(t, Lit):
                        raise ParseError("state arguments must be literals")
                    values.append(t.value)
                args = tuple(values)
            parser.expect("EQ", "'='")
            value_term = parser.parse_primary()
            parser.expect("EOF", "end of line")
            if not isinstance(value_term, Lit):
                raise ParseError("state values must be literals")
            value = value_term.value
        except ParseError as exc:
            raise StateFormatError(f"line {lineno}: {exc}") from None
        fname = str(name_tok.value)
        if fname in arities and arities[fname] != len(args):
            raise StateFormatError(f"line {lineno}: {fname} used at two arities")
        arities[fname] = len(args)
        key = (fname, args)
        if key in seen and seen[key] != value:
            raise StateFormatError(
                f"line {lineno}: duplicate entry for {fname} with a different value"
            )
        seen[key] = value
        state.set(fname, args, value)
    return state


def emit_state(state: State) -> str:
    lines = state_lines(state)
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Division files (.div)

_DIV_HEAD = re.compile(r"^(positive|negative|bounded)\s*:\s*(.*)$")


def parse_division(text: str) -> Division:
    div = Division()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = _strip_comment(raw).strip()
        if not stripped:
            continue
        m = _DIV_HEAD.match(stripped)
        if not m:
            raise DivisionError(f"line {lineno}: expected 'positive:', 'negative:' or 'bounded:'")
        section, names_text = m.group(1), m.group(2)
        names = [n.strip() for n in names_text.split(",") if n.strip()]
        for name in names:
            if not re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*(?:-[A-Za-z][A-Za-z0-9_]*)*|[+\-*<>=!]+", name):
                raise DivisionError(f"line {lineno}: bad function name {name!r}")
            if section == "bounded":
                div.bounded.add(name)
                continue
            cls = POSITIVE if section == "positive" else NEGATIVE
            if name in div.classification and div.classification[name] != cls:
                raise DivisionError(f"line {lineno}: {name} marked both positive and negative")
            div.mark(name, cls, "user mark")
    return div


# ---------------------------------------------------------------------------
# Oracle traces (.orc)

_ORACLE_LINE = re.compile(r"^step\s+(\d+)\s*:\s*(.*)$")


def parse_oracle(text: str) -> OracleTrace:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = _strip_comment(raw).strip()
        if not stripped:
            continue
        m = _ORACLE_LINE.match(stripped)
        if not m:
            raise OracleFormatError(f"line {lineno}: expected 'step N: f(args) = value'")
        step = int(m.group(1))
        try:
            toks = tokenize(m.group(2))
            parser = _Parser(toks)
            name_tok = parser.peek()
            if name_tok.kind not in ("UIDENT", "LIDENT"):
                raise ParseError("expected a function name")
            parser.next()
            args: tuple = ()
            if parser.peek().kind == "LPAREN":
                arg_terms = parser.parse_args()
                vals = []
                for t in arg_terms:
                    if not isinstance(t, Lit):
                        raise ParseError("oracle arguments must be literals")
                    vals.append(t.value)
                args = tuple(vals)
            parser.expect("EQ", "'='")
            value_term = parser.parse_primary()
            parser.expect("EOF", "end of line")
            if not isinstance(value_term, Lit):
                raise ParseError("oracle values must be literals")
        except ParseError as exc:
            raise OracleFormatError(f"line {lineno}: {exc}") from None
        key = (step, str(name_tok.value), args)
        if key in values and values[key] != value_term.value:
            raise OracleFormatError(f"line {lineno}: two values for the same oracle key")
        values[key] = value_term.value
    return OracleTrace(values)


def emit_oracle(oracle: OracleTrace) -> str:
    lines = []
    for (step, fname, args), value in sorted(
        oracle.values.items(), key=lambda kv: (kv[0][0], kv[0][1], str(kv[0][2]))
    ):
        loc = fname if not args else fname + "(" + ", ".join(render_value(a) for a in args) + ")"
        lines.append(f"step {step}: {loc} = {render_value(value)}")
    return "\n".join(lines) + ("\n" if lines else "")
