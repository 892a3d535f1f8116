"""Restricted lambda-function space: templates, parsing, evaluation, enumeration.

The space consists of eight single-variable integer function templates, each
instantiated with two small nonnegative constants. Functions are written in
Python lambda syntax, and the surface syntax accepted by :func:`parse` is
exactly the language these templates inhabit: the binary operators
``+ * ** | %`` over nonnegative integer literals and one variable, plus two
fixed special forms (a filtered-list indexing comprehension and a recursive
combinator) and an optional ``bin(...)`` wrapper for base-2 output.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterator, Union


class FuncspaceError(Exception):
    """Base class for function-space errors."""


class ParseError(FuncspaceError):
    """Raised when text is not a well-formed function in the restricted language."""


class EvaluationError(FuncspaceError):
    """Raised when a function cannot be evaluated at a given index."""


class ConstantRangeError(FuncspaceError):
    """Raised when a template constant falls outside the allowed range."""


class TemplateKind(Enum):
    ARITHMETIC = "arithmetic"
    GEOMETRIC = "geometric"
    EXPONENTIAL = "exponential"
    POWER = "power"
    BIT_OR = "bit_or"
    MODULAR = "modular"
    INDEXING_CRITERIA = "indexing_criteria"
    RECURSIVE = "recursive"

    def __repr__(self) -> str:  # keep reprs short in test output
        return f"TemplateKind.{self.name}"


#: Canonical surface form of each template, with {0}/{1} constant slots.
TEMPLATE_TEXTS: dict[TemplateKind, str] = {
    TemplateKind.ARITHMETIC: "lambda x: ({0} * x) + {1}",
    TemplateKind.GEOMETRIC: "lambda x: ({0} * x) * {1}",
    TemplateKind.EXPONENTIAL: "lambda x: ({0} * x) ** {1}",
    TemplateKind.POWER: "lambda x: {0} ** ({1} * x)",
    TemplateKind.BIT_OR: "lambda x: ({0} * x) | {1}",
    TemplateKind.MODULAR: "lambda x: (x * {0}) % ({1}+1)",
    TemplateKind.INDEXING_CRITERIA: (
        "lambda x: [i for i in range(100) if i % ({0} + 1) or i % ({1} + 1)][x]"
    ),
    TemplateKind.RECURSIVE: (
        "(lambda a: lambda v: a(a,v))"
        "(lambda fn,x: 1 if x==0 else {0} * x * fn(fn,x-1) + {1})"
    ),
}

#: Template enumeration order (also the sort order for generators, reports, ...).
TEMPLATE_ORDER: tuple[TemplateKind, ...] = tuple(TEMPLATE_TEXTS)

DEFAULT_CONSTANT_RANGE: tuple[int, int] = (0, 4)

#: Largest magnitude a valid function may produce at a probed index.  Chosen to
#: match a signed 64-bit integer pipeline; see enumerate_space().
DEFAULT_MAX_VALUE: int = 2**63 - 1


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lit:
    value: int


@dataclass(frozen=True)
class Var:
    """The single bound variable of the lambda."""


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + * ** | %
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class FilteredIndex:
    """``[i for i in range(100) if i % (c1+1) or i % (c2+1)][x]``"""

    c1: int
    c2: int


@dataclass(frozen=True)
class Recursive:
    """Factorial-style recursion: f(0)=1, f(x) = c1 * x * f(x-1) + c2."""

    c1: int
    c2: int


Expr = Union[Lit, Var, BinOp, FilteredIndex, Recursive]

_BINARY_OPS = ("+", "*", "**", "|", "%")

# precedence: | < + < * % < ** (right-associative)
_PRECEDENCE = {"|": 1, "+": 2, "*": 3, "%": 3, "**": 4}
_RIGHT_ASSOC = {"**"}


@dataclass(frozen=True)
class ConcreteFunction:
    """A template instantiated with concrete constants.

    ``text`` is the canonical surface form; two ConcreteFunctions are equal
    iff they are the same template with the same constants.
    """

    kind: TemplateKind
    c1: int
    c2: int

    @property
    def text(self) -> str:
        return TEMPLATE_TEXTS[self.kind].format(self.c1, self.c2)

    @property
    def ast(self) -> Expr:
        return _template_ast(self.kind, self.c1, self.c2)

    def sort_key(self) -> tuple[int, int, int]:
        return (TEMPLATE_ORDER.index(self.kind), self.c1, self.c2)

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class ParsedFunction:
    """A well-formed function that does not match any template shape."""

    ast: Expr

    @property
    def text(self) -> str:
        return "lambda x: " + _render_expr(self.ast)

    def __str__(self) -> str:
        return self.text


FunctionLike = Union[ConcreteFunction, ParsedFunction]


def instantiate(
    kind: TemplateKind,
    c1: int,
    c2: int,
    constant_range: tuple[int, int] = DEFAULT_CONSTANT_RANGE,
) -> ConcreteFunction:
    """Build a template instance, validating constants against the range."""
    lo, hi = constant_range
    for name, c in (("c1", c1), ("c2", c2)):
        if not isinstance(c, int) or isinstance(c, bool):
            raise ConstantRangeError(f"{name} must be an int, got {c!r}")
        if not lo <= c <= hi:
            raise ConstantRangeError(
                f"{name}={c} outside allowed range [{lo}, {hi}] for {kind.value}"
            )
    return ConcreteFunction(kind, c1, c2)


def _template_ast(kind: TemplateKind, c1: int, c2: int) -> Expr:
    x = Var()
    if kind is TemplateKind.ARITHMETIC:
        return BinOp("+", BinOp("*", Lit(c1), x), Lit(c2))
    if kind is TemplateKind.GEOMETRIC:
        return BinOp("*", BinOp("*", Lit(c1), x), Lit(c2))
    if kind is TemplateKind.EXPONENTIAL:
        return BinOp("**", BinOp("*", Lit(c1), x), Lit(c2))
    if kind is TemplateKind.POWER:
        return BinOp("**", Lit(c1), BinOp("*", Lit(c2), x))
    if kind is TemplateKind.BIT_OR:
        return BinOp("|", BinOp("*", Lit(c1), x), Lit(c2))
    if kind is TemplateKind.MODULAR:
        return BinOp("%", BinOp("*", x, Lit(c1)), BinOp("+", Lit(c2), Lit(1)))
    if kind is TemplateKind.INDEXING_CRITERIA:
        return FilteredIndex(c1, c2)
    if kind is TemplateKind.RECURSIVE:
        return Recursive(c1, c2)
    raise ValueError(f"unknown template kind: {kind!r}")


def recognize_template(ast: Expr) -> ConcreteFunction | None:
    """Match an AST against the template shapes; None if it is a free-form expr."""
    match ast:
        case FilteredIndex(c1, c2):
            return ConcreteFunction(TemplateKind.INDEXING_CRITERIA, c1, c2)
        case Recursive(c1, c2):
            return ConcreteFunction(TemplateKind.RECURSIVE, c1, c2)
        case BinOp("+", BinOp("*", Lit(a), Var()), Lit(b)):
            return ConcreteFunction(TemplateKind.ARITHMETIC, a, b)
        case BinOp("*", BinOp("*", Lit(a), Var()), Lit(b)):
            return ConcreteFunction(TemplateKind.GEOMETRIC, a, b)
        case BinOp("**", BinOp("*", Lit(a), Var()), Lit(b)):
            return ConcreteFunction(TemplateKind.EXPONENTIAL, a, b)
        case BinOp("**", Lit(a), BinOp("*", Lit(b), Var())):
            return ConcreteFunction(TemplateKind.POWER, a, b)
        case BinOp("|", BinOp("*", Lit(a), Var()), Lit(b)):
            return ConcreteFunction(TemplateKind.BIT_OR, a, b)
        case BinOp("%", BinOp("*", Var(), Lit(a)), BinOp("+", Lit(b), Lit(1))):
            return ConcreteFunction(TemplateKind.MODULAR, a, b)
    return None


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _render_expr(ast: Expr, parent_prec: int = 0, right_side: bool = False) -> str:
    match ast:
        case Lit(v):
            return str(v)
        case Var():
            return "x"
        case BinOp(op, left, right):
            prec = _PRECEDENCE[op]
            if op in _RIGHT_ASSOC:
                text = "{} {} {}".format(
                    _render_expr(left, prec + 1, False),
                    op,
                    _render_expr(right, prec, True),
                )
            else:
                text = "{} {} {}".format(
                    _render_expr(left, prec, False),
                    op,
                    _render_expr(right, prec + 1, True),
                )
            if prec < parent_prec or (prec == parent_prec and right_side):
                return f"({text})"
            # same-precedence left operand of a left-assoc chain needs no parens
            if prec == parent_prec and not right_side:
                return text
            return text
        case FilteredIndex(c1, c2):
            # only reachable via ParsedFunction rendering of a bare special form
            return f"[i for i in range(100) if i % ({c1} + 1) or i % ({c2} + 1)][x]"
        case Recursive(c1, c2):
            return TEMPLATE_TEXTS[TemplateKind.RECURSIVE].format(c1, c2) + "(x)"
    raise ValueError(f"unknown AST node: {ast!r}")


def render_function(fn: FunctionLike, base: int = 10) -> str:
    """Canonical text of a function; base 2 wraps the output in ``bin(...)``."""
    if base == 10:
        return fn.text
    if base != 2:
        raise ValueError(f"unsupported base: {base}")
    if isinstance(fn, ConcreteFunction) and fn.kind is TemplateKind.RECURSIVE:
        return f"lambda x: bin({fn.text}(x))"
    if isinstance(fn, ParsedFunction) and isinstance(fn.ast, Recursive):
        text = TEMPLATE_TEXTS[TemplateKind.RECURSIVE].format(fn.ast.c1, fn.ast.c2)
        return f"lambda x: bin({text}(x))"
    body = fn.text.split(":", 1)[1].strip()
    return f"lambda x: bin({body})"


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<int>\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|==|[+*|%()\[\]:,\-]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens: list[tuple[str, str]] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ParseError(f"illegal character at position {pos}: {text[pos]!r}")
        pos = m.end()
        if m.group("int") is not None:
            tokens.append(("int", m.group("int")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name")))
        else:
            tokens.append(("op", m.group("op")))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _TokenStream:
    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input")
        self.pos += 1
        return tok

    def expect_op(self, op: str) -> None:
        tok = self.next()
        if tok != ("op", op):
            raise ParseError(f"expected {op!r}, got {tok[1]!r}")

    def expect_name(self, name: str | None = None) -> str:
        tok = self.next()
        if tok[0] != "name" or (name is not None and tok[1] != name):
            raise ParseError(f"expected identifier{'' if name is None else ' ' + name!r}, got {tok[1]!r}")
        return tok[1]

    def expect_int(self, value: int | None = None) -> int:
        tok = self.next()
        if tok[0] != "int":
            raise ParseError(f"expected integer, got {tok[1]!r}")
        v = int(tok[1])
        if value is not None and v != value:
            raise ParseError(f"expected literal {value}, got {v}")
        return v

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)


def _try_recursive(ts: _TokenStream) -> Recursive | None:
    """Match the recursive combinator form starting at the current position.

    Identifier names are free but must be used consistently, mirroring the
    canonical ``(lambda a: lambda v: a(a,v))(lambda fn,x: 1 if x==0 else
    c1 * x * fn(fn,x-1) + c2)`` shape.
    """
    start = ts.pos
    try:
        ts.expect_op("(")
        ts.expect_name("lambda")
        a = ts.expect_name()
        ts.expect_op(":")
        ts.expect_name("lambda")
        v = ts.expect_name()
        ts.expect_op(":")
        ts.expect_name(a)
        ts.expect_op("(")
        ts.expect_name(a)
        ts.expect_op(",")
        ts.expect_name(v)
        ts.expect_op(")")
        ts.expect_op(")")
        ts.expect_op("(")
        ts.expect_name("lambda")
        f = ts.expect_name()
        ts.expect_op(",")
        x = ts.expect_name()
        ts.expect_op(":")
        ts.expect_int(1)
        ts.expect_name("if")
        ts.expect_name(x)
        ts.expect_op("==")
        ts.expect_int(0)
        ts.expect_name("else")
        c1 = ts.expect_int()
        ts.expect_op("*")
        ts.expect_name(x)
        ts.expect_op("*")
        ts.expect_name(f)
        ts.expect_op("(")
        ts.expect_name(f)
        ts.expect_op(",")
        ts.expect_name(x)
        ts.expect_op("-")
        ts.expect_int(1)
        ts.expect_op(")")
        ts.expect_op("+")
        c2 = ts.expect_int()
        ts.expect_op(")")
        return Recursive(c1, c2)
    except ParseError:
        ts.pos = start
        return None


def _parse_filtered_index(ts: _TokenStream, param: str) -> FilteredIndex:
    ts.expect_op("[")
    i = ts.expect_name()
    ts.expect_name("for")
    ts.expect_name(i)
    ts.expect_name("in")
    ts.expect_name("range")
    ts.expect_op("(")
    ts.expect_int(100)
    ts.expect_op(")")
    ts.expect_name("if")
    ts.expect_name(i)
    ts.expect_op("%")
    ts.expect_op("(")
    c1 = ts.expect_int()
    ts.expect_op("+")
    ts.expect_int(1)
    ts.expect_op(")")
    ts.expect_name("or")
    ts.expect_name(i)
    ts.expect_op("%")
    ts.expect_op("(")
    c2 = ts.expect_int()
    ts.expect_op("+")
    ts.expect_int(1)
    ts.expect_op(")")
    ts.expect_op("]")
    ts.expect_op("[")
    ts.expect_name(param)
    ts.expect_op("]")
    return FilteredIndex(c1, c2)


def _parse_expr(ts: _TokenStream, param: str, min_prec: int = 1) -> Expr:
    left = _parse_atom(ts, param)
    while True:
        tok = ts.peek()
        if tok is None or tok[0] != "op" or tok[1] not in _PRECEDENCE:
            return left
        op = tok[1]
        prec = _PRECEDENCE[op]
        if prec < min_prec:
            return left
        ts.next()
        if op in _RIGHT_ASSOC:
            right = _parse_expr(ts, param, prec)
        else:
            right = _parse_expr(ts, param, prec + 1)
        left = BinOp(op, left, right)


def _parse_atom(ts: _TokenStream, param: str) -> Expr:
    tok = ts.next()
    if tok[0] == "int":
        return Lit(int(tok[1]))
    if tok[0] == "name":
        if tok[1] == param:
            return Var()
        raise ParseError(f"unknown name {tok[1]!r} (variable is {param!r})")
    if tok == ("op", "("):
        inner = _parse_expr(ts, param)
        ts.expect_op(")")
        return inner
    raise ParseError(f"unexpected token {tok[1]!r}")


def parse(text: str) -> FunctionLike:
    """Parse function text, whitespace-insensitively.

    Returns a :class:`ConcreteFunction` when the expression matches a template
    shape (any nonnegative constants), otherwise a :class:`ParsedFunction`.
    Raises :class:`ParseError` for anything outside the restricted language.
    """
    if not isinstance(text, str):
        raise ParseError(f"expected text, got {type(text).__name__}")
    ts = _TokenStream(_tokenize(text))
    if ts.at_end():
        raise ParseError("empty input")

    rec = _try_recursive(ts)
    if rec is not None:
        if not ts.at_end():
            raise ParseError("trailing input after recursive form")
        return _finish(rec)

    ts.expect_name("lambda")
    param = ts.expect_name()
    if param in ("lambda", "if", "else", "for", "in", "or", "range", "bin"):
        raise ParseError(f"reserved word {param!r} cannot be the variable")
    ts.expect_op(":")

    wrapped = False
    nxt = ts.peek()
    if nxt == ("name", "bin"):
        ts.next()
        ts.expect_op("(")
        wrapped = True

    nxt = ts.peek()
    if nxt == ("op", "["):
        ast: Expr = _parse_filtered_index(ts, param)
    else:
        rec = _try_recursive(ts)
        if rec is not None:
            # applied combinator inside a bin() wrapper: ...(x)
            ts.expect_op("(")
            ts.expect_name(param)
            ts.expect_op(")")
            ast = rec
        else:
            ast = _parse_expr(ts, param)

    if wrapped:
        ts.expect_op(")")
    if not ts.at_end():
        raise ParseError(f"trailing input at token {ts.pos}")
    return _finish(ast)


def _finish(ast: Expr) -> FunctionLike:
    concrete = recognize_template(ast)
    return concrete if concrete is not None else ParsedFunction(ast)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _filtered_list(c1: int, c2: int) -> tuple[int, ...]:
    return tuple(i for i in range(100) if i % (c1 + 1) or i % (c2 + 1))


def evaluate(fn: FunctionLike | Expr, x: int) -> int:
    """Evaluate a function at index ``x`` (exact integer arithmetic).

    Raises :class:`EvaluationError` for anything that does not produce an
    integer: negative indices, out-of-range list indexing, zero modulus.
    """
    ast = fn.ast if isinstance(fn, (ConcreteFunction, ParsedFunction)) else fn
    if not isinstance(x, int) or isinstance(x, bool):
        raise EvaluationError(f"index must be an int, got {x!r}")
    if x < 0:
        raise EvaluationError(f"index must be nonnegative, got {x}")
    return _eval(ast, x)


def _eval(ast: Expr, x: int) -> int:
    match ast:
        case Lit(v):
            return v
        case Var():
            return x
        case BinOp(op, left, right):
            a = _eval(left, x)
            b = _eval(right, x)
            if op == "+":
                return a + b
            if op == "*":
                return a * b
            if op == "**":
                if b < 0:
                    raise EvaluationError(f"negative exponent {b}")
                return a**b
            if op == "|":
                return a | b
            if op == "%":
                if b == 0:
                    raise EvaluationError("modulo by zero")
                return a % b
            raise EvaluationError(f"unknown operator {op!r}")
        case FilteredIndex(c1, c2):
            lst = _filtered_list(c1, c2)
            if x >= len(lst):
                raise EvaluationError(
                    f"index {x} out of range for filtered list of length {len(lst)}"
                )
            return lst[x]
        case Recursive(c1, c2):
            acc = 1
            for k in range(1, x + 1):
                acc = c1 * k * acc + c2
            return acc
    raise EvaluationError(f"cannot evaluate node {ast!r}")


# ---------------------------------------------------------------------------
# Index convention and sequence generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndexConvention:
    """Where sequences start and how far they may be offset.

    A sequence of length L generated at offset o reads
    ``f(start_index + o), ..., f(start_index + o + L - 1)``.
    """

    start_index: int = 1
    max_offset: int = 4

    def __post_init__(self) -> None:
        if self.start_index < 0:
            raise ValueError(f"start_index must be >= 0, got {self.start_index}")
        if self.max_offset < 0:
            raise ValueError(f"max_offset must be >= 0, got {self.max_offset}")

    @property
    def offsets(self) -> range:
        return range(self.max_offset + 1)


DEFAULT_CONVENTION = IndexConvention()


def generate_sequence(
    fn: FunctionLike | Expr,
    offset: int,
    length: int,
    convention: IndexConvention = DEFAULT_CONVENTION,
) -> list[int]:
    """The length-``length`` value sequence of ``fn`` at the given offset."""
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if offset < 0 or offset > convention.max_offset:
        raise ValueError(
            f"offset {offset} outside [0, {convention.max_offset}]"
        )
    first = convention.start_index + offset
    return [evaluate(fn, first + j) for j in range(length)]


# ---------------------------------------------------------------------------
# Space enumeration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExcludedCandidate:
    function: ConcreteFunction
    reason: str


@dataclass(frozen=True)
class FunctionSpace:
    """The enumerated space of valid template instances.

    Iterable over the valid functions, in template-enumeration order.
    ``excluded`` records candidates dropped by the validity probe and why.
    """

    functions: tuple[ConcreteFunction, ...]
    excluded: tuple[ExcludedCandidate, ...]
    constant_range: tuple[int, int]
    probe_indices: tuple[int, ...]
    max_value: int | None

    def __iter__(self) -> Iterator[ConcreteFunction]:
        return iter(self.functions)

    def __len__(self) -> int:
        return len(self.functions)

    def __getitem__(self, i: int) -> ConcreteFunction:
        return self.functions[i]

    def __contains__(self, fn: object) -> bool:
        return fn in self._function_set

    @property
    def _function_set(self) -> frozenset[ConcreteFunction]:
        return frozenset(self.functions)

    def by_kind(self, kind: TemplateKind) -> tuple[ConcreteFunction, ...]:
        return tuple(f for f in self.functions if f.kind is kind)

    def texts(self, base: int = 10) -> list[str]:
        return [render_function(f, base) for f in self.functions]


def enumerate_space(
    constant_range: tuple[int, int] = DEFAULT_CONSTANT_RANGE,
    probe_length: int = 5,
    convention: IndexConvention = DEFAULT_CONVENTION,
    max_value: int | None = DEFAULT_MAX_VALUE,
) -> FunctionSpace:
    """Enumerate every template instance and keep the ones that are usable.

    A candidate is valid iff it evaluates without error at every probe index
    and (when ``max_value`` is set) every probed value has magnitude at most
    ``max_value``. The probes cover every index mining can touch:
    ``start_index .. start_index + max_offset + probe_length``.
    """
    lo, hi = constant_range
    if lo > hi or lo < 0:
        raise ValueError(f"bad constant range: {constant_range}")
    if probe_length < 1:
        raise ValueError(f"probe_length must be >= 1, got {probe_length}")
    first = convention.start_index
    last = convention.start_index + convention.max_offset + probe_length
    probes = tuple(range(first, last + 1))

    valid: list[ConcreteFunction] = []
    excluded: list[ExcludedCandidate] = []
    for kind in TEMPLATE_ORDER:
        for c1 in range(lo, hi + 1):
            for c2 in range(lo, hi + 1):
                fn = ConcreteFunction(kind, c1, c2)
                reason = _validity_failure(fn, probes, max_value)
                if reason is None:
                    valid.append(fn)
                else:
                    excluded.append(ExcludedCandidate(fn, reason))
    return FunctionSpace(
        functions=tuple(valid),
        excluded=tuple(excluded),
        constant_range=(lo, hi),
        probe_indices=probes,
        max_value=max_value,
    )


def _validity_failure(
    fn: ConcreteFunction, probes: tuple[int, ...], max_value: int | None
) -> str | None:
    for x in probes:
        try:
            v = evaluate(fn, x)
        except EvaluationError as err:
            return f"evaluation error at index {x}: {err}"
        if max_value is not None and abs(v) > max_value:
            return f"value at index {x} exceeds magnitude bound ({v})"
    return None
