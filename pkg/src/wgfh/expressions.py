"""Arithmetic expression parser and evaluator for medium definitions.

Grammar (precedence low to high): +,- < *,/ < unary minus < ^ (right
associative).  Permitted identifiers: variables x, x1, x2, y, y1, y2, t,
the constant pi, and the functions sin, cos, exp, log, sqrt, abs, min, max.
Expression trees are immutable; evaluation is strict (unbound variables and
domain violations raise instead of defaulting).
"""

import math
import re

import numpy as np

VARIABLES = ("x", "x1", "x2", "y", "y1", "y2", "t")
UNARY_FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs")
BINARY_FUNCTIONS = ("min", "max")
FUNCTIONS = UNARY_FUNCTIONS + BINARY_FUNCTIONS
PERMITTED_NAMES = VARIABLES + ("pi",) + FUNCTIONS


class ExpressionError(ValueError):
    """Base class for parse- and evaluation-time expression failures."""


class ExprSyntaxError(ExpressionError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name, offset):
        allowed = ", ".join(PERMITTED_NAMES)
        ExpressionError.__init__(
            self, f"unknown identifier '{name}' (at offset {offset}); permitted names: {allowed}"
        )
        self.offset = offset
        self.name = name


class UnboundVariableError(ExpressionError):
    def __init__(self, name):
        super().__init__(f"variable '{name}' is not bound")
        self.name = name


class DomainError(ExpressionError):
    pass


class Expr:
    """Immutable expression node. Subclasses implement _eval/_eval_array."""

    __slots__ = ()

    def __call__(self, **bindings):
        return evaluate(self, bindings)

    def __str__(self):
        return to_source(self)

    def __repr__(self):
        return f"{type(self).__name__}({to_source(self)!r})"

    def __eq__(self, other):
        return type(self) is type(other) and self._key() == other._key()

    def __hash__(self):
        return hash((type(self).__name__, self._key()))


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        object.__setattr__(self, "value", float(value))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def _key(self):
        return (self.value,)


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name):
        object.__setattr__(self, "name", name)

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def _key(self):
        return (self.name,)


class Neg(Expr):
    __slots__ = ("child",)

    def __init__(self, child):
        object.__setattr__(self, "child", child)

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def _key(self):
        return (self.child,)


class Bin(Expr):
    __slots__ = ("op", "left", "right")

    def __init__(self, op, left, right):
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def _key(self):
        return (self.op, self.left, self.right)


class Call(Expr):
    __slots__ = ("func", "args")

    def __init__(self, func, args):
        object.__setattr__(self, "func", func)
        object.__setattr__(self, "args", tuple(args))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")

    def _key(self):
        return (self.func, self.args)


_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[+\-*/^(),])"
)


def _tokenize(source):
    """Yield (kind, text, byte offset) triples; kind 'end' closes the stream."""
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos)
        if m.lastgroup != "ws":
            yield (m.lastgroup, m.group(), pos)
        pos = m.end()
    yield ("end", "", n)


class _Parser:
    def __init__(self, source):
        self.source = source
        self.tokens = list(_tokenize(source))
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        self.i += 1

    def expect(self, text, description):
        kind, value, offset = self.tok
        if kind == "op" and value == text:
            self.advance()
            return
        raise ExprSyntaxError(f"expected {description}, found {value or 'end of input'!r}", offset)

    def parse(self):
        e = self.sum_expr()
        kind, value, offset = self.tok
        if kind != "end":
            raise ExprSyntaxError(f"expected operator or end of input, found {value!r}", offset)
        return e

    def sum_expr(self):
        left = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.tok[1]
            self.advance()
            left = Bin(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.tok[1]
            self.advance()
            left = Bin(op, left, self.unary())
        return left

    def unary(self):
        if self.tok[0] == "op" and self.tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            # exponent parsed at unary level: right associative, admits 2^-3
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        kind, value, offset = self.tok
        if kind == "number":
            self.advance()
            return Const(float(value))
        if kind == "ident":
            self.advance()
            if value == "pi":
                return Const(math.pi)
            if value in VARIABLES:
                return Var(value)
            if value in FUNCTIONS:
                self.expect("(", f"'(' after function {value}")
                args = [self.sum_expr()]
                while self.tok[0] == "op" and self.tok[1] == ",":
                    self.advance()
                    args.append(self.sum_expr())
                self.expect(")", "')' closing argument list")
                nargs = 1 if value in UNARY_FUNCTIONS else 2
                if len(args) != nargs:
                    raise ExprSyntaxError(
                        f"function {value} takes {nargs} argument(s), got {len(args)}", offset
                    )
                return Call(value, args)
            raise UnknownIdentifierError(value, offset)
        if kind == "op" and value == "(":
            self.advance()
            e = self.sum_expr()
            self.expect(")", "')'")
            return e
        found = value if value else "end of input"
        raise ExprSyntaxError(f"expected number, identifier or '(', found {found!r}", offset)


def parse(source):
    """Parse `source` into an Expr, or raise ExprSyntaxError with a byte offset."""
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if not isinstance(source, str):
        raise ExprSyntaxError(f"expression source must be text, got {type(source).__name__}", 0)
    return _Parser(source).parse()


def free_variables(e):
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Neg):
        return free_variables(e.child)
    if isinstance(e, Bin):
        return free_variables(e.left) | free_variables(e.right)
    if isinstance(e, Call):
        out = frozenset()
        for a in e.args:
            out |= free_variables(a)
        return out
    return frozenset()


_UNARY_SCALAR = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "abs": abs,
}


def evaluate(e, bindings):
    """Evaluate in IEEE double precision with the given variable bindings."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.name not in bindings:
            raise UnboundVariableError(e.name)
        return float(bindings[e.name])
    if isinstance(e, Neg):
        return -evaluate(e.child, bindings)
    if isinstance(e, Bin):
        a = evaluate(e.left, bindings)
        b = evaluate(e.right, bindings)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0.0:
                raise DomainError("division by zero")
            return a / b
        try:
            return math.pow(a, b)
        except (ValueError, OverflowError, ZeroDivisionError) as exc:
            raise DomainError(f"invalid power {a}^{b}") from exc
    if isinstance(e, Call):
        args = [evaluate(a, bindings) for a in e.args]
        if e.func == "log":
            if args[0] <= 0.0:
                raise DomainError(f"log of non-positive value {args[0]}")
            return math.log(args[0])
        if e.func == "sqrt":
            if args[0] < 0.0:
                raise DomainError(f"sqrt of negative value {args[0]}")
            return math.sqrt(args[0])
        if e.func == "min":
            return min(args)
        if e.func == "max":
            return max(args)
        try:
            return _UNARY_SCALAR[e.func](args[0])
        except OverflowError as exc:
            raise DomainError(f"{e.func} overflow at {args[0]}") from exc
    raise TypeError(f"not an Expr node: {e!r}")


def evaluate_array(e, bindings):
    """Vectorized evaluation; bindings map variable names to numpy arrays."""
    if isinstance(e, Const):
        return np.float64(e.value)
    if isinstance(e, Var):
        if e.name not in bindings:
            raise UnboundVariableError(e.name)
        return np.asarray(bindings[e.name], dtype=np.float64)
    if isinstance(e, Neg):
        return -evaluate_array(e.child, bindings)
    if isinstance(e, Bin):
        a = evaluate_array(e.left, bindings)
        b = evaluate_array(e.right, bindings)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if np.any(b == 0.0):
                raise DomainError("division by zero")
            return a / b
        with np.errstate(invalid="ignore", over="ignore"):
            out = np.power(a, b)
        if not np.all(np.isfinite(out)):
            raise DomainError("invalid power")
        return out
    if isinstance(e, Call):
        args = [evaluate_array(a, bindings) for a in e.args]
        if e.func == "log":
            if np.any(args[0] <= 0.0):
                raise DomainError("log of non-positive value")
            return np.log(args[0])
        if e.func == "sqrt":
            if np.any(args[0] < 0.0):
                raise DomainError("sqrt of negative value")
            return np.sqrt(args[0])
        if e.func == "min":
            return np.minimum(args[0], args[1])
        if e.func == "max":
            return np.maximum(args[0], args[1])
        fn = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}[e.func]
        out = fn(args[0])
        if not np.all(np.isfinite(out)):
            raise DomainError(f"{e.func} produced non-finite values")
        return out
    raise TypeError(f"not an Expr node: {e!r}")


def to_source(e):
    """Print a fully parenthesized form; parse(to_source(e)) evaluates like e."""
    if isinstance(e, Const):
        # negative literals need parens or the sign rebinds under '^'
        return f"({e.value!r})" if e.value < 0 else repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.child)})"
    if isinstance(e, Bin):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_source(a) for a in e.args)})"
    raise TypeError(f"not an Expr node: {e!r}")
