"""Small expression language for coefficient and test functions.

Grammar (whitespace-insensitive)::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := "-" factor | power
    power  := base ("^" int)?
    base   := number | "i" | "x" | ident "(" expr ")" | "(" expr ")"
    ident  := sin | cos | exp | sqrt | abs | tanh | step

``i`` is the imaginary unit, ``x`` the free variable on [0, 1].
``step(t)`` is 0 for Re t < 0 and 1 otherwise; t must be real up to
1e-12 in the imaginary part. Exponents must be integers in [-9, 9].
Unary minus binds looser than ``^``, so ``-x^2`` means ``-(x^2)``.

Expressions are immutable after parsing and safe to evaluate from
several threads. Evaluation accepts a scalar or a numpy array and is
deterministic. ``step`` is the only discontinuous primitive; the
abscissae where an expression jumps are available via
:meth:`CoefficientExpr.jump_points` so quadrature can split panels
there.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import ExpressionEvalError, ExpressionSyntaxError, UnknownIdentifierError

__all__ = ["CoefficientExpr", "parse", "evaluate"]

_FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs", "tanh", "step")
_STEP_IMAG_TOL = 1e-12
_MAX_EXPONENT = 9


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: complex


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    name: str
    arg: "Node"


Node = Union[Const, Var, Neg, Bin, Pow, Call]


# ---------------------------------------------------------------------------
# Tokenizer / parser (recursive descent, one token of lookahead)
# ---------------------------------------------------------------------------

_OPS = set("+-*/^()")


def _tokenize(source: str) -> list[tuple[str, object, int]]:
    """Return (kind, value, offset) triples; kind is 'num', 'ident' or a char."""
    tokens = []
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _OPS:
            tokens.append((ch, ch, i))
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            while j < n and source[j].isdigit():
                j += 1
            if j < n and source[j] == ".":
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    j = k
                    while j < n and source[j].isdigit():
                        j += 1
            tokens.append(("num", float(source[i:j]), i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(("ident", source[i:j], i))
            i = j
            continue
        raise ExpressionSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(("eof", None, n))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str):
        tok = self.peek()
        if tok[0] != kind:
            raise ExpressionSyntaxError(
                f"unexpected token {tok[1]!r}" if tok[0] != "eof" else "unexpected end of input",
                tok[2],
                (kind,),
            )
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "eof":
            raise ExpressionSyntaxError(f"trailing input {tok[1]!r}", tok[2], ("eof",))
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            node = Bin(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            node = Bin(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.peek()[0] == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Node:
        node = self.base()
        if self.peek()[0] == "^":
            self.advance()
            sign = 1
            if self.peek()[0] == "-":
                self.advance()
                sign = -1
            tok = self.expect("num")
            value = tok[1]
            if not float(value).is_integer():
                raise ExpressionSyntaxError(
                    f"non-integer exponent {value!r}", tok[2], ("integer",)
                )
            exponent = sign * int(value)
            if abs(exponent) > _MAX_EXPONENT:
                raise ExpressionSyntaxError(
                    f"exponent {exponent} outside [-{_MAX_EXPONENT}, {_MAX_EXPONENT}]",
                    tok[2],
                )
            node = Pow(node, exponent)
        return node

    def base(self) -> Node:
        kind, value, offset = self.peek()
        if kind == "num":
            self.advance()
            return Const(complex(value))
        if kind == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "-":
            # reachable through power() only via factor(); kept for safety
            self.advance()
            return Neg(self.base())
        if kind == "ident":
            self.advance()
            if value == "i":
                return Const(1j)
            if value == "x":
                return Var()
            if value in _FUNCTIONS:
                self.expect("(")
                node = self.expr()
                self.expect(")")
                return Call(value, node)
            raise UnknownIdentifierError(f"unknown identifier {value!r}", offset)
        raise ExpressionSyntaxError(
            "unexpected token" if kind != "eof" else "unexpected end of input",
            offset,
            ("number", "i", "x", "function", "(", "-"),
        )


# ---------------------------------------------------------------------------
# Compilation (scalar path on cmath, array path on numpy)
# ---------------------------------------------------------------------------

_SCALAR_FUNCS = {
    "sin": cmath.sin,
    "cos": cmath.cos,
    "exp": cmath.exp,
    "sqrt": cmath.sqrt,
    "tanh": cmath.tanh,
}


def _compile_scalar(node: Node) -> Callable[[float], complex]:
    if isinstance(node, Const):
        v = node.value
        return lambda x: v
    if isinstance(node, Var):
        return lambda x: x
    if isinstance(node, Neg):
        a = _compile_scalar(node.arg)
        return lambda x: -a(x)
    if isinstance(node, Bin):
        a = _compile_scalar(node.left)
        b = _compile_scalar(node.right)
        if node.op == "+":
            return lambda x: a(x) + b(x)
        if node.op == "-":
            return lambda x: a(x) - b(x)
        if node.op == "*":
            return lambda x: a(x) * b(x)

        def divide(x):
            den = b(x)
            if den == 0:
                raise ExpressionEvalError("division by zero", x)
            return a(x) / den

        return divide
    if isinstance(node, Pow):
        a = _compile_scalar(node.base)
        n = node.exponent

        def power(x):
            base = a(x)
            if n < 0 and base == 0:
                raise ExpressionEvalError("zero raised to a negative power", x)
            return base ** n

        return power
    if isinstance(node, Call):
        a = _compile_scalar(node.arg)
        if node.name == "abs":
            return lambda x: abs(a(x))
        if node.name == "step":

            def step(x):
                t = complex(a(x))
                if abs(t.imag) > _STEP_IMAG_TOL:
                    raise ExpressionEvalError(
                        f"step() argument has imaginary part {t.imag!r}", x
                    )
                return 1.0 if t.real >= 0.0 else 0.0

            return step
        fn = _SCALAR_FUNCS[node.name]
        return lambda x: fn(a(x))
    raise TypeError(f"unknown node {node!r}")


def _compile_vector(node: Node) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(node, Const):
        v = node.value
        return lambda xs: np.full(np.shape(xs), v, dtype=complex)
    if isinstance(node, Var):
        return lambda xs: np.asarray(xs, dtype=complex)
    if isinstance(node, Neg):
        a = _compile_vector(node.arg)
        return lambda xs: -a(xs)
    if isinstance(node, Bin):
        a = _compile_vector(node.left)
        b = _compile_vector(node.right)
        if node.op == "+":
            return lambda xs: a(xs) + b(xs)
        if node.op == "-":
            return lambda xs: a(xs) - b(xs)
        if node.op == "*":
            return lambda xs: a(xs) * b(xs)

        def divide(xs):
            den = b(xs)
            bad = den == 0
            if np.any(bad):
                raise ExpressionEvalError(
                    "division by zero", float(np.asarray(xs).reshape(-1)[np.argmax(np.asarray(bad).reshape(-1))])
                )
            return a(xs) / den

        return divide
    if isinstance(node, Pow):
        a = _compile_vector(node.base)
        n = node.exponent

        def power(xs):
            base = a(xs)
            if n < 0 and np.any(base == 0):
                bad = np.asarray(base == 0).reshape(-1)
                raise ExpressionEvalError(
                    "zero raised to a negative power",
                    float(np.asarray(xs).reshape(-1)[np.argmax(bad)]),
                )
            return base ** n

        return power
    if isinstance(node, Call):
        a = _compile_vector(node.arg)
        if node.name == "abs":
            return lambda xs: np.abs(a(xs)).astype(complex)
        if node.name == "step":

            def step(xs):
                t = a(xs)
                imag = np.abs(t.imag)
                if np.any(imag > _STEP_IMAG_TOL):
                    bad = np.asarray(imag > _STEP_IMAG_TOL).reshape(-1)
                    raise ExpressionEvalError(
                        "step() argument has a nonreal value",
                        float(np.asarray(xs).reshape(-1)[np.argmax(bad)]),
                    )
                return np.where(t.real >= 0.0, 1.0, 0.0).astype(complex)

            return step
        fn = getattr(np, node.name)
        return lambda xs: fn(a(xs))
    raise TypeError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# Printing and transforms
# ---------------------------------------------------------------------------

def _format_real(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _print_const(value: complex) -> tuple[str, int]:
    """Return source text and its effective precedence level."""
    re, im = value.real, value.imag
    if im == 0:
        if re < 0:
            return f"-{_format_real(-re)}", 25
        return _format_real(re), 40
    if re == 0:
        if im == 1:
            return "i", 40
        if im == -1:
            return "-i", 25
        if im < 0:
            return f"-{_format_real(-im)}*i", 25
        return f"{_format_real(im)}*i", 20
    re_txt, _ = _print_const(complex(re, 0))
    im_part = "i" if im == 1 else f"{_format_real(abs(im))}*i"
    op = "+" if im > 0 else "-"
    return f"{re_txt}{op}{im_part}", 10


def _print(node: Node, parent_prec: int) -> str:
    # precedence: + - (10), * / (20), unary - (25), ^ (30), atoms (40)
    if isinstance(node, Const):
        text, prec = _print_const(node.value)
    elif isinstance(node, Var):
        text, prec = "x", 40
    elif isinstance(node, Neg):
        text, prec = "-" + _print(node.arg, 26), 25
    elif isinstance(node, Bin):
        prec = 10 if node.op in "+-" else 20
        left = _print(node.left, prec)
        right = _print(node.right, prec + 1)
        text = f"{left}{node.op}{right}"
    elif isinstance(node, Pow):
        base = _print(node.base, 31)
        text, prec = f"{base}^{node.exponent}", 30
    elif isinstance(node, Call):
        text, prec = f"{node.name}({_print(node.arg, 0)})", 40
    else:  # pragma: no cover
        raise TypeError(f"unknown node {node!r}")
    if prec < parent_prec:
        return f"({text})"
    return text


def _conjugate_node(node: Node) -> Node:
    """Conjugate constants. Valid because x is real and every primitive
    commutes with conjugation on the reals (sqrt only off its cut)."""
    if isinstance(node, Const):
        return Const(node.value.conjugate())
    if isinstance(node, Var):
        return node
    if isinstance(node, Neg):
        return Neg(_conjugate_node(node.arg))
    if isinstance(node, Bin):
        return Bin(node.op, _conjugate_node(node.left), _conjugate_node(node.right))
    if isinstance(node, Pow):
        return Pow(_conjugate_node(node.base), node.exponent)
    if isinstance(node, Call):
        return Call(node.name, _conjugate_node(node.arg))
    raise TypeError(f"unknown node {node!r}")


def _collect_step_args(node: Node, out: list[Node]) -> None:
    if isinstance(node, Call):
        if node.name == "step":
            out.append(node.arg)
        _collect_step_args(node.arg, out)
    elif isinstance(node, Neg):
        _collect_step_args(node.arg, out)
    elif isinstance(node, Bin):
        _collect_step_args(node.left, out)
        _collect_step_args(node.right, out)
    elif isinstance(node, Pow):
        _collect_step_args(node.base, out)


def _contains_var(node: Node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, (Const,)):
        return False
    if isinstance(node, Neg):
        return _contains_var(node.arg)
    if isinstance(node, Bin):
        return _contains_var(node.left) or _contains_var(node.right)
    if isinstance(node, Pow):
        return _contains_var(node.base)
    if isinstance(node, Call):
        return _contains_var(node.arg)
    raise TypeError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# Public type
# ---------------------------------------------------------------------------

_JUMP_SCAN_POINTS = 4097


class CoefficientExpr:
    """A parsed expression. Construct via :func:`parse`."""

    __slots__ = ("root", "source", "_scalar", "_vector", "_jumps")

    def __init__(self, root: Node, source: str):
        self.root = root
        self.source = source
        self._scalar = _compile_scalar(root)
        self._vector = _compile_vector(root)
        self._jumps: tuple[float, ...] | None = None

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """Evaluate at a scalar (returns complex) or ndarray (returns ndarray)."""
        if isinstance(x, np.ndarray):
            return self._vector(x)
        return complex(self._scalar(float(x)))

    def eval_vector(self, xs: np.ndarray) -> np.ndarray:
        return self._vector(xs)

    def eval_scalar(self, x: float) -> complex:
        return self._scalar(x)

    def to_source(self) -> str:
        """Render the AST back to parseable source."""
        return _print(self.root, 0)

    def conjugate(self) -> "CoefficientExpr":
        node = _conjugate_node(self.root)
        return CoefficientExpr(node, _print(node, 0))

    def is_constant(self) -> bool:
        return not _contains_var(self.root)

    def constant_value(self) -> complex:
        if not self.is_constant():
            raise ValueError(f"expression {self.source!r} depends on x")
        return complex(self._scalar(0.0))

    def is_zero(self) -> bool:
        return self.is_constant() and self.constant_value() == 0

    def jump_points(self) -> tuple[float, ...]:
        """Abscissae in (0, 1) where the expression jumps.

        Each ``step`` argument is scanned on a dense grid for sign
        changes of its real part, then the crossings are refined by
        bisection. Nested or pathological arguments are only resolved to
        grid accuracy.
        """
        if self._jumps is None:
            args: list[Node] = []
            _collect_step_args(self.root, args)
            points: list[float] = []
            xs = np.linspace(0.0, 1.0, _JUMP_SCAN_POINTS)
            for arg in args:
                fn_v = _compile_vector(arg)
                fn_s = _compile_scalar(arg)
                vals = np.real(fn_v(xs))
                for j in range(len(xs) - 1):
                    a, b = vals[j], vals[j + 1]
                    if a == 0.0:
                        points.append(float(xs[j]))
                    elif a * b < 0.0:
                        lo, hi = float(xs[j]), float(xs[j + 1])
                        flo = a
                        for _ in range(80):
                            mid = 0.5 * (lo + hi)
                            fmid = complex(fn_s(mid)).real
                            if fmid == 0.0:
                                lo = hi = mid
                                break
                            if (flo < 0) != (fmid < 0):
                                hi = mid
                            else:
                                lo, flo = mid, fmid
                            if hi - lo < 1e-15:
                                break
                        points.append(0.5 * (lo + hi))
                if vals[-1] == 0.0:
                    points.append(float(xs[-1]))
            interior = sorted({p for p in points if 0.0 < p < 1.0})
            merged: list[float] = []
            for p in interior:
                if not merged or p - merged[-1] > 1e-12:
                    merged.append(p)
            self._jumps = tuple(merged)
        return self._jumps

    def __str__(self) -> str:
        return self.source

    def __repr__(self) -> str:
        return f"CoefficientExpr({self.source!r})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, CoefficientExpr):
            return NotImplemented
        return self.root == other.root

    def __hash__(self) -> int:
        return hash(self.root)


def parse(source: str) -> CoefficientExpr:
    """Parse ``source`` into a :class:`CoefficientExpr`.

    Raises :class:`ExpressionSyntaxError` (with byte offset and the
    expected-token set) on malformed input and
    :class:`UnknownIdentifierError` for unknown names.
    """
    if not isinstance(source, str) or not source.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    return CoefficientExpr(_Parser(source).parse(), source)


def evaluate(expr: "CoefficientExpr | str", x):
    """Evaluate an expression (or source text) at x."""
    if isinstance(expr, str):
        expr = parse(expr)
    return expr.eval(x)
