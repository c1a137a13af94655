"""Closed-form scalar fields over (x0..x3, y0..y3) and their derivative jets.

The grammar (EBNF, '^' right-associative, unary minus binding tighter
than '^'):

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := unary ('^' factor)?
    unary  := '-' unary | atom
    atom   := number | ident | func '(' expr (',' expr)* ')' | '(' expr ')'

Identifiers are exactly x0..x3, y0..y3; numbers are decimals with an
optional exponent.  Builtin functions: sqrt, sin, cos, exp, log, abs and
the two-argument pow.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ExprSyntaxError, UnknownIdentifierError
from .series import NVARS, TSeries, VAR_NAMES

__all__ = [
    "ScalarField",
    "Jet",
    "parse",
    "to_source",
    "eval_jet",
    "eval_series",
    "eval_values",
    "fd_jet",
    "check_homogeneity",
]

_VAR_INDEX = {name: i for i, name in enumerate(VAR_NAMES)}
_UNARY_FUNCS = ("sqrt", "sin", "cos", "exp", "log", "abs")
_FUNCS = _UNARY_FUNCS + ("pow",)


# ----------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


@dataclass(frozen=True)
class ScalarField:
    """Immutable expression tree, safe to share between threads."""

    ast: object

    @staticmethod
    def zero():
        return ScalarField(Num(0.0))

    def source(self):
        return to_source(self.ast)

    def variables(self):
        """Set of chart-variable indices that occur in the tree."""
        out = set()

        def walk(n):
            if isinstance(n, Var):
                out.add(n.index)
            elif isinstance(n, Neg):
                walk(n.arg)
            elif isinstance(n, BinOp):
                walk(n.left)
                walk(n.right)
            elif isinstance(n, Call):
                for a in n.args:
                    walk(a)

        walk(self.ast)
        return out

    def is_zero(self):
        return isinstance(self.ast, Num) and self.ast.value == 0.0


@dataclass
class Jet:
    """Value plus mixed partials keyed by 8-tuple exponent multi-indices."""

    value: float
    partials: dict
    order: int

    def partial(self, alpha):
        alpha = tuple(alpha)
        if sum(alpha) == 0:
            return self.value
        return self.partials[alpha]


# ----------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(source):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            off = len(source) - len(stripped)
            raise ExprSyntaxError(
                f"unexpected character {stripped[0]!r}", off,
                expected=("number", "identifier", "operator"),
            )
        kind = m.lastgroup
        text = m.group(kind)
        tokens.append((kind, text, m.start(kind)))
        pos = m.end()
    tokens.append(("eof", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op):
        kind, text, off = self.peek()
        if kind == "op" and text == op:
            return self.next()
        raise ExprSyntaxError(f"expected {op!r}", off, expected=(op,))

    def parse(self):
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "eof":
            raise ExprSyntaxError(
                f"trailing input {text!r}", off, expected=("end of input",)
            )
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.next()
                node = BinOp(text, node, self.term())
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.next()
                node = BinOp(text, node, self.factor())
            else:
                return node

    def factor(self):
        node = self.unary()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.next()
            node = BinOp("^", node, self.factor())
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.next()
            return Neg(self.unary())
        return self.atom()

    def atom(self):
        kind, text, off = self.next()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if text in _VAR_INDEX:
                return Var(_VAR_INDEX[text])
            if text in _FUNCS:
                self.expect_op("(")
                args = [self.expr()]
                while True:
                    k, t, o = self.peek()
                    if k == "op" and t == ",":
                        self.next()
                        args.append(self.expr())
                    else:
                        break
                self.expect_op(")")
                want = 2 if text == "pow" else 1
                if len(args) != want:
                    raise ExprSyntaxError(
                        f"{text} takes {want} argument(s), got {len(args)}", off,
                        expected=(f"{want} arguments",),
                    )
                return Call(text, tuple(args))
            raise UnknownIdentifierError(text, off)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExprSyntaxError(
            f"unexpected token {text or 'end of input'!r}", off,
            expected=("number", "identifier", "'('", "'-'"),
        )


def parse(source):
    """Parse expression source into a ScalarField, or raise a syntax error."""
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0, expected=("expression",))
    return ScalarField(_Parser(source).parse())


# ----------------------------------------------------------------------
# printing (round-trip stable: parse(to_source(ast)) == ast)

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 4
    return 5


def to_source(node):
    if isinstance(node, Num):
        v = node.value
        if v == int(v) and abs(v) < 1e16:
            return str(int(v))
        return repr(v)
    if isinstance(node, Var):
        return VAR_NAMES[node.index]
    if isinstance(node, Neg):
        inner = to_source(node.arg)
        if _prec(node.arg) < 4:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        left = to_source(node.left)
        right = to_source(node.right)
        if node.op == "^":
            # base is a unary in the grammar, exponent is a factor
            if _prec(node.left) < 4:
                left = f"({left})"
            if _prec(node.right) < 3:
                right = f"({right})"
        else:
            if _prec(node.left) < p:
                left = f"({left})"
            if _prec(node.right) <= p:
                right = f"({right})"
        return f"{left} {node.op} {right}" if node.op in "+-" else f"{left}{node.op}{right}"
    raise TypeError(f"not an AST node: {node!r}")


# ----------------------------------------------------------------------
# evaluation

def _series_eval(node, point, order, batch):
    if isinstance(node, Num):
        return TSeries.constant(node.value, order, batch)
    if isinstance(node, Var):
        return TSeries.coordinate(node.index, point[node.index], order, batch)
    if isinstance(node, Neg):
        return -_series_eval(node.arg, point, order, batch)
    if isinstance(node, BinOp):
        left = _series_eval(node.left, point, order, batch)
        right = _series_eval(node.right, point, order, batch)
        try:
            if node.op == "+":
                return left + right
            if node.op == "-":
                return left - right
            if node.op == "*":
                return left * right
            if node.op == "/":
                return left / right
            # '^': exact paths for constant exponents, exp/log otherwise
            if isinstance(node.right, Num):
                return left ** node.right.value
            if isinstance(node.right, Neg) and isinstance(node.right.arg, Num):
                return left ** (-node.right.arg.value)
            return (right * left.log()).exp()
        except DomainError as e:
            raise DomainError(str(e), to_source(node)) from None
    if isinstance(node, Call):
        args = [_series_eval(a, point, order, batch) for a in node.args]
        try:
            if node.func == "pow":
                if isinstance(node.args[1], Num):
                    return args[0] ** node.args[1].value
                if isinstance(node.args[1], Neg) and isinstance(node.args[1].arg, Num):
                    return args[0] ** (-node.args[1].arg.value)
                return (args[1] * args[0].log()).exp()
            return getattr(args[0], node.func)()
        except DomainError as e:
            raise DomainError(str(e), to_source(node)) from None
    raise TypeError(f"not an AST node: {node!r}")


def eval_series(field, point, order):
    """Taylor series of the field at ``point`` (shape (8,) or (8, B))."""
    if not 0 <= order <= 4:
        raise ValueError(f"derivative order must be in 0..4, got {order}")
    point = np.asarray(point, dtype=float)
    batch = point.shape[1:]
    return _series_eval(field.ast, point, order, batch)


def eval_jet(field, point, order):
    """Exact derivatives of the closed form up to total ``order`` (<= 4)."""
    s = eval_series(field, np.asarray(point, dtype=float), order)
    partials = {}
    from .series import DEGREE, FACT, NTERMS, TERMS

    for i in range(1, NTERMS[order]):
        partials[TERMS[i]] = float(s.coeffs[i] * FACT[i])
    return Jet(value=float(s.coeffs[0]), partials=partials, order=order)


def _np_eval(node, pts):
    if isinstance(node, Num):
        return np.full(pts.shape[1:], node.value)
    if isinstance(node, Var):
        return pts[node.index]
    if isinstance(node, Neg):
        return -_np_eval(node.arg, pts)
    if isinstance(node, BinOp):
        a = _np_eval(node.left, pts)
        b = _np_eval(node.right, pts)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return np.divide(a, b)
        return np.power(a, b)
    if isinstance(node, Call):
        args = [_np_eval(a, pts) for a in node.args]
        if node.func == "pow":
            return np.power(args[0], args[1])
        if node.func == "abs":
            return np.abs(args[0])
        return getattr(np, node.func)(args[0])
    raise TypeError(f"not an AST node: {node!r}")


def eval_values(field, points):
    """Plain vectorized evaluation; domain violations come back as NaN."""
    pts = np.asarray(points, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        out = _np_eval(field.ast, pts)
    return np.asarray(out, dtype=float)


def eval_value(field, point):
    """Single-point evaluation that raises DomainError on NaN/inf."""
    v = eval_values(field, np.asarray(point, dtype=float))
    if not np.all(np.isfinite(v)):
        raise DomainError("field not finite at point", field.source())
    return float(v) if v.ndim == 0 else v


# ----------------------------------------------------------------------
# finite-difference oracle

# central stencils per differentiation order: (offset, weight), divide by h^m
_STENCILS = {
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
    4: ((-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)),
}


def _multi_indices(order):
    from .series import NTERMS, TERMS

    return TERMS[1:NTERMS[order]]


def fd_jet(field, point, order, step=1e-3):
    """Central-difference jet; truncation is O(step^2) per differentiation level.

    Independent of the Taylor engine: uses only plain evaluations of the
    field on tensor-product stencils.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if not 0 <= order <= 4:
        raise ValueError(f"derivative order must be in 0..4, got {order}")
    point = np.asarray(point, dtype=float)
    alphas = _multi_indices(order)

    # build one flat batch of sample points covering all stencils
    offsets = []
    weights = []
    slices = []
    for alpha in alphas:
        grids = [_STENCILS[a] if a else ((0, 1.0),) for a in alpha]
        combo_off = []
        combo_w = []
        import itertools as _it

        for combo in _it.product(*grids):
            off = np.array([c[0] for c in combo], dtype=float)
            w = math.prod(c[1] for c in combo)
            combo_off.append(off)
            combo_w.append(w)
        start = len(offsets)
        offsets.extend(combo_off)
        weights.extend(combo_w)
        slices.append((start, len(offsets)))

    if offsets:
        pts = point[:, None] + step * np.array(offsets).T
        vals = eval_values(field, pts)
        if not np.all(np.isfinite(vals)):
            raise DomainError("stencil left the field domain", field.source())
    value = eval_value(field, point)

    partials = {}
    for alpha, (a, b) in zip(alphas, slices):
        h_pow = step ** sum(alpha)
        acc = float(np.dot(np.array(weights[a:b]), vals[a:b])) / h_pow
        partials[alpha] = acc
    return Jet(value=value, partials=partials, order=order)


# ----------------------------------------------------------------------
# homogeneity probe

def check_homogeneity(field, degree, point, scale):
    """|f(x, s*y) - s^degree f(x, y)| at one probe point."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    point = np.asarray(point, dtype=float)
    scaled = point.copy()
    scaled[4:] *= scale
    f0 = eval_value(field, point)
    f1 = eval_value(field, scaled)
    return abs(f1 - scale**degree * f0)


# ----------------------------------------------------------------------
# symbolic helpers (used by gauge shifts and isotropic truncation)

def _num(v):
    return Neg(Num(-v)) if v < 0 else Num(float(v))


def _is_zero(n):
    return isinstance(n, Num) and n.value == 0.0


def _is_one(n):
    return isinstance(n, Num) and n.value == 1.0


def _add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if _is_zero(b):
        return a
    if _is_zero(a):
        return Neg(b)
    return BinOp("-", a, b)


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return Num(0.0)
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    return BinOp("*", a, b)


def _div(a, b):
    if _is_zero(a):
        return Num(0.0)
    if _is_one(b):
        return a
    return BinOp("/", a, b)


def diff_ast(node, var):
    """Symbolic partial derivative; no simplification guarantees."""
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0) if node.index == var else Num(0.0)
    if isinstance(node, Neg):
        d = diff_ast(node.arg, var)
        return Num(0.0) if _is_zero(d) else Neg(d)
    if isinstance(node, BinOp):
        a, b = node.left, node.right
        da, db = diff_ast(a, var), diff_ast(b, var)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        if node.op == "/":
            return _div(_sub(_mul(da, b), _mul(a, db)), BinOp("^", b, Num(2.0)))
        # power
        return _diff_pow(a, b, da, db)
    if isinstance(node, Call):
        if node.func == "pow":
            a, b = node.args
            return _diff_pow(a, b, diff_ast(a, var), diff_ast(b, var))
        u = node.args[0]
        du = diff_ast(u, var)
        if _is_zero(du):
            return Num(0.0)
        if node.func == "sqrt":
            return _div(du, _mul(Num(2.0), Call("sqrt", (u,))))
        if node.func == "sin":
            return _mul(Call("cos", (u,)), du)
        if node.func == "cos":
            return Neg(_mul(Call("sin", (u,)), du))
        if node.func == "exp":
            return _mul(Call("exp", (u,)), du)
        if node.func == "log":
            return _div(du, u)
        if node.func == "abs":
            return _mul(_div(u, Call("abs", (u,))), du)
    raise TypeError(f"not an AST node: {node!r}")


def _diff_pow(a, b, da, db):
    if _is_zero(db) and isinstance(b, Num):
        p = b.value
        if _is_zero(da):
            return Num(0.0)
        return _mul(_mul(b, BinOp("^", a, _num(p - 1))), da)
    # general a^b: a^b * (db*log(a) + b*da/a)
    body = _add(_mul(db, Call("log", (a,))), _mul(b, _div(da, a)))
    if _is_zero(body):
        return Num(0.0)
    return _mul(BinOp("^", a, b), body)


def subst_ast(node, values):
    """Replace chart variables by numeric values (dict index -> float)."""
    if isinstance(node, Num):
        return node
    if isinstance(node, Var):
        if node.index in values:
            return _num(values[node.index])
        return node
    if isinstance(node, Neg):
        return Neg(subst_ast(node.arg, values))
    if isinstance(node, BinOp):
        return BinOp(node.op, subst_ast(node.left, values), subst_ast(node.right, values))
    if isinstance(node, Call):
        return Call(node.func, tuple(subst_ast(a, values) for a in node.args))
    raise TypeError(f"not an AST node: {node!r}")
