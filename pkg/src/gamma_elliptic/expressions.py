"""Tiny expression language for ambient scalar fields.

Grammar (documented for config files)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right-associative
    atom    := NUMBER | 'pi' | variable | call | '(' expr ')'
    call    := ('sin' | 'cos' | 'exp' | 'max') '(' expr (',' expr)* ')'
    variable:= 'x1' | 'x2' | ... | 'x<n>'

Expressions evaluate vectorised over points of shape (..., n). Derivatives
are produced by symbolic differentiation of the expression tree, so parsed
fields carry analytic gradients and hessians. ``max`` differentiates
piecewise (first argument wins ties).
"""

from __future__ import annotations

import re
from typing import List, Tuple

import numpy as np

from .fields import AmbientScalarField


class ExpressionError(ValueError):
    """Parse or evaluation failure; ``position`` is a 0-based text offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


# ---------------------------------------------------------------------------
# AST


class Node:
    def eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def diff(self, var: int) -> "Node":
        raise NotImplementedError


class Num(Node):
    def __init__(self, value: float):
        self.value = float(value)

    def eval(self, x):
        return np.full(x.shape[:-1], self.value)

    def diff(self, var):
        return Num(0.0)

    def __str__(self):
        return repr(self.value)


class Var(Node):
    def __init__(self, index: int):
        self.index = index

    def eval(self, x):
        return x[..., self.index]

    def diff(self, var):
        return Num(1.0 if var == self.index else 0.0)

    def __str__(self):
        return f"x{self.index + 1}"


def _is_const(node, value=None):
    return isinstance(node, Num) and (value is None or node.value == value)


def add(a, b):
    if _is_const(a) and _is_const(b):
        return Num(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a, b):
    if _is_const(a) and _is_const(b):
        return Num(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    return Sub(a, b)


def mul(a, b):
    if _is_const(a) and _is_const(b):
        return Num(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Num(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a, b):
    if _is_const(a, 0.0):
        return Num(0.0)
    if _is_const(b, 1.0):
        return a
    return Div(a, b)


class Add(Node):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, x):
        return self.a.eval(x) + self.b.eval(x)

    def diff(self, var):
        return add(self.a.diff(var), self.b.diff(var))

    def __str__(self):
        return f"({self.a} + {self.b})"


class Sub(Node):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, x):
        return self.a.eval(x) - self.b.eval(x)

    def diff(self, var):
        return sub(self.a.diff(var), self.b.diff(var))

    def __str__(self):
        return f"({self.a} - {self.b})"


class Mul(Node):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, x):
        return self.a.eval(x) * self.b.eval(x)

    def diff(self, var):
        return add(mul(self.a.diff(var), self.b), mul(self.a, self.b.diff(var)))

    def __str__(self):
        return f"({self.a} * {self.b})"


class Div(Node):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, x):
        return self.a.eval(x) / self.b.eval(x)

    def diff(self, var):
        num = sub(mul(self.a.diff(var), self.b), mul(self.a, self.b.diff(var)))
        return div(num, Mul(self.b, self.b))

    def __str__(self):
        return f"({self.a} / {self.b})"


class Neg(Node):
    def __init__(self, a):
        self.a = a

    def eval(self, x):
        return -self.a.eval(x)

    def diff(self, var):
        return Neg(self.a.diff(var))

    def __str__(self):
        return f"(-{self.a})"


class Pow(Node):
    def __init__(self, base, exponent):
        self.base, self.exponent = base, exponent

    def eval(self, x):
        return self.base.eval(x) ** self.exponent.eval(x)

    def diff(self, var):
        if _is_const(self.exponent):
            p = self.exponent.value
            if p == 0.0:
                return Num(0.0)
            return mul(
                mul(Num(p), Pow(self.base, Num(p - 1.0))), self.base.diff(var)
            )
        # general a^b = exp(b ln a); requires a > 0 at evaluation points
        log_a = Call("log", [self.base])
        term = add(
            mul(self.exponent.diff(var), log_a),
            mul(self.exponent, div(self.base.diff(var), self.base)),
        )
        return mul(self, term)

    def __str__(self):
        return f"({self.base} ^ {self.exponent})"


_UNARY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
}


class Call(Node):
    def __init__(self, fn: str, args: List[Node]):
        self.fn = fn
        self.args = args

    def eval(self, x):
        if self.fn == "max":
            return np.maximum(self.args[0].eval(x), self.args[1].eval(x))
        return _UNARY_FUNCS[self.fn](self.args[0].eval(x))

    def diff(self, var):
        if self.fn == "max":
            return MaxBranch(self.args[0], self.args[1], var)
        (a,) = self.args
        da = a.diff(var)
        if self.fn == "sin":
            return mul(Call("cos", [a]), da)
        if self.fn == "cos":
            return Neg(mul(Call("sin", [a]), da))
        if self.fn == "exp":
            return mul(self, da)
        if self.fn == "log":
            return div(da, a)
        raise AssertionError(self.fn)

    def __str__(self):
        return f"{self.fn}({', '.join(str(a) for a in self.args)})"


class MaxBranch(Node):
    """Piecewise derivative of max(a, b): a' where a >= b, else b'."""

    def __init__(self, a, b, var):
        self.a, self.b = a, b
        self.da, self.db = a.diff(var), b.diff(var)

    def eval(self, x):
        return np.where(self.a.eval(x) >= self.b.eval(x), self.da.eval(x), self.db.eval(x))

    def diff(self, var):
        raise ExpressionError("max() is not twice differentiable", 0)

    def __str__(self):
        return f"branch({self.a}>={self.b}; {self.da}, {self.db})"


# ---------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)

_FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "max": 2}


def _tokenize(text: str) -> List[Tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            # skip pure whitespace tail
            if text[pos:].strip() == "":
                break
            raise ExpressionError(f"unexpected character {text[pos]!r}", pos)
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n_vars: int):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.n_vars = n_vars

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op: str):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r}", pos)
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {val!r}", pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                rhs = self.term()
                node = Add(node, rhs) if val == "+" else Sub(node, rhs)
            else:
                return node

    def term(self) -> Node:
        node = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.unary()
                node = Mul(node, rhs) if val == "*" else Div(node, rhs)
            else:
                return node

    def unary(self) -> Node:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            return Pow(base, self.unary())  # right-associative
        return base

    def atom(self) -> Node:
        kind, val, pos = self.advance()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val == "pi":
                return Num(np.pi)
            if val in _FUNCTIONS:
                self.expect("(")
                args = [self.expr()]
                while True:
                    k, v, p = self.peek()
                    if k == "op" and v == ",":
                        self.advance()
                        args.append(self.expr())
                    else:
                        break
                self.expect(")")
                if len(args) != _FUNCTIONS[val]:
                    raise ExpressionError(
                        f"{val}() takes {_FUNCTIONS[val]} argument(s), got {len(args)}", pos
                    )
                return Call(val, args)
            m = re.fullmatch(r"x(\d+)", val)
            if m:
                idx = int(m.group(1)) - 1
                if not 0 <= idx < self.n_vars:
                    raise ExpressionError(f"unknown identifier {val!r}", pos)
                return Var(idx)
            raise ExpressionError(f"unknown identifier {val!r}", pos)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionError(f"unexpected token {val!r}" if val else "unexpected end of input", pos)


def parse_tree(text: str, n_vars: int = 3) -> Node:
    """Parse ``text`` into an expression tree over x1..x<n_vars>."""
    return _Parser(text, n_vars).parse()


def parse_expression(text: str, n_vars: int = 3) -> AmbientScalarField:
    """Parse ``text`` into an ambient scalar field with symbolic derivatives."""
    tree = parse_tree(text, n_vars)
    grads = [tree.diff(k) for k in range(n_vars)]
    try:
        hess = [[g.diff(k) for k in range(n_vars)] for g in grads]
    except ExpressionError:
        hess = None  # e.g. max(): gradient exists, second derivative does not

    def value(x):
        return tree.eval(x)

    def gradient(x):
        out = np.empty(x.shape, dtype=float)
        for k in range(n_vars):
            out[..., k] = grads[k].eval(x)
        return out

    if hess is not None:
        def hessian(x):
            out = np.empty(x.shape + (n_vars,), dtype=float)
            for i in range(n_vars):
                for j in range(n_vars):
                    out[..., i, j] = hess[i][j].eval(x)
            return out
    else:
        hessian = None

    return AmbientScalarField(value, gradient, hessian, name=text)
