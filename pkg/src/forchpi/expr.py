"""Closed-form boundary-program expressions in ``t`` and ``s``.

Grammar (usual precedence, ``^`` right-associative, unary minus)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | '+' unary | power
    power  := atom ('^' unary)?
    atom   := number | 't' | 's' | func '(' expr ')' | '(' expr ')'
    func   := exp | sin | cos

Expressions are held as sympy trees so time derivatives are exact.
"""

import re

import numpy as np
import sympy as sp

from .errors import ExpressionError

__all__ = ["Expr", "expression_eval", "T", "S"]

T, S = sp.symbols("t s", real=True)
_FUNCS = {"exp": sp.exp, "sin": sp.sin, "cos": sp.cos}
_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    pos, out = 0, []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, value=None):
        tok = self.toks[self.i]
        if value is not None and tok[1] != value:
            raise ExpressionError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExpressionError(f"unexpected {tok[1]!r}", tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = node + rhs if op == "+" else node - rhs
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            node = node * rhs if op == "*" else node / rhs
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("-", "+"):
            self.take()
            node = self.unary()
            return -node if tok[1] == "-" else node
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            return base ** self.unary()
        return base

    def atom(self):
        kind, val, pos = self.peek()
        if kind == "num":
            self.take()
            return sp.Rational(val) if re.fullmatch(r"\d+", val) else sp.Float(val, 17)
        if kind == "name":
            self.take()
            if val == "t":
                return T
            if val == "s":
                return S
            if val in _FUNCS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return _FUNCS[val](arg)
            raise ExpressionError(f"unknown name {val!r}", pos)
        if val == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        raise ExpressionError(f"unexpected {val or 'end of input'!r}", pos)


class Expr:
    """A parsed expression with exact time derivatives.

    >>> Expr("2*exp(-t)")(0.0)
    2.0
    """

    def __init__(self, source):
        if isinstance(source, Expr):
            self.text, self.sym = source.text, source.sym
        elif isinstance(source, sp.Basic):
            self.sym = source
            self.text = str(source).replace("**", "^")
        else:
            if isinstance(source, (int, float)):
                source = repr(float(source)) if isinstance(source, float) else str(source)
            self.text = str(source)
            if not self.text.strip():
                raise ExpressionError("empty expression", 0)
            self.sym = _Parser(self.text).parse()
        self._finite = not self.sym.has(sp.zoo, sp.oo, -sp.oo, sp.nan)
        self._fn = sp.lambdify((T, S), self.sym, modules="numpy") if self._finite else None

    def __repr__(self):
        return f"Expr({self.text!r})"

    def __str__(self):
        return self.text

    @property
    def depends_on_t(self):
        return T in self.sym.free_symbols

    @property
    def depends_on_s(self):
        return S in self.sym.free_symbols

    @property
    def is_zero(self):
        return self.sym == 0

    def dt(self, order=1):
        return Expr(sp.diff(self.sym, T, order))

    def __call__(self, t, s=0.0):
        if not self._finite:
            raise ExpressionError(f"{self.text!r} is not finite")
        t_arr, s_arr = np.asarray(t, dtype=float), np.asarray(s, dtype=float)
        with np.errstate(all="ignore"):
            val = self._fn(t_arr, s_arr)
        val = np.broadcast_to(np.asarray(val, dtype=float), np.broadcast(t_arr, s_arr).shape)
        if not np.all(np.isfinite(val)):
            raise ExpressionError(f"{self.text!r} evaluates to a non-finite value")
        return float(val) if val.ndim == 0 else val.copy()


def expression_eval(expr, t, s=0.0):
    """Evaluate an expression string (or :class:`Expr`) at ``(t, s)``."""
    return Expr(expr)(t, s)
