"""A small expression language for potentials ``U(x)`` and ``V(x, y)``.

Grammar (highest binding last)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?          # right associative
    atom   := NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

Names are the variables ``x`` and ``y``, the constant ``pi`` and the functions
``sin cos exp sqrt tanh``. Parsed trees compile to a postfix program that is
evaluated on numpy arrays.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ExpressionError

VARIABLES = ("x", "y")
CONSTANTS = {"pi": math.pi}
FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "tanh": np.tanh}
BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide, "^": np.power}

_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


@dataclass(frozen=True)
class Token:
    kind: str      # "num", "name", "op" or "end"
    text: str
    offset: int    # byte offset into the UTF-8 source


def tokenize(text: str) -> list[Token]:
    out, pos = [], 0
    raw = text.encode()
    while True:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:]
            if rest.strip() == "":
                break
            bad = pos + (len(rest) - len(rest.lstrip()))
            raise ExpressionError(f"unexpected character {text[bad]!r}", len(text[:bad].encode()))
        kind = m.lastgroup
        start = m.start(kind)
        out.append(Token(kind, m.group(kind), len(text[:start].encode())))
        pos = m.end()
    out.append(Token("end", "", len(raw)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    def peek(self) -> Token:
        return self.toks[self.i]

    def take(self) -> Token:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok.text != text or tok.kind != "op":
            what = "end of input" if tok.kind == "end" else repr(tok.text)
            raise ExpressionError(f"expected {text!r}, found {what}", tok.offset)
        return self.take()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExpressionError(f"unexpected {tok.text!r}", tok.offset)
        return node

    def expr(self):
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek().kind == "op" and self.peek().text == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            node = BinOp("^", node, self.unary())
        return node

    def atom(self):
        tok = self.take()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if self.peek().text == "(" and self.peek().kind == "op":
                if tok.text not in FUNCTIONS:
                    raise ExpressionError(f"unknown function {tok.text!r}", tok.offset)
                self.take()
                if self.peek().text == ")":
                    raise ExpressionError(f"{tok.text} takes 1 argument, got 0", self.peek().offset)
                arg = self.expr()
                if self.peek().text == ",":
                    raise ExpressionError(f"{tok.text} takes 1 argument, got more", self.peek().offset)
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in FUNCTIONS:
                raise ExpressionError(f"function {tok.text!r} needs an argument list", tok.offset)
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text in CONSTANTS:
                return Num(CONSTANTS[tok.text])
            raise ExpressionError(f"unknown identifier {tok.text!r}", tok.offset)
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExpressionError(f"unexpected {what}", tok.offset)


def parse_tree(text: str):
    if not text or not text.strip():
        raise ExpressionError("empty expression", 0)
    return _Parser(text).parse()


def to_text(node) -> str:
    """Fully parenthesised source that parses back to the same tree."""
    if isinstance(node, Num):
        return repr(node.value) if node.value >= 0 else f"(-{repr(-node.value)})"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    return f"({to_text(node.left)} {node.op} {to_text(node.right)})"


def _compile(node, program: list) -> None:
    if isinstance(node, Num):
        program.append(("const", node.value))
    elif isinstance(node, Var):
        program.append(("var", node.name))
    elif isinstance(node, Neg):
        _compile(node.operand, program)
        program.append(("neg", None))
    elif isinstance(node, Call):
        _compile(node.arg, program)
        program.append(("call", node.func))
    else:
        _compile(node.left, program)
        _compile(node.right, program)
        program.append(("bin", node.op))


def variables_of(node) -> set:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return variables_of(node.operand if isinstance(node, Neg) else node.arg)
    return variables_of(node.left) | variables_of(node.right)


@dataclass(frozen=True)
class PotentialExpr:
    """Parsed expression with its compiled postfix program."""

    source: str
    tree: object
    program: tuple

    @property
    def variables(self) -> set:
        return variables_of(self.tree)

    def __call__(self, x=0.0, y=0.0):
        env = {"x": x, "y": y}
        stack = []
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            for kind, arg in self.program:
                if kind == "const":
                    stack.append(arg)
                elif kind == "var":
                    stack.append(env[arg])
                elif kind == "neg":
                    stack.append(np.negative(stack.pop()))
                elif kind == "call":
                    stack.append(FUNCTIONS[arg](stack.pop()))
                else:
                    b = stack.pop()
                    stack.append(BINARY[arg](stack.pop(), b))
        out = stack.pop()
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        return np.broadcast_to(np.asarray(out, dtype=np.result_type(out, float)), shape).copy() if shape else out

    def pretty(self) -> str:
        return to_text(self.tree)


def parse_potential(text: str) -> PotentialExpr:
    tree = parse_tree(text)
    program: list = []
    _compile(tree, program)
    return PotentialExpr(text, tree, tuple(program))
